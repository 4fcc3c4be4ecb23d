#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hpac {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input is not a classic PCAP capture (bad or missing magic).
struct FormatError : Error {
    using Error::Error;
};

// A PCAP record declares more bytes than the file holds.
struct TruncatedFileError : Error {
    TruncatedFileError(const std::string& msg, std::size_t frame)
        : Error(msg), frame_index(frame) {}
    std::size_t frame_index;
};

// Malformed hex text; offset is the first bad character.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t at) : Error(msg), offset(at) {}
    std::size_t offset;
};

// Bad row in a label manifest; line is 1-based.
struct ManifestError : Error {
    ManifestError(const std::string& msg, std::size_t at) : Error(msg), line(at) {}
    std::size_t line;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct BatchError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

// Raised when the training loop hits non-finite gradients.
struct TrainingError : Error {
    using Error::Error;
};

}  // namespace hpac
