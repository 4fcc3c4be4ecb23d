#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hpac/error.hpp"

namespace hpac {

/// One captured packet: the raw bytes plus label and provenance.
struct RawPacket {
    std::vector<uint8_t> bytes;
    std::optional<int> label;  // 0 = benign, 1 = malicious
    std::string source_id;
    std::size_t frame_index = 0;  // 1-based position within the capture

    std::size_t length() const { return bytes.size(); }
};

struct DatasetSplit {
    std::vector<RawPacket> train;
    std::vector<RawPacket> validation;
    std::vector<RawPacket> test;
    uint64_t seed = 0;
};

/// Reads a classic PCAP capture (magic 0xA1B2C3D4, either endianness,
/// nanosecond-precision variants included). Returns one RawPacket per record
/// with bytes taken verbatim from the captured data; labels are unset.
std::vector<RawPacket> read_pcap(const std::string& path);

/// Test-fixture counterpart of read_pcap: writes packets as a little-endian
/// classic PCAP file, one record per packet, captured length = byte count.
void write_pcap(const std::string& path, const std::vector<RawPacket>& packets);

/// Decodes a hex string (whitespace ignored, case-insensitive) into a packet.
RawPacket parse_hex_stream(const std::string& text);

/// Hex encoding of a byte sequence, lower case, no separators.
std::string to_hex(const std::vector<uint8_t>& bytes);

/// Applies a CSV manifest (header `source_id,frame_index,label`) to packets.
/// Unmatched packets default to label 0.
void load_labels(const std::string& manifest_path, std::vector<RawPacket>& packets);

/// Deterministic shuffle-then-cut split. Sizes are floor(ratio * N) with the
/// remainder going to train.
DatasetSplit split_dataset(const std::vector<RawPacket>& packets,
                           double train_ratio, double validation_ratio, double test_ratio,
                           uint64_t seed);

}  // namespace hpac
