#include "hpac/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace hpac {

namespace {

constexpr uint32_t kMagicUsec = 0xA1B2C3D4;
constexpr uint32_t kMagicUsecSwapped = 0xD4C3B2A1;
constexpr uint32_t kMagicNsec = 0xA1B23C4D;
constexpr uint32_t kMagicNsecSwapped = 0x4D3CB2A1;
constexpr std::size_t kGlobalHeaderSize = 24;
constexpr std::size_t kRecordHeaderSize = 16;

uint32_t read_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint32_t byteswap32(uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

void write_u32le(std::ofstream& out, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::string basename_of(const std::string& path) {
    auto pos = path.find_last_of("/\\");
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

}  // namespace

std::vector<RawPacket> read_pcap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);

    std::vector<uint8_t> contents((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (contents.size() < kGlobalHeaderSize)
        throw FormatError("not a classic PCAP file (no global header): " + path);

    uint32_t magic = read_u32le(contents.data());
    bool swapped = false;
    switch (magic) {
        case kMagicUsec:
        case kMagicNsec:
            break;
        case kMagicUsecSwapped:
        case kMagicNsecSwapped:
            swapped = true;
            break;
        default:
            throw FormatError("not a classic PCAP file (bad magic): " + path);
    }

    const std::string source = basename_of(path);
    std::vector<RawPacket> packets;
    std::size_t offset = kGlobalHeaderSize;
    std::size_t frame = 1;
    while (offset < contents.size()) {
        if (contents.size() - offset < kRecordHeaderSize)
            throw TruncatedFileError("truncated record header at frame " +
                                         std::to_string(frame) + " in " + path,
                                     frame);
        uint32_t incl_len = read_u32le(contents.data() + offset + 8);
        if (swapped) incl_len = byteswap32(incl_len);
        offset += kRecordHeaderSize;
        if (contents.size() - offset < incl_len)
            throw TruncatedFileError("frame " + std::to_string(frame) + " declares " +
                                         std::to_string(incl_len) + " captured bytes but only " +
                                         std::to_string(contents.size() - offset) + " remain in " +
                                         path,
                                     frame);
        RawPacket pkt;
        pkt.bytes.assign(contents.begin() + long(offset), contents.begin() + long(offset + incl_len));
        pkt.source_id = source;
        pkt.frame_index = frame;
        packets.push_back(std::move(pkt));
        offset += incl_len;
        ++frame;
    }
    return packets;
}

void write_pcap(const std::string& path, const std::vector<RawPacket>& packets) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path);
    write_u32le(out, kMagicUsec);
    out.put(2).put(0);  // version 2.4
    out.put(4).put(0);
    write_u32le(out, 0);       // thiszone
    write_u32le(out, 0);       // sigfigs
    write_u32le(out, 262144);  // snaplen
    write_u32le(out, 1);       // network = Ethernet
    for (const auto& pkt : packets) {
        write_u32le(out, 0);
        write_u32le(out, 0);
        write_u32le(out, uint32_t(pkt.bytes.size()));
        write_u32le(out, uint32_t(pkt.bytes.size()));
        out.write(reinterpret_cast<const char*>(pkt.bytes.data()), long(pkt.bytes.size()));
    }
    if (!out) throw Error("write failed: " + path);
}

RawPacket parse_hex_stream(const std::string& text) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };

    RawPacket pkt;
    int pending = -1;
    std::size_t pending_offset = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        int v = nibble(c);
        if (v < 0)
            throw ParseError("invalid hex character '" + std::string(1, c) + "' at offset " +
                                 std::to_string(i),
                             i);
        if (pending < 0) {
            pending = v;
            pending_offset = i;
        } else {
            pkt.bytes.push_back(uint8_t(pending << 4 | v));
            pending = -1;
        }
    }
    if (pending >= 0)
        throw ParseError("odd number of hex digits (last digit at offset " +
                             std::to_string(pending_offset) + ")",
                         pending_offset);
    if (pkt.bytes.empty()) throw ParseError("empty hex stream", 0);
    return pkt;
}

std::string to_hex(const std::vector<uint8_t>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

void load_labels(const std::string& manifest_path, std::vector<RawPacket>& packets) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot open manifest: " + manifest_path);

    std::map<std::pair<std::string, std::size_t>, int> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != "source_id,frame_index,label")
                throw ManifestError("expected header 'source_id,frame_index,label', got '" +
                                        line + "'",
                                    lineno);
            continue;
        }
        std::istringstream ss(line);
        std::string source, frame_s, label_s;
        if (!std::getline(ss, source, ',') || !std::getline(ss, frame_s, ',') ||
            !std::getline(ss, label_s, ','))
            throw ManifestError("malformed row at line " + std::to_string(lineno), lineno);
        std::size_t frame = 0;
        try {
            frame = std::stoull(frame_s);
        } catch (const std::exception&) {
            throw ManifestError("bad frame_index '" + frame_s + "' at line " +
                                    std::to_string(lineno),
                                lineno);
        }
        int label = -1;
        if (label_s == "0") label = 0;
        else if (label_s == "1") label = 1;
        else
            throw ManifestError("label must be 0 or 1, got '" + label_s + "' at line " +
                                    std::to_string(lineno),
                                lineno);
        auto key = std::make_pair(source, frame);
        if (table.count(key))
            throw ManifestError("duplicate key (" + source + ", " + frame_s + ") at line " +
                                    std::to_string(lineno),
                                lineno);
        table.emplace(key, label);
    }

    for (auto& pkt : packets) {
        auto it = table.find({pkt.source_id, pkt.frame_index});
        pkt.label = (it != table.end()) ? it->second : 0;
    }
}

DatasetSplit split_dataset(const std::vector<RawPacket>& packets,
                           double train_ratio, double validation_ratio, double test_ratio,
                           uint64_t seed) {
    if (packets.size() < 3) throw ConfigError("need at least 3 packets to split");
    double sum = train_ratio + validation_ratio + test_ratio;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    if (train_ratio < 0 || validation_ratio < 0 || test_ratio < 0)
        throw ConfigError("split ratios must be non-negative");

    std::vector<std::size_t> order(packets.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n = packets.size();
    const auto n_val = std::size_t(std::floor(validation_ratio * double(n)));
    const auto n_test = std::size_t(std::floor(test_ratio * double(n)));
    const std::size_t n_train = n - n_val - n_test;  // remainder goes to train

    DatasetSplit split;
    split.seed = seed;
    split.train.reserve(n_train);
    split.validation.reserve(n_val);
    split.test.reserve(n_test);
    for (std::size_t i = 0; i < n; ++i) {
        const RawPacket& pkt = packets[order[i]];
        if (i < n_train) split.train.push_back(pkt);
        else if (i < n_train + n_val) split.validation.push_back(pkt);
        else split.test.push_back(pkt);
    }
    return split;
}

}  // namespace hpac
