#include "hpac/segmenter.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace hpac {

namespace detail {

// Arithmetic core, shared with tests that exercise k below the public floor.
SegmentedPacket segment_packet_unchecked(const RawPacket& packet, int k) {
    const std::size_t n = packet.bytes.size();
    const int m = int((n + std::size_t(k) - 1) / std::size_t(k));
    SegmentedPacket seg;
    seg.m = m;
    seg.k = k;
    seg.label = packet.label;
    seg.source_id = packet.source_id;
    seg.frame_index = packet.frame_index;
    seg.tokens.resize(std::size_t(m) * k, kPadToken);
    seg.mask.resize(std::size_t(m) * k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        seg.tokens[i] = encode_byte(packet.bytes[i]);
        seg.mask[i] = 1;
    }
    return seg;
}

}  // namespace detail

SegmentedPacket segment_packet(const RawPacket& packet, int k) {
    if (k < kMinSegmentSize)
        throw ConfigError("segment size must be at least " + std::to_string(kMinSegmentSize) +
                          " (convolution kernel constraint), got " + std::to_string(k));
    if (packet.bytes.empty()) throw ConfigError("cannot segment an empty packet");
    return detail::segment_packet_unchecked(packet, k);
}

std::vector<uint8_t> desegment(const SegmentedPacket& packet) {
    std::vector<uint8_t> bytes;
    bytes.reserve(packet.tokens.size());
    for (std::size_t i = 0; i < packet.tokens.size(); ++i)
        if (packet.mask[i]) bytes.push_back(uint8_t(packet.tokens[i]));
    return bytes;
}

Batch batch_segments(const std::vector<SegmentedPacket>& packets, int m_max) {
    if (packets.empty()) throw BatchError("cannot batch zero packets");
    if (m_max < 1) throw BatchError("segment cap must be at least 1");
    const int k = packets.front().k;
    int m_top = 0;
    for (const auto& p : packets) {
        if (p.k != k)
            throw BatchError("mixed segment sizes in one batch: " + std::to_string(k) + " vs " +
                             std::to_string(p.k));
        m_top = std::max(m_top, p.m);
    }
    const int M = std::min(m_max, m_top);

    Batch batch;
    batch.batch_size = int(packets.size());
    batch.segments = M;
    batch.k = k;
    batch.tokens.assign(std::size_t(packets.size()) * M * k, kPadToken);
    batch.token_mask.assign(std::size_t(packets.size()) * M * k, 0);
    batch.segment_mask.assign(std::size_t(packets.size()) * M, 0);
    batch.labels.assign(packets.size(), -1);

    for (std::size_t b = 0; b < packets.size(); ++b) {
        const auto& p = packets[b];
        const int rows = std::min(p.m, M);
        std::copy_n(p.tokens.begin(), std::size_t(rows) * k,
                    batch.tokens.begin() + long(b * std::size_t(M) * k));
        std::copy_n(p.mask.begin(), std::size_t(rows) * k,
                    batch.token_mask.begin() + long(b * std::size_t(M) * k));
        std::fill_n(batch.segment_mask.begin() + long(b * std::size_t(M)), rows, uint8_t(1));
        if (p.label) batch.labels[b] = *p.label;
    }
    return batch;
}

void write_segments_jsonl(const std::string& path, const std::vector<SegmentedPacket>& packets) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path);
    for (const auto& p : packets) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < p.m; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < p.k; ++c) row.push_back(p.token(r, c));
            rows.push_back(std::move(row));
        }
        nlohmann::json obj{{"source_id", p.source_id},
                           {"frame_index", p.frame_index},
                           {"k", p.k},
                           {"tokens", std::move(rows)}};
        if (p.label) obj["label"] = *p.label;
        else obj["label"] = nullptr;
        out << obj.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

std::vector<SegmentedPacket> read_segments_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    std::vector<SegmentedPacket> packets;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("bad JSON at line " + std::to_string(lineno) + ": " + e.what(),
                             lineno);
        }
        SegmentedPacket p;
        p.source_id = obj.value("source_id", std::string{});
        p.frame_index = obj.value("frame_index", std::size_t(0));
        p.k = obj.at("k").get<int>();
        const auto& rows = obj.at("tokens");
        p.m = int(rows.size());
        p.tokens.reserve(std::size_t(p.m) * p.k);
        for (const auto& row : rows) {
            if (int(row.size()) != p.k)
                throw ParseError("tokens row width differs from k at line " +
                                     std::to_string(lineno),
                                 lineno);
            for (const auto& t : row) {
                int id = t.get<int>();
                if (id < 0 || id > kPadToken)
                    throw ParseError("token id out of [0,256] at line " + std::to_string(lineno),
                                     lineno);
                p.tokens.push_back(id);
            }
        }
        p.mask.resize(p.tokens.size());
        for (std::size_t i = 0; i < p.tokens.size(); ++i)
            p.mask[i] = p.tokens[i] == kPadToken ? 0 : 1;
        if (obj.contains("label") && !obj["label"].is_null()) p.label = obj["label"].get<int>();
        packets.push_back(std::move(p));
    }
    return packets;
}

}  // namespace hpac
