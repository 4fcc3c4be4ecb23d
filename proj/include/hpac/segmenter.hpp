#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpac/error.hpp"
#include "hpac/ingest.hpp"

namespace hpac {

/// Token id for the padding value. Byte v maps to id v; the vocabulary is
/// therefore the 257 ids [0, 256].
constexpr int kPadToken = 256;
constexpr int kVocabSize = 257;

/// Smallest segment size the convolution layers accept.
constexpr int kMinSegmentSize = 6;

inline int encode_byte(uint8_t value) { return int(value); }
inline int encode_pad() { return kPadToken; }

/// A packet laid out as an m x k grid of token ids plus a padding mask
/// (true = real byte).
struct SegmentedPacket {
    std::vector<int> tokens;   // row-major, m*k entries in [0, 256]
    std::vector<uint8_t> mask; // m*k, 1 where the token is a real byte
    int m = 0;
    int k = 0;
    std::optional<int> label;
    std::string source_id;
    std::size_t frame_index = 0;

    int token(int row, int col) const { return tokens[std::size_t(row) * k + col]; }
    bool is_real(int row, int col) const { return mask[std::size_t(row) * k + col] != 0; }
};

/// Splits a packet into m = ceil(n/k) segments of k tokens, padding the last
/// row's tail with the PAD id. Throws ConfigError for k below 6.
SegmentedPacket segment_packet(const RawPacket& packet, int k);

namespace detail {
// Same arithmetic without the k >= 6 floor; for unit tests only.
SegmentedPacket segment_packet_unchecked(const RawPacket& packet, int k);
}  // namespace detail

/// Concatenates the masked-true tokens back into the original byte sequence.
std::vector<uint8_t> desegment(const SegmentedPacket& packet);

/// Fixed-shape batch: B packets, each padded or truncated to M segments of k
/// tokens. Whole PAD segments carry token 256 everywhere and a false
/// segment mask.
struct Batch {
    std::vector<int> tokens;         // B*M*k
    std::vector<uint8_t> token_mask; // B*M*k
    std::vector<uint8_t> segment_mask;  // B*M
    std::vector<int> labels;         // B, -1 where unlabeled
    int batch_size = 0;
    int segments = 0;  // M
    int k = 0;

    const int* packet_tokens(int b) const { return tokens.data() + std::size_t(b) * segments * k; }
    const uint8_t* packet_token_mask(int b) const {
        return token_mask.data() + std::size_t(b) * segments * k;
    }
    const uint8_t* packet_segment_mask(int b) const {
        return segment_mask.data() + std::size_t(b) * segments;
    }
};

/// Stacks packets into a Batch with M = min(m_max, max m over the batch).
/// Packets longer than M segments keep their first M; shorter ones gain
/// whole PAD segments. All packets must share k.
Batch batch_segments(const std::vector<SegmentedPacket>& packets, int m_max);

/// JSONL segment dump, one object per packet:
/// {source_id, frame_index, k, tokens (m x k), label}.
void write_segments_jsonl(const std::string& path, const std::vector<SegmentedPacket>& packets);
std::vector<SegmentedPacket> read_segments_jsonl(const std::string& path);

}  // namespace hpac
