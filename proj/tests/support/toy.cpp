#include "toy.hpp"

#include <random>

namespace toy {

std::vector<hpac::RawPacket> make_packets(std::size_t count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> length_dist(40, 120);
    std::uniform_int_distribution<int> byte_dist(0, 127);
    std::vector<hpac::RawPacket> packets;
    packets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int label = int(i % 2);
        const int n = length_dist(rng);
        hpac::RawPacket pkt;
        pkt.bytes.resize(std::size_t(n));
        for (auto& b : pkt.bytes) b = uint8_t(byte_dist(rng));
        if (label == 1) {
            std::uniform_int_distribution<int> offset_dist(0, n - 8);
            const int off = offset_dist(rng);
            for (int j = 0; j < 8; ++j) pkt.bytes[std::size_t(off + j)] = kMotif[j];
        }
        pkt.label = label;
        pkt.source_id = "toy";
        pkt.frame_index = i + 1;
        packets.push_back(std::move(pkt));
    }
    return packets;
}

Corpus make_corpus(std::size_t count, int k, uint64_t seed) {
    auto packets = make_packets(count, seed);
    auto split = hpac::split_dataset(packets, 0.6, 0.2, 0.2, seed);
    auto segment_all = [k](const std::vector<hpac::RawPacket>& raw) {
        std::vector<hpac::SegmentedPacket> out;
        out.reserve(raw.size());
        for (const auto& p : raw) out.push_back(hpac::segment_packet(p, k));
        return out;
    };
    return Corpus{segment_all(split.train), segment_all(split.validation),
                  segment_all(split.test)};
}

}  // namespace toy
