#include <doctest.h>

#include <filesystem>
#include <random>

#include "hpac/segmenter.hpp"

using namespace hpac;

namespace {

RawPacket packet_of(std::vector<uint8_t> bytes, std::optional<int> label = std::nullopt) {
    RawPacket p;
    p.bytes = std::move(bytes);
    p.label = label;
    p.source_id = "t";
    p.frame_index = 1;
    return p;
}

}  // namespace

TEST_CASE("encode_byte covers the whole 257-id vocabulary") {
    CHECK(encode_byte(0xFF) == 255);
    CHECK(encode_byte(0x00) == 0);
    CHECK(encode_pad() == 256);
    CHECK(kVocabSize == 257);
    // Bijection between octets + PAD and [0, 256].
    std::vector<bool> seen(std::size_t(kVocabSize), false);
    for (int v = 0; v < 256; ++v) {
        const int id = encode_byte(uint8_t(v));
        CHECK(!seen[std::size_t(id)]);
        seen[std::size_t(id)] = true;
    }
    CHECK(!seen[std::size_t(encode_pad())]);
}

TEST_CASE("segment arithmetic with k below the public floor") {
    // k=2 exercises m = ceil(n/k) directly; the public API would reject it.
    auto seg = detail::segment_packet_unchecked(packet_of({1, 2, 3, 4, 5}), 2);
    CHECK(seg.m == 3);
    CHECK(seg.tokens == std::vector<int>{1, 2, 3, 4, 5, 256});
    CHECK(seg.mask == std::vector<uint8_t>{1, 1, 1, 1, 1, 0});
}

TEST_CASE("segment_packet pads only the final row's tail") {
    auto exact = segment_packet(packet_of({1, 2, 3, 4, 5, 6}), 6);
    CHECK(exact.m == 1);
    CHECK(std::count(exact.mask.begin(), exact.mask.end(), 0) == 0);

    auto single = segment_packet(packet_of({9}), 6);
    CHECK(single.m == 1);
    CHECK(single.tokens == std::vector<int>{9, 256, 256, 256, 256, 256});

    auto two_rows = segment_packet(packet_of(std::vector<uint8_t>(8, 3)), 6);
    CHECK(two_rows.m == 2);
    CHECK(two_rows.token(1, 1) == 3);
    CHECK(two_rows.token(1, 2) == 256);
}

TEST_CASE("segment_packet enforces the k floor and non-empty input") {
    CHECK_THROWS_AS(segment_packet(packet_of({1}), 5), ConfigError);
    CHECK_THROWS_AS(segment_packet(packet_of({}), 8), ConfigError);
}

TEST_CASE("desegmentation round-trips for fuzzed packets") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> len(1, 500);
    std::uniform_int_distribution<int> byte(0, 255);
    const int ks[] = {6, 8, 20, 32, 39};
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<uint8_t> bytes(std::size_t(len(rng)));
        for (auto& b : bytes) b = uint8_t(byte(rng));
        const int k = ks[rep % 5];
        auto seg = segment_packet(packet_of(bytes), k);
        CHECK(seg.m == int((bytes.size() + std::size_t(k) - 1) / std::size_t(k)));
        CHECK(desegment(seg) == bytes);
        // Padding is exactly the final row's suffix.
        const auto pad_cells = std::size_t(seg.m) * std::size_t(k) - bytes.size();
        for (std::size_t i = 0; i < seg.tokens.size(); ++i) {
            const bool is_pad = i >= seg.tokens.size() - pad_cells;
            CHECK(seg.mask[i] == (is_pad ? 0 : 1));
            CHECK((seg.tokens[i] == kPadToken) == is_pad);
        }
    }
}

TEST_CASE("batch_segments pads short packets with whole PAD segments") {
    auto a = segment_packet(packet_of(std::vector<uint8_t>(12, 1)), 6);  // m=2
    auto b = segment_packet(packet_of(std::vector<uint8_t>(17, 2)), 6);  // m=3
    auto batch = batch_segments({a, b}, 8);
    CHECK(batch.segments == 3);
    CHECK(batch.batch_size == 2);
    // Packet a's third segment is all PAD with a false segment mask.
    CHECK(batch.packet_segment_mask(0)[2] == 0);
    for (int c = 0; c < 6; ++c) {
        CHECK(batch.packet_tokens(0)[2 * 6 + c] == kPadToken);
        CHECK(batch.packet_token_mask(0)[2 * 6 + c] == 0);
    }
    CHECK(batch.packet_segment_mask(1)[2] == 1);
}

TEST_CASE("batch_segments truncates to the segment cap") {
    auto big = segment_packet(packet_of(std::vector<uint8_t>(60, 7)), 6);  // m=10
    auto batch = batch_segments({big}, 4);
    CHECK(batch.segments == 4);
    for (int s = 0; s < 4; ++s) CHECK(batch.packet_segment_mask(0)[s] == 1);
    CHECK(batch.tokens.size() == std::size_t(4) * 6);
}

TEST_CASE("batch_segments rejects degenerate input") {
    CHECK_THROWS_AS(batch_segments({}, 8), BatchError);
    auto a = segment_packet(packet_of({1, 2, 3, 4, 5, 6, 7}), 6);
    auto b = segment_packet(packet_of({1, 2, 3, 4, 5, 6, 7}), 8);
    CHECK_THROWS_AS(batch_segments({a, b}, 8), BatchError);
}

TEST_CASE("segment JSONL round-trips tokens, labels, and provenance") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> len(1, 100);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<SegmentedPacket> packets;
    for (int i = 0; i < 20; ++i) {
        std::vector<uint8_t> bytes(std::size_t(len(rng)));
        for (auto& b : bytes) b = uint8_t(byte(rng));
        auto p = packet_of(bytes, i % 3 == 0 ? std::optional<int>{} : std::optional<int>{i % 2});
        p.frame_index = std::size_t(i) + 1;
        packets.push_back(segment_packet(p, 8));
    }
    auto dir = std::filesystem::temp_directory_path() / "hpac_segmenter_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "dump.jsonl").string();
    write_segments_jsonl(path, packets);
    auto loaded = read_segments_jsonl(path);
    REQUIRE(loaded.size() == packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) {
        CHECK(loaded[i].tokens == packets[i].tokens);
        CHECK(loaded[i].mask == packets[i].mask);
        CHECK(loaded[i].label == packets[i].label);
        CHECK(loaded[i].frame_index == packets[i].frame_index);
    }
}
