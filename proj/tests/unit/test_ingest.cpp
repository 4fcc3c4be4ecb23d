#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hpac/ingest.hpp"

using namespace hpac;

namespace {

std::filesystem::path temp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "hpac_ingest_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
}

// Little-endian classic pcap with one 4-byte record.
std::vector<uint8_t> tiny_pcap() {
    std::vector<uint8_t> f = {0xD4, 0xC3, 0xB2, 0xA1, 2, 0, 4, 0};
    f.resize(24, 0);                        // rest of the global header
    f.insert(f.end(), {0, 0, 0, 0, 0, 0, 0, 0});  // ts
    f.insert(f.end(), {4, 0, 0, 0, 4, 0, 0, 0});  // incl_len, orig_len
    f.insert(f.end(), {0xDE, 0xAD, 0xBE, 0xEF});
    return f;
}

}  // namespace

TEST_CASE("read_pcap parses a single-record capture") {
    auto path = temp_file("one.pcap");
    write_bytes(path, tiny_pcap());
    auto packets = read_pcap(path.string());
    REQUIRE(packets.size() == 1);
    CHECK(packets[0].bytes == std::vector<uint8_t>{0xDE, 0xAD, 0xBE, 0xEF});
    CHECK(packets[0].frame_index == 1);
    CHECK(!packets[0].label.has_value());
}

TEST_CASE("read_pcap rejects an empty file") {
    auto path = temp_file("empty.pcap");
    write_bytes(path, {});
    CHECK_THROWS_AS(read_pcap(path.string()), FormatError);
}

TEST_CASE("read_pcap rejects garbage magic") {
    auto path = temp_file("bad_magic.pcap");
    std::vector<uint8_t> f(32, 0x42);
    write_bytes(path, f);
    CHECK_THROWS_AS(read_pcap(path.string()), FormatError);
}

TEST_CASE("read_pcap reports the truncated frame") {
    auto path = temp_file("truncated.pcap");
    auto f = tiny_pcap();
    // Second record claims 100 bytes but carries 40.
    f.insert(f.end(), {0, 0, 0, 0, 0, 0, 0, 0});
    f.insert(f.end(), {100, 0, 0, 0, 100, 0, 0, 0});
    f.resize(f.size() + 40, 0xAA);
    write_bytes(path, f);
    try {
        read_pcap(path.string());
        FAIL("expected TruncatedFileError");
    } catch (const TruncatedFileError& e) {
        CHECK(e.frame_index == 2);
    }
}

TEST_CASE("read_pcap handles the byte-swapped magic") {
    auto path = temp_file("bigendian.pcap");
    std::vector<uint8_t> f = {0xA1, 0xB2, 0xC3, 0xD4};
    f.resize(24, 0);
    f.insert(f.end(), {0, 0, 0, 0, 0, 0, 0, 0});
    f.insert(f.end(), {0, 0, 0, 2, 0, 0, 0, 2});  // big-endian incl/orig = 2
    f.insert(f.end(), {0x01, 0x02});
    write_bytes(path, f);
    auto packets = read_pcap(path.string());
    REQUIRE(packets.size() == 1);
    CHECK(packets[0].bytes == std::vector<uint8_t>{0x01, 0x02});
}

TEST_CASE("pcap write/read round-trips byte content") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> len(1, 300);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<RawPacket> packets;
    for (int i = 0; i < 50; ++i) {
        RawPacket p;
        p.bytes.resize(std::size_t(len(rng)));
        for (auto& b : p.bytes) b = uint8_t(byte(rng));
        packets.push_back(std::move(p));
    }
    auto path = temp_file("roundtrip.pcap");
    write_pcap(path.string(), packets);
    auto loaded = read_pcap(path.string());
    REQUIRE(loaded.size() == packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) {
        CHECK(loaded[i].bytes == packets[i].bytes);
        CHECK(loaded[i].frame_index == i + 1);
    }
}

TEST_CASE("parse_hex_stream decodes byte pairs") {
    auto p = parse_hex_stream("dead");
    CHECK(p.bytes == std::vector<uint8_t>{0xDE, 0xAD});

    auto spaced = parse_hex_stream("FF 00");
    CHECK(spaced.bytes == std::vector<uint8_t>{0xFF, 0x00});

    auto mixed = parse_hex_stream("  0a\tBc\n");
    CHECK(mixed.bytes == std::vector<uint8_t>{0x0A, 0xBC});
}

TEST_CASE("parse_hex_stream rejects malformed input") {
    CHECK_THROWS_AS(parse_hex_stream("abc"), ParseError);
    CHECK_THROWS_AS(parse_hex_stream(""), ParseError);
    try {
        parse_hex_stream("00zz");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 2);
    }
}

TEST_CASE("hex round-trip") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len(1, 200);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<uint8_t> bytes(std::size_t(len(rng)));
        for (auto& b : bytes) b = uint8_t(byte(rng));
        CHECK(parse_hex_stream(to_hex(bytes)).bytes == bytes);
    }
}

TEST_CASE("load_labels applies rows and defaults the rest to benign") {
    auto manifest = temp_file("labels.csv");
    {
        std::ofstream out(manifest);
        out << "source_id,frame_index,label\r\n";
        out << "fileA,3,1\n";
        out << "fileA,1,0\n";
    }
    std::vector<RawPacket> packets(4);
    for (std::size_t i = 0; i < packets.size(); ++i) {
        packets[i].bytes = {uint8_t(i)};
        packets[i].source_id = "fileA";
        packets[i].frame_index = i + 1;
    }
    load_labels(manifest.string(), packets);
    CHECK(packets[0].label == 0);
    CHECK(packets[1].label == 0);  // unmatched -> benign
    CHECK(packets[2].label == 1);
    CHECK(packets[3].label == 0);
}

TEST_CASE("load_labels rejects bad rows") {
    std::vector<RawPacket> packets(1);
    packets[0].bytes = {1};

    auto bad_label = temp_file("bad_label.csv");
    {
        std::ofstream out(bad_label);
        out << "source_id,frame_index,label\nfileA,1,2\n";
    }
    try {
        load_labels(bad_label.string(), packets);
        FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
        CHECK(e.line == 2);
    }

    auto dup = temp_file("dup.csv");
    {
        std::ofstream out(dup);
        out << "source_id,frame_index,label\nfileA,1,1\nfileA,1,0\n";
    }
    CHECK_THROWS_AS(load_labels(dup.string(), packets), ManifestError);

    auto bad_header = temp_file("bad_header.csv");
    {
        std::ofstream out(bad_header);
        out << "src,frame,label\n";
    }
    CHECK_THROWS_AS(load_labels(bad_header.string(), packets), ManifestError);
}

TEST_CASE("split_dataset sizes and determinism") {
    auto make = [](std::size_t n) {
        std::vector<RawPacket> packets(n);
        for (std::size_t i = 0; i < n; ++i) {
            packets[i].bytes = {uint8_t(i)};
            packets[i].source_id = "s";
            packets[i].frame_index = i + 1;
        }
        return packets;
    };

    auto s10 = split_dataset(make(10), 0.6, 0.2, 0.2, 0);
    CHECK(s10.train.size() == 6);
    CHECK(s10.validation.size() == 2);
    CHECK(s10.test.size() == 2);

    // Remainder goes to train.
    auto s11 = split_dataset(make(11), 0.6, 0.2, 0.2, 0);
    CHECK(s11.train.size() == 7);
    CHECK(s11.validation.size() == 2);
    CHECK(s11.test.size() == 2);

    auto a = split_dataset(make(37), 0.6, 0.2, 0.2, 123);
    auto b = split_dataset(make(37), 0.6, 0.2, 0.2, 123);
    for (std::size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train[i].frame_index == b.train[i].frame_index);
    for (std::size_t i = 0; i < a.test.size(); ++i)
        CHECK(a.test[i].frame_index == b.test[i].frame_index);
}

TEST_CASE("split_dataset partitions without loss or duplication") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> count(3, 200);
    for (int rep = 0; rep < 20; ++rep) {
        const auto n = std::size_t(count(rng));
        std::vector<RawPacket> packets(n);
        for (std::size_t i = 0; i < n; ++i) {
            packets[i].bytes = {1};
            packets[i].source_id = "s";
            packets[i].frame_index = i + 1;
        }
        auto split = split_dataset(packets, 0.6, 0.2, 0.2, rep);
        std::set<std::size_t> seen;
        auto absorb = [&seen](const std::vector<RawPacket>& part) {
            for (const auto& p : part) CHECK(seen.insert(p.frame_index).second);
        };
        absorb(split.train);
        absorb(split.validation);
        absorb(split.test);
        CHECK(seen.size() == n);
    }
}

TEST_CASE("split_dataset validates inputs") {
    std::vector<RawPacket> two(2);
    for (auto& p : two) p.bytes = {1};
    CHECK_THROWS_AS(split_dataset(two, 0.6, 0.2, 0.2, 0), ConfigError);

    std::vector<RawPacket> five(5);
    for (auto& p : five) p.bytes = {1};
    CHECK_THROWS_AS(split_dataset(five, 0.5, 0.2, 0.2, 0), ConfigError);
}
