#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "kexfp/ingest.hpp"
#include "kexfp/prng.hpp"

using namespace kexfp;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("kexfp-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
    static size_t& counter() {
        static size_t n = 0;
        return n;
    }
};

void put_u32(std::vector<uint8_t>& out, uint32_t v, bool swap) {
    if (swap) v = __builtin_bswap32(v);
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u16be(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

// Minimal classic-pcap writer used as the reader's round-trip oracle.
void write_pcap(const std::string& path, const std::vector<Frame>& frames,
                bool swap, bool nsec, bool truncate_last = false) {
    std::vector<uint8_t> out;
    uint32_t magic = nsec ? 0xA1B23C4D : 0xA1B2C3D4;
    if (swap) magic = __builtin_bswap32(magic);
    put_u32(out, magic, false);
    put_u32(out, 0x00040002, swap);  // version 2.4
    put_u32(out, 0, swap);
    put_u32(out, 0, swap);
    put_u32(out, 1u << 16, swap);  // snaplen
    put_u32(out, 1, swap);         // LINKTYPE_ETHERNET
    for (const auto& frame : frames) {
        uint64_t div = nsec ? 1 : 1000;
        put_u32(out, static_cast<uint32_t>(frame.timestamp_ns / 1000000000ull),
                swap);
        put_u32(out,
                static_cast<uint32_t>(frame.timestamp_ns % 1000000000ull / div),
                swap);
        put_u32(out, static_cast<uint32_t>(frame.data.size()), swap);
        put_u32(out, static_cast<uint32_t>(frame.data.size()), swap);
        out.insert(out.end(), frame.data.begin(), frame.data.end());
    }
    if (truncate_last && out.size() > 8) out.resize(out.size() - 8);
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
}

std::vector<uint8_t> tcp_frame(Endpoint src, Endpoint dst, uint32_t seq,
                               uint8_t flags, const std::string& payload) {
    std::vector<uint8_t> out(12, 0);      // MACs
    put_u16be(out, 0x0800);               // IPv4
    size_t ip_at = out.size();
    out.push_back(0x45);                  // version 4, IHL 5
    out.push_back(0);
    put_u16be(out, static_cast<uint16_t>(20 + 20 + payload.size()));
    put_u16be(out, 0);                    // id
    put_u16be(out, 0);                    // no fragmentation
    out.push_back(64);                    // TTL
    out.push_back(6);                     // TCP
    put_u16be(out, 0);                    // checksum (unchecked)
    put_u32be(out, src.ip);
    put_u32be(out, dst.ip);
    (void)ip_at;
    put_u16be(out, src.port);
    put_u16be(out, dst.port);
    put_u32be(out, seq);
    put_u32be(out, 0);                    // ack
    out.push_back(0x50);                  // data offset 5
    out.push_back(flags);
    put_u16be(out, 0xffff);               // window
    put_u16be(out, 0);                    // checksum
    put_u16be(out, 0);                    // urgent
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

const Endpoint kClient{0x0a000001, 40000};
const Endpoint kServer{0x0a000002, 443};

Frame frame_at(uint64_t t, std::vector<uint8_t> data) {
    Frame f;
    f.timestamp_ns = t;
    f.data = std::move(data);
    return f;
}

// One-directional handshake + data segments starting at seq isn+1.
std::vector<Frame> one_way_flow(const std::vector<std::string>& chunks) {
    std::vector<Frame> frames;
    uint64_t t = 1000;
    frames.push_back(frame_at(t++, tcp_frame(kClient, kServer, 100, 0x02, "")));
    uint32_t seq = 101;
    for (const auto& chunk : chunks) {
        frames.push_back(
            frame_at(t++, tcp_frame(kClient, kServer, seq, 0x18, chunk)));
        seq += static_cast<uint32_t>(chunk.size());
    }
    return frames;
}

std::string payload_str(const StreamRecord& rec) {
    return std::string(rec.payload.begin(), rec.payload.end());
}

}  // namespace

TEST_CASE("parse_pcap empty capture and single frame") {
    TempDir dir;
    write_pcap(dir.file("empty.pcap"), {}, false, false);
    CHECK(parse_pcap(dir.file("empty.pcap")).empty());

    Frame frame = frame_at(5000000000ull, std::vector<uint8_t>(60, 0xab));
    write_pcap(dir.file("one.pcap"), {frame}, false, false);
    auto frames = parse_pcap(dir.file("one.pcap"));
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].data.size() == 60);
    CHECK(frames[0].data == frame.data);
    CHECK(frames[0].timestamp_ns == 5000000000ull);
}

TEST_CASE("parse_pcap endianness and timestamp variants") {
    TempDir dir;
    ChaChaRng rng(8, 0);
    std::vector<Frame> frames;
    for (int i = 0; i < 5; ++i) {
        std::vector<uint8_t> data(20 + rng.next_below(100));
        rng.fill_bytes(data);
        frames.push_back(
            frame_at(1000000000ull * (i + 1) + 123456000ull, data));
    }
    for (bool swap : {false, true})
        for (bool nsec : {false, true}) {
            std::string path = dir.file("v.pcap");
            write_pcap(path, frames, swap, nsec);
            auto got = parse_pcap(path);
            REQUIRE(got.size() == frames.size());
            for (size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].data == frames[i].data);
                CHECK(got[i].timestamp_ns == frames[i].timestamp_ns);
            }
        }
}

TEST_CASE("parse_pcap error and truncation handling") {
    TempDir dir;
    std::ofstream(dir.file("bad.pcap"), std::ios::binary)
        << std::string(24, 'x');
    CHECK_THROWS_AS(parse_pcap(dir.file("bad.pcap")), Error);
    std::ofstream(dir.file("short.pcap"), std::ios::binary) << "abc";
    CHECK_THROWS_AS(parse_pcap(dir.file("short.pcap")), Error);

    std::vector<Frame> frames = {
        frame_at(1000, std::vector<uint8_t>(30, 1)),
        frame_at(2000, std::vector<uint8_t>(40, 2))};
    write_pcap(dir.file("trunc.pcap"), frames, false, false, true);
    std::string warning;
    auto got = parse_pcap(dir.file("trunc.pcap"), &warning);
    CHECK(got.size() == 1);
    CHECK(!warning.empty());
}

TEST_CASE("reassemble in-order segments") {
    auto frames = one_way_flow({"AB", "CD", "EF"});
    ReassemblyStats stats;
    auto streams = reassemble(frames, {}, &stats);
    REQUIRE(streams.size() == 1);
    CHECK(payload_str(streams[0]) == "ABCDEF");
    CHECK(streams[0].syn_seen);
    CHECK(streams[0].bytes_src_to_dst == 6);
    CHECK(streams[0].bytes_dst_to_src == 0);
    CHECK(stats.duplicates == 0);
    CHECK(stats.flows_incomplete == 0);
}

TEST_CASE("reassemble permutation invariance") {
    auto base = one_way_flow({"AB", "CD", "EF"});
    // Permute only the data segments (index 1..3), keeping the SYN first.
    std::vector<size_t> order = {1, 2, 3};
    do {
        std::vector<Frame> frames = {base[0]};
        for (size_t i : order) frames.push_back(base[i]);
        auto streams = reassemble(frames, {});
        REQUIRE(streams.size() == 1);
        CHECK(payload_str(streams[0]) == "ABCDEF");
    } while (std::next_permutation(order.begin(), order.end()));
}

TEST_CASE("reassemble random segment permutations") {
    ChaChaRng rng(19, 0);
    for (int iter = 0; iter < 100; ++iter) {
        size_t parts = 2 + rng.next_below(4);  // up to 5 segments
        std::vector<std::string> chunks;
        std::string expect;
        for (size_t i = 0; i < parts; ++i) {
            std::string chunk(1 + rng.next_below(6), ' ');
            for (auto& c : chunk)
                c = static_cast<char>('a' + rng.next_below(26));
            expect += chunk;
            chunks.push_back(chunk);
        }
        auto base = one_way_flow(chunks);
        std::vector<size_t> order(parts);
        std::iota(order.begin(), order.end(), size_t{1});
        for (size_t i = parts; i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);
        std::vector<Frame> frames = {base[0]};
        for (size_t i : order) frames.push_back(base[i]);
        auto streams = reassemble(frames, {});
        REQUIRE(streams.size() == 1);
        CHECK(payload_str(streams[0]) == expect);
    }
}

TEST_CASE("reassemble dedups retransmissions") {
    auto frames = one_way_flow({"AB", "CD", "EF"});
    frames.push_back(frame_at(9000, tcp_frame(kClient, kServer, 103, 0x18,
                                              "CD")));  // retransmit
    ReassemblyStats stats;
    auto streams = reassemble(frames, {}, &stats);
    REQUIRE(streams.size() == 1);
    CHECK(payload_str(streams[0]) == "ABCDEF");
    CHECK(stats.duplicates == 1);
}

TEST_CASE("reassemble excludes gapped and conflicting flows") {
    auto gapped = one_way_flow({"AB", "CD", "EF"});
    gapped.erase(gapped.begin() + 2);  // drop "CD"
    ReassemblyStats stats;
    CHECK(reassemble(gapped, {}, &stats).empty());
    CHECK(stats.flows_incomplete == 1);

    auto conflicted = one_way_flow({"AB", "CD"});
    conflicted.push_back(
        frame_at(9000, tcp_frame(kClient, kServer, 103, 0x18, "XY")));
    stats = {};
    CHECK(reassemble(conflicted, {}, &stats).empty());
    CHECK(stats.flows_inconsistent == 1);
}

TEST_CASE("reassemble merges directions by arrival order") {
    std::vector<Frame> frames;
    frames.push_back(
        frame_at(1, tcp_frame(kClient, kServer, 100, 0x02, "")));
    frames.push_back(
        frame_at(2, tcp_frame(kServer, kClient, 500, 0x12, "")));
    frames.push_back(
        frame_at(3, tcp_frame(kClient, kServer, 101, 0x18, "hello ")));
    frames.push_back(
        frame_at(4, tcp_frame(kServer, kClient, 501, 0x18, "world ")));
    frames.push_back(
        frame_at(5, tcp_frame(kClient, kServer, 107, 0x18, "again")));
    auto streams = reassemble(frames, {});
    REQUIRE(streams.size() == 1);
    CHECK(payload_str(streams[0]) == "hello world again");
    CHECK(streams[0].src == kClient);
    CHECK(streams[0].dst == kServer);
    CHECK(streams[0].bytes_src_to_dst == 11);
    CHECK(streams[0].bytes_dst_to_src == 6);
}

TEST_CASE("reassemble port filter and non-TCP counters") {
    auto frames = one_way_flow({"AB"});
    CHECK(reassemble(frames, {443}).size() == 1);
    CHECK(reassemble(frames, {80}).empty());

    std::vector<uint8_t> udp = tcp_frame(kClient, kServer, 0, 0, "x");
    udp[14 + 9] = 17;  // protocol = UDP
    frames.push_back(frame_at(99, udp));
    frames.push_back(frame_at(100, std::vector<uint8_t>(10, 0)));  // runt
    ReassemblyStats stats;
    auto streams = reassemble(frames, {}, &stats);
    CHECK(streams.size() == 1);
    CHECK(stats.non_tcp == 1);
    CHECK(stats.non_ethernet_ip == 1);
}

TEST_CASE("sha256 known answer") {
    std::vector<uint8_t> abc = {'a', 'b', 'c'};
    CHECK(sha256_hex(abc) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex({}) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("manifest round-trip") {
    TempDir dir;
    std::vector<ManifestEntry> entries = {
        {"positive", "abc123", "streams/a.bin", {"tls", "synthetic"}},
        {"negative", "-", "streams/b.bin", {}}};
    write_manifest(dir.file("manifest.tsv"), entries);
    auto loaded = read_manifest(dir.file("manifest.tsv"));
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].label == "positive");
    CHECK(loaded[0].sha256 == "abc123");
    CHECK(loaded[0].path == "streams/a.bin");
    CHECK(loaded[0].tags == std::vector<std::string>{"tls", "synthetic"});
    CHECK(loaded[1].label == "negative");
    CHECK(loaded[1].tags.empty());

    std::ofstream(dir.file("bad.tsv")) << "maybe\tx\ty\n";
    CHECK_THROWS_AS(read_manifest(dir.file("bad.tsv")), Error);
    std::ofstream(dir.file("short.tsv")) << "positive only\n";
    CHECK_THROWS_AS(read_manifest(dir.file("short.tsv")), Error);
}

TEST_CASE("load_corpus verification and failure reporting") {
    TempDir dir;
    std::vector<uint8_t> a = {1, 2, 3, 4};
    std::vector<uint8_t> b = {9, 9, 9};
    std::ofstream(dir.file("a.bin"), std::ios::binary)
        .write(reinterpret_cast<const char*>(a.data()), 4);
    std::ofstream(dir.file("b.bin"), std::ios::binary)
        .write(reinterpret_cast<const char*>(b.data()), 3);

    std::vector<ManifestEntry> entries = {
        {"positive", sha256_hex(a), "a.bin", {}},
        {"negative", "-", "b.bin", {}}};
    write_manifest(dir.file("ok.tsv"), entries);
    std::vector<CorpusLoadFailure> failures;
    auto corpus = load_corpus(dir.file("ok.tsv"), &failures);
    CHECK(corpus.size() == 2);
    CHECK(failures.empty());
    CHECK(corpus[0].stream.payload == a);
    CHECK(corpus[0].label == "positive");

    entries[1].sha256 = std::string(64, '0');  // wrong checksum
    entries.push_back({"positive", "-", "missing.bin", {}});
    write_manifest(dir.file("mixed.tsv"), entries);
    failures.clear();
    corpus = load_corpus(dir.file("mixed.tsv"), &failures);
    CHECK(corpus.size() == 1);
    REQUIRE(failures.size() == 2);
    CHECK(failures[0].reason.find("checksum") != std::string::npos);

    std::ofstream(dir.file("empty.tsv")) << "";
    failures.clear();
    CHECK(load_corpus(dir.file("empty.tsv"), &failures).empty());
    CHECK(failures.empty());
}
