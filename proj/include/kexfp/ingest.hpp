#ifndef KEXFP_INGEST_HPP
#define KEXFP_INGEST_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kexfp/entropy.hpp"

namespace kexfp {

struct Endpoint {
    uint32_t ip = 0;
    uint16_t port = 0;

    auto operator<=>(const Endpoint&) const = default;
};

// Reassembled bidirectional TCP payload, headers stripped.
struct StreamRecord {
    std::string stream_id;
    Endpoint src;  // endpoint that sent the first seen packet
    Endpoint dst;
    uint64_t first_packet_ns = 0;
    std::vector<uint8_t> payload;
    size_t bytes_src_to_dst = 0;
    size_t bytes_dst_to_src = 0;
    std::string source;  // pcap path or raw file
    bool syn_seen = true;
};

struct Frame {
    uint64_t timestamp_ns = 0;
    std::vector<uint8_t> data;  // link-layer frame
};

struct ReassemblyStats {
    size_t non_ethernet_ip = 0;
    size_t non_tcp = 0;
    size_t fragmented = 0;
    size_t duplicates = 0;
    size_t flows_incomplete = 0;
    size_t flows_inconsistent = 0;
    size_t flows_no_syn = 0;
};

// Classic pcap reader: both endiannesses, usec and nsec variants. A
// truncated trailing record is dropped with a note in *warning.
std::vector<Frame> parse_pcap(const std::string& path,
                              std::string* warning = nullptr);

// Groups Ethernet/IPv4/TCP segments into flows, orders each direction by
// sequence number, dedups exact retransmissions and merges directions by
// arrival order. Flows with gaps or conflicting overlaps are excluded and
// counted.
std::vector<StreamRecord> reassemble(const std::vector<Frame>& frames,
                                     const std::set<uint16_t>& port_filter,
                                     ReassemblyStats* stats = nullptr);

struct ManifestEntry {
    std::string label;  // "positive" or "negative"
    std::string sha256;
    std::string path;
    std::vector<std::string> tags;
};

struct CorpusEntry {
    StreamRecord stream;
    std::string label;
};

struct CorpusLoadFailure {
    std::string path;
    std::string reason;
};

// Manifest: one "label<TAB>sha256<TAB>path" line per stream file.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

// Loads raw stream files named by the manifest; checksum failures are
// reported per entry and loading continues.
std::vector<CorpusEntry> load_corpus(
    const std::string& manifest_path,
    std::vector<CorpusLoadFailure>* failures = nullptr);

StreamRecord load_raw_stream(const std::string& path);

std::string sha256_hex(std::span<const uint8_t> data);

}  // namespace kexfp

#endif
