#include "kexfp/ingest.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

namespace kexfp {

namespace {

uint32_t read_u32(const uint8_t* p, bool swap) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    if (swap) v = __builtin_bswap32(v);
    return v;
}

uint16_t read_u16be(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] << 8 | p[1]);
}

uint32_t read_u32be(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | p[3];
}

struct Segment {
    uint32_t seq = 0;
    size_t arrival = 0;
    std::vector<uint8_t> payload;
};

struct DirectionState {
    std::vector<Segment> segments;
    std::optional<uint32_t> isn;  // sequence of SYN
    bool syn_seen = false;
};

struct FlowState {
    Endpoint a, b;  // canonical order (a < b)
    DirectionState dir_ab, dir_ba;
    Endpoint first_src, first_dst;
    uint64_t first_packet_ns = 0;
    bool first_set = false;
};

std::string endpoint_str(const Endpoint& e) {
    std::ostringstream out;
    out << ((e.ip >> 24) & 0xff) << '.' << ((e.ip >> 16) & 0xff) << '.'
        << ((e.ip >> 8) & 0xff) << '.' << (e.ip & 0xff) << ':' << e.port;
    return out.str();
}

// Orders a direction's segments by sequence number, drops retransmitted
// bytes (which must agree with what was already seen) and returns the
// contributing chunks. Returns nullopt on a gap or a conflicting overlap.
std::optional<std::vector<Segment>> order_direction(DirectionState& dir,
                                                    ReassemblyStats* stats,
                                                    bool& inconsistent) {
    auto& segs = dir.segments;
    std::stable_sort(segs.begin(), segs.end(),
                     [](const Segment& x, const Segment& y) {
                         return x.seq < y.seq;
                     });
    std::vector<Segment> ordered;
    std::vector<uint8_t> buffer;
    std::optional<uint32_t> base;
    for (auto& seg : segs) {
        if (seg.payload.empty()) continue;
        if (!base) {
            if (dir.isn && seg.seq != *dir.isn + 1) return std::nullopt;
            base = seg.seq;
        }
        uint32_t offset = seg.seq - *base;
        if (offset > buffer.size()) return std::nullopt;  // gap
        size_t overlap = buffer.size() - offset;
        size_t check = std::min(overlap, seg.payload.size());
        if (check > 0) {
            if (!std::equal(seg.payload.begin(),
                            seg.payload.begin() + static_cast<ptrdiff_t>(check),
                            buffer.begin() + offset)) {
                inconsistent = true;
                return std::nullopt;
            }
            if (stats) ++stats->duplicates;
        }
        if (seg.payload.size() > check) {
            Segment fresh;
            fresh.seq = seg.seq + static_cast<uint32_t>(check);
            fresh.arrival = seg.arrival;
            fresh.payload.assign(seg.payload.begin() + static_cast<ptrdiff_t>(check),
                                 seg.payload.end());
            buffer.insert(buffer.end(), fresh.payload.begin(),
                          fresh.payload.end());
            ordered.push_back(std::move(fresh));
        }
    }
    return ordered;
}

}  // namespace

std::vector<Frame> parse_pcap(const std::string& path, std::string* warning) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open capture: " + path);
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
    if (data.size() < 24) throw Error("unsupported format: truncated pcap header");

    uint32_t magic = read_u32(data.data(), false);
    bool swap = false, nsec = false;
    switch (magic) {
        case 0xA1B2C3D4: break;
        case 0xD4C3B2A1: swap = true; break;
        case 0xA1B23C4D: nsec = true; break;
        case 0x4D3CB2A1: swap = true; nsec = true; break;
        default: throw Error("unsupported format: bad pcap magic");
    }

    std::vector<Frame> frames;
    size_t off = 24;
    while (off + 16 <= data.size()) {
        uint32_t ts_sec = read_u32(data.data() + off, swap);
        uint32_t ts_frac = read_u32(data.data() + off + 4, swap);
        uint32_t incl_len = read_u32(data.data() + off + 8, swap);
        if (incl_len > (1u << 26))
            throw Error("stream corrupt: implausible record length at offset " +
                        std::to_string(off));
        if (off + 16 + incl_len > data.size()) {
            if (warning) *warning = "truncated trailing record dropped";
            break;
        }
        Frame frame;
        frame.timestamp_ns =
            static_cast<uint64_t>(ts_sec) * 1000000000ull +
            static_cast<uint64_t>(ts_frac) * (nsec ? 1ull : 1000ull);
        frame.data.assign(data.begin() + static_cast<ptrdiff_t>(off + 16),
                          data.begin() + static_cast<ptrdiff_t>(off + 16 + incl_len));
        frames.push_back(std::move(frame));
        off += 16 + incl_len;
    }
    if (off != data.size() && off + 16 > data.size() && warning &&
        warning->empty())
        *warning = "truncated trailing record header dropped";
    return frames;
}

std::vector<StreamRecord> reassemble(const std::vector<Frame>& frames,
                                     const std::set<uint16_t>& port_filter,
                                     ReassemblyStats* stats) {
    std::map<std::pair<Endpoint, Endpoint>, FlowState> flows;

    for (size_t arrival = 0; arrival < frames.size(); ++arrival) {
        const auto& raw = frames[arrival].data;
        if (raw.size() < 14 + 20) {
            if (stats) ++stats->non_ethernet_ip;
            continue;
        }
        if (read_u16be(raw.data() + 12) != 0x0800) {  // IPv4 only
            if (stats) ++stats->non_ethernet_ip;
            continue;
        }
        const uint8_t* ip = raw.data() + 14;
        if ((ip[0] >> 4) != 4) {
            if (stats) ++stats->non_ethernet_ip;
            continue;
        }
        size_t ihl = (ip[0] & 0x0f) * 4;
        uint16_t total_len = read_u16be(ip + 2);
        if (ihl < 20 || 14 + total_len > raw.size() || total_len < ihl) {
            if (stats) ++stats->non_ethernet_ip;
            continue;
        }
        uint16_t frag = read_u16be(ip + 6);
        if ((frag & 0x1fff) != 0 || (frag & 0x2000) != 0) {
            if (stats) ++stats->fragmented;
            continue;
        }
        if (ip[9] != 6) {  // TCP
            if (stats) ++stats->non_tcp;
            continue;
        }
        const uint8_t* tcp = ip + ihl;
        if (14 + ihl + 20 > raw.size()) {
            if (stats) ++stats->non_tcp;
            continue;
        }
        size_t data_off = ((tcp[12] >> 4) & 0x0f) * 4;
        if (data_off < 20 || ihl + data_off > total_len) {
            if (stats) ++stats->non_tcp;
            continue;
        }

        Endpoint src{read_u32be(ip + 12), read_u16be(tcp)};
        Endpoint dst{read_u32be(ip + 16), read_u16be(tcp + 2)};
        if (!port_filter.empty() && !port_filter.count(src.port) &&
            !port_filter.count(dst.port))
            continue;

        uint32_t seq = read_u32be(tcp + 4);
        uint8_t flags = tcp[13];
        size_t payload_len = total_len - ihl - data_off;
        const uint8_t* payload = tcp + data_off;

        auto key = std::minmax(src, dst);
        FlowState& flow = flows[key];
        if (!flow.first_set) {
            flow.a = key.first;
            flow.b = key.second;
            flow.first_src = src;
            flow.first_dst = dst;
            flow.first_packet_ns = frames[arrival].timestamp_ns;
            flow.first_set = true;
        }
        DirectionState& dir = src == flow.a ? flow.dir_ab : flow.dir_ba;
        if (flags & 0x02) {  // SYN
            dir.syn_seen = true;
            dir.isn = seq;
        }
        if (payload_len > 0) {
            Segment seg;
            seg.seq = seq;
            seg.arrival = arrival;
            seg.payload.assign(payload, payload + payload_len);
            dir.segments.push_back(std::move(seg));
        }
    }

    std::vector<StreamRecord> streams;
    for (auto& [key, flow] : flows) {
        bool inconsistent = false;
        auto ab = order_direction(flow.dir_ab, stats, inconsistent);
        auto ba = order_direction(flow.dir_ba, stats, inconsistent);
        if (!ab || !ba) {
            if (stats) {
                if (inconsistent)
                    ++stats->flows_inconsistent;
                else
                    ++stats->flows_incomplete;
            }
            continue;
        }

        StreamRecord rec;
        rec.src = flow.first_src;
        rec.dst = flow.first_dst;
        rec.first_packet_ns = flow.first_packet_ns;
        rec.syn_seen = flow.dir_ab.syn_seen || flow.dir_ba.syn_seen;
        if (!rec.syn_seen && stats) ++stats->flows_no_syn;

        // Merge directions by arrival order while keeping each direction's
        // sequence order.
        size_t ia = 0, ib = 0;
        while (ia < ab->size() || ib < ba->size()) {
            bool take_a;
            if (ia == ab->size())
                take_a = false;
            else if (ib == ba->size())
                take_a = true;
            else
                take_a = (*ab)[ia].arrival < (*ba)[ib].arrival;
            const Segment& seg = take_a ? (*ab)[ia++] : (*ba)[ib++];
            rec.payload.insert(rec.payload.end(), seg.payload.begin(),
                               seg.payload.end());
            bool from_first_src =
                take_a == (flow.first_src == flow.a);
            (from_first_src ? rec.bytes_src_to_dst : rec.bytes_dst_to_src) +=
                seg.payload.size();
        }

        std::ostringstream id;
        id << endpoint_str(rec.src) << '-' << endpoint_str(rec.dst) << '-'
           << rec.first_packet_ns;
        rec.stream_id = id.str();
        streams.push_back(std::move(rec));
    }
    return streams;
}

std::string sha256_hex(std::span<const uint8_t> data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0x0f];
    }
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ManifestEntry entry;
        std::string tags;
        if (!std::getline(ls, entry.label, '\t') ||
            !std::getline(ls, entry.sha256, '\t') ||
            !std::getline(ls, entry.path, '\t'))
            throw Error("manifest: malformed line: " + line);
        if (std::getline(ls, tags, '\t')) {
            std::istringstream ts(tags);
            std::string tag;
            while (std::getline(ts, tag, ',')) entry.tags.push_back(tag);
        }
        if (entry.label != "positive" && entry.label != "negative")
            throw Error("manifest: unknown label '" + entry.label + "'");
        entries.push_back(std::move(entry));
    }
    return entries;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path);
    for (const auto& entry : entries) {
        out << entry.label << '\t' << entry.sha256 << '\t' << entry.path;
        if (!entry.tags.empty()) {
            out << '\t';
            for (size_t i = 0; i < entry.tags.size(); ++i)
                out << (i ? "," : "") << entry.tags[i];
        }
        out << '\n';
    }
}

StreamRecord load_raw_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read stream file: " + path);
    StreamRecord rec;
    rec.payload.assign((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
    rec.source = path;
    rec.stream_id = path;
    return rec;
}

std::vector<CorpusEntry> load_corpus(const std::string& manifest_path,
                                     std::vector<CorpusLoadFailure>* failures) {
    auto entries = read_manifest(manifest_path);
    std::string base;
    if (auto slash = manifest_path.find_last_of('/');
        slash != std::string::npos)
        base = manifest_path.substr(0, slash + 1);

    std::vector<CorpusEntry> corpus;
    for (const auto& entry : entries) {
        std::string path = entry.path;
        if (!path.empty() && path[0] != '/') path = base + path;
        try {
            StreamRecord rec = load_raw_stream(path);
            if (!entry.sha256.empty() && entry.sha256 != "-" &&
                sha256_hex(rec.payload) != entry.sha256)
                throw Error("checksum mismatch");
            corpus.push_back({std::move(rec), entry.label});
        } catch (const std::exception& e) {
            if (failures) failures->push_back({path, e.what()});
        }
    }
    return corpus;
}

}  // namespace kexfp
