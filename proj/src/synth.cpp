#include "kexfp/synth.hpp"

#include <sstream>

#include "kexfp/prng.hpp"

namespace kexfp {

namespace {

// 16-value filler alphabet; entropy of any window under the 8-bit measure
// stays at or below log2(16) = 4 bits, below the calibrated cutoff, so
// voting keeps filler low-entropy regardless of the other measures.
constexpr char kFillerAlphabet[] = "abcdefghijklmnop";

uint8_t filler_byte(size_t absolute_offset, unsigned alphabet, size_t period) {
    size_t j = absolute_offset % period;
    return static_cast<uint8_t>(
        kFillerAlphabet[(j + j / alphabet) % alphabet]);
}

size_t uniform_in(ChaChaRng& rng, size_t lo, size_t hi) {
    return lo + static_cast<size_t>(rng.next_below(hi - lo + 1));
}

}  // namespace

SynthStream gen_stream(const StreamSpec& spec) {
    if (spec.filler_alphabet == 0 || spec.filler_alphabet > 16)
        throw Error("filler alphabet must have 1..16 values");
    SynthStream out;
    ChaChaRng rng(spec.seed, 0);
    auto& payload = out.stream.payload;
    for (const auto& segment : spec.segments) {
        switch (segment.kind) {
            case SegmentKind::Random: {
                out.planted.push_back({payload.size(), segment.length});
                size_t start = payload.size();
                payload.resize(start + segment.length);
                rng.fill_bytes({payload.data() + start, segment.length});
                break;
            }
            case SegmentKind::Filler:
                for (size_t i = 0; i < segment.length; ++i)
                    payload.push_back(filler_byte(payload.size(),
                                                  spec.filler_alphabet,
                                                  spec.filler_period));
                break;
            case SegmentKind::Literal:
                payload.insert(payload.end(), segment.literal.begin(),
                               segment.literal.end());
                break;
        }
    }
    std::ostringstream id;
    id << "synth-" << spec.seed << "-" << payload.size();
    out.stream.stream_id = id.str();
    out.stream.source = "synth";
    return out;
}

SynthStream gen_tls_like(uint64_t seed) {
    // Geometry drawn so the filtered label runs of a default-configured
    // detector land inside the TLS fingerprint's unit bounds.
    ChaChaRng geom(seed, 1);
    StreamSpec spec;
    spec.seed = seed;
    auto random_seg = [&](size_t lo, size_t hi) {
        spec.segments.push_back(
            {SegmentKind::Random, uniform_in(geom, lo, hi), {}});
    };
    auto filler_seg = [&](size_t lo, size_t hi) {
        spec.segments.push_back(
            {SegmentKind::Filler, uniform_in(geom, lo, hi), {}});
    };
    random_seg(42, 52);    // client/server randoms merged into one block
    filler_seg(200, 600);  // certificate control data
    random_seg(30, 38);    // key identifiers
    filler_seg(150, 500);  // more control data
    random_seg(120, 200);  // certificate signature + DH server params
    filler_seg(200, 200);  // trailing application-facing remainder
    SynthStream out = gen_stream(spec);
    out.stream.stream_id = "tls-like-" + std::to_string(seed);
    return out;
}

SynthStream gen_nugache_like(uint64_t seed, unsigned key_bits) {
    if (key_bits < 512 || key_bits % 8 != 0)
        throw Error("key_bits must be a multiple of 8, at least 512");
    const size_t key_bytes = key_bits / 8;
    StreamSpec spec;
    spec.seed = seed;
    std::vector<uint8_t> announce = {
        0x00, 0x00, static_cast<uint8_t>(key_bytes >> 8),
        static_cast<uint8_t>(key_bytes & 0xff)};
    spec.segments.push_back({SegmentKind::Literal, announce.size(), announce});
    spec.segments.push_back({SegmentKind::Random, key_bytes, {}});
    spec.segments.push_back({SegmentKind::Random, key_bytes, {}});
    SynthStream out = gen_stream(spec);
    out.stream.stream_id = "nugache-like-" + std::to_string(seed);
    return out;
}

SynthStream gen_ascii_like(uint64_t seed, size_t length) {
    static const char* kWords[] = {
        "the",    "quick",  "status",  "report", "session", "client",
        "server", "update", "request", "value",  "normal",  "field",
        "index",  "count",  "hello",   "check"};
    ChaChaRng rng(seed, 2);
    SynthStream out;
    auto& payload = out.stream.payload;
    while (payload.size() < length) {
        const char* word = kWords[rng.next_below(std::size(kWords))];
        while (*word && payload.size() < length)
            payload.push_back(static_cast<uint8_t>(*word++));
        if (payload.size() < length) payload.push_back(' ');
    }
    out.stream.stream_id = "ascii-like-" + std::to_string(seed);
    out.stream.source = "synth";
    return out;
}

}  // namespace kexfp
