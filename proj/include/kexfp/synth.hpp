#ifndef KEXFP_SYNTH_HPP
#define KEXFP_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "kexfp/ingest.hpp"

namespace kexfp {

enum class SegmentKind { Random, Filler, Literal };

struct SynthSegment {
    SegmentKind kind = SegmentKind::Filler;
    size_t length = 0;
    std::vector<uint8_t> literal;  // used when kind == Literal
};

// Filler is a repeating pattern over at most 16 byte values with a period
// longer than the detector window, so every window's entropy stays below
// the 8-bit threshold and voting vetoes it.
struct StreamSpec {
    std::vector<SynthSegment> segments;
    uint64_t seed = 0;
    unsigned filler_alphabet = 16;  // distinct byte values, <= 16
    size_t filler_period = 48;      // must exceed the detector window
};

struct ByteSpan {
    size_t offset = 0;
    size_t length = 0;
};

struct SynthStream {
    StreamRecord stream;
    std::vector<ByteSpan> planted;  // byte spans of random segments
};

SynthStream gen_stream(const StreamSpec& spec);

// Stream whose planted-block geometry is drawn inside ranges consistent
// with the shipped TLS DHE-RSA fingerprint.
SynthStream gen_tls_like(uint64_t seed);

// Length announcement (4 low-entropy bytes), then a random key and an
// equal-length random reply.
SynthStream gen_nugache_like(uint64_t seed, unsigned key_bits = 512);

// Printable-ASCII filler stream of the given length (negative corpus).
SynthStream gen_ascii_like(uint64_t seed, size_t length);

}  // namespace kexfp

#endif
