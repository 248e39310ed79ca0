#ifndef KEXFP_PRNG_HPP
#define KEXFP_PRNG_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <span>

namespace kexfp {

// Counter-based ChaCha20 generator. Keyed from a 64-bit seed plus a stream
// index, so independent sub-generators can be derived for parallel work
// without overlapping output.
class ChaChaRng {
public:
    explicit ChaChaRng(uint64_t seed, uint64_t stream = 0);

    void fill_bytes(std::span<uint8_t> out);
    uint64_t next_u64();

    // Uniform in [0, 1).
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) without modulo bias.
    uint64_t next_below(uint64_t bound);

private:
    void refill();

    std::array<uint32_t, 16> state_;
    std::array<uint8_t, 64> block_;
    size_t pos_ = 64;  // exhausted
};

}  // namespace kexfp

#endif
