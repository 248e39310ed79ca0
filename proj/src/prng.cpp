#include "kexfp/prng.hpp"

namespace kexfp {

namespace {

inline uint32_t rotl32(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

inline void quarter_round(uint32_t& a, uint32_t& b, uint32_t& c, uint32_t& d) {
    a += b; d ^= a; d = rotl32(d, 16);
    c += d; b ^= c; b = rotl32(b, 12);
    a += b; d ^= a; d = rotl32(d, 8);
    c += d; b ^= c; b = rotl32(b, 7);
}

// splitmix64, used only to expand the user seed into key material.
inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

ChaChaRng::ChaChaRng(uint64_t seed, uint64_t stream) {
    static constexpr uint32_t kSigma[4] = {0x61707865, 0x3320646e,
                                           0x79622d32, 0x6b206574};
    state_[0] = kSigma[0];
    state_[1] = kSigma[1];
    state_[2] = kSigma[2];
    state_[3] = kSigma[3];
    uint64_t s = seed;
    for (int i = 0; i < 4; ++i) {
        uint64_t k = splitmix64(s);
        state_[4 + 2 * i] = static_cast<uint32_t>(k);
        state_[5 + 2 * i] = static_cast<uint32_t>(k >> 32);
    }
    state_[12] = 0;  // block counter
    state_[13] = 0;
    state_[14] = static_cast<uint32_t>(stream);
    state_[15] = static_cast<uint32_t>(stream >> 32);
}

void ChaChaRng::refill() {
    std::array<uint32_t, 16> x = state_;
    for (int round = 0; round < 10; ++round) {
        quarter_round(x[0], x[4], x[8], x[12]);
        quarter_round(x[1], x[5], x[9], x[13]);
        quarter_round(x[2], x[6], x[10], x[14]);
        quarter_round(x[3], x[7], x[11], x[15]);
        quarter_round(x[0], x[5], x[10], x[15]);
        quarter_round(x[1], x[6], x[11], x[12]);
        quarter_round(x[2], x[7], x[8], x[13]);
        quarter_round(x[3], x[4], x[9], x[14]);
    }
    for (int i = 0; i < 16; ++i) {
        uint32_t v = x[i] + state_[i];
        std::memcpy(block_.data() + 4 * i, &v, 4);
    }
    if (++state_[12] == 0) ++state_[13];
    pos_ = 0;
}

void ChaChaRng::fill_bytes(std::span<uint8_t> out) {
    size_t off = 0;
    while (off < out.size()) {
        if (pos_ == 64) refill();
        size_t n = std::min(out.size() - off, size_t{64} - pos_);
        std::memcpy(out.data() + off, block_.data() + pos_, n);
        pos_ += n;
        off += n;
    }
}

uint64_t ChaChaRng::next_u64() {
    uint8_t buf[8];
    fill_bytes(buf);
    uint64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

uint64_t ChaChaRng::next_below(uint64_t bound) {
    if (bound == 0) return 0;
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace kexfp
