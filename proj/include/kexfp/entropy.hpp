#ifndef KEXFP_ENTROPY_HPP
#define KEXFP_ENTROPY_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kexfp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Byte window reinterpreted as symbols of tau bits (MSB-first).
struct TauMeasure {
    unsigned tau;  // bits per symbol, one of {1, 2, 4, 8}

    explicit TauMeasure(unsigned t) : tau(t) {
        if (t != 1 && t != 2 && t != 4 && t != 8)
            throw Error("invalid measure: tau must be one of {1,2,4,8}");
    }

    unsigned alphabet_size() const { return 1u << tau; }
    size_t symbols_per_window(size_t window_bytes) const {
        return window_bytes * 8 / tau;
    }
};

// One entropy value per window start offset, step one byte.
struct EntropySeries {
    size_t window_bytes = 0;
    unsigned tau = 8;
    size_t stream_len = 0;
    std::vector<double> values;
};

// Splits bytes MSB-first into tau-bit symbols.
std::vector<uint8_t> split_symbols(std::span<const uint8_t> bytes,
                                   TauMeasure measure);

// Inverse of split_symbols.
std::vector<uint8_t> merge_symbols(std::span<const uint8_t> symbols,
                                   TauMeasure measure);

// Plug-in (MLE) entropy estimate in bits from relative symbol frequencies.
double sample_entropy(std::span<const uint8_t> symbols, unsigned alphabet_size);

inline constexpr size_t kMinWindowBytes = 16;

// Slides an N-byte window over the stream with a one-byte step and computes
// sample entropy of the tau-bit symbols in each window. The incremental and
// naive paths accumulate sum(n_i * log2 n_i) in shared fixed-point terms, so
// their outputs are bit-identical.
EntropySeries window_scan(std::span<const uint8_t> stream, size_t window_bytes,
                          TauMeasure measure);

// Per-window recomputation from scratch; reference path for window_scan.
EntropySeries window_scan_naive(std::span<const uint8_t> stream,
                                size_t window_bytes, TauMeasure measure);

// Probability that all of N draws from an m-symbol uniform alphabet are
// distinct: prod_{i=0}^{N-1} (m-i)/m, evaluated as an exact rational and
// converted to double at the end. Returns 0 when N > m.
double prob_all_distinct(uint64_t num_samples, uint64_t alphabet_size);

// Exact expectation of sample entropy over all length-N strings drawn i.i.d.
// from p, by enumeration of symbol-count compositions with exact big-integer
// multinomial coefficients. Tiny instances only; used as a test oracle.
double exact_truncated_entropy(unsigned num_samples, unsigned alphabet_size,
                               std::span<const double> p);

}  // namespace kexfp

#endif
