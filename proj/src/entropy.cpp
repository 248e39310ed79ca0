#include "kexfp/entropy.hpp"

#include <algorithm>
#include <cmath>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace kexfp {

namespace {

using BigInt = boost::multiprecision::cpp_int;
using BigFloat = boost::multiprecision::cpp_bin_float_100;

// Fixed-point representation of n*log2(n). Integer accumulation makes the
// running sum independent of addition order, so the incremental and naive
// window paths agree bit for bit.
constexpr double kScale = 0x1p40;

class NLogNTable {
public:
    explicit NLogNTable(size_t max_count) : table_(max_count + 1, 0) {
        if (max_count > (size_t{1} << 20))
            throw Error("window too large for fixed-point entropy table");
        for (size_t n = 2; n <= max_count; ++n)
            table_[n] = llround(static_cast<double>(n) *
                                std::log2(static_cast<double>(n)) * kScale);
    }

    int64_t operator[](size_t n) const { return table_[n]; }

    // entropy = log2(N) - (1/N) * sum(n_i * log2 n_i)
    double finalize(int64_t sum, size_t num_symbols) const {
        return std::log2(static_cast<double>(num_symbols)) -
               static_cast<double>(sum) /
                   (static_cast<double>(num_symbols) * kScale);
    }

private:
    std::vector<int64_t> table_;
};

void check_window(size_t window_bytes) {
    if (window_bytes < kMinWindowBytes)
        throw Error("window too small: minimum is " +
                    std::to_string(kMinWindowBytes) + " bytes");
}

}  // namespace

std::vector<uint8_t> split_symbols(std::span<const uint8_t> bytes,
                                   TauMeasure measure) {
    const unsigned tau = measure.tau;
    const unsigned per_byte = 8 / tau;
    const uint8_t mask = static_cast<uint8_t>((1u << tau) - 1);
    std::vector<uint8_t> out;
    out.reserve(bytes.size() * per_byte);
    for (uint8_t b : bytes)
        for (unsigned k = 0; k < per_byte; ++k)
            out.push_back(static_cast<uint8_t>(b >> (8 - tau * (k + 1))) & mask);
    return out;
}

std::vector<uint8_t> merge_symbols(std::span<const uint8_t> symbols,
                                   TauMeasure measure) {
    const unsigned tau = measure.tau;
    const unsigned per_byte = 8 / tau;
    if (symbols.size() % per_byte != 0)
        throw Error("symbol count not a whole number of bytes");
    std::vector<uint8_t> out;
    out.reserve(symbols.size() / per_byte);
    for (size_t i = 0; i < symbols.size(); i += per_byte) {
        unsigned b = 0;
        for (unsigned k = 0; k < per_byte; ++k)
            b = (b << tau) | symbols[i + k];
        out.push_back(static_cast<uint8_t>(b));
    }
    return out;
}

double sample_entropy(std::span<const uint8_t> symbols,
                      unsigned alphabet_size) {
    if (symbols.empty()) throw Error("undefined entropy: empty symbol sequence");
    std::vector<size_t> counts(alphabet_size, 0);
    for (uint8_t s : symbols) {
        if (s >= alphabet_size) throw Error("invalid symbol: out of alphabet");
        ++counts[s];
    }
    const double total = static_cast<double>(symbols.size());
    double h = 0.0;
    for (size_t n : counts) {
        if (n == 0) continue;
        double p = static_cast<double>(n) / total;
        h -= p * std::log2(p);
    }
    return h;
}

EntropySeries window_scan(std::span<const uint8_t> stream, size_t window_bytes,
                          TauMeasure measure) {
    check_window(window_bytes);
    EntropySeries series;
    series.window_bytes = window_bytes;
    series.tau = measure.tau;
    series.stream_len = stream.size();
    if (stream.size() < window_bytes) return series;

    const size_t num_symbols = measure.symbols_per_window(window_bytes);
    const NLogNTable table(num_symbols);
    const size_t num_windows = stream.size() - window_bytes + 1;
    series.values.reserve(num_windows);

    std::vector<uint32_t> counts(measure.alphabet_size(), 0);
    const unsigned tau = measure.tau;
    const unsigned per_byte = 8 / tau;
    const uint8_t mask = static_cast<uint8_t>((1u << tau) - 1);
    int64_t sum = 0;

    auto add_byte = [&](uint8_t b) {
        for (unsigned k = 0; k < per_byte; ++k) {
            uint8_t v = static_cast<uint8_t>(b >> (8 - tau * (k + 1))) & mask;
            sum -= table[counts[v]];
            ++counts[v];
            sum += table[counts[v]];
        }
    };
    auto drop_byte = [&](uint8_t b) {
        for (unsigned k = 0; k < per_byte; ++k) {
            uint8_t v = static_cast<uint8_t>(b >> (8 - tau * (k + 1))) & mask;
            sum -= table[counts[v]];
            --counts[v];
            sum += table[counts[v]];
        }
    };

    for (size_t i = 0; i < window_bytes; ++i) add_byte(stream[i]);
    series.values.push_back(table.finalize(sum, num_symbols));
    for (size_t i = 1; i < num_windows; ++i) {
        drop_byte(stream[i - 1]);
        add_byte(stream[i + window_bytes - 1]);
        series.values.push_back(table.finalize(sum, num_symbols));
    }
    return series;
}

EntropySeries window_scan_naive(std::span<const uint8_t> stream,
                                size_t window_bytes, TauMeasure measure) {
    check_window(window_bytes);
    EntropySeries series;
    series.window_bytes = window_bytes;
    series.tau = measure.tau;
    series.stream_len = stream.size();
    if (stream.size() < window_bytes) return series;

    const size_t num_symbols = measure.symbols_per_window(window_bytes);
    const NLogNTable table(num_symbols);
    const size_t num_windows = stream.size() - window_bytes + 1;
    series.values.reserve(num_windows);
    const unsigned m = measure.alphabet_size();

    for (size_t i = 0; i < num_windows; ++i) {
        auto symbols =
            split_symbols(stream.subspan(i, window_bytes), measure);
        std::vector<uint32_t> counts(m, 0);
        for (uint8_t s : symbols) ++counts[s];
        int64_t sum = 0;
        for (unsigned v = 0; v < m; ++v) sum += table[counts[v]];
        series.values.push_back(table.finalize(sum, num_symbols));
    }
    return series;
}

double prob_all_distinct(uint64_t num_samples, uint64_t alphabet_size) {
    if (num_samples == 0) throw Error("prob_all_distinct: N must be positive");
    if (num_samples > alphabet_size) return 0.0;
    BigInt numerator = 1;
    for (uint64_t i = 0; i < num_samples; ++i)
        numerator *= BigInt(alphabet_size - i);
    BigInt denominator = boost::multiprecision::pow(
        BigInt(alphabet_size), static_cast<unsigned>(num_samples));
    return static_cast<double>(BigFloat(numerator) / BigFloat(denominator));
}

double exact_truncated_entropy(unsigned num_samples, unsigned alphabet_size,
                               std::span<const double> p) {
    const unsigned m = alphabet_size;
    const unsigned n_total = num_samples;
    if (m < 1 || m > 4) throw Error("enumeration limit: alphabet size must be <= 4");
    if ((m > 2 && n_total > 16) || n_total > 4096 || n_total == 0)
        throw Error("enumeration limit: instance too large");
    if (p.size() != m) throw Error("probability vector length mismatch");
    double psum = 0.0;
    for (double pi : p) {
        if (pi < 0.0 || pi > 1.0) throw Error("invalid probability vector");
        psum += pi;
    }
    if (std::abs(psum - 1.0) > 1e-12) throw Error("probabilities must sum to 1");

    std::vector<BigInt> factorial(n_total + 1);
    factorial[0] = 1;
    for (unsigned i = 1; i <= n_total; ++i) factorial[i] = factorial[i - 1] * i;

    std::vector<BigFloat> big_p(m);
    for (unsigned i = 0; i < m; ++i) big_p[i] = BigFloat(p[i]);

    const double total = static_cast<double>(n_total);
    BigFloat expectation = 0;
    std::vector<unsigned> counts(m, 0);

    // Enumerate all compositions (n_0, ..., n_{m-1}) with sum n_total.
    auto recurse = [&](auto&& self, unsigned idx, unsigned remaining) -> void {
        if (idx == m - 1) {
            counts[idx] = remaining;
            BigInt coeff = factorial[n_total];
            for (unsigned i = 0; i < m; ++i) coeff /= factorial[counts[i]];
            BigFloat weight = BigFloat(coeff);
            for (unsigned i = 0; i < m; ++i)
                if (counts[i] > 0)
                    weight *= boost::multiprecision::pow(big_p[i],
                                                         static_cast<int>(counts[i]));
            double h = 0.0;
            for (unsigned i = 0; i < m; ++i) {
                if (counts[i] == 0) continue;
                double q = static_cast<double>(counts[i]) / total;
                h -= q * std::log2(q);
            }
            expectation += weight * BigFloat(h);
            return;
        }
        for (unsigned n = 0; n <= remaining; ++n) {
            counts[idx] = n;
            self(self, idx + 1, remaining - n);
        }
    };
    recurse(recurse, 0, n_total);
    return static_cast<double>(expectation);
}

}  // namespace kexfp
