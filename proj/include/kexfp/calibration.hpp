#ifndef KEXFP_CALIBRATION_HPP
#define KEXFP_CALIBRATION_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kexfp/entropy.hpp"

namespace kexfp {

// Uniform-baseline threshold for one (window, tau) configuration.
struct CalibrationRecord {
    unsigned tau = 8;
    size_t window_bytes = 0;
    double mu = 0.0;
    double sigma = 0.0;
    double t = 0.0;
    double theta = 0.0;  // mu - t * sigma
    double rho = 0.0;    // fraction of baseline samples strictly above theta
    uint64_t num_samples = 0;
    uint64_t seed = 0;
};

// Monte-Carlo summary of sample entropy over uniform random strings; the
// sorted sample buffer lets rho be evaluated for any theta.
struct Baseline {
    unsigned tau = 8;
    size_t window_bytes = 0;
    uint64_t num_samples = 0;
    uint64_t seed = 0;
    double mu = 0.0;
    double sigma = 0.0;               // population form
    std::vector<double> sorted_samples;

    // Fraction of samples strictly above theta.
    double fraction_above(double theta) const;
};

struct UnitRangeEstimate {
    size_t observed_min = 0;
    size_t observed_max = 0;
    size_t lo = 0;
    size_t hi = 0;
    double percentile_lo = 0.0;
    double percentile_hi = 0.0;
    size_t corpus_size = 0;
    size_t misses = 0;
};

inline constexpr uint64_t kMinCalibrationSamples = 10000;

// Draws num_samples independent window_bytes-long strings from a seeded
// ChaCha generator and summarizes their sample entropy under tau.
// Deterministic for a given (window, tau, K, seed) regardless of num_workers.
Baseline sample_uniform_baseline(size_t window_bytes, TauMeasure measure,
                                 uint64_t num_samples, uint64_t seed,
                                 unsigned num_workers = 0);

// Picks the smallest t on the 0.1 grid (refined to 0.01 if needed) whose
// theta = mu - t*sigma keeps at least target_rho of the baseline strictly
// above it.
CalibrationRecord derive_threshold(const Baseline& baseline, double target_rho);

// One scanned stream with the byte span of its known random field.
struct AnchoredLabels {
    std::vector<uint8_t> labels;  // filtered 0/1 labels
    size_t anchor_offset = 0;     // byte offset of the random field
    size_t anchor_length = 0;     // byte length of the random field
};

// Collects, over a corpus, the lengths of the high run overlapping each
// stream's anchor window span, and returns observed min/max plus the
// [p_lo, p_hi] empirical percentile range rounded outward.
UnitRangeEstimate estimate_unit_range(std::span<const AnchoredLabels> corpus,
                                      size_t window_bytes,
                                      double p_lo = 0.005, double p_hi = 0.995);

// Calibration records keyed by (window_bytes, tau).
class CalibrationTable {
public:
    void insert(const CalibrationRecord& record);
    const CalibrationRecord* find(size_t window_bytes, unsigned tau) const;
    std::vector<CalibrationRecord> records() const;
    bool empty() const { return records_.empty(); }

    // Machine-readable form: '#' header lines naming version, seed and K,
    // then one whitespace-separated record per line.
    void save(std::ostream& out) const;
    static CalibrationTable load(std::istream& in);
    void save_file(const std::string& path) const;
    static CalibrationTable load_file(const std::string& path);

    // Aligned human-readable table (N | mu | sigma | t | theta | rho).
    std::string render_text() const;

private:
    std::map<std::pair<size_t, unsigned>, CalibrationRecord> records_;
};

}  // namespace kexfp

#endif
