#include "kexfp/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "kexfp/prng.hpp"

namespace kexfp {

namespace {

constexpr uint64_t kChunkSize = 4096;  // strings per derived sub-seed

// Entropy of one uniform random string, counts-based.
double string_entropy(std::span<const uint8_t> bytes, TauMeasure measure,
                      std::vector<uint32_t>& counts) {
    std::fill(counts.begin(), counts.end(), 0);
    const unsigned tau = measure.tau;
    const unsigned per_byte = 8 / tau;
    const uint8_t mask = static_cast<uint8_t>((1u << tau) - 1);
    for (uint8_t b : bytes)
        for (unsigned k = 0; k < per_byte; ++k)
            ++counts[static_cast<uint8_t>(b >> (8 - tau * (k + 1))) & mask];
    const double total = static_cast<double>(bytes.size() * per_byte);
    double h = 0.0;
    for (uint32_t n : counts) {
        if (n == 0) continue;
        double p = static_cast<double>(n) / total;
        h -= p * std::log2(p);
    }
    return h;
}

}  // namespace

double Baseline::fraction_above(double theta) const {
    auto it = std::upper_bound(sorted_samples.begin(), sorted_samples.end(),
                               theta);
    return static_cast<double>(sorted_samples.end() - it) /
           static_cast<double>(sorted_samples.size());
}

Baseline sample_uniform_baseline(size_t window_bytes, TauMeasure measure,
                                 uint64_t num_samples, uint64_t seed,
                                 unsigned num_workers) {
    if (num_samples < kMinCalibrationSamples)
        throw Error("insufficient samples: need at least " +
                    std::to_string(kMinCalibrationSamples));
    if (window_bytes < kMinWindowBytes)
        throw Error("window too small: minimum is " +
                    std::to_string(kMinWindowBytes) + " bytes");

    Baseline baseline;
    baseline.tau = measure.tau;
    baseline.window_bytes = window_bytes;
    baseline.num_samples = num_samples;
    baseline.seed = seed;
    baseline.sorted_samples.resize(num_samples);

    const uint64_t num_chunks = (num_samples + kChunkSize - 1) / kChunkSize;
    if (num_workers == 0)
        num_workers = std::max(1u, std::thread::hardware_concurrency());
    num_workers = static_cast<unsigned>(
        std::min<uint64_t>(num_workers, num_chunks));

    auto run_chunks = [&](uint64_t first, uint64_t step) {
        std::vector<uint8_t> buf(window_bytes);
        std::vector<uint32_t> counts(measure.alphabet_size());
        for (uint64_t chunk = first; chunk < num_chunks; chunk += step) {
            ChaChaRng rng(seed, chunk);
            const uint64_t begin = chunk * kChunkSize;
            const uint64_t end = std::min(begin + kChunkSize, num_samples);
            for (uint64_t i = begin; i < end; ++i) {
                rng.fill_bytes(buf);
                baseline.sorted_samples[i] = string_entropy(buf, measure, counts);
            }
        }
    };

    if (num_workers <= 1) {
        run_chunks(0, 1);
    } else {
        std::vector<std::thread> workers;
        workers.reserve(num_workers);
        for (unsigned w = 0; w < num_workers; ++w)
            workers.emplace_back(run_chunks, w, num_workers);
        for (auto& t : workers) t.join();
    }

    double sum = 0.0;
    for (double v : baseline.sorted_samples) sum += v;
    baseline.mu = sum / static_cast<double>(num_samples);
    double sq = 0.0;
    for (double v : baseline.sorted_samples) {
        double d = v - baseline.mu;
        sq += d * d;
    }
    baseline.sigma = std::sqrt(sq / static_cast<double>(num_samples));
    std::sort(baseline.sorted_samples.begin(), baseline.sorted_samples.end());
    return baseline;
}

CalibrationRecord derive_threshold(const Baseline& baseline,
                                   double target_rho) {
    if (target_rho < 0.9 || target_rho >= 1.0)
        throw Error("confidence floor must be in [0.9, 1)");

    auto make_record = [&](double t) {
        CalibrationRecord rec;
        rec.tau = baseline.tau;
        rec.window_bytes = baseline.window_bytes;
        rec.mu = baseline.mu;
        rec.sigma = baseline.sigma;
        rec.t = t;
        rec.theta = baseline.mu - t * baseline.sigma;
        rec.rho = baseline.fraction_above(rec.theta);
        rec.num_samples = baseline.num_samples;
        rec.seed = baseline.seed;
        return rec;
    };

    for (int step : {10, 1}) {  // 0.1 grid, then 0.01 refinement
        for (int i = step; i <= 990; i += step) {
            double t = static_cast<double>(i) / 100.0;
            CalibrationRecord rec = make_record(t);
            if (rec.rho >= target_rho) return rec;
        }
    }
    throw Error("calibration failure: no t on grid reaches target confidence");
}

UnitRangeEstimate estimate_unit_range(std::span<const AnchoredLabels> corpus,
                                      size_t window_bytes, double p_lo,
                                      double p_hi) {
    if (corpus.empty()) throw Error("estimate_unit_range: empty corpus");
    if (!(p_lo >= 0.0 && p_lo <= p_hi && p_hi <= 1.0))
        throw Error("estimate_unit_range: bad percentiles");

    std::vector<size_t> run_lengths;
    size_t misses = 0;
    for (const auto& entry : corpus) {
        // Windows that overlap the anchored byte span [o, o+L).
        const size_t num_labels = entry.labels.size();
        if (num_labels == 0 || entry.anchor_length == 0) {
            ++misses;
            continue;
        }
        const size_t span_lo =
            entry.anchor_offset >= window_bytes - 1
                ? entry.anchor_offset - (window_bytes - 1)
                : 0;
        const size_t span_hi = std::min(
            entry.anchor_offset + entry.anchor_length - 1, num_labels - 1);
        bool found = false;
        size_t i = 0;
        while (i < num_labels) {
            size_t j = i;
            while (j < num_labels && entry.labels[j] == entry.labels[i]) ++j;
            if (entry.labels[i] == 1 && i <= span_hi && j - 1 >= span_lo) {
                run_lengths.push_back(j - i);
                found = true;
                break;
            }
            i = j;
        }
        if (!found) ++misses;
    }

    if (misses * 2 > corpus.size())
        throw Error("unreliable range: over half of the corpus has no "
                    "overlapping high run");

    std::sort(run_lengths.begin(), run_lengths.end());
    UnitRangeEstimate est;
    est.observed_min = run_lengths.front();
    est.observed_max = run_lengths.back();
    est.percentile_lo = p_lo;
    est.percentile_hi = p_hi;
    est.corpus_size = corpus.size();
    est.misses = misses;

    auto quantile = [&](double q) {
        double pos = q * static_cast<double>(run_lengths.size() - 1);
        size_t lo_idx = static_cast<size_t>(std::floor(pos));
        size_t hi_idx = static_cast<size_t>(std::ceil(pos));
        double frac = pos - static_cast<double>(lo_idx);
        return static_cast<double>(run_lengths[lo_idx]) * (1.0 - frac) +
               static_cast<double>(run_lengths[hi_idx]) * frac;
    };
    // Snap near-integer interpolation artifacts before outward rounding.
    auto snap = [](double v) {
        double nearest = std::round(v);
        return std::abs(v - nearest) < 1e-9 ? nearest : v;
    };
    est.lo = std::max<size_t>(
        1, static_cast<size_t>(std::floor(snap(quantile(p_lo)))));
    est.hi = static_cast<size_t>(std::ceil(snap(quantile(p_hi))));
    return est;
}

void CalibrationTable::insert(const CalibrationRecord& record) {
    records_[{record.window_bytes, record.tau}] = record;
}

const CalibrationRecord* CalibrationTable::find(size_t window_bytes,
                                                unsigned tau) const {
    auto it = records_.find({window_bytes, tau});
    return it == records_.end() ? nullptr : &it->second;
}

std::vector<CalibrationRecord> CalibrationTable::records() const {
    std::vector<CalibrationRecord> out;
    out.reserve(records_.size());
    for (const auto& [key, rec] : records_) out.push_back(rec);
    return out;
}

void CalibrationTable::save(std::ostream& out) const {
    out << "# kexfp calibration table v1\n";
    if (!records_.empty()) {
        const auto& first = records_.begin()->second;
        out << "# seed " << first.seed << " samples " << first.num_samples
            << "\n";
    }
    out << "# tau window mu sigma t theta rho num_samples seed\n";
    out << std::setprecision(17);
    for (const auto& [key, rec] : records_) {
        out << rec.tau << ' ' << rec.window_bytes << ' ' << rec.mu << ' '
            << rec.sigma << ' ' << rec.t << ' ' << rec.theta << ' ' << rec.rho
            << ' ' << rec.num_samples << ' ' << rec.seed << '\n';
    }
}

CalibrationTable CalibrationTable::load(std::istream& in) {
    CalibrationTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        CalibrationRecord rec;
        if (!(ls >> rec.tau >> rec.window_bytes >> rec.mu >> rec.sigma >>
              rec.t >> rec.theta >> rec.rho >> rec.num_samples >> rec.seed))
            throw Error("calibration table: malformed record line: " + line);
        table.insert(rec);
    }
    return table;
}

void CalibrationTable::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write calibration table: " + path);
    save(out);
}

CalibrationTable CalibrationTable::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read calibration table: " + path);
    return load(in);
}

std::string CalibrationTable::render_text() const {
    std::ostringstream out;
    out << std::left << std::setw(5) << "tau" << std::setw(8) << "N"
        << std::setw(11) << "mu" << std::setw(11) << "sigma" << std::setw(7)
        << "t" << std::setw(11) << "theta" << std::setw(9) << "rho" << '\n';
    for (const auto& [key, rec] : records_) {
        out << std::left << std::setw(5) << rec.tau << std::setw(8)
            << rec.window_bytes << std::fixed << std::setprecision(5)
            << std::setw(11) << rec.mu << std::setw(11) << rec.sigma
            << std::setprecision(2) << std::setw(7) << rec.t
            << std::setprecision(5) << std::setw(11) << rec.theta
            << std::setprecision(2) << std::setw(8)
            << rec.rho * 100.0 << "%\n";
        out.unsetf(std::ios::fixed);
    }
    return out.str();
}

}  // namespace kexfp
