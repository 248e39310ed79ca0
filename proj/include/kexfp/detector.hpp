#ifndef KEXFP_DETECTOR_HPP
#define KEXFP_DETECTOR_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kexfp/calibration.hpp"
#include "kexfp/entropy.hpp"

namespace kexfp {

enum class LabelStage { PerMeasure, Voted, Filtered };

// Per-window 0/1 high/low-entropy verdicts.
struct LabelSequence {
    std::string stream_id;
    size_t window_bytes = 0;
    std::vector<unsigned> taus;  // contributing measures
    std::vector<uint8_t> labels;
    LabelStage stage = LabelStage::PerMeasure;
    size_t filter_threshold = 0;  // set at stage Filtered
};

// Maximal run of identical labels.
struct UnitRun {
    uint8_t sign = 0;
    size_t length = 0;
    size_t start_index = 0;

    bool operator==(const UnitRun&) const = default;
};

struct MatchVerdict {
    bool matched = false;
    size_t span_start = 0;
    size_t span_end = 0;  // inclusive window index
};

struct ScanReport {
    std::string stream_id;
    size_t window_bytes = 0;
    std::vector<unsigned> taus;
    size_t filter_threshold = 0;
    size_t stream_len = 0;
    std::vector<EntropySeries> per_measure;
    std::vector<LabelSequence> per_measure_labels;
    LabelSequence voted;
    LabelSequence filtered;
    std::vector<UnitRun> runs;
    std::map<std::string, MatchVerdict> matches;
    std::string diagnostic;  // set when the stream is shorter than the window
};

struct DetectorConfig {
    size_t window_bytes = 32;
    std::vector<unsigned> taus = {1, 4, 8};
    size_t filter_threshold = 9;
};

// Detection step 2: one iff entropy strictly exceeds theta.
LabelSequence binarize(const EntropySeries& series,
                       const CalibrationRecord& record);

// Detection step 3: pointwise AND across measures.
LabelSequence vote(const std::vector<LabelSequence>& per_measure);

// Detection step 4: high runs of length <= xi are relabeled low, including
// runs touching the sequence boundaries. Low runs are never modified.
LabelSequence filter_noise(const LabelSequence& seq, size_t xi);

std::vector<UnitRun> run_length(const std::vector<uint8_t>& labels);
std::vector<uint8_t> run_length_decode(const std::vector<UnitRun>& runs);

// Detection steps 1-4 over one stream; matching is attached separately.
ScanReport scan_stream(std::span<const uint8_t> payload,
                       const std::string& stream_id,
                       const DetectorConfig& config,
                       const CalibrationTable& calibration);

// Per-window CSV: index, per-measure entropy, voted label, filtered label.
void write_report_csv(const ScanReport& report, std::ostream& out);

// Machine-readable report (JSON).
std::string report_to_json(const ScanReport& report);

// Filtered labels rendered as a square wave of low/high glyphs.
std::string ascii_square_wave(const std::vector<uint8_t>& labels,
                              size_t max_width = 100);

}  // namespace kexfp

#endif
