#include "kexfp/detector.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace kexfp {

LabelSequence binarize(const EntropySeries& series,
                       const CalibrationRecord& record) {
    if (series.window_bytes != record.window_bytes ||
        series.tau != record.tau)
        throw Error("binarize: series and calibration record disagree on "
                    "(window, tau)");
    LabelSequence seq;
    seq.window_bytes = series.window_bytes;
    seq.taus = {series.tau};
    seq.stage = LabelStage::PerMeasure;
    seq.labels.reserve(series.values.size());
    for (double v : series.values)
        seq.labels.push_back(v > record.theta ? 1 : 0);
    return seq;
}

LabelSequence vote(const std::vector<LabelSequence>& per_measure) {
    if (per_measure.empty()) throw Error("vote: no label sequences");
    const size_t len = per_measure.front().labels.size();
    LabelSequence voted;
    voted.stream_id = per_measure.front().stream_id;
    voted.window_bytes = per_measure.front().window_bytes;
    voted.stage = LabelStage::Voted;
    for (const auto& seq : per_measure) {
        if (seq.labels.size() != len ||
            seq.window_bytes != voted.window_bytes)
            throw Error("vote: mismatched label sequences");
        voted.taus.insert(voted.taus.end(), seq.taus.begin(), seq.taus.end());
    }
    voted.labels.assign(len, 1);
    for (const auto& seq : per_measure)
        for (size_t i = 0; i < len; ++i)
            voted.labels[i] &= seq.labels[i];
    return voted;
}

LabelSequence filter_noise(const LabelSequence& seq, size_t xi) {
    LabelSequence out = seq;
    out.stage = LabelStage::Filtered;
    out.filter_threshold = xi;
    size_t i = 0;
    const size_t n = out.labels.size();
    while (i < n) {
        size_t j = i;
        while (j < n && out.labels[j] == out.labels[i]) ++j;
        if (out.labels[i] == 1 && j - i <= xi)
            std::fill(out.labels.begin() + static_cast<ptrdiff_t>(i),
                      out.labels.begin() + static_cast<ptrdiff_t>(j), 0);
        i = j;
    }
    return out;
}

std::vector<UnitRun> run_length(const std::vector<uint8_t>& labels) {
    std::vector<UnitRun> runs;
    size_t i = 0;
    while (i < labels.size()) {
        size_t j = i;
        while (j < labels.size() && labels[j] == labels[i]) ++j;
        runs.push_back({labels[i], j - i, i});
        i = j;
    }
    return runs;
}

std::vector<uint8_t> run_length_decode(const std::vector<UnitRun>& runs) {
    std::vector<uint8_t> labels;
    for (const auto& run : runs)
        labels.insert(labels.end(), run.length, run.sign);
    return labels;
}

ScanReport scan_stream(std::span<const uint8_t> payload,
                       const std::string& stream_id,
                       const DetectorConfig& config,
                       const CalibrationTable& calibration) {
    ScanReport report;
    report.stream_id = stream_id;
    report.window_bytes = config.window_bytes;
    report.taus = config.taus;
    report.filter_threshold = config.filter_threshold;
    report.stream_len = payload.size();

    if (config.taus.empty()) throw Error("scan_stream: no measures configured");
    for (unsigned tau : config.taus)
        if (!calibration.find(config.window_bytes, tau))
            throw Error("scan_stream: missing calibration record for window " +
                        std::to_string(config.window_bytes) + ", tau " +
                        std::to_string(tau));

    if (payload.size() < config.window_bytes) {
        report.diagnostic = "stream shorter than window; empty report";
        report.voted.stage = LabelStage::Voted;
        report.filtered.stage = LabelStage::Filtered;
        report.filtered.filter_threshold = config.filter_threshold;
        return report;
    }

    for (unsigned tau : config.taus) {
        const CalibrationRecord* rec =
            calibration.find(config.window_bytes, tau);
        EntropySeries series =
            window_scan(payload, config.window_bytes, TauMeasure(tau));
        LabelSequence labels = binarize(series, *rec);
        labels.stream_id = stream_id;
        report.per_measure.push_back(std::move(series));
        report.per_measure_labels.push_back(std::move(labels));
    }
    report.voted = vote(report.per_measure_labels);
    report.filtered = filter_noise(report.voted, config.filter_threshold);
    report.runs = run_length(report.filtered.labels);
    return report;
}

void write_report_csv(const ScanReport& report, std::ostream& out) {
    out << "index";
    for (unsigned tau : report.taus) out << ",entropy_tau" << tau;
    out << ",voted,filtered\n";
    const size_t n = report.voted.labels.size();
    for (size_t i = 0; i < n; ++i) {
        out << i;
        for (const auto& series : report.per_measure)
            out << ',' << series.values[i];
        out << ',' << static_cast<int>(report.voted.labels[i]) << ','
            << static_cast<int>(report.filtered.labels[i]) << '\n';
    }
}

std::string report_to_json(const ScanReport& report) {
    nlohmann::json j;
    j["stream_id"] = report.stream_id;
    j["config"]["window_bytes"] = report.window_bytes;
    j["config"]["taus"] = report.taus;
    j["config"]["filter_threshold"] = report.filter_threshold;
    j["stream_len"] = report.stream_len;
    if (!report.diagnostic.empty()) j["diagnostic"] = report.diagnostic;
    auto runs = nlohmann::json::array();
    for (const auto& run : report.runs)
        runs.push_back({{"sign", run.sign},
                        {"length", run.length},
                        {"start", run.start_index}});
    j["runs"] = runs;
    auto matches = nlohmann::json::object();
    for (const auto& [name, verdict] : report.matches) {
        nlohmann::json m;
        m["matched"] = verdict.matched;
        if (verdict.matched) {
            m["span_start"] = verdict.span_start;
            m["span_end"] = verdict.span_end;
        }
        matches[name] = m;
    }
    j["matches"] = matches;
    return j.dump(2);
}

std::string ascii_square_wave(const std::vector<uint8_t>& labels,
                              size_t max_width) {
    if (labels.empty()) return "";
    std::string out;
    const size_t n = labels.size();
    const size_t width = std::min(max_width, n);
    for (size_t col = 0; col < width; ++col) {
        // Bucket is high if any window in it is high.
        size_t lo = col * n / width;
        size_t hi = (col + 1) * n / width;
        bool high = false;
        for (size_t i = lo; i < hi; ++i) high = high || labels[i] == 1;
        out += high ? "█" : "▁";
    }
    return out;
}

}  // namespace kexfp
