// kexfp: entropy-distribution fingerprinting of key-exchange traffic.
//
// Subcommands: calibrate, scan, match, extract, estimate-range, gen.
// Exit codes: 0 success, 1 operational failure, 2 usage/config error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kexfp/calibration.hpp"
#include "kexfp/detector.hpp"
#include "kexfp/fingerprint.hpp"
#include "kexfp/ingest.hpp"
#include "kexfp/synth.hpp"

namespace fs = std::filesystem;
using namespace kexfp;

namespace {

constexpr const char* kTableEnv = "KEXFP_CALIBRATION";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string default_table_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv(kTableEnv); env && *env) return env;
    throw UsageError("no calibration table: pass --table or set " +
                     std::string(kTableEnv));
}

std::vector<unsigned> parse_taus(const std::string& spec) {
    std::vector<unsigned> taus;
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        taus.push_back(static_cast<unsigned>(std::stoul(item)));
    }
    if (taus.empty()) throw UsageError("empty tau list");
    return taus;
}

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' &&
            c != '_' && c != '.')
            c = '_';
    return out;
}

// Streams named on the command line plus streams from a labeled manifest.
std::vector<CorpusEntry> gather_streams(const std::vector<std::string>& files,
                                        const std::string& manifest) {
    std::vector<CorpusEntry> entries;
    size_t failures = 0;
    for (const auto& path : files) {
        try {
            entries.push_back({load_raw_stream(path), ""});
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            ++failures;
        }
    }
    if (!manifest.empty()) {
        std::vector<CorpusLoadFailure> load_failures;
        for (auto& entry : load_corpus(manifest, &load_failures))
            entries.push_back(std::move(entry));
        for (const auto& failure : load_failures) {
            std::cerr << "error: " << failure.path << ": " << failure.reason
                      << "\n";
            ++failures;
        }
    }
    if (entries.empty() && failures > 0)
        throw Error("all stream inputs failed to load");
    if (entries.empty()) throw UsageError("no streams supplied");
    return entries;
}

struct CommonScanArgs {
    std::string table_path;
    size_t window = 32;
    std::string taus = "1,4,8";
    size_t xi = 9;

    DetectorConfig config() const {
        DetectorConfig cfg;
        cfg.window_bytes = window;
        cfg.taus = parse_taus(taus);
        cfg.filter_threshold = xi;
        return cfg;
    }
};

void add_common_scan_args(CLI::App* cmd, CommonScanArgs& args) {
    cmd->add_option("--table", args.table_path,
                    "calibration table file (default: $KEXFP_CALIBRATION)");
    cmd->add_option("--window", args.window, "sliding window bytes");
    cmd->add_option("--tau", args.taus, "comma-separated tau measures");
    cmd->add_option("--xi", args.xi, "noise filter threshold");
}

int cmd_calibrate(const std::string& out_path, size_t window,
                  const std::string& tau_spec, uint64_t samples, uint64_t seed,
                  double confidence, unsigned workers) {
    CalibrationTable table;
    for (unsigned tau : parse_taus(tau_spec)) {
        auto baseline = sample_uniform_baseline(window, TauMeasure(tau),
                                                samples, seed, workers);
        table.insert(derive_threshold(baseline, confidence));
    }
    table.save_file(out_path);
    std::cout << table.render_text();
    std::cout << "wrote " << table.records().size() << " records to "
              << out_path << "\n";
    return 0;
}

int cmd_scan(const CommonScanArgs& common, const std::vector<std::string>& files,
             const std::string& manifest, const std::string& out_dir,
             bool emit_csv, bool wave, const std::string& fingerprint_path) {
    auto table = CalibrationTable::load_file(default_table_path(common.table_path));
    auto streams = gather_streams(files, manifest);
    std::vector<Matcher> matchers;
    if (!fingerprint_path.empty())
        for (auto& fp : load_fingerprint_file(fingerprint_path))
            matchers.emplace_back(std::move(fp));
    if (!out_dir.empty()) fs::create_directories(out_dir);

    DetectorConfig config = common.config();
    size_t with_high = 0;
    for (const auto& entry : streams) {
        auto report = scan_stream(entry.stream.payload, entry.stream.stream_id,
                                  config, table);
        for (const auto& matcher : matchers) {
            auto result = matcher.match(report.filtered.labels);
            report.matches[matcher.fingerprint().name] = {
                result.matched, result.span_start, result.span_end};
        }
        size_t high_runs = 0;
        for (const auto& run : report.runs)
            if (run.sign == 1) ++high_runs;
        if (high_runs) ++with_high;

        std::cout << report.stream_id << ": " << report.stream_len
                  << " bytes, " << report.runs.size() << " runs, " << high_runs
                  << " high";
        if (!report.diagnostic.empty())
            std::cout << " (" << report.diagnostic << ")";
        for (const auto& [name, verdict] : report.matches)
            if (verdict.matched) std::cout << " match:" << name;
        std::cout << "\n";
        if (wave)
            std::cout << "  " << ascii_square_wave(report.filtered.labels)
                      << "\n";

        if (!out_dir.empty()) {
            std::string base =
                (fs::path(out_dir) /
                 sanitize_id(fs::path(report.stream_id).filename().string()))
                    .string();
            std::ofstream json(base + ".json");
            json << report_to_json(report);
            if (emit_csv) {
                std::ofstream csv(base + ".csv");
                write_report_csv(report, csv);
            }
        }
    }
    std::cout << streams.size() << " streams scanned, " << with_high
              << " with high-entropy runs\n";
    return 0;
}

int cmd_match(const CommonScanArgs& common, const std::string& fingerprint_path,
              const std::vector<std::string>& files,
              const std::string& manifest, const std::string& out_path) {
    auto table = CalibrationTable::load_file(default_table_path(common.table_path));
    auto fingerprints = load_fingerprint_file(fingerprint_path);
    if (fingerprints.empty())
        throw UsageError("no fingerprints in " + fingerprint_path);
    std::vector<Matcher> matchers;
    for (auto& fp : fingerprints) matchers.emplace_back(std::move(fp));
    auto streams = gather_streams(files, manifest);

    DetectorConfig config = common.config();
    std::ostringstream matrix;
    matrix << "stream";
    for (const auto& matcher : matchers)
        matrix << '\t' << matcher.fingerprint().name;
    matrix << "\tlabel\n";

    struct Tally {
        size_t tp = 0, fn = 0, fp = 0, tn = 0;
    };
    std::vector<Tally> tallies(matchers.size());
    bool labeled = false;
    for (const auto& entry : streams) {
        auto report = scan_stream(entry.stream.payload, entry.stream.stream_id,
                                  config, table);
        matrix << entry.stream.stream_id;
        for (size_t i = 0; i < matchers.size(); ++i) {
            bool matched = matchers[i].match(report.filtered.labels).matched;
            matrix << '\t' << (matched ? "match" : "-");
            if (entry.label == "positive") {
                labeled = true;
                (matched ? tallies[i].tp : tallies[i].fn)++;
            } else if (entry.label == "negative") {
                labeled = true;
                (matched ? tallies[i].fp : tallies[i].tn)++;
            }
        }
        matrix << '\t' << (entry.label.empty() ? "-" : entry.label) << "\n";
    }

    std::cout << matrix.str();
    if (labeled) {
        for (size_t i = 0; i < matchers.size(); ++i) {
            const auto& t = tallies[i];
            std::cout << matchers[i].fingerprint().name << ": TP=" << t.tp
                      << " FN=" << t.fn << " FP=" << t.fp << " TN=" << t.tn;
            if (t.tp + t.fn)
                std::cout << " recall="
                          << 100.0 * static_cast<double>(t.tp) /
                                 static_cast<double>(t.tp + t.fn)
                          << "%";
            if (t.tp + t.fp)
                std::cout << " precision="
                          << 100.0 * static_cast<double>(t.tp) /
                                 static_cast<double>(t.tp + t.fp)
                          << "%";
            std::cout << "\n";
        }
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw Error("cannot write verdicts: " + out_path);
        out << matrix.str();
    }
    return 0;
}

int cmd_extract(const std::string& pcap_path, const std::string& ports_spec,
                const std::string& out_dir, const std::string& label) {
    std::set<uint16_t> ports;
    if (!ports_spec.empty())
        for (unsigned p : parse_taus(ports_spec))
            ports.insert(static_cast<uint16_t>(p));

    std::string warning;
    auto frames = parse_pcap(pcap_path, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
    ReassemblyStats stats;
    auto streams = reassemble(frames, ports, &stats);

    fs::create_directories(out_dir);
    std::vector<ManifestEntry> manifest;
    for (const auto& stream : streams) {
        std::string name = sanitize_id(stream.stream_id) + ".bin";
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
        out.write(reinterpret_cast<const char*>(stream.payload.data()),
                  static_cast<std::streamsize>(stream.payload.size()));
        manifest.push_back({label, sha256_hex(stream.payload), name, {}});
    }
    write_manifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);

    std::cout << streams.size() << " streams written to " << out_dir << "\n"
              << "skipped: non-ip=" << stats.non_ethernet_ip
              << " non-tcp=" << stats.non_tcp
              << " fragmented=" << stats.fragmented
              << " incomplete=" << stats.flows_incomplete
              << " inconsistent=" << stats.flows_inconsistent << "\n";
    return 0;
}

int cmd_estimate_range(const CommonScanArgs& common,
                       const std::string& manifest, size_t anchor_offset,
                       size_t anchor_length, double p_lo, double p_hi) {
    auto table = CalibrationTable::load_file(default_table_path(common.table_path));
    auto corpus = load_corpus(manifest);
    if (corpus.empty()) throw UsageError("empty corpus");

    DetectorConfig config = common.config();
    std::vector<AnchoredLabels> anchored;
    for (const auto& entry : corpus) {
        auto report = scan_stream(entry.stream.payload, entry.stream.stream_id,
                                  config, table);
        AnchoredLabels labels;
        labels.labels = report.filtered.labels;
        labels.anchor_offset = anchor_offset;
        labels.anchor_length = anchor_length;
        anchored.push_back(std::move(labels));
    }
    auto est = estimate_unit_range(anchored, config.window_bytes, p_lo, p_hi);
    std::cout << "corpus=" << est.corpus_size << " misses=" << est.misses
              << "\nobserved=[" << est.observed_min << "," << est.observed_max
              << "]\nrange=[" << est.lo << "," << est.hi << "] at percentiles ["
              << est.percentile_lo << "," << est.percentile_hi << "]\n";
    return 0;
}

int cmd_gen(const std::string& kind, size_t count, uint64_t seed,
            const std::string& out_dir, unsigned key_bits, size_t length) {
    fs::create_directories(out_dir);
    std::vector<ManifestEntry> manifest;
    std::ostringstream truth;
    truth << "[\n";
    for (size_t i = 0; i < count; ++i) {
        uint64_t stream_seed = seed + i;
        SynthStream synth;
        std::string label = "positive";
        if (kind == "tls") {
            synth = gen_tls_like(stream_seed);
        } else if (kind == "nugache") {
            synth = gen_nugache_like(stream_seed, key_bits);
        } else if (kind == "ascii") {
            synth = gen_ascii_like(stream_seed, length);
            label = "negative";
        } else if (kind == "filler") {
            StreamSpec spec;
            spec.seed = stream_seed;
            spec.segments = {{SegmentKind::Filler, length, {}}};
            synth = gen_stream(spec);
            label = "negative";
        } else {
            throw UsageError("unknown kind '" + kind +
                             "' (tls, nugache, ascii, filler)");
        }
        std::string name = sanitize_id(synth.stream.stream_id) + ".bin";
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
        out.write(reinterpret_cast<const char*>(synth.stream.payload.data()),
                  static_cast<std::streamsize>(synth.stream.payload.size()));
        manifest.push_back(
            {label, sha256_hex(synth.stream.payload), name, {kind}});
        truth << (i ? ",\n" : "") << "  {\"file\": \"" << name
              << "\", \"planted\": [";
        for (size_t j = 0; j < synth.planted.size(); ++j)
            truth << (j ? ", " : "") << "[" << synth.planted[j].offset << ", "
                  << synth.planted[j].length << "]";
        truth << "]}";
    }
    truth << "\n]\n";
    write_manifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);
    std::ofstream(fs::path(out_dir) / "ground_truth.json") << truth.str();
    std::cout << count << " " << kind << " streams written to " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropy-distribution fingerprinting of key-exchange traffic"};
    app.require_subcommand(1);

    // calibrate
    auto* calibrate = app.add_subcommand(
        "calibrate", "sample the uniform baseline and derive thresholds");
    std::string cal_out = "calibration.txt";
    size_t cal_window = 32;
    std::string cal_taus = "1,4,8";
    uint64_t cal_samples = 100000, cal_seed = 1;
    double cal_confidence = 0.99;
    unsigned cal_workers = 0;
    calibrate->add_option("--out", cal_out, "output table file");
    calibrate->add_option("--window", cal_window, "window size in bytes");
    calibrate->add_option("--tau", cal_taus, "comma-separated tau list");
    calibrate->add_option("--samples", cal_samples, "Monte-Carlo sample count");
    calibrate->add_option("--seed", cal_seed, "PRNG seed");
    calibrate->add_option("--confidence", cal_confidence,
                          "confidence floor (fraction above theta)");
    calibrate->add_option("--workers", cal_workers,
                          "worker threads (0 = hardware)");

    // scan
    auto* scan = app.add_subcommand("scan", "run detection steps 1-4");
    CommonScanArgs scan_common;
    std::vector<std::string> scan_files;
    std::string scan_manifest, scan_out_dir, scan_fingerprints;
    bool scan_csv = false, scan_wave = false;
    add_common_scan_args(scan, scan_common);
    scan->add_option("streams", scan_files, "raw stream files");
    scan->add_option("--manifest", scan_manifest, "corpus manifest");
    scan->add_option("--out-dir", scan_out_dir, "report output directory");
    scan->add_option("--fingerprints", scan_fingerprints,
                     "fingerprint file to match against");
    scan->add_flag("--emit-csv", scan_csv, "write per-window CSV");
    scan->add_flag("--wave", scan_wave, "print label square wave");

    // match
    auto* match = app.add_subcommand("match",
                                     "match fingerprints against streams");
    CommonScanArgs match_common;
    std::vector<std::string> match_files;
    std::string match_manifest, match_fingerprints, match_out;
    add_common_scan_args(match, match_common);
    match->add_option("--fingerprints", match_fingerprints,
                      "fingerprint file")->required();
    match->add_option("streams", match_files, "raw stream files");
    match->add_option("--manifest", match_manifest, "labeled corpus manifest");
    match->add_option("--out", match_out, "verdict matrix output file");

    // extract
    auto* extract = app.add_subcommand(
        "extract", "reassemble TCP streams from a pcap capture");
    std::string ext_pcap, ext_ports, ext_out = "streams", ext_label = "positive";
    extract->add_option("capture", ext_pcap, "pcap file")->required();
    extract->add_option("--ports", ext_ports, "comma-separated port filter");
    extract->add_option("--out-dir", ext_out, "stream output directory");
    extract->add_option("--label", ext_label, "manifest label for streams")
        ->check(CLI::IsMember({"positive", "negative"}));

    // estimate-range
    auto* estimate = app.add_subcommand(
        "estimate-range", "estimate a fingerprint unit length range");
    CommonScanArgs est_common;
    std::string est_manifest;
    size_t est_offset = 0, est_length = 0;
    double est_p_lo = 0.05, est_p_hi = 0.95;
    add_common_scan_args(estimate, est_common);
    estimate->add_option("--manifest", est_manifest, "corpus manifest")
        ->required();
    estimate->add_option("--anchor-offset", est_offset,
                         "byte offset of the anchored field")->required();
    estimate->add_option("--anchor-length", est_length,
                         "byte length of the anchored field")->required();
    estimate->add_option("--p-lo", est_p_lo, "lower percentile");
    estimate->add_option("--p-hi", est_p_hi, "upper percentile");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_kind = "tls", gen_out = "corpus";
    size_t gen_count = 100, gen_length = 2048;
    uint64_t gen_seed = 1;
    unsigned gen_key_bits = 512;
    gen->add_option("--kind", gen_kind, "tls, nugache, ascii or filler");
    gen->add_option("--count", gen_count, "number of streams");
    gen->add_option("--seed", gen_seed, "base seed");
    gen->add_option("--out-dir", gen_out, "corpus output directory");
    gen->add_option("--key-bits", gen_key_bits, "nugache key size in bits");
    gen->add_option("--length", gen_length, "ascii/filler stream length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (calibrate->parsed())
            return cmd_calibrate(cal_out, cal_window, cal_taus, cal_samples,
                                 cal_seed, cal_confidence, cal_workers);
        if (scan->parsed())
            return cmd_scan(scan_common, scan_files, scan_manifest,
                            scan_out_dir, scan_csv, scan_wave,
                            scan_fingerprints);
        if (match->parsed())
            return cmd_match(match_common, match_fingerprints, match_files,
                             match_manifest, match_out);
        if (extract->parsed())
            return cmd_extract(ext_pcap, ext_ports, ext_out, ext_label);
        if (estimate->parsed())
            return cmd_estimate_range(est_common, est_manifest, est_offset,
                                      est_length, est_p_lo, est_p_hi);
        if (gen->parsed())
            return cmd_gen(gen_kind, gen_count, gen_seed, gen_out,
                           gen_key_bits, gen_length);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
