// pybind11 bindings for the kexfp core.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "kexfp/calibration.hpp"
#include "kexfp/detector.hpp"
#include "kexfp/entropy.hpp"
#include "kexfp/fingerprint.hpp"
#include "kexfp/ingest.hpp"
#include "kexfp/synth.hpp"

namespace py = pybind11;
using namespace kexfp;

namespace {

std::vector<uint8_t> as_bytes(const py::buffer& buf) {
    py::buffer_info info = buf.request();
    if (info.ndim != 1 || info.itemsize != 1)
        throw Error("expected a flat byte buffer");
    const auto* data = static_cast<const uint8_t*>(info.ptr);
    return {data, data + info.size};
}

CalibrationTable calibrate(size_t window_bytes, std::vector<unsigned> taus,
                           uint64_t num_samples, uint64_t seed,
                           double confidence, unsigned num_workers) {
    CalibrationTable table;
    for (unsigned tau : taus) {
        auto baseline = sample_uniform_baseline(window_bytes, TauMeasure(tau),
                                                num_samples, seed, num_workers);
        table.insert(derive_threshold(baseline, confidence));
    }
    return table;
}

}  // namespace

PYBIND11_MODULE(_kexfp, m) {
    m.doc() = "entropy-distribution fingerprinting of key-exchange traffic";

    py::register_exception<Error>(m, "KexfpError");

    m.def(
        "sample_entropy",
        [](const py::buffer& symbols, unsigned alphabet_size) {
            return sample_entropy(as_bytes(symbols), alphabet_size);
        },
        py::arg("symbols"), py::arg("alphabet_size"));
    m.def(
        "window_scan",
        [](const py::buffer& stream, size_t window_bytes, unsigned tau) {
            return window_scan(as_bytes(stream), window_bytes, TauMeasure(tau))
                .values;
        },
        py::arg("stream"), py::arg("window_bytes") = 32, py::arg("tau") = 8);
    m.def("prob_all_distinct", &prob_all_distinct, py::arg("num_samples"),
          py::arg("alphabet_size"));
    m.def(
        "exact_truncated_entropy",
        [](unsigned num_samples, unsigned alphabet_size,
           const std::vector<double>& p) {
            return exact_truncated_entropy(num_samples, alphabet_size, p);
        },
        py::arg("num_samples"), py::arg("alphabet_size"), py::arg("p"));

    py::class_<CalibrationRecord>(m, "CalibrationRecord")
        .def_readonly("tau", &CalibrationRecord::tau)
        .def_readonly("window_bytes", &CalibrationRecord::window_bytes)
        .def_readonly("mu", &CalibrationRecord::mu)
        .def_readonly("sigma", &CalibrationRecord::sigma)
        .def_readonly("t", &CalibrationRecord::t)
        .def_readonly("theta", &CalibrationRecord::theta)
        .def_readonly("rho", &CalibrationRecord::rho)
        .def_readonly("num_samples", &CalibrationRecord::num_samples)
        .def_readonly("seed", &CalibrationRecord::seed);

    py::class_<CalibrationTable>(m, "CalibrationTable")
        .def(py::init<>())
        .def("insert", &CalibrationTable::insert)
        .def("records", &CalibrationTable::records)
        .def("render_text", &CalibrationTable::render_text)
        .def("save_file", &CalibrationTable::save_file)
        .def_static("load_file", &CalibrationTable::load_file)
        .def("dumps",
             [](const CalibrationTable& table) {
                 std::ostringstream out;
                 table.save(out);
                 return out.str();
             })
        .def_static("loads", [](const std::string& text) {
            std::istringstream in(text);
            return CalibrationTable::load(in);
        });

    m.def("calibrate", &calibrate, py::arg("window_bytes") = 32,
          py::arg("taus") = std::vector<unsigned>{1, 4, 8},
          py::arg("num_samples") = 100000, py::arg("seed") = 1,
          py::arg("confidence") = 0.99, py::arg("num_workers") = 0);

    py::class_<UnitRun>(m, "UnitRun")
        .def_readonly("sign", &UnitRun::sign)
        .def_readonly("length", &UnitRun::length)
        .def_readonly("start_index", &UnitRun::start_index)
        .def("__repr__", [](const UnitRun& run) {
            return "UnitRun(sign=" + std::to_string(run.sign) +
                   ", length=" + std::to_string(run.length) +
                   ", start_index=" + std::to_string(run.start_index) + ")";
        });

    py::class_<MatchVerdict>(m, "MatchVerdict")
        .def_readonly("matched", &MatchVerdict::matched)
        .def_readonly("span_start", &MatchVerdict::span_start)
        .def_readonly("span_end", &MatchVerdict::span_end);

    py::class_<ScanReport>(m, "ScanReport")
        .def_readonly("stream_id", &ScanReport::stream_id)
        .def_readonly("window_bytes", &ScanReport::window_bytes)
        .def_readonly("taus", &ScanReport::taus)
        .def_readonly("stream_len", &ScanReport::stream_len)
        .def_readonly("runs", &ScanReport::runs)
        .def_readonly("matches", &ScanReport::matches)
        .def_readonly("diagnostic", &ScanReport::diagnostic)
        .def_property_readonly(
            "labels",
            [](const ScanReport& report) {
                return py::bytes(reinterpret_cast<const char*>(
                                     report.filtered.labels.data()),
                                 report.filtered.labels.size());
            })
        .def("to_json", &report_to_json);

    m.def(
        "scan_stream",
        [](const py::buffer& payload, const std::string& stream_id,
           const CalibrationTable& table, size_t window_bytes,
           std::vector<unsigned> taus, size_t filter_threshold) {
            DetectorConfig config;
            config.window_bytes = window_bytes;
            config.taus = std::move(taus);
            config.filter_threshold = filter_threshold;
            return scan_stream(as_bytes(payload), stream_id, config, table);
        },
        py::arg("payload"), py::arg("stream_id"), py::arg("calibration"),
        py::arg("window_bytes") = 32,
        py::arg("taus") = std::vector<unsigned>{1, 4, 8}, py::arg("xi") = 9);

    py::class_<MatchResult>(m, "MatchResult")
        .def_readonly("matched", &MatchResult::matched)
        .def_readonly("span_start", &MatchResult::span_start)
        .def_readonly("span_end", &MatchResult::span_end)
        .def_readonly("fingerprint_name", &MatchResult::fingerprint_name)
        .def("__bool__",
             [](const MatchResult& result) { return result.matched; });

    py::class_<Fingerprint>(m, "Fingerprint")
        .def_readonly("name", &Fingerprint::name)
        .def_property_readonly(
            "anchor",
            [](const Fingerprint& fp) { return anchor_mode_name(fp.anchor_mode); })
        .def_property_readonly("pattern",
                               [](const Fingerprint& fp) { return render(fp); });

    py::class_<Matcher>(m, "Matcher")
        .def(py::init([](const std::string& pattern,
                         const std::string& anchor) {
                 Fingerprint fp = parse_fingerprint(pattern);
                 if (anchor == "prefix")
                     fp.anchor_mode = AnchorMode::Prefix;
                 else if (anchor == "search")
                     fp.anchor_mode = AnchorMode::Search;
                 else if (anchor == "exact")
                     fp.anchor_mode = AnchorMode::Exact;
                 else
                     throw Error("unknown anchor mode: " + anchor);
                 return Matcher(std::move(fp));
             }),
             py::arg("pattern"), py::arg("anchor") = "prefix")
        .def(
            "match",
            [](const Matcher& matcher, const py::buffer& labels) {
                return matcher.match(as_bytes(labels));
            },
            py::arg("labels"));

    m.def("parse_fingerprint_file", &parse_fingerprint_file, py::arg("text"));
    m.def("load_fingerprint_file", &load_fingerprint_file, py::arg("path"));

    py::class_<StreamRecord>(m, "StreamRecord")
        .def_readonly("stream_id", &StreamRecord::stream_id)
        .def_property_readonly(
            "payload",
            [](const StreamRecord& record) {
                return py::bytes(
                    reinterpret_cast<const char*>(record.payload.data()),
                    record.payload.size());
            })
        .def_readonly("bytes_src_to_dst", &StreamRecord::bytes_src_to_dst)
        .def_readonly("bytes_dst_to_src", &StreamRecord::bytes_dst_to_src)
        .def_readonly("source", &StreamRecord::source);

    m.def(
        "read_pcap_streams",
        [](const std::string& path, const std::set<uint16_t>& ports) {
            return reassemble(parse_pcap(path), ports);
        },
        py::arg("path"), py::arg("ports") = std::set<uint16_t>{});

    py::class_<ByteSpan>(m, "ByteSpan")
        .def_readonly("offset", &ByteSpan::offset)
        .def_readonly("length", &ByteSpan::length);

    py::class_<SynthStream>(m, "SynthStream")
        .def_readonly("stream", &SynthStream::stream)
        .def_readonly("planted", &SynthStream::planted);

    m.def("gen_tls_like", &gen_tls_like, py::arg("seed"));
    m.def("gen_nugache_like", &gen_nugache_like, py::arg("seed"),
          py::arg("key_bits") = 512);
    m.def("gen_ascii_like", &gen_ascii_like, py::arg("seed"),
          py::arg("length"));
}
