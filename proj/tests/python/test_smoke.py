import json
import math

import pytest

import kexfp


@pytest.fixture(scope="module")
def table():
    return kexfp.calibrate(window_bytes=32, taus=[1, 4, 8],
                           num_samples=20000, seed=1234)


def test_entropy_basics():
    assert kexfp.sample_entropy(bytes(range(16)), 256) == pytest.approx(4.0)
    assert kexfp.sample_entropy(b"\x00" * 32, 256) == 0.0
    values = kexfp.window_scan(bytes(range(64)), window_bytes=32, tau=8)
    assert len(values) == 33
    assert values[0] == pytest.approx(5.0)


def test_exact_references():
    assert kexfp.prob_all_distinct(16, 256) == pytest.approx(0.6197, abs=1e-4)
    h = kexfp.exact_truncated_entropy(2, 2, [0.5, 0.5])
    assert h == pytest.approx(0.5)


def test_calibration_table_roundtrip(table):
    records = table.records()
    assert {r.tau for r in records} == {1, 4, 8}
    r8 = next(r for r in records if r.tau == 8)
    assert r8.mu == pytest.approx(4.8817, abs=0.01)
    assert r8.theta < r8.mu
    again = kexfp.CalibrationTable.loads(table.dumps())
    assert [r.theta for r in again.records()] == [r.theta for r in records]


def test_scan_and_match(table):
    synth = kexfp.gen_nugache_like(seed=1, key_bits=1024)
    report = kexfp.scan_stream(synth.stream.payload, "nug", table)
    high = [r for r in report.runs if r.sign == 1]
    assert len(high) >= 1
    assert json.loads(report.to_json())["stream_id"] == "nug"

    matcher = kexfp.Matcher("0{0,9}1{10,1000000}", anchor="exact")
    assert matcher.match(report.labels)

    ascii_report = kexfp.scan_stream(
        kexfp.gen_ascii_like(seed=4, length=1500).stream.payload, "a", table)
    assert not matcher.match(ascii_report.labels)


def test_fingerprint_parsing():
    fps = kexfp.parse_fingerprint_file(
        "name: demo\nanchor: search\npattern: 1{2,4}0{1,8}\n")
    assert len(fps) == 1
    assert fps[0].name == "demo"
    assert fps[0].anchor == "search"
    assert fps[0].pattern == "1{2,4}0{1,8}"
    with pytest.raises(kexfp.KexfpError):
        kexfp.Matcher("1{9,2}")


def test_synth_planted_spans():
    synth = kexfp.gen_tls_like(seed=7)
    assert len(synth.planted) == 3
    assert synth.planted[0].offset == 0
    payload = synth.stream.payload
    assert isinstance(payload, bytes)
    assert len(payload) > sum(s.length for s in synth.planted)
