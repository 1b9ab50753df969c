import functools
import json
import re
import subprocess

import numpy as np
import pytest

import hbtkit.acceptance
import hbtkit.fitting
from hbtkit import Stage
from hbtkit import reference as ref
from hbtkit.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_SELFTEST, main
from hbtkit.fileio import read_histogram, read_json, read_timestamps, sha256

CONFIG = {
    "schema_version": 1,
    "simulation": {"duration_s": 0.003, "seed": 11,
                   "coefficients": {"tau1": 0.83, "tau2": 42.2, "a": 0.16, "r12": 0.3}},
    "detector": {"eta": 1.0, "drf_width_ns": 0.354, "background_snr": 6.0},
    "correlation": {"bin_width_ns": 0.1, "tau_max_ns": 150.0},
    "fit": {"snr": 6.0},
    "outputs": {"channel_a": "a.pstm", "channel_b": "b.pstm", "manifest": "manifest.json",
                "histogram": "g2.csv", "report": "report.json"},
}


def write_config(d, doc=CONFIG):
    d.mkdir(exist_ok=True)
    p = d / "config.json"
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", str(write_config(d))]) == EXIT_OK
    return d


def test_simulate_writes_streams_and_manifest(simulated):
    a = read_timestamps(simulated / "a.pstm")
    b = read_timestamps(simulated / "b.pstm")
    assert a.duration_ps == b.duration_ps == 3 * 10**9
    m = read_json(simulated / "manifest.json")
    assert m["schema_version"] == 1 and m["seed"] == 11 and m["bit_generator"] == "PCG64"
    assert m["counts"] == {"A": len(a), "B": len(b)}
    for path, digest in m["outputs"].items():
        assert sha256(path) == digest


def test_rerun_is_byte_identical(simulated, tmp_path):
    assert main(["simulate", str(write_config(tmp_path))]) == EXIT_OK
    for name in ("a.pstm", "b.pstm"):
        assert sha256(tmp_path / name) == sha256(simulated / name)


def test_manifest_replay_reproduces_checksums(tmp_path):
    assert main(["simulate", str(write_config(tmp_path))]) == EXIT_OK
    recorded = read_json(tmp_path / "manifest.json")["outputs"]
    for path in recorded:
        (tmp_path / path).unlink()
    assert main(["simulate", str(tmp_path / "manifest.json")]) == EXIT_OK
    assert {p: sha256(p) for p in recorded} == recorded


def test_correlate_then_fit(simulated, capsys):
    h_path = simulated / "h.csv"
    rc = main(["correlate", str(simulated / "a.pstm"), str(simulated / "b.pstm"),
               "--bin-width", "0.1", "--tau-max", "150", "--snr", "6", "--out", str(h_path),
               "--manifest", str(simulated / "corr.json")])
    assert rc == EXIT_OK
    assert "coincidences=" in capsys.readouterr().out
    out = simulated / "fit.json"
    assert main(["fit", "g2", str(h_path), "--drf-width", "0.354", "--out", str(out)]) == EXIT_OK
    rep = read_json(out)
    assert rep["result"]["converged"]
    assert rep["result"]["derived"]["g2_0"] == pytest.approx(0.31, abs=0.06)
    assert abs(rep["fit_minus_measured_g2_0"]) < 4 * rep["measured_g2_0_stderr"] + 0.02


def test_run_matches_separate_steps(tmp_path, capsys):
    assert main(["run", str(write_config(tmp_path))]) == EXIT_OK
    report = read_json(tmp_path / "report.json")
    assert report["result"]["converged"]
    h = read_histogram(tmp_path / "g2.csv")
    assert h.stage is Stage.BACKGROUND_CORRECTED
    assert main(["fit", "g2", str(tmp_path / "g2.csv"), "--drf-width", "0.354",
                 "--out", str(tmp_path / "again.json")]) == EXIT_OK
    again = read_json(tmp_path / "again.json")["result"]["params"]
    for k, v in report["result"]["params"].items():
        assert again[k] == pytest.approx(v, rel=1e-9)


def test_swapped_inputs_mirror(simulated, tmp_path):
    # 101 ps bins: no integer-ps delay sits on a bin edge, so the mirror is exact
    args = ["--bin-width", "0.101", "--tau-max", "30.3"]
    a, b = str(simulated / "a.pstm"), str(simulated / "b.pstm")
    assert main(["correlate", a, b, *args, "--out", str(tmp_path / "ab.csv")]) == EXIT_OK
    assert main(["correlate", b, a, *args, "--out", str(tmp_path / "ba.csv")]) == EXIT_OK
    ab, ba = read_histogram(tmp_path / "ab.csv"), read_histogram(tmp_path / "ba.csv")
    assert np.array_equal(ab.counts, ba.counts[::-1])
    assert np.allclose(ab.values, ba.values[::-1], rtol=1e-12)


def test_zero_pump_gives_empty_valid_files(tmp_path):
    doc = json.loads(json.dumps(CONFIG))
    doc["simulation"].pop("coefficients")
    doc["simulation"]["rates"] = {"r12": 0.0, "r21": 1.0, "r23": 0.1, "r31": 0.05}
    assert main(["simulate", str(write_config(tmp_path, doc))]) == EXIT_OK
    for name in ("a.pstm", "b.pstm"):
        s = read_timestamps(tmp_path / name)
        assert len(s) == 0 and s.duration_ps == 3 * 10**9
        assert (tmp_path / name).stat().st_size == 16


def test_poisson_correlation_is_flat(tmp_path, capsys):
    for ch, seed in (("pa", 1), ("pb", 2)):
        assert main(["poisson", "--rate", "2e5", "--duration", "0.5", "--seed", str(seed),
                     "--out", str(tmp_path / f"{ch}.pstm")]) == EXIT_OK
    capsys.readouterr()
    assert main(["correlate", str(tmp_path / "pa.pstm"), str(tmp_path / "pb.pstm"),
                 "--bin-width", "1", "--tau-max", "200", "--out", str(tmp_path / "p.csv")]) == EXIT_OK
    line = capsys.readouterr().out
    mean, err = map(float, re.search(r"ns: ([\d.]+) \+- ([\d.]+)", line).groups())
    assert abs(mean - 1) < 4 * err


def test_lifetime_in_fit_report(capsys):
    data = str(ref.data_path("reference_g2.csv"))
    assert main(["fit", "g2", data, "--power", "0.39", "--psat", "1.17"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert round(rep["lifetime_ns"], 2) == 1.11


@pytest.mark.parametrize("kind, name, extra, key", [
    ("saturation", "reference_saturation.csv", ["--focus-width", "223"],
     "saturation_intensity_kW_cm2"),
    ("polarization", "reference_polarization.csv", [], None),
    ("spectrum", "reference_spectrum.csv", ["--npeaks", "2"], None),
])
def test_fit_bundled_series(tmp_path, kind, name, extra, key):
    out = tmp_path / "r.json"
    assert main(["fit", kind, str(ref.data_path(name)), *extra, "--out", str(out)]) == EXIT_OK
    rep = read_json(out)
    assert rep["result"]["converged"]
    if key:
        assert rep[key] == pytest.approx(365, rel=0.05)


def test_exit_codes(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1}')
    assert main(["simulate", str(bad)]) == EXIT_CONFIG
    assert "field 'simulation'" in capsys.readouterr().err

    junk = tmp_path / "junk.pstm"
    junk.write_bytes(b"nope")
    assert main(["correlate", str(junk), str(junk), "--out", str(tmp_path / "x.csv")]) == EXIT_DATA
    sat = str(ref.data_path("reference_saturation.csv"))
    assert main(["fit", "polarization", sat]) == EXIT_DATA
    assert main(["fit", "g2", sat]) == EXIT_DATA

    capped = functools.partial(hbtkit.fitting.nlls_minimize, max_iter=1)
    monkeypatch.setattr(hbtkit.fitting, "nlls_minimize", capped)
    assert main(["fit", "saturation", sat]) == EXIT_NOT_CONVERGED
    assert "not converged" in capsys.readouterr().err


def test_selftest_failure_exit_code(monkeypatch):
    monkeypatch.setattr(hbtkit.acceptance, "run_all",
                        lambda quick, echo: [hbtkit.acceptance.CriterionResult(0, "x", False, "")])
    assert main(["selftest", "--quick"]) == EXIT_SELFTEST


def test_console_script():
    out = subprocess.run(["hbtkit", "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == hbtkit.__version__
