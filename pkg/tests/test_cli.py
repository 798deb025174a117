import csv
import json
import math

import pytest

from qkgaka.cli import main
from qkgaka.qk_grid import deserialize


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_qkd_accept(tmp_path):
    code, out = _run(tmp_path, "q", "qkd", "--photons", "100000", "--seed", "1")
    assert code == 0
    m = _manifest(out)
    assert 0.49 <= m["summary"]["retention"] <= 0.51
    nbits, hexkey = (out / "key.hex").read_text().split()
    assert int(nbits) == m["summary"]["final_bits"] and len(hexkey) == math.ceil(int(nbits) / 8) * 2
    assert {o["path"] for o in m["outputs"]} == {"transcript.csv", "key.hex"}


def test_qkd_detection_exit_code(tmp_path):
    code, out = _run(tmp_path, "q", "qkd", "--eve", "1.0", "--photons", "100000", "--seed", "1")
    assert code == 1
    assert _manifest(out)["summary"]["decision"] == "abort"


@pytest.mark.parametrize("argv", [
    ["qkd", "--photons", "0"],
    ["qkd", "--eve", "2"],
    ["grid", "--n", "4"],
    ["bogus"],
    ["aka", "--scheme", "qkg,xyz", "--n-auth", "2"],
    ["bench", "--iterations", "5"],
])
def test_usage_errors(tmp_path, argv, capsys):
    assert main([*argv, "--out", str(tmp_path / "u")]) == 2


def test_grid_twice_identical(tmp_path):
    _, a = _run(tmp_path, "a", "grid", "--n", "3", "--seed", "1")
    _, b = _run(tmp_path, "b", "grid", "--n", "3", "--seed", "1")
    assert (a / "grid.qkg").read_bytes() == (b / "grid.qkg").read_bytes()
    assert _manifest(a)["outputs"] == _manifest(b)["outputs"]
    assert deserialize((a / "grid.qkg").read_bytes()).n == 3


def test_keys_from_grid_and_store(tmp_path):
    _, g = _run(tmp_path, "g", "grid", "--n", "5", "--seed", "2")
    code, k1 = _run(tmp_path, "k1", "keys", "--grid", str(g / "grid.qkg"))
    assert code == 0
    code, k2 = _run(tmp_path, "k2", "keys", "--grid", str(g / "grid.qkg"), "--prek", str(k1 / "keystore.bin"))
    assert code == 0
    assert _manifest(k2)["summary"]["generation"] == 2
    assert (k1 / "golden.txt").read_text() != (k2 / "golden.txt").read_text()


def test_missing_input_is_io_error(tmp_path, capsys):
    code, _ = _run(tmp_path, "k", "keys", "--grid", str(tmp_path / "nope.qkg"))
    assert code == 3
    assert "nope.qkg" in capsys.readouterr().err


def test_bad_grid_file_is_format_error(tmp_path):
    bad = tmp_path / "bad.qkg"
    bad.write_bytes(b"QKG2\x00\x03")
    code, _ = _run(tmp_path, "k", "keys", "--grid", str(bad))
    assert code == 3


def test_aka_ordering(tmp_path):
    code, out = _run(tmp_path, "a", "aka", "--scheme", "qkg,eps", "--n-auth", "50")
    assert code == 0
    rows = list(csv.DictReader((out / "load_curve.csv").open()))
    q = [float(r["elapsed_ms_cumulative"]) for r in rows if r["scheme"] == "qkg"]
    e = [float(r["elapsed_ms_cumulative"]) for r in rows if r["scheme"] == "eps"]
    assert len(q) == len(e) == 50
    assert all(a <= b for a, b in zip(q, e))


def test_aka_attack_and_config(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("seed: 3\nattacker: {kind: none}\ncosts: {av_fetch_ms: 7}\n")
    code, out = _run(tmp_path, "t", "aka", "--config", str(cfg), "--attack", "replay")
    assert code == 1
    m = _manifest(out)
    assert m["config_digest"] and m["seeds"]["seed"] == 3
    assert json.loads((out / "transcript.json").read_text())["outcome"] == "auth_failure"
    code, _ = _run(tmp_path, "i", "aka", "--attack", "intercept_resend", "--seed", "1")
    assert code == 1


def test_lifetime_closed_form(tmp_path):
    code, out = _run(tmp_path, "l", "lifetime", "--dist", "exp", "--mean", "1", "--lambda", "2",
                     "--phi", "1", "--th", "1")
    assert code == 0
    row = next(csv.DictReader((out / "sweep.csv").open()))
    assert abs(float(row["p_dkga_analytic"]) - 0.63212) <= 1e-5


def test_lifetime_config(tmp_path):
    cfg = tmp_path / "l.yaml"
    cfg.write_text("T_s: 5\nparams:\n  - {lambda: 2, phi: 1, t_h: 1, dist: det, mean: 0.5}\n"
                   "  - {lambda: 8, phi: 1, t_h: 1, dist: emp, samples: [0.1, 0.4]}\n")
    code, out = _run(tmp_path, "l", "lifetime", "--config", str(cfg), "--trials", "2000")
    assert code == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert float(rows[0]["p_dkga_analytic"]) == pytest.approx(0.5)
    cfg.write_text("params: []\n")
    assert _run(tmp_path, "l2", "lifetime", "--config", str(cfg))[0] == 3


def test_lifetime_domain_error_is_usage(tmp_path):
    assert _run(tmp_path, "l", "lifetime", "--dist", "exp", "--mean", "-1")[0] == 2


def test_bench(tmp_path):
    code, out = _run(tmp_path, "b", "bench", "--n", "3", "--photons", "4096")
    assert code == 0
    m = _manifest(out)
    assert m["nondeterministic_outputs"] == ["bench.csv"]
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "iteration,qkg_seconds,plain_seconds" and len(lines) == 31


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("QKGAKA_OUT", str(tmp_path / "envout"))
    assert main(["grid", "--n", "3"]) == 0
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_rerun(tmp_path):
    _, out = _run(tmp_path, "a", "aka", "--scheme", "qkg", "--n-auth", "3", "--seed", "5")
    assert main(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "r")]) == 0
    (out / "load_curve.csv").write_text("tampered\n")
    m = _manifest(out)
    m["outputs"][0]["sha256"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(m))
    assert main(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "r2")]) == 1
    assert main(["rerun", str(tmp_path / "missing.json")]) == 3
