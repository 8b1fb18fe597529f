import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vrclt.cli import DEFAULTS, apply_override, emit_summary, fmt, load_config, main, resolve_seed
from vrclt.errors import ConfigError

GOLDEN = Path(__file__).parent / "golden"
SMALL = ["--set", "trajectories=6", "--set", "steps=8"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_rates_outputs(tmp_path, capsys):
    assert main(["rates", "--out-dir", str(tmp_path), "--seed", "5", *SMALL]) == 0
    out = capsys.readouterr().out
    assert out.rstrip().endswith("seed: 5")
    r = rows(tmp_path / "rates.csv")
    assert list(r[0]) == ["algorithm", "k", "N_k", "cum_oracle", "mean_err", "mse", "theory_bound"]
    assert {x["algorithm"] for x in r} == {"vr_sgd", "vr_accelerated", "vr_heavy_ball"}
    meta = json.loads((tmp_path / "rates.json").read_text())
    assert meta


def test_summary_matches_golden(tmp_path, capsys):
    args = ["rates", "--out-dir", str(tmp_path), "--seed", "11", *SMALL,
            "--set", "algorithms=[\"vr_sgd\"]", "--set", "steps=4"]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / "rates_summary.txt").read_text()


def test_clt_and_compare_run(tmp_path):
    assert main(["clt", "--out-dir", str(tmp_path), "--quiet", "--set", "clt.k=10", "--set", "clt.paths=120"]) == 0
    assert (tmp_path / "clt_samples.csv").exists() and (tmp_path / "clt_hist.csv").exists()
    assert main(["compare", "--out-dir", str(tmp_path), "--quiet", "--set", "compare.N_max=2000",
                 "--set", "trajectories=4", "--set", "compare.points=10"]) == 0
    algs = {x["algorithm"] for x in rows(tmp_path / "compare.csv")}
    assert "baseline_sgd" in algs


def test_unknown_key_rejected_without_output(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["rates", "--out-dir", str(out), "--set", "stepz=3"]) == 2
    assert "stepz" in capsys.readouterr().err
    assert not out.exists()


def test_inadmissible_alpha_is_config_error(tmp_path):
    out = tmp_path / "out"
    assert main(["rates", "--out-dir", str(out), "--set", "alpha=10"]) == 2
    assert not out.exists()


def test_config_file_and_bad_values(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 3, "trajectories": 2, "problem": {"type": "quadratic", "dim": 2,
                                                                          "eigenvalues": [1, 2]}}))
    assert main(["rates", "--config", str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 0
    cfg.write_text(json.dumps({"steps": -1}))
    assert main(["rates", "--config", str(cfg), "--out-dir", str(tmp_path / "p")]) == 2
    assert main(["rates", "--out-dir", str(tmp_path / "q"), "--workers", "-1"]) == 2


def test_numerical_failure_exit_code(tmp_path):
    args = ["rates", "--out-dir", str(tmp_path / "o"), "--quiet", "--set", "steps=200",
            "--set", "schedule={\"kind\": \"geometric\", \"rho\": 0.5}"]
    assert main(args) == 3


def test_override_parsing():
    cfg = apply_override(json.loads(json.dumps(DEFAULTS)), "coverage.n=[6,7]")
    assert cfg["coverage"]["n"] == [6, 7]
    cfg = apply_override(cfg, "alpha=default")
    assert cfg["alpha"] == "default"
    with pytest.raises(ConfigError):
        apply_override(cfg, "no_equals_sign")
    with pytest.raises(ConfigError):
        load_config(None, ["coverage.bogus=1"])


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("VRCLT_SEED", "9")
    assert resolve_seed(3, 4) == 3
    assert resolve_seed(None, 4) == 4
    assert resolve_seed(None, None) == 9
    monkeypatch.delenv("VRCLT_SEED")
    assert resolve_seed(None, None) == 0
    monkeypatch.setenv("VRCLT_SEED", "abc")
    with pytest.raises(ConfigError):
        resolve_seed(None, None)


def test_formatting():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(np.int64(7)) == "7"
    text = emit_summary([{"a": 1.23456789, "b": "x"}], 4)
    assert "1.235" in text and text.endswith("seed: 4\n")


def test_worker_count_does_not_change_output(tmp_path):
    for d, w in (("a", "1"), ("b", "3")):
        assert main(["rates", "--out-dir", str(tmp_path / d), "--quiet", "--workers", w, *SMALL]) == 0
    assert (tmp_path / "a" / "rates.csv").read_bytes() == (tmp_path / "b" / "rates.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vrclt", "rates", "--out-dir", str(tmp_path), "--quiet", *SMALL],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


def test_whole_problem_override_replaces_default(tmp_path):
    args = ["rates", "--out-dir", str(tmp_path), "--quiet", "--set", "steps=3", "--set", "trajectories=2",
            "--set", 'problem={"type": "quadratic", "dim": 2, "eigenvalues": [1, 4]}']
    assert main(args) == 0
    cfg = load_config(None, ['problem={"type": "quadratic", "dim": 2, "eigenvalues": [1, 4]}'])
    assert "R_u" not in cfg["problem"]
