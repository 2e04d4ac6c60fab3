import json
import subprocess
import sys

import pytest

from addrate.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_rejects_q(tmp_path, capsys):
    assert main(["gen-data", "--n", "30", "--d", "3", "--k-max", "4",
                 "--out-dir", str(tmp_path)]) == 0
    code, _, err = run(["fit", "--data", str(tmp_path / "data.csv"), "--q", "1.5",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 1 and "q must lie in (0,1]" in err


@pytest.mark.parametrize("argv, msg", [
    (["fit", "--bogus"], "unrecognized"),
    (["fit", "--data", "/nonexistent/data.csv"], "data file not found"),
    (["rate-sweep", "--config", "/nonexistent.ini"], "config file not found"),
    (["frobnicate"], "invalid choice"),
    (["rate-sweep", "--threads", "0"], "threads"),
])
def test_usage_errors(argv, msg, capsys, tmp_path):
    code, _, err = run(argv + ["--out-dir", str(tmp_path)] if argv[0] != "frobnicate" else argv,
                       capsys)
    assert code == 1 and msg in err


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("no section header\nkey = 1\n")
    code, _, err = run(["phase-diagram", "--config", str(bad), "--out-dir", str(tmp_path)], capsys)
    assert code == 1 and "malformed config" in err
    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[phase-diagram]\nwidth = 3\n")
    code, _, err = run(["phase-diagram", "--config", str(unknown), "--out-dir", str(tmp_path)],
                       capsys)
    assert code == 1 and "unknown config key" in err


SWEEP = ["rate-sweep", "--seed", "7", "--n-grid", "40,80", "--d-grid", "4",
         "--replicates", "2", "--estimator", "oracle", "--k-max", "8"]


def test_rate_sweep_byte_identical(tmp_path, capsys):
    for sub in ("a", "b"):
        assert main(SWEEP + ["--out-dir", str(tmp_path / sub)]) == 0
    a, b = (tmp_path / "a" / "rates.csv").read_bytes(), (tmp_path / "b" / "rates.csv").read_bytes()
    assert a == b and a.count(b"\n") == 3
    man = json.loads((tmp_path / "a" / "rates.manifest.json").read_text())
    assert man["subcommand"] == "rate-sweep" and man["seed"] == 7


def test_config_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[global]\nseed = 3\n[phase-diagram]\nn = 500\nq = 1.0\nname = pd\n")
    assert main(["phase-diagram", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "pd.manifest.json").read_text())
    assert man["config"]["n"] == 500 and man["config"]["q"] == 1.0 and man["seed"] == 3
    assert main(["phase-diagram", "--config", str(cfg), "--n", "900",
                 "--out-dir", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "pd.manifest.json").read_text())
    assert man["config"]["n"] == 900


def test_out_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ADDRATE_OUT_DIR", str(tmp_path / "env"))
    assert main(["phase-diagram", "--n", "100"]) == 0
    assert (tmp_path / "env" / "phase.csv").exists()


def test_gen_fit_roundtrip(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["gen-data", "--n", "60", "--d", "4", "--k-max", "4", "--seed", "2",
                 "--out-dir", out]) == 0
    for est in ("lq_constrained", "mixed_penalty", "oracle"):
        assert main(["fit", "--data", str(tmp_path / "data.csv"), "--estimator", est,
                     "--restarts", "1", "--name", est, "--out-dir", out]) == 0
        rec = json.loads((tmp_path / f"{est}.json").read_text())
        assert rec["empirical_risk"] >= 0 and len(rec["rkhs_norms"]) == 4
    man = json.loads((tmp_path / "lq_constrained.manifest.json").read_text())
    assert man["inputs"] and man["outputs"] == ["lq_constrained.json"]


def test_complexity_and_packing(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["complexity", "--n", "50", "--replicates", "5", "--k-max", "8",
                 "--out-dir", out]) == 0
    assert (tmp_path / "complexity_gaussian.envelope.json").exists()
    assert main(["packing-check", "--k-max", "8", "--out-dir", out]) == 0
    rep = json.loads((tmp_path / "packing_report.json").read_text())
    assert rep["min_separation"] >= rep["separation_bound"]


def test_subopt_cli(tmp_path, capsys):
    assert main(["subopt-exp", "--n-grid", "100", "--d-grid", "4", "--replicates", "1",
                 "--k-max", "8", "--restarts", "1", "--multipliers", "1",
                 "--truth-modes", "single", "--out-dir", str(tmp_path)]) == 0
    code, _, err = run(["subopt-exp", "--n-grid", "100", "--d-grid", "4", "--alpha-grid", "2",
                        "--out-dir", str(tmp_path)], capsys)
    assert code == 1 and "smooth regime" in err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "addrate.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "addrate" in res.stdout
