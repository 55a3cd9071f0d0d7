import subprocess
import sys

import pytest

from banditsgd.cli import main, parse_grid
from banditsgd.core import ConfigError

SIM = ["--p", "2", "--steps", "1500", "--reps", "6", "--parallel", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_oracle_prints_vanilla_length(capsys, tmp_path):
    code, out, _ = run(capsys, "oracle", "--out", str(tmp_path))
    assert code == 0 and "0.55" in out
    lines = (tmp_path / "oracle.csv").read_text().splitlines()
    assert lines[0] == "parameter,variance,ci_length" and len(lines) == 21
    eig = (tmp_path / "eigen_c.csv").read_text()
    assert eig.splitlines()[0] == "c1,c2,c3,c4"


def test_gcurve_minimum_at_zero(capsys, tmp_path):
    code, out, _ = run(capsys, "gcurve", "--gammas", "-1:1:0.1", "--out", str(tmp_path))
    assert code == 0 and "gamma = 0" in out
    rows = (tmp_path / "gcurve.csv").read_text().splitlines()
    assert rows[0] == "gamma,g" and len(rows) == 22


def test_parse_grid():
    g = parse_grid("-1:1:0.5")
    assert list(g) == [-1.0, -0.5, 0.0, 0.5, 1.0]
    with pytest.raises(ConfigError):
        parse_grid("1:0:0.1")


def test_unknown_flag_prints_usage(capsys):
    code, _, err = run(capsys, "simulate", "--bogus", "1")
    assert code == 1 and "usage" in err and "ERROR 1" in err


@pytest.mark.parametrize("argv", [["simulate", "--eps", "2"], ["simulate", "--scheme", "foo"],
                                  ["simulate", "--steps", "ten"], ["oracle", "--parallel", "0"]])
def test_config_errors_exit_one(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 1 and err.startswith("ERROR 1:")


def test_missing_and_malformed_log_exit_three(capsys, tmp_path):
    code, _, _ = run(capsys, "replay", "--log", str(tmp_path / "none.csv"), "--out", str(tmp_path))
    assert code == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,article_id,click,f1,f2,f3,f4,f5,f6\n1,109520,1,0.1\n")
    code, _, err = run(capsys, "replay", "--log", str(bad), "--out", str(tmp_path))
    assert code == 3 and "line 2" in err


def test_empty_replay_exits_two(capsys, tmp_path):
    log = tmp_path / "empty.csv"
    log.write_text("timestamp,article_id,click,f1,f2,f3,f4,f5,f6\n")
    code, _, _ = run(capsys, "replay", "--log", str(log), "--out", str(tmp_path))
    assert code == 2


def test_divergence_exits_two(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", *SIM, "--eta0", "1e6", "--t0", "1", "--out", str(tmp_path))
    assert code == 2 and "ERROR 2" in err


def test_config_file_roundtrip(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "simulate", *SIM, "--scheme", "sqrt-ipw", "--out", str(a))[0] == 0
    assert run(capsys, "simulate", "--config", str(a / "config.ini"), "--parallel", "1", "--out", str(b))[0] == 0
    for name in ("raw.csv", "summary.csv", "config.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[simulate]\nstepz = 10\n")
    code, _, err = run(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1 and "stepz" in err


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[simulate]\nsteps = 1000\nreps = 4\np = 2\n")
    run(capsys, "simulate", "--config", str(cfg), "--reps", "5", "--parallel", "1", "--out", str(tmp_path))
    text = (tmp_path / "config.ini").read_text()
    assert "steps = 1000" in text and "reps = 5" in text


def test_json_summary(capsys, tmp_path):
    import json

    code, out, _ = run(capsys, "simulate", *SIM, "--json-summary", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["n_reps"] == 6


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "banditsgd", "gcurve", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "minimum g" in proc.stdout


def test_default_replay_finds_every_planted_effect(capsys, tmp_path):
    code, out, _ = run(capsys, "replay", "--out", str(tmp_path))
    assert code == 0 and "consumed 50000" in out
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert rows[0] == "parameter,estimate,se,lb,ub,t_value,p_value"
    tvals = [float(r.split(",")[5]) for r in rows[1:]]
    assert len(tvals) == 10 and min(abs(t) for t in tvals) > 2
    consumed, skipped, total, _ = (tmp_path / "match.csv").read_text().splitlines()[1].split(",")
    assert int(consumed) + int(skipped) == int(total)
