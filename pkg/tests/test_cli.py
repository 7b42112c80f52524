import json
import subprocess
import sys

import pytest

from cglflow.cli import main
from cglflow.config import config_from_dict
from cglflow.integrator import load_checkpoint
from cglflow.io import CSV_COLUMNS, read_timeseries


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text, encoding="utf-8")
    return p


def test_thresholds(tmp_path, capsys):
    assert main(["thresholds", "--config", str(write(tmp_path, "[grid]\nd = 3\n"))]) == 0
    out = capsys.readouterr().out
    values = dict(line.split(" = ") for line in out.strip().splitlines())
    assert float(values["grad_norm_sq_W"]) == pytest.approx(12.82, abs=0.01)
    assert float(values["energy_W"]) == pytest.approx(4.27, abs=0.01)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cglflow", "thresholds"], capture_output=True, text=True)
    assert proc.returncode == 0 and "energy_W" in proc.stdout


def test_config_error_exit_code(tmp_path, capsys):
    code = main(["run", "--config", str(write(tmp_path, "[z]\ntheta = 2.0\n")), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "theta" in capsys.readouterr().err


def test_bad_jobs_is_config_error(tmp_path):
    assert main(["sweep", "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_zero_datum_run(tmp_path):
    cfg = write(tmp_path, "[grid]\nn_per_axis = 16\n[experiment]\namplitudes = [0.0]\n")
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3  # header, initial row, terminal row
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outcome"]["status"] == "Decayed"
    assert manifest["outcome"]["exit_code"] == 0
    assert manifest["wall_time_s"] >= 0 and manifest["code_version"]
    # the emitted config reproduces the effective configuration
    from cglflow.config import parse_config
    assert config_from_dict(manifest["config"]) == parse_config(cfg)
    assert parse_config(out / "config.toml") == parse_config(cfg)


def test_sweep_misclassification_exit_three(tmp_path, capsys):
    cfg = write(tmp_path, """
[grid]
n_per_axis = 32
half_length = 3.0
[stepper]
dt = 0.01
max_time = 0.05
[experiment]
amplitudes = [0.3]
thetas = [0.7853981633974483]
[experiment.family]
sigma = 0.5
""")
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--quiet"]) == 3
    err = capsys.readouterr().err
    assert "misclassified cell 0" in err and "expected Decayed" in err
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("cell,amplitude,theta") and "True" in summary[1]
    assert (out / "cell_000.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["outcome"]["misclassified"] == [0]


RESUME_CFG = """
[grid]
n_per_axis = 16
half_length = 3.0
[stepper]
dt = 0.01
max_time = 2.0
[experiment]
amplitudes = [0.3]
[experiment.family]
kind = "truncated_w"
[output]
record_cadence = 0.25
checkpoint_cadence = 0.5
"""


def test_resume_reaches_same_terminal_state(tmp_path):
    cfg = write(tmp_path, RESUME_CFG)
    full, res = tmp_path / "full", tmp_path / "res"
    assert main(["run", "--config", str(cfg), "--out", str(full), "--quiet"]) == 0
    ckpt = full / "checkpoint_000002.bin"
    state, _, s_acc = load_checkpoint(ckpt)
    assert state.t == pytest.approx(1.0) and s_acc > 0
    assert main(["resume", str(ckpt), "--config", str(cfg), "--out", str(res), "--quiet"]) == 0
    a = json.loads((full / "manifest.json").read_text())["outcome"]
    b = json.loads((res / "manifest.json").read_text())["outcome"]
    assert a["status"] == b["status"] == "MaxTimeReached"
    assert abs(a["t_event"] - b["t_event"]) <= 0.25
    ta, tb = read_timeseries(full / "timeseries.csv"), read_timeseries(res / "timeseries.csv")
    assert tb["t"][0] == pytest.approx(1.0)
    assert tb["s_accum"][-1] == pytest.approx(ta["s_accum"][-1], rel=1e-6)
    assert tb["kinetic"][-1] == pytest.approx(ta["kinetic"][-1], rel=1e-5)


def test_resume_missing_checkpoint(tmp_path):
    assert main(["resume", str(tmp_path / "nope.bin"), "--out", str(tmp_path / "o"), "--quiet"]) == 1
