"""End-to-end CLI behavior: exit codes, file outputs, manifests, determinism."""

import hashlib
import json

import numpy as np
import pytest

from plapflow import FlowTrace, build_lattice_ball, graph_dump
from plapflow.cli import main

LINE_HEAT = """
experiment = "decay"

[graph]
N = 1
R = 4

[flow]
p = 2.0
T = 10.0
snapshots = 12
"""

PLANE_SLOW = """
experiment = "decay"

[graph]
N = 2
R = 8

[flow]
p = 2.5
T = 0.5
snapshots = 8
linear_mode = false

[density]
family = "power"
alpha = 1.0
"""


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def synthetic_trace(t, linf, meta):
    t = np.asarray(t, dtype=float)
    linf = np.asarray(linf, dtype=float)
    ones = np.ones_like(t)
    return FlowTrace(t=t, dt=np.full_like(t, 1e-3), linf=linf, mass=ones,
                     E2=linf ** 2, Dp=1.0 / np.maximum(t, 1e-3),
                     boundary_max=np.zeros_like(t), meta=dict(meta))


def test_graph_dump_stdout_and_file(tmp_path, capsys):
    cfg = write_config(tmp_path, LINE_HEAT)
    assert main(["graph-dump", "--config", cfg, "--set", "graph.R=1"]) == 0
    out = capsys.readouterr().out
    assert out == graph_dump(build_lattice_ball(1, 1))

    target = tmp_path / "dump.txt"
    assert main(["graph-dump", "--config", cfg, "--set", "graph.R=1",
                 "--out-file", str(target)]) == 0
    assert target.read_text() == out


def test_evolve_tainted_run_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, LINE_HEAT)
    out = tmp_path / "out"
    code = main(["evolve", "--config", cfg, "--out", str(out),
                 "--set", "initial.scales=[1.0, 10.0]"])
    assert code == 2
    assert (out / "trace_1.csv").exists()
    assert (out / "trace_10.csv").exists()
    assert "[tainted]" in capsys.readouterr().out

    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["commands"] == ["evolve"]
    assert set(manifest["outputs"]) == {"trace_1.csv", "trace_10.csv"}
    digest = hashlib.sha256((out / "trace_1.csv").read_bytes()).hexdigest()
    assert manifest["outputs"]["trace_1.csv"] == digest
    assert manifest["config"]["graph"]["R"] == 4


def test_evolve_clean_run_exits_0(tmp_path):
    cfg = write_config(tmp_path, PLANE_SLOW)
    out = tmp_path / "out"
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    trace = FlowTrace.from_csv(str(out / "trace_1.csv"))
    assert not trace.tainted
    assert trace.meta["p"] == 2.5


def test_evolve_outputs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path, LINE_HEAT)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        main(["evolve", "--config", cfg, "--out", str(out)])
    for name in ("trace_1.csv", "run_manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


ANALYZE_CFG = """
experiment = "decay"

[graph]
N = 3
R = 6

[flow]
p = 2.5
T = 100.0
linear_mode = false

[density]
family = "power"
alpha = 1.0

[analysis]
rate_tolerance = 0.05
"""

ANALYZE_META = {"N": 3, "R": 6, "p": 2.5, "family": "power",
                "alpha": 1.0, "beta": 0.0}


def exact_rate_trace(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    t = np.geomspace(0.1, 100.0, 60)
    trace = synthetic_trace(t, t ** -0.8, ANALYZE_META)
    trace.write_csv(str(out / "trace_1.csv"))
    return out


def test_analyze_exact_rate_trace_passes(tmp_path, capsys):
    cfg = write_config(tmp_path, ANALYZE_CFG)
    out = exact_rate_trace(tmp_path)
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "fitted_exponent" in printed

    report = (out / "decay_report.csv").read_text().splitlines()
    assert report[0] == "stat,value"
    rows = dict(line.split(",", 1) for line in report[1:])
    assert rows["rate_ok"] == "true"
    assert abs(float(rows["fitted_exponent"]) + 0.8) < 1e-10
    assert float(rows["target_exponent"]) == -0.8
    assert abs(float(rows["q_ratio"]) - 1.0) < 1e-6
    assert (out / "decay_report.txt").exists()

    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["commands"] == ["analyze"]
    assert "decay_report.csv" in manifest["outputs"]


def test_analyze_rejects_mismatched_config(tmp_path, capsys):
    cfg = write_config(tmp_path, ANALYZE_CFG)
    out = exact_rate_trace(tmp_path)
    code = main(["analyze", "--config", cfg, "--out", str(out),
                 "--set", "density.alpha=0.5"])
    assert code == 1
    err = capsys.readouterr().err
    assert "produced with" in err and "alpha" in err


def test_analyze_rejects_wrong_format_version(tmp_path, capsys):
    cfg = write_config(tmp_path, ANALYZE_CFG)
    out = exact_rate_trace(tmp_path)
    path = out / "trace_1.csv"
    path.write_text(path.read_text().replace("plap-flow v1", "plap-flow v9", 1))
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 1
    assert "plap-flow" in capsys.readouterr().err


def test_analyze_without_traces_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, ANALYZE_CFG)
    out = tmp_path / "empty"
    out.mkdir()
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 1
    assert "evolve first" in capsys.readouterr().err


UNIVERSAL_CFG = """
experiment = "universal"

[graph]
N = 2
R = 5

[flow]
p = 2.0

[initial]
scales = [1.0, 10.0]
"""


def test_analyze_universal_linear_control_reports_spread(tmp_path, capsys):
    cfg = write_config(tmp_path, UNIVERSAL_CFG)
    out = tmp_path / "out"
    out.mkdir()
    meta = {"N": 2, "R": 5, "p": 2.0, "family": "constant",
            "alpha": 0.0, "beta": 0.0}
    t = np.geomspace(0.1, 10.0, 40)
    for scale in (1.0, 10.0):
        synthetic_trace(t, scale * t ** -1.0, meta).write_csv(
            str(out / f"trace_{scale:g}.csv"))
    # p = 2 is the negative control: the spread is reported, not enforced.
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    report = (out / "decay_report.csv").read_text().splitlines()
    rows = dict(line.split(",", 1) for line in report[1:])
    assert abs(float(rows["s_spread"]) - 10.0) < 1e-9
    assert rows["spread_ok"] == ""


VERIFY_CFG = """
experiment = "decay"

[graph]
N = 3
R = 3

[flow]
p = 2.5
T = 1.0
linear_mode = false

[density]
family = "power"
alpha = 1.0

[verify]
suites = ["sobolev", "caccioppoli"]
trials = 5
caccioppoli_samples = 200
"""


def test_verify_report_and_budgets(tmp_path, capsys):
    cfg = write_config(tmp_path, VERIFY_CFG)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "verify_report.csv").read_text().splitlines()
    assert lines[0] == "inequality,trials,worst_ratio,seed,witness_file"
    assert len(lines) == 3
    assert (out / "witness_sobolev.txt").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert "verify_report.csv" in manifest["outputs"]
    capsys.readouterr()

    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "bad"),
                 "--set", "verify.budgets.sobolev=1e-9"])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_verify_outputs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path, VERIFY_CFG)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    for name in ("verify_report.csv", "witness_sobolev.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_manifest_merges_across_commands(tmp_path):
    cfg = write_config(tmp_path, LINE_HEAT)
    out = tmp_path / "out"
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 2
    assert main(["verify", "--config", cfg, "--out", str(out),
                 "--set", 'verify.suites=["caccioppoli"]',
                 "--set", "verify.caccioppoli_samples=100"]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["commands"] == ["evolve", "verify"]
    assert {"trace_1.csv", "verify_report.csv"} <= set(manifest["outputs"])
    assert manifest["tool"].startswith("plapflow ")


def test_config_errors_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, LINE_HEAT)
    assert main(["evolve", "--config", cfg, "--set", "flow.p=1.0"]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["evolve", "--config", str(tmp_path / "missing.toml")]) == 1
    assert "error:" in capsys.readouterr().err


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
