"""End-to-end command-line checks via subprocess."""

import csv
import subprocess
import sys

import numpy as np
import pytest

from crossdiff.config import describe_keys

SIM_CONFIG = """
# tiny smoke run
n_cells = 16
epsilon = 1e-3
t_final = 0.002
scenario = constant
scenario.c_m = 0.7
scenario.c_n = 0.3
output_dir = {out}
"""

LADDER_CONFIG = """
n_cells = 16
epsilon = 1e-3
t_final = 0.004
scenario = mixed_oscillatory
ladder_rungs = 3
window_t = 4
window_x = 4
s_list = 1.25,1.5
output_dir = {out}
"""


def _cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "crossdiff", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        timeout=300,
    )


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text.format(out=tmp_path / "out"))
    return path


def test_simulate_writes_expected_files(tmp_path):
    cfg = _write_config(tmp_path, SIM_CONFIG)
    proc = _cli(["simulate", str(cfg)], tmp_path)
    assert proc.returncode == 0, proc.stderr
    out = tmp_path / "out"

    header, rows = _read_csv(out / "steps.csv")
    assert header == ["t", "dt", "mass_m", "mass_n", "entropy", "max_rho"]
    entropy = np.array([float(r[4]) for r in rows])
    assert len(rows) >= 3
    # constant data is a fixed point, so the entropy column is frozen
    assert np.max(np.abs(entropy - entropy[0])) < 1e-13 * (1 + abs(entropy[0]))

    snaps = sorted(out.glob("snapshot_*.csv"))
    assert snaps, "no snapshot dumps written"
    header, rows = _read_csv(snaps[0])
    assert header == ["x", "m", "n", "rho", "a", "xi"]
    assert len(rows) == 16
    first = [float(v) for v in rows[0]]
    assert first[1] == 0.7 and first[2] == 0.3 and first[3] == 1.0

    header, rows = _read_csv(out / "checks.csv")
    assert header == ["check", "value", "pass"]
    assert {r[0] for r in rows} == {
        "mass_drift",
        "max_rho_growth",
        "entropy_step_increase",
        "a_clamp",
        "clipped_mass",
    }
    assert all(r[2] == "true" for r in rows)
    assert "PASS" in proc.stdout


def test_simulate_missing_config_is_config_error(tmp_path):
    proc = _cli(["simulate", str(tmp_path / "absent.cfg")], tmp_path)
    assert proc.returncode == 1
    assert proc.stderr.startswith("ERROR 1:")


def test_simulate_unknown_key_is_config_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_cells = 16\nnot_a_key = 3\n")
    proc = _cli(["simulate", str(cfg)], tmp_path)
    assert proc.returncode == 1
    assert "ERROR 1:" in proc.stderr and "not_a_key" in proc.stderr
    assert "bad.cfg:2" in proc.stderr


def test_simulate_nan_parameter_is_invariant_violation(tmp_path):
    cfg = tmp_path / "nan.cfg"
    cfg.write_text(
        "n_cells = 16\nt_final = 0.001\nscenario = constant\n"
        "scenario.c_m = nan\noutput_dir = out\n"
    )
    proc = _cli(["simulate", str(cfg)], tmp_path)
    assert proc.returncode == 2
    assert proc.stderr.startswith("ERROR 2:")


def test_ladder_needs_three_rungs(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text("n_cells = 16\nt_final = 0.001\nladder_rungs = 1\n")
    proc = _cli(["ladder", str(cfg)], tmp_path)
    assert proc.returncode == 1
    assert "ERROR 1:" in proc.stderr and "ladder_rungs" in proc.stderr


def test_ladder_outputs_and_byte_stability(tmp_path):
    cfg = _write_config(tmp_path, LADDER_CONFIG)
    proc = _cli(["ladder", str(cfg)], tmp_path)
    assert proc.returncode == 0, proc.stderr
    out = tmp_path / "out"

    header, rows = _read_csv(out / "admissibility.csv")
    assert header == ["rung", "check", "value", "pass"]
    hard_rows = [r for r in rows if r[1] == "mass_drift"]
    assert len(hard_rows) == 3
    assert all(r[3] == "true" for r in hard_rows)

    header, rows = _read_csv(out / "residuals.csv")
    assert header == ["rung", "quantity", "s", "norm"]
    quantities = {r[1] for r in rows}
    assert {"r0_hminus1", "r1_hminus1", "family_l1", "weak_m", "weak_n"} <= quantities
    fam = [r for r in rows if r[1] == "family_l1"]
    assert {r[2] for r in fam} == {"1.25", "1.5"}
    assert all(float(r[3]) > 0 for r in fam)
    plain = [r for r in rows if r[1] == "r0_hminus1"]
    assert all(r[2] == "" for r in plain)

    header, rows = _read_csv(out / "measures.csv")
    assert header[:8] == [
        "rung",
        "cell_t",
        "cell_x",
        "n_samples",
        "mean_a",
        "var_a",
        "mean_xi",
        "A_hat",
    ]
    assert header[8:] == [
        "firsthit_s1.25",
        "firsthit_s1.5",
        "cov_s1.25",
        "cov_s1.5",
    ]
    assert {r[0] for r in rows} == {"0", "1", "2"}

    before = {
        name: (out / name).read_bytes()
        for name in ("admissibility.csv", "residuals.csv", "measures.csv")
    }
    rerun = _cli(["ladder", str(cfg)], tmp_path)
    assert rerun.returncode == 0
    for name, blob in before.items():
        assert (out / name).read_bytes() == blob, f"{name} changed between reruns"


def test_phi_table_default_grid(tmp_path):
    proc = _cli(["phi-table", "--out", "tab.csv"], tmp_path)
    assert proc.returncode == 0, proc.stderr
    header, rows = _read_csv(tmp_path / "tab.csv")
    assert header == ["a", "s", "phi"]
    data = [(float(r[0]), float(r[1]), float(r[2])) for r in rows]
    s_values = sorted({s for _, s, _ in data})
    assert s_values == [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3]
    for s in s_values:
        branch = [(a, phi) for a, si, phi in data if si == s]
        assert len(branch) == 101
        assert branch[0] == (1.0, 0.0)
        phis = [phi for _, phi in branch]
        assert all(b > a for a, b in zip(phis, phis[1:]))
    # s = 1 is exactly a - 1 on the nodes
    for a, phi in [(a, phi) for a, si, phi in data if si == 1.0]:
        assert phi == a - 1.0

    rerun = _cli(["phi-table", "--out", "tab2.csv"], tmp_path)
    assert rerun.returncode == 0
    assert (tmp_path / "tab.csv").read_bytes() == (tmp_path / "tab2.csv").read_bytes()


def test_phi_table_closed_form_spot_value(tmp_path):
    proc = _cli(["phi-table", "--s", "1.5", "--nodes", "11", "--out", "t.csv"], tmp_path)
    assert proc.returncode == 0, proc.stderr
    _, rows = _read_csv(tmp_path / "t.csv")
    last = rows[-1]
    assert float(last[0]) == 2.0
    assert abs(float(last[2]) - 4.0 / 3.0) < 1e-10


def test_phi_table_rejects_index_outside_strip(tmp_path):
    proc = _cli(["phi-table", "--s", "2.5", "--out", "t.csv"], tmp_path)
    assert proc.returncode == 1
    assert proc.stderr.startswith("ERROR 1:")
    ok = _cli(["phi-table", "--s", "0.7", "--out", "t.csv"], tmp_path)
    assert ok.returncode == 0


def test_bad_usage_is_config_error(tmp_path):
    proc = _cli(["no-such-command"], tmp_path)
    assert proc.returncode == 1
    assert proc.stderr.startswith("ERROR 1:")


def test_help_lists_every_config_key(tmp_path):
    proc = _cli(["--help"], tmp_path)
    assert proc.returncode == 0
    for line in describe_keys():
        assert line in proc.stdout
    assert "scenario.<param>" in proc.stdout
