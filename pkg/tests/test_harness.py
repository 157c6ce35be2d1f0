import csv
import dataclasses
import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npns import diagnostics as DG
from npns.harness import oracle as O
from npns.harness.cli import main
from npns.harness.config import ConfigError, initial_concentrations, load_config, parse_config
from npns.harness.mms import ConvergenceTable, verify_mms
from npns.harness.simulate import (build_problem, deserialize_checkpoint, make_checkpoint,
                                   read_checkpoint, read_csv, run_simulation, serialize_checkpoint)
from npns.harness.sweep import sweep
from npns.model import SimParams, Species

from conftest import random_state, make_problem

MINIMAL = """
[grid]
cells = 8 8

[physics]
epsilon = 0.1
nu = 1
coupling_k = 1

[species.1]
valence = 1
diffusivity = 1
boundary = 2

[species.2]
valence = -1
diffusivity = 0.5
boundary = 1

[run]
t_final = 0.01
"""

SMALL = """
[grid]
cells = 12 12

[physics]
epsilon = 0.05
nu = 1
coupling_k = 1

[potential]
boundary = linear 0 5 0

[species.1]
valence = 1
diffusivity = 1
boundary = 2
initial = extension + sin 1 1 1

[species.2]
valence = -1
diffusivity = 0.5
boundary = 1
initial = extension + sin 1 1 1

[initial]
perturbation = 0.2
seed = 3

[run]
t_final = 0.02
output_every = 5
checkpoint_every = 20
"""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_minimal_config_defaults():
    spec = parse_config(MINIMAL)
    assert spec.dim == 2 and spec.extents == (1.0, 1.0) and spec.cells == (8, 8)
    assert spec.params.flow_mode == "stokes" and not spec.params.equal_diffusivity_mode
    assert spec.safety == 0.9 and spec.output_every == 10 and spec.delta == 1.0
    assert spec.initial == ("extension", "extension")
    assert spec.poisson_method == "spectral" and spec.output_dir == "results"


def test_missing_key_named():
    with pytest.raises(ConfigError, match="missing required key 'epsilon' in \\[physics\\]"):
        parse_config(MINIMAL.replace("epsilon = 0.1\n", ""))


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'epsilonn'"):
        parse_config(MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nepsilonn = 0.1"))


@pytest.mark.parametrize("old,new,msg", [
    ("[run]", "[runn]", "unknown section"),
    ("cells = 8 8", "cells = 8 x", "cells"),
    ("diffusivity = 0.5", "diffusivity = 0", "diffusivity must be positive"),
    ("cells = 8 8", "cells = 2 8", "at least 4"),
    ("t_final = 0.01", "t_final = -1", "t_final"),
    ("boundary = 1", "boundary = sin 1", "boundary"),
    ("[species.2]", "[species.3]", "numbered"),
])
def test_config_errors(old, new, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(MINIMAL.replace(old, new))


def test_initial_mismatch_warns(caplog):
    spec = parse_config(MINIMAL.replace("boundary = 2", "boundary = 2\ninitial = 3"))
    problem = build_problem(spec)
    with caplog.at_level(logging.WARNING):
        c = initial_concentrations(spec, problem.grid, problem.boundary.Gamma)
    assert np.all(c[0] == 3.0)
    assert "differ from boundary data" in caplog.text


def test_nonpositive_initial_rejected():
    spec = parse_config(MINIMAL.replace("boundary = 2", "boundary = 2\ninitial = extension + sin -5 1 1"))
    problem = build_problem(spec)
    with pytest.raises(ConfigError, match="positive"):
        initial_concentrations(spec, problem.grid, problem.boundary.Gamma)


def test_sample_configs_load():
    from pathlib import Path
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.ini")):
        if "sweep" in path.name:
            continue
        spec = load_config(path)
        assert spec.t_final > 0


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), t=st.floats(0, 10), step=st.integers(0, 2**40))
def test_checkpoint_roundtrip_bytes(seed, t, step):
    p = make_problem(cells=(6, 5), extents=(1.0, 0.8))
    s = random_state(p, seed=seed, velocity=1.0)
    s.t, s.step = t, step
    acc = DG.MonitorAccumulator()
    acc.add(0.0, {"B": 1.0, "R": 2.0, "U": 3.0, "diss": 4.0})
    data = serialize_checkpoint(make_checkpoint(s, p, acc))
    assert data[:5] == b"NPNS1"
    ck = deserialize_checkpoint(data)
    assert serialize_checkpoint(ck) == data
    assert ck.step == step and ck.t == t and np.array_equal(ck.c, s.c)
    assert all(np.array_equal(a, b) for a, b in zip(ck.u, s.u))


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError):
        deserialize_checkpoint(b"NOPE" + bytes(64))


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

def test_fixed_point_run(tmp_path):
    text = (MINIMAL.replace("boundary = 2", "boundary = 1")
            .replace("t_final = 0.01", "t_final = 1\ndt_max = 0.001\noutput_every = 50")
            .replace("[species.1]", "[potential]\nboundary = 0.3\n\n[species.1]"))
    spec = parse_config(text)
    res = run_simulation(spec, tmp_path)
    assert res.state.step >= 500
    c0 = res.problem.boundary.Gamma
    assert np.abs(res.state.c - c0).max() <= 1e-12
    assert max(np.abs(v).max() for v in res.state.u) <= 1e-12
    assert res.summary["B"] <= 1e-20 and res.summary["U"] <= 1e-20
    assert abs(res.summary["max_abs_r_ens"]) <= 1e-12 and abs(res.summary["max_abs_r_l2"]) <= 1e-12


def test_runs_are_deterministic(tmp_path):
    spec = parse_config(SMALL)
    run_simulation(spec, tmp_path / "a")
    run_simulation(spec, tmp_path / "b")
    for name in ("timeseries.csv", "audit.csv", "final.npns"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_restart_reproduces_rows(tmp_path):
    spec = parse_config(SMALL)
    full = run_simulation(spec, tmp_path / "full")
    ck = tmp_path / "full" / "checkpoints" / "step_00000020.npns"
    assert read_checkpoint(ck).step == 20
    run_simulation(spec, tmp_path / "rest", restart=ck)
    ha, a = read_csv(tmp_path / "full" / "timeseries.csv")
    hb, b = read_csv(tmp_path / "rest" / "timeseries.csv")
    assert ha == hb
    tail = a[a[:, 0] >= 20]
    assert np.array_equal(tail, b, equal_nan=True)
    assert (tmp_path / "full" / "final.npns").read_bytes() == (tmp_path / "rest" / "final.npns").read_bytes()
    assert full.state.step == b[-1, 0]


def test_restart_rejects_mismatched_grid(tmp_path):
    spec = parse_config(SMALL)
    run_simulation(spec, tmp_path / "a", stop_step=20)
    other = dataclasses.replace(spec, cells=(16, 16))
    with pytest.raises(ValueError, match="grid"):
        run_simulation(other, tmp_path / "b", restart=tmp_path / "a" / "final.npns")


def test_csv_full_precision(tmp_path):
    spec = parse_config(SMALL)
    res = run_simulation(spec, tmp_path, stop_step=5)
    with open(tmp_path / "timeseries.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["E1"]) == res.records[0].E1
    assert set(DG.DiagnosticsRecord.__dataclass_fields__) - {"q_L2", "grad_q_L2"} <= set(rows[0])


def test_three_dimensional_run():
    text = MINIMAL.replace("cells = 8 8", "dim = 3\ncells = 6 6 6").replace("t_final = 0.01", "t_final = 0.002")
    res = run_simulation(parse_config(text))
    assert res.summary["min_c"] >= -1e-13 and res.summary["max_div_u"] <= 1e-8


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def test_cli_simulate_and_audit(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "out"
    assert main(["simulate", str(cfg), "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["steps"] > 0
    for name in ("timeseries.csv", "audit.csv", "summary.json", "energies.png", "monitors.png",
                 "dissipations.png", "audit.png", "audit_summary.csv", "audit_summary.txt"):
        assert (out / name).exists(), name
    (out / "energies.png").unlink()
    assert main(["audit", str(out), "--tol-audit", "0.5"]) == 0
    assert (out / "energies.png").exists()
    assert "tol_audit" in (out / "audit_summary.txt").read_text()


def test_cli_env_output_dir(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL)
    monkeypatch.setenv("NPNS_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", str(cfg), "--stop-step", "3", "--no-figures"]) == 0
    assert (tmp_path / "env" / "timeseries.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(MINIMAL.replace("epsilon", "epsilonn"))
    assert main(["simulate", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and "epsilonn" in err["message"]


def test_cli_unknown_mms_case(capsys):
    assert main(["verify-mms", "nope"]) != 0
    assert "unknown manufactured case" in capsys.readouterr().err


def test_cli_verify_mms_writes_table(tmp_path, capsys):
    assert main(["verify-mms", "poisson", "--out", str(tmp_path)]) == 0
    header, data = None, None
    with open(tmp_path / "mms_poisson.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and float(rows[-1]["phi_linf_order"]) >= 1.9


def test_cli_oracle(tmp_path, capsys):
    cfg = tmp_path / "o.ini"
    cfg.write_text(MINIMAL.replace("diffusivity = 0.5", "diffusivity = 1")
                   .replace("[species.1]", "[potential]\nboundary = linear 0 2 0\n\n[species.1]"))
    assert main(["oracle-1d", str(cfg), "--resolution", "200", "--out", str(tmp_path / "o")]) == 0
    header, data = read_csv(tmp_path / "o" / "oracle.csv")
    assert header == ["x", "c1", "c2", "phi"] and data.shape == (201, 4)
    assert data[-1, 3] == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEP = SMALL.replace("checkpoint_every = 20", "") + """
[sweep]
workers = {workers}
potential.boundary = linear 0 1 0 ; linear 0 5 0
species.2.diffusivity = {ds}
"""


def test_sweep_cross_product_with_failure(tmp_path):
    rows = sweep(SWEEP.format(workers=2, ds="0.5 ; 0"), tmp_path)
    assert len(rows) == 4
    assert sorted(p.name for p in tmp_path.glob("run_*")) == [f"run_{i:03d}" for i in range(4)]
    status = [r["status"] for r in rows]
    assert status == ["ok", "failed", "ok", "failed"]
    assert "diffusivity must be positive" in rows[1]["error"]
    assert all(r["positivity_ok"] and r["charge_bound_ok"] for r in rows if r["status"] == "ok")
    with open(tmp_path / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4


def test_sweep_identical_cells_identical_summaries(tmp_path):
    rows = sweep(SWEEP.format(workers=1, ds="0.5 ; 0.5"), tmp_path)
    strip = [{k: v for k, v in r.items() if k != "run"} for r in rows]
    assert strip[0] == strip[1] and strip[2] == strip[3]
    ts = [(tmp_path / f"run_{i:03d}" / "timeseries.csv").read_bytes() for i in (0, 1)]
    assert ts[0] == ts[1]


def test_sweep_needs_section():
    with pytest.raises(ConfigError):
        sweep(SMALL, "/nonexistent")


# ---------------------------------------------------------------------------
# manufactured solutions and the 1D oracle
# ---------------------------------------------------------------------------

def test_convergence_table_orders():
    rows = [{"h": 0.1, "dt": 0.0, "u_linf": 4e-2, "u_l2": 2e-2},
            {"h": 0.05, "dt": 0.0, "u_linf": 1e-2, "u_l2": 5e-3},
            {"h": 0.025, "dt": 0.0, "u_linf": 2.5e-3, "u_l2": 1.25e-3}]
    tab = ConvergenceTable("x", "h", rows)
    assert tab.orders("u") == pytest.approx([2.0, 2.0])
    assert tab.min_order() == pytest.approx(2.0)
    assert "order=2.000" in tab.format()


def test_verify_mms_rejects_bad_requests():
    with pytest.raises(ValueError, match="unknown"):
        verify_mms("nope")
    with pytest.raises(ValueError, match="three"):
        verify_mms("poisson", levels=(8, 16))


def test_mms_poisson_quick():
    assert verify_mms("poisson", levels=(8, 16, 32)).min_order() >= 1.9


def _oracle_params(eps=0.1):
    return SimParams(eps, 1.0, 1.0, (Species(1, 1.0), Species(-1, 1.0)), "frozen_zero_velocity")


def test_oracle_uniform_state():
    res = O.steady_oracle_1d(_oracle_params(), (0.0, 0.0), ((1.3, 1.3), (1.3, 1.3)), 200)
    assert np.abs(res.c - 1.3).max() <= 1e-12 and np.abs(res.phi).max() <= 1e-12


def test_oracle_reflection_symmetry():
    res = O.steady_oracle_1d(_oracle_params(), (-1.0, 1.0), ((1.5, 1.0), (1.0, 1.5)), 1000)
    assert np.abs(res.c[0] - res.c[1][::-1]).max() <= 1e-10
    assert np.abs(res.phi + res.phi[::-1]).max() <= 1e-10


def test_oracle_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    n, h, z, eps = 12, 1 / 12, (1.0, -1.0), 0.1
    bc = ((1.5, 1.0), (1.0, 1.5), (0.0, 2.0))
    u = 1 + rng.random(3 * (n - 1))
    J = O._jacobian(u, n, h, z, eps, bc).toarray()
    r0 = O._residual(u, n, h, z, eps, bc)
    Jn = np.empty_like(J)
    for j in range(u.size):
        e = np.zeros_like(u)
        e[j] = 1e-7
        Jn[:, j] = (O._residual(u + e, n, h, z, eps, bc) - r0) / 1e-7
    assert np.abs(J - Jn).max() <= 1e-6 * np.abs(J).max()


def test_oracle_scope():
    bad = SimParams(0.1, 1, 1, (Species(2, 1.0), Species(-1, 1.0)))
    with pytest.raises(ValueError):
        O.steady_oracle_1d(bad, 1.0, (1.0, 1.0))
    with pytest.raises(ValueError):
        O.steady_oracle_1d(_oracle_params(), 1.0, ((1.0, -1.0), (1.0, 1.0)))
