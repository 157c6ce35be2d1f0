"""Main time loop, CSV time series and binary checkpoints.

Checkpoint layout (all little-endian)::

    b"NPNS1"
    uint32 dim, uint32 cells[dim], float64 extents[dim]
    uint32 m, float64 t, uint64 step
    m x (int32 valence, float64 diffusivity)
    float64 monitor[9]        accumulator time, last integrands (B, R, U, diss), totals
    float64 blocks: c_1 .. c_m, phi, u_1 .. u_dim, p   (C order)

Each step goes: record diagnostics of state n (its potential already solved)
-> choose dt -> advance c and u with the force of level n -> solve the
potential of c^{n+1} -> audit the pair (n, n+1) -> accumulate monitors.
Restarting from a checkpoint of state n replays exactly the same operations.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import diagnostics as DG
from .. import flow as FL
from ..grid import Grid
from ..model import Problem, State
from ..nernst_planck import advance_concentrations, stable_dt
from ..poisson import PoissonError
from .config import RunSpec, initial_concentrations

log = logging.getLogger(__name__)

MAGIC = b"NPNS1"
TIMESERIES = "timeseries.csv"
AUDIT = "audit.csv"
SUMMARY = "summary.json"


class SimulationError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    dim: int
    cells: tuple
    extents: tuple
    valences: tuple
    diffusivities: tuple
    t: float
    step: int
    monitor: list
    c: np.ndarray
    phi: np.ndarray
    u: list
    p: np.ndarray


def serialize_checkpoint(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ck.dim))
    buf.write(struct.pack(f"<{ck.dim}I", *ck.cells))
    buf.write(struct.pack(f"<{ck.dim}d", *ck.extents))
    m = len(ck.valences)
    buf.write(struct.pack("<IdQ", m, ck.t, ck.step))
    for z, D in zip(ck.valences, ck.diffusivities):
        buf.write(struct.pack("<id", int(z), float(D)))
    buf.write(struct.pack("<9d", *ck.monitor))
    for block in [*ck.c, ck.phi, *ck.u, ck.p]:
        buf.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    return buf.getvalue()


def deserialize_checkpoint(data: bytes) -> Checkpoint:
    if data[:5] != MAGIC:
        raise ValueError("not an NPNS1 checkpoint")
    pos = 5

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, data, pos)
        pos += struct.calcsize(fmt)
        return vals

    (dim,) = take("<I")
    if dim not in (2, 3):
        raise ValueError(f"bad checkpoint dimension {dim}")
    cells = take(f"<{dim}I")
    extents = take(f"<{dim}d")
    m, t, step = take("<IdQ")
    table = [take("<id") for _ in range(m)]
    monitor = list(take("<9d"))
    shape = tuple(cells)

    def block(shp):
        nonlocal pos
        n = int(np.prod(shp))
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shp).astype(float)
        pos += 8 * n
        return arr

    c = np.stack([block(shape) for _ in range(m)])
    phi = block(shape)
    u = []
    for k in range(dim):
        s = list(shape)
        s[k] += 1
        u.append(block(tuple(s)))
    p = block(shape)
    if pos != len(data):
        raise ValueError(f"checkpoint has {len(data) - pos} trailing bytes")
    return Checkpoint(dim, tuple(cells), tuple(extents), tuple(z for z, _ in table),
                      tuple(D for _, D in table), t, step, monitor, c, phi, u, p)


def make_checkpoint(state: State, problem: Problem, acc: DG.MonitorAccumulator) -> Checkpoint:
    g = problem.grid
    prm = problem.params
    return Checkpoint(g.dim, g.cells, g.extents, tuple(int(z) for z in prm.valences),
                      tuple(prm.diffusivities), state.t, state.step, acc.pack(),
                      state.c, state.phi, state.u, state.p)


def write_checkpoint(path, state: State, problem: Problem, acc: DG.MonitorAccumulator) -> None:
    Path(path).write_bytes(serialize_checkpoint(make_checkpoint(state, problem, acc)))


def read_checkpoint(path) -> Checkpoint:
    return deserialize_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


class CsvSink:
    def __init__(self, path: Path | None):
        self.path = path
        self.header = None
        self._fh = None
        self._writer = None

    def write(self, row: dict) -> None:
        if self.path is None:
            return
        if self._writer is None:
            self.header = list(row)
            self._fh = open(self.path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(self.header)
        self._writer.writerow([fmt(row[k]) for k in self.header])

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def read_csv(path) -> tuple:
    """Header and rows (as float arrays) of a time-series or audit CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in r] for r in reader]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    state: State
    problem: Problem
    records: list
    audit_rows: list
    summary: dict
    out_dir: Path | None = None
    extrema: dict = field(default_factory=dict)


def build_problem(spec: RunSpec) -> Problem:
    return Problem.build(spec.params, spec.grid(), spec.poisson_tol, spec.poisson_method)


def _finite(name: str, arr, step: int) -> None:
    arrays = arr if isinstance(arr, list) else [arr]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise SimulationError(f"non-finite values in {name}", step)


def _restore(ck: Checkpoint, problem: Problem) -> State:
    g = problem.grid
    if ck.dim != g.dim or tuple(ck.cells) != g.cells or tuple(ck.extents) != tuple(map(float, g.extents)):
        raise ValueError("checkpoint grid does not match the run configuration")
    if tuple(ck.valences) != tuple(int(z) for z in problem.params.valences) or \
            tuple(ck.diffusivities) != tuple(problem.params.diffusivities):
        raise ValueError("checkpoint species table does not match the run configuration")
    phi, phi0 = problem.solve_potential(ck.c)
    if not np.array_equal(phi, ck.phi):
        log.warning("recomputed potential differs from the checkpoint by %.3e",
                    float(np.abs(phi - ck.phi).max()))
    return State(ck.t, ck.c, phi, ck.u, ck.p, ck.step, phi0)


def run_simulation(spec: RunSpec, out_dir=None, restart=None, stop_step: int | None = None,
                   problem: Problem | None = None, audit_every: int | None = None) -> RunResult:
    """Run ``spec`` to ``t_final`` (or ``stop_step``) and write its outputs to ``out_dir``.

    ``restart`` is a checkpoint path; the run resumes from that state.  The final
    state is always recorded, with ``dt = 0``.
    """
    problem = problem or build_problem(spec)
    g = problem.grid
    prm = problem.params
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
    fws = FL.FlowWorkspace(g, spec.projection_tol)

    if restart is not None:
        ck = read_checkpoint(restart)
        state = _restore(ck, problem)
        acc = DG.MonitorAccumulator.unpack(ck.monitor)
    else:
        c0 = initial_concentrations(spec, g, problem.boundary.Gamma)
        state = problem.initial_state(c0)
        acc = DG.MonitorAccumulator()
        acc.add(state.t, DG.monitor_integrands(state, problem, spec.delta))

    ts = CsvSink(out / TIMESERIES if out else None)
    au = CsvSink(out / AUDIT if (out and spec.audit) else None)
    records, audit_rows = [], []
    audit_every = audit_every or spec.output_every
    min_c = float(state.c.min())
    max_charge = DG.charge_bound_violation(state.c, problem.rho(state.c))
    max_neg = DG.negativity_functional(state.c, 2, g)
    max_div = 0.0
    T = spec.t_final

    def record(st: State, dt: float) -> None:
        rec = DG.diagnostics_record(st, problem, spec.delta, dt, acc.totals)
        ts.write(rec.flat())
        records.append(rec)

    try:
        while True:
            remaining = T - state.t
            done = remaining <= 1e-12 * T or (stop_step is not None and state.step >= stop_step)
            if done:
                record(state, 0.0)
                break
            dt = min(stable_dt(state, problem, spec.safety, spec.dt_max),
                     FL.flow_dt_bound(g, state.u, prm.nu, prm.flow_mode, spec.safety))
            if remaining < dt * (1 + 1e-9):
                dt = remaining
            if state.step % spec.output_every == 0:
                record(state, dt)
            n = state.step
            c_new = advance_concentrations(state, problem, dt, check=False)  # dt is below the bound by construction
            _finite("concentration", c_new, n)
            if prm.flow_mode == "frozen_zero_velocity":
                u_new, p_new = state.u, state.p
            else:
                force = FL.electric_force(problem.rho(state.c), state.phi, prm.coupling_k, g,
                                          problem.boundary.w, problem.gamma_rho)
                u_new, p_new = FL.advance_flow(state, force, problem, dt, workspace=fws)
                _finite("velocity", u_new, n)
                max_div = max(max_div, float(np.abs(FL.divergence(g, u_new)).max()))
            phi, phi0 = problem.solve_potential(c_new)
            _finite("potential", phi, n)
            t_new = T if dt == remaining else state.t + dt
            new = State(t_new, c_new, phi, u_new, p_new, n + 1, phi0)
            if spec.audit and n % audit_every == 0:
                row = DG.audit_pair(state, new, problem)
                au.write(row)
                audit_rows.append(row)
            acc.add(new.t, DG.monitor_integrands(new, problem, spec.delta))
            min_c = min(min_c, float(c_new.min()))
            max_charge = max(max_charge, DG.charge_bound_violation(c_new, problem.rho(c_new)))
            max_neg = max(max_neg, DG.negativity_functional(c_new, 2, g))
            state = new
            if out is not None and spec.checkpoint_every and state.step % spec.checkpoint_every == 0:
                write_checkpoint(out / "checkpoints" / f"step_{state.step:08d}.npns", state, problem, acc)
    except (PoissonError, FL.ProjectionError) as exc:
        raise SimulationError(str(exc), state.step) from exc
    finally:
        ts.close()
        au.close()

    if out is not None:
        write_checkpoint(out / "final.npns", state, problem, acc)
    extrema = {"min_c": min_c, "max_charge_violation": max_charge, "max_negativity": max_neg,
               "max_div_u": max_div}
    summary = {"steps": state.step, "t": state.t, **extrema,
               "B": acc.totals["B"], "R": acc.totals["R"], "U": acc.totals["U"],
               "dissipation_integral": acc.totals["diss"]}
    if audit_rows:
        summary.update(DG.AuditReport(audit_rows).summary())
    if out is not None:
        (out / SUMMARY).write_text(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return RunResult(state, problem, records, audit_rows, summary, out, extrema)
