"""Manufactured-solution convergence studies.

Sources are derived symbolically with sympy and evaluated at the time level of
the explicit step (cell centres for scalars, face centres for velocities).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .. import flow as FL
from .. import grid as G
from ..model import Problem, SimParams, Species, State, velocity_zeros, extend_boundary_data
from ..nernst_planck import advance_concentrations, stable_dt
from ..poisson import solve_poisson_dirichlet

CASES = ("poisson", "np", "np-time", "stokes", "coupled")

X, Y, T = sp.symbols("x y t", real=True)


@dataclass
class ConvergenceTable:
    case: str
    against: str                         # "h" or "dt"
    rows: list = field(default_factory=list)   # dicts: h, dt, and "<field>_linf", "<field>_l2"

    @property
    def fields(self) -> list:
        return sorted({k.rsplit("_", 1)[0] for r in self.rows for k in r if k.endswith("_linf")})

    def orders(self, name: str, norm: str = "linf") -> list:
        """Observed orders between consecutive rows, measured against ``self.against``."""
        key = f"{name}_{norm}"
        out = []
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            out.append(math.log(a[key] / b[key]) / math.log(a[self.against] / b[self.against]))
        return out

    def min_order(self, name: str | None = None, norm: str = "linf") -> float:
        names = [name] if name else self.fields
        return min(min(self.orders(n, norm)) for n in names)

    def to_rows(self) -> list:
        out = []
        for i, r in enumerate(self.rows):
            row = {"case": self.case, **r}
            for f in self.fields:
                for norm in ("linf", "l2"):
                    row[f"{f}_{norm}_order"] = self.orders(f, norm)[i - 1] if i else float("nan")
            out.append(row)
        return out

    def format(self) -> str:
        lines = [f"case {self.case} (orders against {self.against})"]
        for row in self.to_rows():
            parts = [f"h={row['h']:.4g}", f"dt={row['dt']:.4g}"]
            for f in self.fields:
                parts.append(f"{f}: linf={row[f + '_linf']:.3e} order={row[f + '_linf_order']:.3f}")
            lines.append("  " + "  ".join(parts))
        return "\n".join(lines)


def _num(expr, *syms):
    return sp.lambdify(syms, expr, "numpy")


def _cells(grid):
    return [np.broadcast_to(x, grid.shape) for x in grid.mesh()]


def _eval(f, mesh, t=None):
    args = list(mesh) if t is None else [*mesh, t]
    return np.broadcast_to(np.asarray(f(*args), dtype=float), np.broadcast_shapes(*[m.shape for m in mesh])).copy()


def _unit_grid(n: int):
    return G.build_grid(2, (1.0, 1.0), (n, n))


def _norms(grid, err: np.ndarray) -> tuple:
    return float(np.abs(err).max()), float(np.sqrt(np.sum(err**2) * grid.cell_volume))


# ---------------------------------------------------------------------------
# cases
# ---------------------------------------------------------------------------

def _poisson(levels, **_):
    phi = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y) + X**2 - Y**2 + 1
    f = -(sp.diff(phi, X, 2) + sp.diff(phi, Y, 2))
    fphi, ff = _num(phi, X, Y), _num(f, X, Y)
    table = ConvergenceTable("poisson", "h")
    for n in levels:
        g = _unit_grid(n)
        sol = solve_poisson_dirichlet(g, _eval(ff, _cells(g)), G.sample_trace(g, fphi), 1.0)
        linf, l2 = _norms(g, sol - _eval(fphi, _cells(g)))
        table.rows.append({"h": g.spacing[0], "dt": 0.0, "phi_linf": linf, "phi_l2": l2})
    return table


def _np_setup():
    """Two species under a frozen potential with zero velocity."""
    phi = 0.5 * Y + 0.3 * sp.sin(sp.pi * X) * sp.cos(sp.pi * Y / 2)
    cs = [1 + 0.5 * X + 0.4 * sp.exp(-T) * sp.sin(sp.pi * X) * sp.sin(sp.pi * Y),
          2 - 0.5 * Y + 0.3 * sp.exp(-2 * T) * sp.sin(2 * sp.pi * X) * sp.sin(sp.pi * Y)]
    zs, Ds = (1, -1), (1.0, 0.5)
    src = []
    for c, z, D in zip(cs, zs, Ds):
        flux = [D * (sp.diff(c, v) + z * c * sp.diff(phi, v)) for v in (X, Y)]
        src.append(sp.diff(c, T) - (sp.diff(flux[0], X) + sp.diff(flux[1], Y)))
    return phi, cs, zs, Ds, src


def _np_problem(g, phi, cs, zs, Ds):
    fphi = _num(phi, X, Y)
    fc0 = [_num(c.subs(T, 0), X, Y) for c in cs]
    params = SimParams(1.0, 1.0, 1.0, tuple(Species(z, D, f) for z, D, f in zip(zs, Ds, fc0)),
                       "frozen_zero_velocity", potential_boundary=fphi)
    bd = extend_boundary_data(g, [f for f in fc0], fphi)
    return Problem.build(params, g, boundary=bd), fphi


def _run_np(g, dt_target, t_end, setup):
    phi, cs, zs, Ds, src = setup
    problem, fphi = _np_problem(g, phi, cs, zs, Ds)
    mesh = _cells(g)
    fsrc = [_num(s, X, Y, T) for s in src]
    fc = [_num(c, X, Y, T) for c in cs]
    c = np.stack([_eval(f, mesh, 0.0) for f in fc])
    phi_cells = _eval(fphi, mesh)
    state = State(0.0, c, phi_cells, velocity_zeros(g), np.zeros(g.shape))
    bound = stable_dt(state, problem, safety=1.0)
    steps = max(1, math.ceil(t_end / dt_target))
    dt = t_end / steps
    if dt > bound:
        raise ValueError(f"manufactured NP step {dt:.3e} exceeds the positivity bound {bound:.3e}")
    for k in range(steps):
        t = k * dt
        source = np.stack([_eval(f, mesh, t) for f in fsrc])
        state.c = advance_concentrations(state, problem, dt, source=source, check=False)
        state.t = (k + 1) * dt
    exact = np.stack([_eval(f, mesh, t_end) for f in fc])
    return state.c, exact, dt


def _np_space(levels, t_end=0.05, cfl=0.1, **_):
    setup = _np_setup()
    table = ConvergenceTable("np", "h")
    for n in levels:
        g = _unit_grid(n)
        c, exact, dt = _run_np(g, cfl * g.spacing[0] ** 2, t_end, setup)
        row = {"h": g.spacing[0], "dt": dt}
        for i in range(c.shape[0]):
            row[f"c{i + 1}_linf"], row[f"c{i + 1}_l2"] = _norms(g, c[i] - exact[i])
        table.rows.append(row)
    return table


def _np_time(levels, n=16, t_end=0.1, dt0=4e-4, ref_factor=16, **_):
    """Temporal order on a fixed grid against a same-grid small-step reference."""
    setup = _np_setup()
    g = _unit_grid(n)
    dts = [dt0 / 2**k for k in range(len(levels))]
    ref, _, _ = _run_np(g, dts[-1] / ref_factor, t_end, setup)
    table = ConvergenceTable("np-time", "dt")
    for dt in dts:
        c, _, dt_used = _run_np(g, dt, t_end, setup)
        row = {"h": g.spacing[0], "dt": dt_used}
        for i in range(c.shape[0]):
            row[f"c{i + 1}_linf"], row[f"c{i + 1}_l2"] = _norms(g, c[i] - ref[i])
        table.rows.append(row)
    return table


def _stokes_fields(nu):
    psi = sp.exp(-T) * sp.sin(sp.pi * X) ** 2 * sp.sin(sp.pi * Y) ** 2 / sp.pi
    u = [sp.diff(psi, Y), -sp.diff(psi, X)]
    p = sp.exp(-T) * sp.cos(sp.pi * X) * sp.cos(sp.pi * Y)
    return u, p


def _face_eval(g, f, k, t):
    mesh = g.face_mesh(k)
    shape = g.face_shape(k)
    return np.broadcast_to(np.asarray(f(*mesh, t), dtype=float), shape).copy()


def _stokes(levels, t_end=0.05, cfl=0.2, nu=1.0, **_):
    u, p = _stokes_fields(nu)
    force = [sp.diff(u[k], T) - nu * (sp.diff(u[k], X, 2) + sp.diff(u[k], Y, 2)) + sp.diff(p, v)
             for k, v in enumerate((X, Y))]
    fu = [_num(e, X, Y, T) for e in u]
    ff = [_num(e, X, Y, T) for e in force]
    table = ConvergenceTable("stokes", "h")
    for n in levels:
        g = _unit_grid(n)
        params = SimParams(1.0, nu, 1.0, (Species(1, 1.0, 1.0),), "stokes")
        problem = Problem.build(params, g)
        ws = FL.FlowWorkspace(g)
        uu = FL.project_divergence_free([_face_eval(g, f, k, 0.0) for k, f in enumerate(fu)], ws)[0]
        state = State(0.0, np.ones((1, *g.shape)), np.zeros(g.shape), uu, np.zeros(g.shape))
        dt0 = cfl * g.spacing[0] ** 2 / nu
        steps = math.ceil(t_end / dt0)
        dt = t_end / steps
        for k in range(steps):
            frc = [_face_eval(g, f, j, k * dt) for j, f in enumerate(ff)]
            state.u, state.p = FL.advance_flow(state, frc, problem, dt, workspace=ws)
        errs = [state.u[k] - _face_eval(g, f, k, t_end) for k, f in enumerate(fu)]
        linf = max(float(np.abs(e).max()) for e in errs)
        l2 = math.sqrt(FL.inner(g, errs, errs))
        table.rows.append({"h": g.spacing[0], "dt": dt, "u_linf": linf, "u_l2": l2})
    return table


def _coupled(levels, t_end=0.02, cfl=0.1, eps=0.5, nu=1.0, K=1.0, **_):
    """Full coupling: the potential solves the Poisson equation of the exact charge."""
    u, p = _stokes_fields(nu)
    a = 0.2 * sp.exp(-T)
    phi = X + a * sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
    rho = -eps * (sp.diff(phi, X, 2) + sp.diff(phi, Y, 2))
    base = 1 + 0.5 * X + 0.3 * sp.exp(-T) * sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
    cs = [base + rho / 2, base - rho / 2]
    zs, Ds = (1, -1), (1.0, 1.0)
    src = []
    for c, z, D in zip(cs, zs, Ds):
        flux = [D * (sp.diff(c, v) + z * c * sp.diff(phi, v)) for v in (X, Y)]
        src.append(sp.diff(c, T) + u[0] * sp.diff(c, X) + u[1] * sp.diff(c, Y)
                   - (sp.diff(flux[0], X) + sp.diff(flux[1], Y)))
    fsrc = [sp.diff(u[k], T) - nu * (sp.diff(u[k], X, 2) + sp.diff(u[k], Y, 2)) + sp.diff(p, v)
            + K * rho * sp.diff(phi, v) for k, v in enumerate((X, Y))]
    fc = [_num(c, X, Y, T) for c in cs]
    fs = [_num(s, X, Y, T) for s in src]
    ff = [_num(f, X, Y, T) for f in fsrc]
    fu = [_num(e, X, Y, T) for e in u]
    fc0 = [_num(c.subs(T, 0), X, Y) for c in cs]
    table = ConvergenceTable("coupled", "h")
    for n in levels:
        g = _unit_grid(n)
        mesh = _cells(g)
        params = SimParams(eps, nu, K, tuple(Species(z, D, f) for z, D, f in zip(zs, Ds, fc0)),
                           "stokes", potential_boundary=lambda x, y: x + 0 * y)
        problem = Problem.build(params, g)
        ws = FL.FlowWorkspace(g)
        u0 = FL.project_divergence_free([_face_eval(g, f, k, 0.0) for k, f in enumerate(fu)], ws)[0]
        state = problem.initial_state(np.stack([_eval(f, mesh, 0.0) for f in fc]), u0)
        steps = math.ceil(t_end / (cfl * g.spacing[0] ** 2))
        dt = t_end / steps
        for k in range(steps):
            t = k * dt
            source = np.stack([_eval(f, mesh, t) for f in fs])
            c_new = advance_concentrations(state, problem, dt, source=source, check=False)
            frc = FL.electric_force(problem.rho(state.c), state.phi, K, g, problem.boundary.w,
                                    problem.gamma_rho)
            frc = [a_ + _face_eval(g, f, j, t) for j, (a_, f) in enumerate(zip(frc, ff))]
            state.u, state.p = FL.advance_flow(state, frc, problem, dt, workspace=ws)
            state.c = c_new
            state.phi, state.phi0 = problem.solve_potential(c_new)
            state.t = (k + 1) * dt
        row = {"h": g.spacing[0], "dt": dt}
        for i in range(2):
            row[f"c{i + 1}_linf"], row[f"c{i + 1}_l2"] = _norms(g, state.c[i] - _eval(fc[i], mesh, t_end))
        errs = [state.u[k] - _face_eval(g, f, k, t_end) for k, f in enumerate(fu)]
        row["u_linf"] = max(float(np.abs(e).max()) for e in errs)
        row["u_l2"] = math.sqrt(FL.inner(g, errs, errs))
        table.rows.append(row)
    return table


_RUNNERS = {"poisson": _poisson, "np": _np_space, "np-time": _np_time, "stokes": _stokes,
            "coupled": _coupled}


def verify_mms(case: str, levels=(16, 32, 64), **options) -> ConvergenceTable:
    """Run one manufactured case on at least three resolutions."""
    if case not in _RUNNERS:
        raise ValueError(f"unknown manufactured case {case!r}; expected one of {CASES}")
    if len(levels) < 3:
        raise ValueError("need at least three resolutions")
    return _RUNNERS[case](tuple(levels), **options)
