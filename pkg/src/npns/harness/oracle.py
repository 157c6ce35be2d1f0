"""Independent 1D steady-state reference for two species without flow.

Vertex-centred central differences with arithmetic-mean drift coefficients and
a damped Newton iteration.  Nothing here is shared with the 2D discretization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .. import grid as G
from ..model import BoundaryData, Problem, SimParams, State, velocity_zeros
from ..nernst_planck import advance_concentrations, stable_dt

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    def __init__(self, message: str, history: list):
        super().__init__(f"{message}; residual history {['%.3e' % r for r in history[-8:]]}")
        self.history = history


@dataclass
class OracleResult:
    x: np.ndarray
    c: np.ndarray           # (2, N + 1)
    phi: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)

    def interpolants(self) -> tuple:
        """Cubic splines of c1, c2 and phi over x."""
        return tuple(CubicSpline(self.x, f) for f in (*self.c, self.phi))


def _pair(v) -> tuple:
    if np.ndim(v) == 0:
        return float(v), float(v)
    a, b = v
    return float(a), float(b)


def _residual(u, n, h, z, eps, bc):
    c1, c2, phi = _unpack(u, n, bc)
    out = []
    for c, zi in ((c1, z[0]), (c2, z[1])):
        flux = (c[1:] - c[:-1]) / h + zi * 0.5 * (c[1:] + c[:-1]) * (phi[1:] - phi[:-1]) / h
        out.append((flux[1:] - flux[:-1]) / h)
    rho = z[0] * c1[1:-1] + z[1] * c2[1:-1]
    out.append(eps * (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2 + rho)
    return np.concatenate(out)


def _unpack(u, n, bc):
    m = n - 1
    fields = []
    for k in range(3):
        lo, hi = bc[k]
        fields.append(np.concatenate([[lo], u[k * m:(k + 1) * m], [hi]]))
    return fields


def _jacobian(u, n, h, z, eps, bc):
    """Sparse Jacobian of :func:`_residual` with respect to interior unknowns."""
    m = n - 1
    c1, c2, phi = _unpack(u, n, bc)
    rows, cols, vals = [], [], []

    def add(r, blk, j, v):
        # j indexes the full (0..n) vertex array; only interior vertices are unknowns
        ok = (j >= 1) & (j <= n - 1)
        rows.append(r[ok])
        cols.append(blk * m + j[ok] - 1)
        vals.append(np.broadcast_to(v, r.shape)[ok])

    idx = np.arange(1, n)          # equation at vertex idx
    r_local = np.arange(m)
    for s, (c, zi) in enumerate(((c1, z[0]), (c2, z[1]))):
        r = s * m + r_local
        dphi_r = (phi[idx + 1] - phi[idx]) / h
        dphi_l = (phi[idx] - phi[idx - 1]) / h
        # d/dc
        add(r, s, idx + 1, (1 / h + zi * 0.5 * dphi_r) / h)
        add(r, s, idx, (-2 / h + zi * 0.5 * (dphi_r - dphi_l)) / h * np.ones(m))
        add(r, s, idx - 1, (1 / h - zi * 0.5 * dphi_l) / h)
        # d/dphi
        ar = zi * 0.5 * (c[idx + 1] + c[idx]) / h
        al = zi * 0.5 * (c[idx] + c[idx - 1]) / h
        add(r, 2, idx + 1, ar / h)
        add(r, 2, idx, (-ar - al) / h)
        add(r, 2, idx - 1, al / h)
    r = 2 * m + r_local
    add(r, 2, idx + 1, eps / h**2 * np.ones(m))
    add(r, 2, idx, -2 * eps / h**2 * np.ones(m))
    add(r, 2, idx - 1, eps / h**2 * np.ones(m))
    add(r, 0, idx, z[0] * np.ones(m))
    add(r, 1, idx, z[1] * np.ones(m))
    return sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(3 * m, 3 * m))


def _newton(u, n, h, z, eps, bc, tol, max_iter, history):
    res = _residual(u, n, h, z, eps, bc)
    norm = float(np.abs(res).max())
    history.append(norm)
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return u, norm, it - 1
        du = spla.spsolve(_jacobian(u, n, h, z, eps, bc).tocsc(), -res)
        if float(np.abs(du).max()) <= 1e-13 * max(1.0, float(np.abs(u).max())):
            # the update is below rounding: the residual sits at its floor
            return u + du, norm, it
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * du
            c1, c2, _ = _unpack(trial, n, bc)
            if c1.min() > 0 and c2.min() > 0:
                r_t = _residual(trial, n, h, z, eps, bc)
                n_t = float(np.abs(r_t).max())
                if n_t < (1 - 1e-4 * lam) * norm or n_t <= tol:
                    break
            lam *= 0.5
        else:
            raise NewtonError("damped Newton stalled", history)
        u, res, norm = trial, r_t, n_t
        history.append(norm)
    if norm <= tol:
        return u, norm, max_iter
    raise NewtonError("Newton iteration cap reached", history)


def steady_oracle_1d(params: SimParams, voltage, gammas, resolution: int = 2000,
                     length: float = 1.0, tol: float = 1e-10, max_iter: int = 50) -> OracleResult:
    """Steady two-species profiles on [0, length] with Dirichlet data.

    ``voltage`` is ``(phi(0), phi(L))`` or a scalar ``phi(L)`` with ``phi(0) = 0``.
    ``gammas`` holds per-species ``(left, right)`` pairs or scalars.
    """
    if params.m != 2 or tuple(params.valences) != (1.0, -1.0):
        raise ValueError("the 1D oracle covers two species with valences (+1, -1)")
    if params.flow_mode != "frozen_zero_velocity":
        log.info("1D oracle ignores flow_mode=%s and sets u = 0", params.flow_mode)
    vl, vr = (0.0, float(voltage)) if np.ndim(voltage) == 0 else _pair(voltage)
    g1, g2 = (_pair(g) for g in gammas)
    if min(*g1, *g2) <= 0:
        raise ValueError("boundary concentrations must be positive")
    n = int(resolution)
    if n < 8:
        raise ValueError("resolution must be at least 8 intervals")
    h = length / n
    x = np.linspace(0.0, length, n + 1)
    z = tuple(params.valences)
    eps = params.epsilon
    history: list = []

    def lin(a, b):
        return a + (b - a) * x / length

    guess = np.concatenate([lin(*g1)[1:-1], lin(*g2)[1:-1], lin(vl, vr)[1:-1]])
    # continuation in the applied voltage keeps Newton inside its basin
    u = guess
    steps = max(1, int(np.ceil(abs(vr - vl) / 2.0)))
    its = 0
    for k in range(1, steps + 1):
        frac = k / steps
        bc = (g1, g2, (vl * frac, vr * frac))
        u, norm, it = _newton(u, n, h, z, eps, bc, tol, max_iter, history)
        its += it
    c1, c2, phi = _unpack(u, n, (g1, g2, (vl, vr)))
    return OracleResult(x, np.stack([c1, c2]), phi, norm, its, history)


# ---------------------------------------------------------------------------
# comparison with the 2D scheme
# ---------------------------------------------------------------------------

def quasi_1d_boundary(grid: G.Grid, oracle: OracleResult, tol: float = 1e-10) -> BoundaryData:
    """Boundary data that depend on x only, taken from the oracle profiles."""
    from ..model import extend_boundary_data
    s1, s2, sphi = oracle.interpolants()

    def along_x(f):
        return lambda *xs: f(np.asarray(xs[0])) + 0.0 * sum(np.asarray(v) for v in xs[1:])

    return extend_boundary_data(grid, [along_x(s1), along_x(s2)], along_x(sphi), tol)


@dataclass
class SteadyRun:
    state: State
    steps: int
    rate: float            # max |c^{n+1} - c^n| / dt at the end
    linf: dict


def run_to_steady(problem: Problem, c0: np.ndarray, rate_tol: float = 1e-10,
                  max_steps: int = 2_000_000, safety: float = 0.9, check_every: int = 100) -> tuple:
    """March the concentrations with zero velocity until max |dc/dt| < ``rate_tol``."""
    g = problem.grid
    state = problem.initial_state(c0)
    rate = np.inf
    for step in range(1, max_steps + 1):
        dt = stable_dt(state, problem, safety)
        c_new = advance_concentrations(state, problem, dt, check=False)
        if step % check_every == 0:
            rate = float(np.abs(c_new - state.c).max()) / dt
        state.c = c_new
        state.phi, state.phi0 = problem.solve_potential(c_new)
        state.t += dt
        state.step = step
        if rate < rate_tol:
            return state, step, rate
    raise RuntimeError(f"no steady state after {max_steps} steps (max |dc/dt| = {rate:.3e})")


def compare_with_scheme(params: SimParams, oracle: OracleResult, cells=(128, 4),
                        extents=(1.0, 1.0), rate_tol: float = 1e-10, start: str = "linear",
                        max_steps: int = 2_000_000) -> SteadyRun:
    """Drive the 2D scheme to steady state on y-independent data and diff against the oracle."""
    grid = G.build_grid(2, extents, cells)
    bd = quasi_1d_boundary(grid, oracle)
    prm = params.with_species(flow_mode="frozen_zero_velocity")
    problem = Problem.build(prm, grid, boundary=bd)
    s1, s2, sphi = oracle.interpolants()
    x = np.broadcast_to(grid.mesh()[0], grid.shape)
    if start == "oracle":
        c0 = np.stack([s1(x), s2(x)])
    else:
        L = extents[0]
        c0 = np.stack([s(0.0) + (s(L) - s(0.0)) * x / L for s in (s1, s2)])
    state, steps, rate = run_to_steady(problem, c0, rate_tol, max_steps)
    linf = {"c1": float(np.abs(state.c[0] - s1(x)).max()),
            "c2": float(np.abs(state.c[1] - s2(x)).max()),
            "phi": float(np.abs(state.phi - sphi(x)).max())}
    return SteadyRun(state, steps, rate, linf)
