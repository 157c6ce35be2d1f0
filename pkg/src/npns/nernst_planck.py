"""Explicit conservative stepping of the ion concentrations.

Diffusion and drift use the Scharfetter-Gummel two-point flux

    J = (D / d) * [B(s) c_L - B(-s) c_R],   s = z (phi_R - phi_L),

with ``d`` the distance between the two points (``h/2`` on boundary faces) and
``B(x) = x / (exp(x) - 1)``.  Advection is first-order upwind with the MAC face
velocity.  Every off-diagonal coefficient of the update is nonnegative, so
forward Euler is monotone once ``dt * outflow_rate <= 1`` in every cell; the
time step in :func:`stable_dt` is that bound times a safety factor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import grid as G
from .grid import Grid, Trace
from .model import Problem, State

log = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-8


class StabilityError(ValueError):
    """Requested time step exceeds the positivity bound."""


def bernoulli(x):
    """B(x) = x / (exp(x) - 1), with the Taylor branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = x / np.expm1(x)
    return np.where(small, 1.0 - 0.5 * x + x * x / 12.0, out)


def bernoulli_pair(x) -> tuple:
    """(B(x), B(-x)) from one exponential: with a = |x|, B(-a) = B(a) + a adds positives."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        b_pos = a / np.expm1(a)
    b_pos = np.where(a < SERIES_CUTOFF, 1.0 - 0.5 * a + a * a / 12.0, b_pos)
    b_neg = b_pos + a
    nonneg = x >= 0
    return np.where(nonneg, b_pos, b_neg), np.where(nonneg, b_neg, b_pos)


def bernoulli_even(x):
    """(B(x) + B(-x)) / 2 = (x/2) coth(x/2): the symmetric part of the SG weights."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = 0.5 * x / np.tanh(0.5 * x)
    return np.where(small, 1.0 + x * x / 12.0 - x**4 / 720.0, out)


def _pairs(grid: Grid, field: np.ndarray, trace: Trace, axis: int):
    ext = G.extend(field, trace, axis)
    n = ext.shape[axis]
    return (np.take(ext, range(0, n - 1), axis=axis),
            np.take(ext, range(1, n), axis=axis))


def potential_jumps(grid: Grid, phi: np.ndarray, w: Trace) -> list:
    """phi_R - phi_L on every face, boundary faces against the wall potential."""
    out = []
    for k in range(grid.dim):
        left, right = _pairs(grid, phi, w, k)
        out.append(right - left)
    return out


def sg_flux(grid: Grid, c: np.ndarray, c_trace: Trace, phi: np.ndarray, w: Trace,
            z: float, D: float, jumps: list | None = None) -> list:
    """Scharfetter-Gummel diffusion-drift flux on every face."""
    jumps = potential_jumps(grid, phi, w) if jumps is None else jumps
    out = []
    for k in range(grid.dim):
        left, right = _pairs(grid, c, c_trace, k)
        s = z * jumps[k]
        d = G.face_distances(grid, k)
        bp, bm = bernoulli_pair(s)
        out.append(D / d * (bp * left - bm * right))
    return out


def upwind_flux(grid: Grid, c: np.ndarray, c_trace: Trace, u: list) -> list:
    out = []
    for k in range(grid.dim):
        left, right = _pairs(grid, c, c_trace, k)
        out.append(np.where(u[k] > 0, u[k] * left, u[k] * right))
    return out


def np_face_flux(grid: Grid, c_i: np.ndarray, phi: np.ndarray, u: list, z_i: float,
                 D_i: float, c_trace: Trace, w: Trace) -> list:
    """Total face flux: Scharfetter-Gummel diffusion-drift plus upwind advection."""
    J = sg_flux(grid, c_i, c_trace, phi, w, z_i, D_i)
    A = upwind_flux(grid, c_i, c_trace, u)
    return [j + a for j, a in zip(J, A)]


def outflow_rates(grid: Grid, phi: np.ndarray, w: Trace, u: list, z: float, D: float,
                  jumps: list | None = None) -> np.ndarray:
    """Per-cell coefficient r with c_new = (1 - dt r) c + (nonnegative terms)."""
    jumps = potential_jumps(grid, phi, w) if jumps is None else jumps
    rate = np.zeros(grid.shape)
    for k in range(grid.dim):
        h = grid.spacing[k]
        n = grid.cells[k]
        s = z * jumps[k]
        d = G.face_distances(grid, k)
        bp, bm = bernoulli_pair(s)
        out_right = D / d * bp                # weight on c_L of each face
        out_left = D / d * bm                 # weight on c_R of each face
        adv_right = np.maximum(u[k], 0.0)
        adv_left = np.maximum(-u[k], 0.0)
        # cell j is the left neighbour of face j+1 and the right neighbour of face j
        rate += (np.take(out_right + adv_right, range(1, n + 1), axis=k)
                 + np.take(out_left + adv_left, range(0, n), axis=k)) / h
    return rate


def stable_dt(state: State, problem: Problem, safety: float = 0.9,
              dt_max: float = np.inf) -> float:
    """Largest positivity-preserving step times ``safety``, capped by ``dt_max``."""
    g = problem.grid
    jumps = potential_jumps(g, state.phi, problem.boundary.w)
    rmax = 0.0
    for s in problem.params.species:
        r = outflow_rates(g, state.phi, problem.boundary.w, state.u, s.valence,
                          s.diffusivity, jumps)
        rmax = max(rmax, float(r.max()))
    if rmax <= 0:
        return float(dt_max)
    return float(min(safety / rmax, dt_max))


def species_rate(problem: Problem, c_i: np.ndarray, trace: Trace, phi: np.ndarray,
                 u: list, z: float, D: float, jumps: list | None = None) -> np.ndarray:
    """-div of the total flux of one field with boundary values ``trace``."""
    g = problem.grid
    J = sg_flux(g, c_i, trace, phi, problem.boundary.w, z, D, jumps)
    A = upwind_flux(g, c_i, trace, u)
    return -G.divergence(g, [j + a for j, a in zip(J, A)])


def advance_concentrations(state: State, problem: Problem, dt: float,
                           source: np.ndarray | None = None, check: bool = True,
                           safety: float = 0.9) -> np.ndarray:
    """Forward-Euler update of every species; returns the new (m, *shape) array.

    ``state.phi`` must be the potential of ``state.c``.  ``source`` is an optional
    (m, *shape) volume source added explicitly (used by manufactured solutions).
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    cmin = float(state.c.min())
    if cmin < 0:
        raise ValueError(f"negative input concentration {cmin:.3e}")
    if check:
        bound = stable_dt(state, problem, safety=1.0)
        if dt > bound * (1 + 1e-12):
            raise StabilityError(f"dt={dt:.6e} exceeds the positivity bound {bound:.6e}")
    g = problem.grid
    jumps = potential_jumps(g, state.phi, problem.boundary.w)
    new = np.empty_like(state.c)
    for i, s in enumerate(problem.params.species):
        rate = species_rate(problem, state.c[i], problem.boundary.gamma[i], state.phi,
                            state.u, s.valence, s.diffusivity, jumps)
        if source is not None:
            rate = rate + source[i]
        new[i] = state.c[i] + dt * rate
    return new


# ---------------------------------------------------------------------------
# equal diffusivities: sum and charge variables
# ---------------------------------------------------------------------------

@dataclass
class SZState:
    """S = sum q_i and Z = sum z_i q_i with q_i = c_i - Gamma_i."""

    S: np.ndarray
    Z: np.ndarray
    Gamma_S: np.ndarray
    Gamma_Z: np.ndarray
    trace_S: Trace
    trace_Z: Trace

    @property
    def rho(self) -> np.ndarray:
        return self.Z + self.Gamma_Z


def to_sz(c: np.ndarray, problem: Problem) -> SZState:
    z = problem.params.valences
    q = c - problem.boundary.Gamma
    gam = list(problem.boundary.gamma)
    return SZState(q.sum(axis=0), np.tensordot(z, q, axes=(0, 0)),
                   problem.boundary.Gamma.sum(axis=0),
                   np.tensordot(z, problem.boundary.Gamma, axes=(0, 0)),
                   G.combine_traces([1.0] * len(gam), gam),
                   G.combine_traces(list(z), gam))


def sz_flux(grid: Grid, S: np.ndarray, Z: np.ndarray, tS: Trace, tZ: Trace,
            jumps: list, D: float) -> tuple:
    """Flux pair for (S, Z) built from the same two-point weights as the species flux."""
    JS, JZ = [], []
    for k in range(grid.dim):
        SL, SR = _pairs(grid, S, tS, k)
        ZL, ZR = _pairs(grid, Z, tZ, k)
        s = jumps[k]
        a = bernoulli_even(s)
        coef = D / G.face_distances(grid, k)
        JS.append(coef * (a * (SL - SR) - 0.5 * s * (ZL + ZR)))
        JZ.append(coef * (a * (ZL - ZR) - 0.5 * s * (SL + SR)))
    return JS, JZ


def sz_forcing(problem: Problem, phi: np.ndarray, u: list, sz: SZState) -> tuple:
    """Discrete F_S, F_Z: the scheme applied to (Gamma_S, Gamma_Z)."""
    g = problem.grid
    D = problem.params.d_min
    jumps = potential_jumps(g, phi, problem.boundary.w)
    JS, JZ = sz_flux(g, sz.Gamma_S, sz.Gamma_Z, sz.trace_S, sz.trace_Z, jumps, D)
    AS = upwind_flux(g, sz.Gamma_S, sz.trace_S, u)
    AZ = upwind_flux(g, sz.Gamma_Z, sz.trace_Z, u)
    FS = -G.divergence(g, [j + a for j, a in zip(JS, AS)])
    FZ = -G.divergence(g, [j + a for j, a in zip(JZ, AZ)])
    return FS, FZ


def advance_sz(sz: SZState, phi: np.ndarray, u: list, problem: Problem, dt: float) -> SZState:
    """One forward-Euler step of the (S, Z) system."""
    if not problem.params.equal_diffusivity_mode:
        raise ValueError("advance_sz requires equal_diffusivity_mode")
    g = problem.grid
    D = problem.params.d_min
    zero = G.zero_trace(g)
    jumps = potential_jumps(g, phi, problem.boundary.w)
    JS, JZ = sz_flux(g, sz.S, sz.Z, zero, zero, jumps, D)
    AS = upwind_flux(g, sz.S, zero, u)
    AZ = upwind_flux(g, sz.Z, zero, u)
    FS, FZ = sz_forcing(problem, phi, u, sz)
    S = sz.S + dt * (-G.divergence(g, [j + a for j, a in zip(JS, AS)]) + FS)
    Z = sz.Z + dt * (-G.divergence(g, [j + a for j, a in zip(JZ, AZ)]) + FZ)
    return SZState(S, Z, sz.Gamma_S, sz.Gamma_Z, sz.trace_S, sz.trace_Z)


def species_forcing(problem: Problem, phi: np.ndarray, u: list) -> np.ndarray:
    """Discrete F_i: the scheme's rate evaluated on the boundary extension Gamma_i."""
    g = problem.grid
    jumps = potential_jumps(g, phi, problem.boundary.w)
    return np.stack([species_rate(problem, problem.boundary.Gamma[i], problem.boundary.gamma[i],
                                  phi, u, s.valence, s.diffusivity, jumps)
                     for i, s in enumerate(problem.params.species)])
