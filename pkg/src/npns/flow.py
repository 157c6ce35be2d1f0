"""Stokes / Navier-Stokes velocity on a MAC grid with Chorin projection.

Velocity component ``k`` lives on the faces normal to axis ``k``; its array
includes the two wall faces, which stay zero (no-slip, no-penetration).
Tangential no-slip enters the viscous term through wall values half a cell
away.  Discrete divergence and face gradient are exact adjoints, so the
projection removes discrete gradients to round-off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from . import grid as G
from .grid import Grid
from .model import Problem, State, velocity_zeros

log = logging.getLogger(__name__)


class ProjectionError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (max |div u| = {residual:.3e})")
        self.residual = residual


@dataclass
class FlowWorkspace:
    """Neumann pressure-Poisson eigenvalues and the projection tolerance."""

    grid: Grid
    tol: float = 1e-8
    _eigs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("projection tolerance must be positive")
        g = self.grid
        eigs = 0.0
        for k, (n, h) in enumerate(zip(g.cells, g.spacing)):
            lam = 4.0 / h**2 * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2
            shape = [1] * g.dim
            shape[k] = -1
            eigs = eigs + lam.reshape(shape)
        eigs = np.array(eigs, dtype=float)
        eigs.flat[0] = 1.0  # constant mode, fixed by the zero-mean convention
        self._eigs = eigs

    def solve_neumann(self, rhs: np.ndarray) -> np.ndarray:
        """phi with lap_N(phi) = rhs - mean(rhs) and zero mean."""
        rh = fft.dctn(rhs, type=2, norm="ortho")
        rh.flat[0] = 0.0
        return fft.idctn(-rh / self._eigs, type=2, norm="ortho")


def divergence(grid: Grid, u: list) -> np.ndarray:
    return G.divergence(grid, u)


def cell_gradient(grid: Grid, phi: np.ndarray) -> list:
    """Face gradient of a cell field with zero normal gradient on the walls."""
    out = []
    for k in range(grid.dim):
        d = np.diff(phi, axis=k) / grid.spacing[k]
        pad = [(0, 0)] * grid.dim
        pad[k] = (1, 1)
        out.append(np.pad(d, pad))
    return out


def _zero_walls(u: list) -> list:
    for k, v in enumerate(u):
        idx = [slice(None)] * v.ndim
        idx[k] = 0
        v[tuple(idx)] = 0.0
        idx[k] = -1
        v[tuple(idx)] = 0.0
    return u


def project_divergence_free(u_star: list, workspace: FlowWorkspace) -> tuple:
    """Discrete Leray projection.  Returns ``(u, phi)`` with ``u = u* - grad phi``."""
    g = workspace.grid
    u_star = _zero_walls([np.array(v, dtype=float) for v in u_star])
    div = divergence(g, u_star)
    mean = float(div.mean())
    if abs(mean) > workspace.tol:
        log.warning("incompatible divergence mean %.3e removed before projection", mean)
    phi = workspace.solve_neumann(div)
    grad = cell_gradient(g, phi)
    u = [v - gr for v, gr in zip(u_star, grad)]
    res = float(np.abs(divergence(g, u)).max())
    if res > workspace.tol:
        raise ProjectionError("projection did not reach tolerance", res)
    return u, phi


def vector_laplacian(grid: Grid, u: list) -> list:
    """Component-wise Laplacian; wall faces get zero."""
    out = []
    for k, v in enumerate(u):
        lap = np.zeros_like(v)
        for j in range(grid.dim):
            h = grid.spacing[j]
            if j == k:
                n = v.shape[k]
                inner = (np.take(v, range(2, n), axis=k) - 2 * np.take(v, range(1, n - 1), axis=k)
                         + np.take(v, range(0, n - 2), axis=k)) / h**2
                pad = [(0, 0)] * grid.dim
                pad[k] = (1, 1)
                lap += np.pad(inner, pad)
            else:
                g = _tangential_gradient(grid, v, j)
                lap += np.diff(g, axis=j) / h
        out.append(lap)
    return _zero_walls(out)


def _tangential_gradient(grid: Grid, v: np.ndarray, j: int) -> np.ndarray:
    """d/dx_j of a face component against zero wall values half a cell away."""
    pad = [(0, 0)] * grid.dim
    pad[j] = (1, 1)
    ext = np.pad(v, pad)
    d = G.face_distances(grid, j)
    return np.diff(ext, axis=j) / d


def inner(grid: Grid, u: list, v: list) -> float:
    return float(sum(np.sum(a * b) for a, b in zip(u, v)) * grid.cell_volume)


def kinetic_energy(grid: Grid, u: list, K: float) -> float:
    """(1/2K) ||u||_H^2."""
    return 0.5 / K * inner(grid, u, u)


def velocity_gradient_sq(grid: Grid, u: list) -> float:
    """||grad u||^2, equal to -<u, vector_laplacian(u)> for wall-zero fields."""
    total = 0.0
    for k, v in enumerate(u):
        for j in range(grid.dim):
            if j == k:
                total += np.sum((np.diff(v, axis=k) / grid.spacing[k]) ** 2)
            else:
                g2 = _tangential_gradient(grid, v, j) ** 2
                n = g2.shape[j]
                total += np.sum(0.5 * (np.take(g2, range(0, n - 1), axis=j)
                                       + np.take(g2, range(1, n), axis=j)))
    return float(total * grid.cell_volume)


def electric_force(rho: np.ndarray, phi: np.ndarray, K: float, grid: Grid,
                   w: G.Trace, rho_trace: G.Trace | None = None) -> list:
    """Face force -K * rho_face * (grad phi)_face; zero on the walls."""
    rho_trace = G.zero_trace(grid) if rho_trace is None else rho_trace
    rf = G.face_values(grid, rho, rho_trace)
    gp = G.face_gradient(grid, phi, w)
    return _zero_walls([-K * r * g for r, g in zip(rf, gp)])


def advection(grid: Grid, u: list) -> list:
    """(u . grad) u in divergence form with an upwind-biased momentum interpolation.

    Central part is skew-symmetric for discretely solenoidal ``u``; the
    upwind correction only removes kinetic energy.
    """
    out = []
    for k, v in enumerate(u):
        nk = v.shape[k]
        acc = np.zeros_like(v)
        for j in range(grid.dim):
            h = grid.spacing[j]
            if j == k:
                a = 0.5 * (np.take(v, range(0, nk - 1), axis=k) + np.take(v, range(1, nk), axis=k))
                left = np.take(v, range(0, nk - 1), axis=k)
                right = np.take(v, range(1, nk), axis=k)
                flux = np.where(a > 0, a * left, a * right)
                inner_div = np.diff(flux, axis=k) / h
                pad = [(0, 0)] * grid.dim
                pad[k] = (1, 1)
                acc += np.pad(inner_div, pad)
            else:
                w = u[j]
                nkc = w.shape[k]  # cells along k
                a = 0.5 * (np.take(w, range(0, nkc - 1), axis=k) + np.take(w, range(1, nkc), axis=k))
                pad = [(0, 0)] * grid.dim
                pad[k] = (1, 1)
                a = np.pad(a, pad)                  # edges: faces along k, faces along j
                nj = v.shape[j]
                padj = [(0, 0)] * grid.dim
                padj[j] = (1, 1)
                ext = np.pad(v, padj)
                left = np.take(ext, range(0, nj + 1), axis=j)
                right = np.take(ext, range(1, nj + 2), axis=j)
                flux = np.where(a > 0, a * left, a * right)
                acc += np.diff(flux, axis=j) / h
        out.append(acc)
    return _zero_walls(out)


def advection_energy_rate(grid: Grid, u: list) -> float:
    """-<u, advection(u)>; nonpositive up to the divergence tolerance."""
    return -inner(grid, u, advection(grid, u))


def flow_dt_bound(grid: Grid, u: list, nu: float, mode: str, safety: float = 0.9) -> float:
    if mode == "frozen_zero_velocity":
        return np.inf
    rate = 2.0 * nu * sum(1.0 / h**2 for h in grid.spacing)
    if mode == "navier_stokes":
        rate += sum(float(np.abs(v).max()) / h for v, h in zip(u, grid.spacing))
    return safety / rate


def advance_flow(state: State, force: list, problem: Problem, dt: float,
                 mode: str | None = None, workspace: FlowWorkspace | None = None,
                 check: bool = True) -> tuple:
    """Explicit viscous/advective predictor and projection.  Returns ``(u, p)``."""
    g = problem.grid
    mode = mode or problem.params.flow_mode
    if mode == "frozen_zero_velocity":
        return velocity_zeros(g), np.zeros(g.shape)
    nu = problem.params.nu
    if check:
        bound = flow_dt_bound(g, state.u, nu, mode, safety=1.0)
        if dt > bound * (1 + 1e-12):
            raise ValueError(f"dt={dt:.6e} exceeds the explicit flow bound {bound:.6e}")
    ws = workspace or FlowWorkspace(g)
    lap = vector_laplacian(g, state.u)
    adv = advection(g, state.u) if mode == "navier_stokes" else None
    u_star = []
    for k, v in enumerate(state.u):
        rhs = nu * lap[k] + force[k]
        if adv is not None:
            rhs = rhs - adv[k]
        u_star.append(v + dt * rhs)
    u, phi = project_divergence_free(u_star, ws)
    p = phi / dt
    return u, p - p.mean()
