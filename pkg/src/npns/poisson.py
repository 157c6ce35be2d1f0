"""Dirichlet Poisson problems -eps * lap(phi) = f on the cell-centred grid.

Two interchangeable solvers sit behind :func:`solve_poisson_dirichlet`:

``"spectral"``
    Exact diagonalisation of the homogeneous Dirichlet operator by a type-II
    discrete sine transform.  With boundary values half a cell from the first
    centre, the sine modes ``sin(pi*k*(j+1/2)/n)`` are exact eigenvectors, so
    the solve is direct and costs two FFTs.
``"cg"``
    Matrix-free conjugate gradients with Jacobi scaling on the same operator.

Inhomogeneous boundary data are lifted into the right-hand side, which keeps
the operator symmetric positive definite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from . import grid as G
from .grid import Grid, Trace

log = logging.getLogger(__name__)

METHODS = ("spectral", "cg")


class PoissonError(RuntimeError):
    """Solver failed to reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int = 0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def _axis_eigenvalues(n: int, h: float, dirichlet: bool) -> np.ndarray:
    k = np.arange(1, n + 1) if dirichlet else np.arange(n)
    return 4.0 / h**2 * np.sin(np.pi * k / (2 * n)) ** 2


def _broadcast_sum(vectors) -> np.ndarray:
    dim = len(vectors)
    total = 0.0
    for k, v in enumerate(vectors):
        shape = [1] * dim
        shape[k] = -1
        total = total + v.reshape(shape)
    return total


@dataclass
class PoissonWorkspace:
    """Operator metadata and scratch for repeated solves on one grid."""

    grid: Grid
    tol: float = 1e-10
    max_iter: int | None = None
    method: str = "spectral"
    _dirichlet_eigs: np.ndarray = field(init=False, repr=False)
    _diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown Poisson method {self.method!r}; choose from {METHODS}")
        if self.max_iter is None:
            self.max_iter = 10 * self.grid.n_cells
        g = self.grid
        self._dirichlet_eigs = _broadcast_sum(
            [_axis_eigenvalues(n, h, True) for n, h in zip(g.cells, g.spacing)])
        diag = np.zeros(g.shape)
        for k, (n, h) in enumerate(zip(g.cells, g.spacing)):
            d = np.full(n, 2.0 / h**2)
            d[0] = d[-1] = 3.0 / h**2
            shape = [1] * g.dim
            shape[k] = -1
            diag = diag + d.reshape(shape)
        self._diag = diag
        self._zero = G.zero_trace(g)

    # homogeneous operator A = -lap with zero boundary values
    def apply(self, x: np.ndarray) -> np.ndarray:
        return -G.laplacian(self.grid, x, self._zero)

    def spectral_solve(self, b: np.ndarray) -> np.ndarray:
        bh = fft.dstn(b, type=2, norm="ortho")
        return fft.idstn(bh / self._dirichlet_eigs, type=2, norm="ortho")

    def cg_solve(self, b: np.ndarray, x0: np.ndarray | None = None,
                 atol: float = 0.0) -> tuple:
        """Jacobi-preconditioned CG on A x = b.  Returns (x, iterations)."""
        x = np.zeros_like(b) if x0 is None else x0.copy()
        r = b - self.apply(x)
        z = r / self._diag
        p = z.copy()
        rz = float(np.vdot(r, z))
        for it in range(1, self.max_iter + 1):
            if np.sqrt(np.vdot(r, r) * self.grid.cell_volume) <= atol:
                return x, it - 1
            Ap = self.apply(p)
            alpha = rz / float(np.vdot(p, Ap))
            x += alpha * p
            r -= alpha * Ap
            z = r / self._diag
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        res = np.sqrt(np.vdot(r, r) * self.grid.cell_volume)
        if res <= atol:
            return x, self.max_iter
        raise PoissonError("conjugate gradients hit the iteration cap", res, self.max_iter)


def _l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(f * f) * grid.cell_volume))


def poisson_residual(grid: Grid, phi: np.ndarray, f: np.ndarray, g: Trace,
                     epsilon: float) -> float:
    """Relative residual ||-eps lap phi - f|| in discrete L2.

    Scaled by max(1, ||f||, eps ||lap(0; g)||): the lifted boundary data is
    O(g / h^2) next to the wall, and rounding of that term sets the floor.
    """
    r = -epsilon * G.laplacian(grid, phi, g) - f
    lift = epsilon * _l2(grid, G.laplacian(grid, np.zeros(grid.shape), g))
    return _l2(grid, r) / max(1.0, _l2(grid, f), lift)


def solve_poisson_dirichlet(grid: Grid, f: np.ndarray, g: Trace, epsilon: float,
                            tol: float = 1e-10, workspace: PoissonWorkspace | None = None,
                            method: str | None = None) -> np.ndarray:
    """Solve -eps * lap(phi) = f with phi = g on the boundary."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ws = workspace if workspace is not None else PoissonWorkspace(grid, tol=tol)
    method = method or ws.method
    f = np.asarray(f, dtype=float)
    # lift: A phi = f/eps + lap(0; g)
    b = f / epsilon + G.laplacian(grid, np.zeros(grid.shape), g)
    if method == "spectral":
        phi = ws.spectral_solve(b)
    elif method == "cg":
        atol = tol * max(1.0, _l2(grid, f), epsilon * _l2(grid, b - f / epsilon)) / epsilon
        phi, _ = ws.cg_solve(b, atol=atol)
    else:
        raise ValueError(f"unknown Poisson method {method!r}")
    res = poisson_residual(grid, phi, f, g, epsilon)
    if not res <= tol:
        raise PoissonError("Poisson solve did not reach tolerance", res)
    return phi


def split_potential(grid: Grid, rho: np.ndarray, boundary, epsilon: float,
                    tol: float = 1e-10, workspace: PoissonWorkspace | None = None) -> tuple:
    """Return ``(phi, phi0)`` with -eps lap(phi0) = rho, phi0 = 0 on the wall, phi = phi0 + Phi_W."""
    zero = workspace._zero if workspace is not None else G.zero_trace(grid)
    phi0 = solve_poisson_dirichlet(grid, rho, zero, epsilon, tol, workspace)
    return phi0 + boundary.Phi_W, phi0


def gradient(grid: Grid, field: np.ndarray, trace: Trace) -> list:
    """Face-centred gradient of a cell field with the given boundary values."""
    return G.face_gradient(grid, field, trace)
