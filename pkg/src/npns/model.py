"""Physical parameters, boundary data, and the simulation state."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import grid as G
from .expressions import Expression, parse_expression
from .grid import Grid, Trace
from .poisson import PoissonWorkspace, solve_poisson_dirichlet

log = logging.getLogger(__name__)

FLOW_MODES = ("stokes", "navier_stokes", "frozen_zero_velocity")


@dataclass(frozen=True)
class Species:
    valence: int
    diffusivity: float
    boundary: object = 1.0  # preset text, number, or callable of coordinates


@dataclass(frozen=True)
class SimParams:
    epsilon: float
    nu: float
    coupling_k: float
    species: tuple
    flow_mode: str = "stokes"
    equal_diffusivity_mode: bool = False
    potential_boundary: object = 0.0

    @property
    def m(self) -> int:
        return len(self.species)

    @property
    def valences(self) -> np.ndarray:
        return np.array([s.valence for s in self.species], dtype=float)

    @property
    def diffusivities(self) -> np.ndarray:
        return np.array([s.diffusivity for s in self.species], dtype=float)

    @property
    def d_min(self) -> float:
        """Smallest diffusivity, the constant D of the entropy dissipation."""
        return float(self.diffusivities.min())

    def with_species(self, **changes) -> "SimParams":
        return replace(self, **changes)


def validate_params(params: SimParams) -> list:
    """Every violated parameter invariant, as human-readable strings; empty means valid."""
    errors = []
    for name in ("epsilon", "nu", "coupling_k"):
        v = getattr(params, name)
        if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
            errors.append(f"{name} must be positive, got {v!r}")
    if len(params.species) < 1:
        errors.append("need at least one species")
    for i, s in enumerate(params.species, 1):
        if not (np.isfinite(s.diffusivity) and s.diffusivity > 0):
            errors.append(f"species {i}: diffusivity must be positive, got {s.diffusivity!r}")
        if int(s.valence) != s.valence:
            errors.append(f"species {i}: valence must be an integer, got {s.valence!r}")
    if params.flow_mode not in FLOW_MODES:
        errors.append(f"flow_mode must be one of {FLOW_MODES}, got {params.flow_mode!r}")
    if params.equal_diffusivity_mode and params.species:
        d = params.diffusivities
        if not np.all(d == d[0]):
            errors.append("equal_diffusivity_mode requires D_1 = D_2 = ... = D_m "
                          f"(equal-diffusivity hypothesis), got {tuple(d)}")
        if not all(abs(s.valence) == 1 for s in params.species):
            errors.append("equal_diffusivity_mode requires every valence to be +1 or -1")
    return errors


def require_valid(params: SimParams) -> None:
    errors = validate_params(params)
    if errors:
        raise ValueError("; ".join(errors))


def as_function(spec, dim: int) -> Callable:
    if callable(spec):
        return spec
    return parse_expression(spec, dim)


@dataclass(frozen=True)
class BoundaryData:
    gamma: tuple   # per-species traces
    w: Trace
    Gamma: np.ndarray  # (m, *shape) harmonic extensions
    Phi_W: np.ndarray

    @property
    def m(self) -> int:
        return len(self.gamma)


def extend_boundary_data(grid: Grid, gamma_i: Sequence, w, tol: float = 1e-10,
                         workspace: PoissonWorkspace | None = None) -> BoundaryData:
    """Harmonic extensions of the species traces and of the potential trace.

    ``gamma_i`` and ``w`` may be traces, preset texts, numbers or callables.
    """
    ws = workspace or PoissonWorkspace(grid, tol=tol)

    def to_trace(spec):
        if isinstance(spec, list):
            return spec
        return G.sample_trace(grid, as_function(spec, grid.dim))

    gammas = tuple(to_trace(g) for g in gamma_i)
    for i, tr in enumerate(gammas, 1):
        lo, _ = G.trace_extrema(tr)
        if not lo > 0:
            raise ValueError(f"boundary concentration of species {i} must be positive; minimum sample {lo!r}")
    w_trace = to_trace(w)
    zero = np.zeros(grid.shape)
    Gamma = np.stack([solve_poisson_dirichlet(grid, zero, tr, 1.0, tol, ws) for tr in gammas])
    Phi_W = solve_poisson_dirichlet(grid, zero, w_trace, 1.0, tol, ws)
    return BoundaryData(gammas, w_trace, Gamma, Phi_W)


def boundary_from_params(grid: Grid, params: SimParams, tol: float = 1e-10,
                         workspace: PoissonWorkspace | None = None) -> BoundaryData:
    return extend_boundary_data(grid, [s.boundary for s in params.species],
                                params.potential_boundary, tol, workspace)


def charge_density(c: np.ndarray, species) -> np.ndarray:
    """rho = sum_i z_i c_i, with ``species`` a SimParams, Species list, or valence list."""
    if isinstance(species, SimParams):
        z = species.valences
    else:
        z = np.array([s.valence if isinstance(s, Species) else s for s in species], dtype=float)
    c = np.asarray(c)
    if c.shape[0] != len(z):
        raise ValueError(f"{c.shape[0]} concentration fields for {len(z)} species")
    return np.tensordot(z, c, axes=(0, 0))


def velocity_zeros(grid: Grid) -> list:
    return [np.zeros(grid.face_shape(k)) for k in range(grid.dim)]


@dataclass
class State:
    t: float
    c: np.ndarray                # (m, *shape)
    phi: np.ndarray
    u: list                      # per-axis face-normal velocities, boundary faces included
    p: np.ndarray
    step: int = 0
    phi0: np.ndarray | None = field(default=None, repr=False)

    def copy(self) -> "State":
        return State(self.t, self.c.copy(), self.phi.copy(), [v.copy() for v in self.u],
                     self.p.copy(), self.step, None if self.phi0 is None else self.phi0.copy())

    def check(self, tol: float = 1e-13) -> None:
        if self.c.min() < -tol:
            raise ValueError(f"negative concentration {self.c.min():.3e}")


@dataclass
class Problem:
    """Everything time-independent a step needs."""

    params: SimParams
    grid: Grid
    boundary: BoundaryData
    poisson: PoissonWorkspace
    tol: float = 1e-10

    @classmethod
    def build(cls, params: SimParams, grid: Grid, tol: float = 1e-10,
              method: str = "spectral", boundary: BoundaryData | None = None) -> "Problem":
        require_valid(params)
        ws = PoissonWorkspace(grid, tol=tol, method=method)
        if boundary is None:
            boundary = boundary_from_params(grid, params, tol, ws)
        if boundary.m != params.m:
            raise ValueError(f"boundary data for {boundary.m} species, params have {params.m}")
        return cls(params, grid, boundary, ws, tol)

    @property
    def gamma_rho(self) -> Trace:
        """Boundary trace of the charge density."""
        return G.combine_traces(list(self.params.valences), list(self.boundary.gamma))

    def rho(self, c: np.ndarray) -> np.ndarray:
        return charge_density(c, self.params)

    def solve_potential(self, c: np.ndarray) -> tuple:
        from .poisson import split_potential
        return split_potential(self.grid, self.rho(c), self.boundary, self.params.epsilon,
                               self.tol, self.poisson)

    def initial_state(self, c0: np.ndarray, u0: list | None = None, t: float = 0.0) -> State:
        c0 = np.array(c0, dtype=float)
        if c0.shape != (self.params.m, *self.grid.shape):
            raise ValueError(f"initial concentrations have shape {c0.shape}")
        if c0.min() < 0:
            raise ValueError("initial concentrations must be nonnegative")
        phi, phi0 = self.solve_potential(c0)
        u = velocity_zeros(self.grid) if u0 is None else [np.array(v, float) for v in u0]
        return State(t, c0, phi, u, np.zeros(self.grid.shape), 0, phi0)
