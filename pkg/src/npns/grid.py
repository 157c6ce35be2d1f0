"""Uniform cell-centred grids on axis-aligned boxes and the face stencils built on them.

Scalars live at cell centres.  Boundary values sit on the boundary faces, half a
cell away from the first interior centre, so every one-sided difference at the
wall uses the distance ``h/2``.  This is algebraically the same as a ghost cell
with ``ghost = 2*boundary_value - interior`` and keeps all the discrete
integration-by-parts identities exact.

A *trace* is the boundary data of one scalar: a list with one ``(lo, hi)`` pair
per axis, each array shaped like the grid except for length one along that axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

Trace = list  # list[tuple[np.ndarray, np.ndarray]], one pair per axis


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple
    cells: tuple

    @property
    def shape(self) -> tuple:
        return tuple(self.cells)

    @cached_property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def faces(self, axis: int) -> np.ndarray:
        return np.arange(self.cells[axis] + 1) * self.spacing[axis]

    def mesh(self) -> list:
        """Sparse broadcastable cell-centre coordinates, one array per axis."""
        return np.meshgrid(*[self.centers(k) for k in range(self.dim)],
                           indexing="ij", sparse=True)

    def face_mesh(self, axis: int) -> list:
        """Coordinates of the faces normal to ``axis`` (boundary faces included)."""
        coords = [self.faces(k) if k == axis else self.centers(k)
                  for k in range(self.dim)]
        return np.meshgrid(*coords, indexing="ij", sparse=True)

    def boundary_mesh(self, axis: int, side: int) -> list:
        """Coordinates of the face centres on the wall ``side`` (0 lo, 1 hi) of ``axis``."""
        coords = []
        for k in range(self.dim):
            if k == axis:
                coords.append(np.array([0.0 if side == 0 else self.extents[k]]))
            else:
                coords.append(self.centers(k))
        return np.meshgrid(*coords, indexing="ij", sparse=True)

    def face_shape(self, axis: int) -> tuple:
        s = list(self.cells)
        s[axis] += 1
        return tuple(s)


def build_grid(dim: int, extents: Sequence[float], cells: Sequence[int]) -> Grid:
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    extents = tuple(float(e) for e in extents)
    cells = tuple(int(n) for n in cells)
    if len(extents) != dim or len(cells) != dim:
        raise ValueError(f"need {dim} extents and {dim} cell counts")
    if any(e <= 0 for e in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(n <= 0 for n in cells):
        raise ValueError(f"cell counts must be positive, got {cells}")
    if any(n < 4 for n in cells):
        raise ValueError(f"need at least 4 cells per axis, got {cells}")
    return Grid(dim, extents, cells)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def sample_trace(grid: Grid, func: Callable) -> Trace:
    """Evaluate ``func(*coords)`` on every boundary face centre."""
    trace = []
    for k in range(grid.dim):
        pair = []
        for side in (0, 1):
            shape = list(grid.shape)
            shape[k] = 1
            vals = np.broadcast_to(np.asarray(func(*grid.boundary_mesh(k, side)),
                                              dtype=float), shape)
            pair.append(np.array(vals))
        trace.append(tuple(pair))
    return trace


def constant_trace(grid: Grid, value: float = 0.0) -> Trace:
    return sample_trace(grid, lambda *x: np.full(np.broadcast_shapes(*[a.shape for a in x]), value))


def zero_trace(grid: Grid) -> Trace:
    return constant_trace(grid, 0.0)


def combine_traces(weights: Sequence[float], traces: Sequence[Trace]) -> Trace:
    """Linear combination of traces, in the order given."""
    out = []
    for k in range(len(traces[0])):
        lo = sum(w * t[k][0] for w, t in zip(weights, traces))
        hi = sum(w * t[k][1] for w, t in zip(weights, traces))
        out.append((np.asarray(lo, float), np.asarray(hi, float)))
    return out


def map_trace(func: Callable, trace: Trace) -> Trace:
    return [(func(lo), func(hi)) for lo, hi in trace]


def trace_extrema(trace: Trace) -> tuple:
    lo = min(min(a.min(), b.min()) for a, b in trace)
    hi = max(max(a.max(), b.max()) for a, b in trace)
    return float(lo), float(hi)


def trace_of_field(grid: Grid, field: np.ndarray) -> Trace:
    """Boundary values of a cell field by linear extrapolation to the walls.

    Used only to re-extend an already smooth field; second-order accurate.
    """
    trace = []
    for k in range(grid.dim):
        f0 = np.take(field, [0], axis=k)
        f1 = np.take(field, [1], axis=k)
        g0 = np.take(field, [-1], axis=k)
        g1 = np.take(field, [-2], axis=k)
        trace.append((1.5 * f0 - 0.5 * f1, 1.5 * g0 - 0.5 * g1))
    return trace


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------

def extend(field: np.ndarray, trace: Trace, axis: int) -> np.ndarray:
    """Field padded along ``axis`` with the boundary values of that axis."""
    lo, hi = trace[axis]
    return np.concatenate([lo, field, hi], axis=axis)


def face_distances(grid: Grid, axis: int) -> np.ndarray:
    """Distances between the points of ``extend``: h/2, h, ..., h, h/2."""
    h = grid.spacing[axis]
    d = np.full(grid.cells[axis] + 1, h)
    d[0] = d[-1] = 0.5 * h
    shape = [1] * grid.dim
    shape[axis] = -1
    return d.reshape(shape)


def face_gradient(grid: Grid, field: np.ndarray, trace: Trace) -> list:
    """Normal derivative on every face, one array per axis (boundary faces included)."""
    out = []
    for k in range(grid.dim):
        ext = extend(field, trace, k)
        out.append(np.diff(ext, axis=k) / face_distances(grid, k))
    return out


def face_values(grid: Grid, field: np.ndarray, trace: Trace) -> list:
    """Cell field interpolated to faces; boundary faces carry the trace itself."""
    out = []
    for k in range(grid.dim):
        n = grid.cells[k]
        lo, hi = trace[k]
        left = np.take(field, range(0, n - 1), axis=k)
        right = np.take(field, range(1, n), axis=k)
        out.append(np.concatenate([lo, 0.5 * (left + right), hi], axis=k))
    return out


def divergence(grid: Grid, fluxes: Sequence[np.ndarray]) -> np.ndarray:
    """Cell divergence of face-normal fluxes."""
    div = np.zeros(grid.shape)
    for k, F in enumerate(fluxes):
        div += np.diff(F, axis=k) / grid.spacing[k]
    return div


def laplacian(grid: Grid, field: np.ndarray, trace: Trace) -> np.ndarray:
    return divergence(grid, face_gradient(grid, field, trace))


def faces_to_cells(grid: Grid, face_field: np.ndarray, axis: int) -> np.ndarray:
    """Average of the two faces bounding each cell along ``axis``."""
    n = grid.cells[axis]
    return 0.5 * (np.take(face_field, range(0, n), axis=axis)
                  + np.take(face_field, range(1, n + 1), axis=axis))


def integrate(grid: Grid, field: np.ndarray) -> float:
    """Midpoint quadrature of a cell field."""
    return float(np.sum(field) * grid.cell_volume)


def integrate_faces(grid: Grid, face_fields: Sequence[np.ndarray]) -> float:
    """Quadrature of face quantities after averaging them to cell centres.

    Interior faces get weight one, boundary faces one half.
    """
    return sum(integrate(grid, faces_to_cells(grid, F, k)) for k, F in enumerate(face_fields))


def grad_squared(grid: Grid, field: np.ndarray, trace: Trace) -> np.ndarray:
    """|grad f|^2 at cell centres, from squared face gradients averaged per axis."""
    return sum(faces_to_cells(grid, g * g, k)
               for k, g in enumerate(face_gradient(grid, field, trace)))


def dirichlet_norm_sq(grid: Grid, field: np.ndarray, trace: Trace) -> float:
    """Discrete ||grad f||^2_{L2}, consistent with -<f, laplacian(f)> for zero traces."""
    return integrate(grid, grad_squared(grid, field, trace))


def lp_norm(grid: Grid, field: np.ndarray, p: float) -> float:
    return integrate(grid, np.abs(field) ** p) ** (1.0 / p)
