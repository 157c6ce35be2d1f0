import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from npns import grid as G
from npns.grid import build_grid
from npns.model import extend_boundary_data
from npns.poisson import (PoissonError, PoissonWorkspace, gradient, poisson_residual,
                          solve_poisson_dirichlet, split_potential)

from conftest import full, order

METHODS = ("spectral", "cg")


@pytest.mark.parametrize("method", METHODS)
def test_trivial_solutions(method):
    g = build_grid(2, (1, 1), (16, 16))
    ws = PoissonWorkspace(g, method=method)
    zero = np.zeros(g.shape)
    assert np.abs(solve_poisson_dirichlet(g, zero, G.zero_trace(g), 1.0, workspace=ws)).max() == 0
    phi = solve_poisson_dirichlet(g, zero, G.constant_trace(g, 5.0), 1.0, workspace=ws)
    assert np.abs(phi - 5.0).max() < 1e-10


@pytest.mark.parametrize("method", METHODS)
def test_sine_mode_order(method):
    errs = []
    for n in (16, 32, 64):
        g = build_grid(2, (1, 1), (n, n))
        exact = np.sin(np.pi * full(g, 0)) * np.sin(np.pi * full(g, 1))
        phi = solve_poisson_dirichlet(g, 2 * np.pi**2 * exact, G.zero_trace(g), 1.0,
                                      workspace=PoissonWorkspace(g, method=method))
        errs.append(np.abs(phi - exact).max())
    assert min(order(errs[0], errs[1]), order(errs[1], errs[2])) >= 1.9


def test_residual_meets_tolerance_3d():
    g = build_grid(3, (1, 1, 1), (8, 8, 8))
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.shape)
    tr = G.sample_trace(g, lambda x, y, z: x + y * z)
    for method in METHODS:
        phi = solve_poisson_dirichlet(g, f, tr, 0.3, workspace=PoissonWorkspace(g, method=method))
        assert poisson_residual(g, phi, f, tr, 0.3) <= 1e-10


def test_cg_iteration_cap_reports_residual():
    g = build_grid(2, (1, 1), (32, 32))
    ws = PoissonWorkspace(g, method="cg", max_iter=2)
    with pytest.raises(PoissonError) as info:
        solve_poisson_dirichlet(g, np.ones(g.shape), G.zero_trace(g), 1.0, workspace=ws)
    assert info.value.residual > 0


def test_split_potential_examples():
    g = build_grid(2, (1, 1), (16, 16))
    bd = extend_boundary_data(g, [1.0], "linear 0 2 1")
    phi, phi0 = split_potential(g, np.zeros(g.shape), bd, 0.1)
    assert np.abs(phi0).max() == 0 and np.array_equal(phi, bd.Phi_W)
    bd0 = extend_boundary_data(g, [1.0], 0.0)
    rng = np.random.default_rng(2)
    rho = rng.standard_normal(g.shape)
    phi, phi0 = split_potential(g, rho, bd0, 0.1)
    assert np.abs(phi - phi0).max() < 1e-14
    phi, phi0 = split_potential(g, rho, bd, 0.1)
    direct = solve_poisson_dirichlet(g, rho, bd.w, 0.1)
    assert np.abs(phi - (phi0 + bd.Phi_W)).max() <= 1e-12
    assert np.abs(phi - direct).max() <= 1e-12


def test_gradient_examples():
    g = build_grid(2, (1, 1), (16, 16))
    assert all(np.abs(d).max() == 0 for d in gradient(g, np.full(g.shape, 3.0), G.constant_trace(g, 3.0)))
    gx, gy = gradient(g, full(g, 0).copy(), G.sample_trace(g, lambda x, y: x + 0 * y))
    assert np.abs(gx - 1).max() < 1e-12 and np.abs(gy).max() < 1e-12
    errs = []
    for n in (16, 32, 64):
        g = build_grid(2, (1, 1), (n, n))
        f = np.sin(np.pi * full(g, 0))
        gx = gradient(g, f, G.sample_trace(g, lambda x, y: np.sin(np.pi * x) + 0 * y))[0]
        xf = np.broadcast_to(g.face_mesh(0)[0], gx.shape)
        errs.append(np.abs(gx - np.pi * np.cos(np.pi * xf))[1:-1].max())
    assert min(order(errs[0], errs[1]), order(errs[1], errs[2])) >= 1.9


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_superposition(a, b, seed):
    g = build_grid(2, (1, 1.5), (12, 10))
    rng = np.random.default_rng(seed)
    f1, f2 = rng.standard_normal((2, *g.shape))
    g1 = G.sample_trace(g, lambda x, y: np.cos(3 * x) + y)
    g2 = G.sample_trace(g, lambda x, y: x * y)
    lhs = solve_poisson_dirichlet(g, a * f1 + b * f2, G.combine_traces([a, b], [g1, g2]), 0.7)
    rhs = a * solve_poisson_dirichlet(g, f1, g1, 0.7) + b * solve_poisson_dirichlet(g, f2, g2, 0.7)
    assert np.abs(lhs - rhs).max() <= 1e-11 * max(1.0, np.abs(lhs).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_maximum_principle(seed):
    g = build_grid(2, (1, 1), (12, 12))
    rng = np.random.default_rng(seed)
    tr = [(rng.standard_normal(lo.shape), rng.standard_normal(hi.shape)) for lo, hi in G.zero_trace(g)]
    phi = solve_poisson_dirichlet(g, np.zeros(g.shape), tr, 1.0)
    lo, hi = G.trace_extrema(tr)
    assert lo - 1e-10 <= phi.min() and phi.max() <= hi + 1e-10


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 2**16))
def test_scaling_invariance(scale, seed):
    g = build_grid(2, (1, 1), (12, 12))
    f = np.random.default_rng(seed).standard_normal(g.shape)
    tr = G.sample_trace(g, lambda x, y: x - y)
    a = solve_poisson_dirichlet(g, f, tr, 0.2)
    b = solve_poisson_dirichlet(g, scale * f, tr, 0.2 * scale)
    assert np.abs(a - b).max() <= 1e-10 * max(1.0, np.abs(a).max())


def test_methods_agree():
    g = build_grid(2, (1, 1), (20, 24))
    f = np.random.default_rng(5).standard_normal(g.shape)
    tr = G.sample_trace(g, lambda x, y: np.exp(x) * np.sin(y))
    a = solve_poisson_dirichlet(g, f, tr, 0.5, workspace=PoissonWorkspace(g, method="spectral"))
    b = solve_poisson_dirichlet(g, f, tr, 0.5, workspace=PoissonWorkspace(g, method="cg"))
    assert np.abs(a - b).max() < 1e-8
