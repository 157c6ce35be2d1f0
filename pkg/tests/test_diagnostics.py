import numpy as np
import pytest
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from npns import diagnostics as DG
from npns import flow as FL
from npns import grid as G
from npns import nernst_planck as NP
from npns.model import State

from conftest import make_problem, random_state


def _state(problem, c, phi=None, u=None):
    s = problem.initial_state(c)
    if phi is not None:
        s.phi = phi
    if u is not None:
        s.u = u
    return s


def _dirichlet_matrix(g):
    """Assembled -lap with boundary faces at h/2, built independently of the kernels."""
    mats = []
    for n, h in zip(g.cells, g.spacing):
        main = np.full(n, 2.0)
        main[0] = main[-1] = 3.0
        mats.append(sps.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / h**2)
    nx, ny = g.cells
    return (sps.kron(mats[0], sps.eye(ny)) + sps.kron(sps.eye(nx), mats[1])).tocsc()


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def test_e1_zero_at_reference_state():
    p = make_problem(gammas=("1.5", "1.5"), W="linear 0 2 0")
    s = _state(p, p.boundary.Gamma.copy())
    assert abs(DG.energy_e1(s, p)) <= 1e-13


def test_e1_entropy_closed_form():
    p = make_problem(gammas=("1.5", "1.5"), W="0")
    s = _state(p, np.e * p.boundary.Gamma)
    assert DG.energy_e1(s, p) == pytest.approx(3.0, rel=1e-12)


def test_e1_against_refined_quadrature_and_dense_solve():
    p = make_problem(cells=(10, 12), extents=(1.0, 1.2))
    g = p.grid
    s = random_state(p, seed=7, amp=1.5)
    fine = G.build_grid(2, g.extents, (40, 48))
    ent = 0.0
    for i in range(2):
        up_c = np.kron(s.c[i], np.ones((4, 4)))
        up_G = np.kron(p.boundary.Gamma[i], np.ones((4, 4)))
        x = up_c / up_G
        ent += np.sum(up_G * (x * np.log(x) - x + 1)) * fine.cell_volume
    rho = p.rho(s.c)
    phi0 = spla.spsolve(_dirichlet_matrix(g), rho.ravel() / p.params.epsilon)
    P = 0.5 * np.sum(rho.ravel() * phi0) * g.cell_volume
    assert DG.potential_energy_p(s, p) == pytest.approx(P, rel=1e-10)
    assert DG.energy_e1(s, p) == pytest.approx(ent + P, rel=1e-8)


def test_e1_rejects_negative():
    p = make_problem()
    s = random_state(p)
    s.c[1, 2, 2] = -0.1
    with pytest.raises(ValueError):
        DG.energy_e1(s, p)


def test_entropy_density_limit_at_zero():
    Gam = np.array([2.0, 3.0])
    assert np.array_equal(DG.relative_entropy_density(np.zeros(2), Gam), Gam)


def test_d1_constant_potential():
    p = make_problem(gammas=("2", "1"), W="0")
    g = p.grid
    s = _state(p, np.stack([np.full(g.shape, 2.0), np.full(g.shape, 1.0)]), phi=np.zeros(g.shape))
    D1, floored = DG.dissipation_d1(s, p)
    assert floored == 0
    assert D1 == pytest.approx(p.params.d_min / (2 * p.params.epsilon) * 1.0, rel=1e-12)


def test_d1_and_d2_neutral_with_linear_wall_potential():
    p = make_problem(gammas=("1.5", "1.5"), W="linear 0 5 0")
    s = _state(p, p.boundary.Gamma.copy())
    D = p.params.diffusivities
    assert DG.dissipation_d1(s, p)[0] == pytest.approx(0.5 * D.min() * 3.0 * 25.0, rel=1e-10)
    assert DG.dissipation_d2(s, p) == pytest.approx(0.5 * (D[0] + D[1]) * 1.5 * 25.0, rel=1e-10)
    assert abs(DG.potential_energy_p(s, p)) <= 1e-13


def test_d1_floor_counts_cells():
    p = make_problem()
    s = random_state(p)
    s.c[0, :3, 0] = 0.0
    D1, floored = DG.dissipation_d1(s, p)
    assert floored == 3 and np.isfinite(D1)


def test_potential_energy_sign_and_dual():
    p = make_problem(gammas=("1", "1"), W="0")
    g = p.grid
    c = np.ones((2, *g.shape))
    c[0, 8, 8] += 3.0
    s = _state(p, c)
    assert DG.potential_energy_p(s, p) > 0
    s = random_state(p, seed=11, amp=2.0)
    assert DG.potential_energy_p(s, p) == pytest.approx(DG.potential_energy_dual(s, p), rel=1e-10)


def test_e3_d3_examples():
    p = make_problem(gammas=("2", "1"), W="0", D=(1.0, 1.0))
    s = _state(p, p.boundary.Gamma.copy())
    assert abs(DG.energy_e3(s, p)) <= 1e-26
    assert DG.dissipation_d3(s, p) == pytest.approx(1 / (4 * p.params.epsilon), rel=1e-12)
    s = _state(p, p.boundary.Gamma + 1.0)
    assert DG.energy_e3(s, p) == pytest.approx(2.0, rel=1e-12)


def test_e3_requires_two_species():
    from npns.grid import build_grid
    from npns.model import Problem, SimParams, Species
    prm = SimParams(0.1, 1, 1, (Species(1, 1.0), Species(-1, 1.0), Species(1, 1.0)))
    p = Problem.build(prm, build_grid(2, (1, 1), (8, 8)))
    s = p.initial_state(np.ones((3, 8, 8)))
    with pytest.raises(ValueError, match="two species"):
        DG.energy_e3(s, p)


def test_lyapunov_examples():
    p = make_problem(gammas=("1.5", "1.5"), W="linear 0 1 1")
    s = _state(p, p.boundary.Gamma.copy())
    assert abs(DG.lyapunov_f(s, 1.0, p)) <= 1e-13
    s = random_state(p, seed=3, velocity=1.0)
    E3 = DG.energy_e3(s, p)
    assert DG.lyapunov_f(s, 2.0, p) - DG.lyapunov_f(s, 1.0, p) == pytest.approx(E3, rel=1e-12)
    parts = FL.kinetic_energy(p.grid, s.u, 1.0) + DG.potential_energy_p(s, p) + 0.3 * E3
    assert DG.lyapunov_f(s, 0.3, p) == pytest.approx(parts, rel=1e-12)
    with pytest.raises(ValueError):
        DG.lyapunov_g(s, 1.0, p)
    with pytest.raises(ValueError):
        DG.lyapunov_f(s, 0.0, p)


def test_lyapunov_g_recomposition():
    p = make_problem(D=(1.0, 1.0), equal=True)
    s = random_state(p, seed=5, velocity=1.0)
    sz = NP.to_sz(s.c, p)
    parts = (FL.kinetic_energy(p.grid, s.u, 1.0) + DG.potential_energy_p(s, p)
             + 0.5 * G.integrate(p.grid, sz.S**2 + sz.Z**2))
    assert DG.lyapunov_g(s, 0.5, p) == pytest.approx(parts, rel=1e-12)
    # for two species S^2 + Z^2 = 2 (q1^2 + q2^2)
    assert DG.sz_l2(s, p) == pytest.approx(DG.energy_e3(s, p) * 2, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16), amp=st.floats(0.0, 4.0), vel=st.floats(0.0, 5.0))
def test_functionals_nonnegative(seed, amp, vel):
    p = make_problem(cells=(10, 10))
    s = random_state(p, seed=seed, amp=amp, velocity=vel)
    vals = [DG.energy_e1(s, p), DG.potential_energy_p(s, p), DG.energy_e3(s, p),
            DG.dissipation_d1(s, p)[0], DG.dissipation_d2(s, p), DG.dissipation_d3(s, p),
            DG.negativity_functional(s.c, 2, p.grid), DG.kinetic(s, p)]
    assert min(vals) >= -1e-13
    rho = p.rho(s.c)
    cube = G.integrate(p.grid, np.abs(rho) ** 3) / (4 * p.params.epsilon)
    assert DG.dissipation_d3(s, p) >= cube
    assert DG.charge_bound_violation(s.c, rho) <= 1e-13


def test_negativity_examples():
    g = G.build_grid(2, (1, 1), (8, 8))
    assert DG.negativity_functional(np.ones((2, 8, 8)), 2, g) == 0
    assert DG.negativity_functional(-np.ones((2, 8, 8)), 2, g) == pytest.approx(2.0, rel=1e-14)
    c = np.random.default_rng(0).standard_normal((2, 8, 8))
    ref = sum(v**6 for v in c.ravel() if v < 0) * g.cell_volume
    assert DG.negativity_functional(c, 3, g) == pytest.approx(ref, rel=1e-13)
    with pytest.raises(ValueError):
        DG.negativity_functional(c, 0, g)


# ---------------------------------------------------------------------------
# monitors
# ---------------------------------------------------------------------------

def _hist(t, rho2, rho4=None, uv=None):
    rho4 = rho2 if rho4 is None else rho4
    uv = np.zeros_like(t) if uv is None else uv
    return [{"t": a, "norm_rho_L2": b, "norm_rho_L4": c, "u_V": d} for a, b, c, d in zip(t, rho2, rho4, uv)]


def test_monitors_zero_and_constant():
    t = np.linspace(0, 2, 9)
    B, R, U = DG.regularity_monitors(_hist(t, np.zeros(9)))
    assert B[-1] == R[-1] == U[-1] == 0
    a = 1.7
    B, _, _ = DG.regularity_monitors(_hist(t, np.full(9, np.sqrt(a))))
    assert B[-1] == pytest.approx(a**2 * 2.0, rel=1e-15)


def test_monitors_against_refined_riemann_sum():
    rng = np.random.default_rng(1)
    t = np.sort(np.concatenate([[0.0, 1.0], rng.random(30)]))
    r2, r4, uv = rng.random((3, t.size)) + 0.1
    B, R, U = DG.regularity_monitors(_hist(t, r2, r4, uv))
    fine = np.linspace(0, 1, 400_001)
    mid = 0.5 * (fine[1:] + fine[:-1])
    for total, f in ((B[-1], r2**4), (R[-1], r4**2), (U[-1], uv**4)):
        ref = np.sum(np.interp(mid, t, f)) * (fine[1] - fine[0])
        assert total == pytest.approx(ref, rel=1e-4)
    assert np.all(np.diff(B) >= 0) and np.all(np.diff(U) >= 0)


def test_monitors_reject_unsorted():
    with pytest.raises(ValueError):
        DG.regularity_monitors(_hist(np.array([0.0, 2.0, 1.0]), np.ones(3)))


def test_accumulator_pack_roundtrip():
    acc = DG.MonitorAccumulator()
    assert DG.MonitorAccumulator.unpack(acc.pack()).t is None
    acc.add(0.0, {"B": 1.0, "R": 2.0, "U": 0.0, "diss": 3.0})
    acc.add(0.5, {"B": 3.0, "R": 2.0, "U": 1.0, "diss": 3.0})
    back = DG.MonitorAccumulator.unpack(acc.pack())
    assert back.totals == acc.totals and back.t == 0.5
    assert acc.totals["B"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        acc.add(0.1, acc.last)


def test_time_series_checks():
    t = np.linspace(0, 1, 50)
    assert DG.relative_curvature(t, 3 * t + 1) < 1e-10
    assert DG.relative_curvature(t, t**2) > 0.05
    ok, _ = DG.lyapunov_bounded(t, np.exp(-t))
    assert ok
    ok, excess = DG.lyapunov_bounded(t, t)
    assert not ok and excess > 0


def test_calibrate_tol_audit():
    assert DG.calibrate_tol_audit([(1e-3, 0.1, 0.5), (5e-4, 0.05, 2.0)]) == 1.0
    C = DG.calibrate_tol_audit([(1e-3, 0.1, -0.033)])
    assert C == pytest.approx(2 * 0.033 / (1e-3 + 1e-2))


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def _step(p, a, dt=None):
    dt = NP.stable_dt(a, p) if dt is None else dt
    c = NP.advance_concentrations(a, p, dt)
    force = FL.electric_force(p.rho(a.c), a.phi, p.params.coupling_k, p.grid, p.boundary.w, p.gamma_rho)
    u, pr = FL.advance_flow(a, force, p, dt)
    phi, phi0 = p.solve_potential(c)
    return State(a.t + dt, c, phi, u, pr, a.step + 1, phi0)


def test_steady_state_audit_exact():
    p = make_problem(gammas=("1.3", "1.3"), W="0.5")
    a = _state(p, np.full((2, *p.grid.shape), 1.3))
    b = _step(p, a, 5e-4)
    ident = DG.audit_exact_identities([a, b], p)[0]
    for k in ("r_ens", "r_l2"):
        assert abs(ident[k]) <= 1e-12
    ineq = DG.audit_inequalities([a, b], p)[0]
    assert ineq["margin_e1"] >= -1e-12 and ineq["margin_p"] >= -1e-12


def test_steady_state_sz_audit_exact():
    p = make_problem(gammas=("1.3", "1.3"), W="0.5", D=(1.0, 1.0), equal=True)
    a = _state(p, np.full((2, *p.grid.shape), 1.3))
    b = _step(p, a, 5e-4)
    assert abs(DG.audit_pair(a, b, p)["r_sz"]) <= 1e-12


def test_kinetic_identity_is_exact_up_to_euler_term():
    p = make_problem(cells=(16, 16))
    a = random_state(p, seed=2, velocity=2.0)
    b = _step(p, a)
    dt = b.t - a.t
    row = DG.audit_pair(a, b, p)
    du = [x - y for x, y in zip(b.u, a.u)]
    euler = FL.inner(p.grid, du, du) / (2 * p.params.coupling_k * dt)
    assert row["r_ens"] == pytest.approx(euler, rel=1e-9, abs=1e-12)


def test_kinetic_residual_without_coupling():
    p = make_problem(cells=(16, 16))
    g = p.grid
    a = random_state(p, seed=4, velocity=1.0)
    res = []
    for dt in (4e-4, 2e-4, 1e-4):
        u1, _ = FL.advance_flow(a, FL.velocity_zeros(g), p, dt)
        r = DG.kinetic_balance_residual(g, a.u, u1, dt, 1.0, 0.0)
        du = [x - y for x, y in zip(u1, a.u)]
        assert r == pytest.approx(FL.inner(g, du, du) / (2 * dt), rel=1e-9)
        res.append(r)
    assert 0.9 <= np.log2(res[0] / res[1]) <= 1.1 and 0.9 <= np.log2(res[1] / res[2]) <= 1.1


def _central_work(p, f, phi, z, D):
    """<f, div(J_sg - J_central)>/D with the central flux written out by hand."""
    g = p.grid
    zero = G.zero_trace(g)
    J = NP.sg_flux(g, f, zero, phi, p.boundary.w, z, D)
    diff = []
    for k in range(g.dim):
        ext_f = G.extend(f, zero, k)
        ext_p = G.extend(phi, p.boundary.w, k)
        L, R = ext_f[:-1] if k == 0 else ext_f[:, :-1], ext_f[1:] if k == 0 else ext_f[:, 1:]
        s = z * np.diff(ext_p, axis=k)
        Jc = D / G.face_distances(g, k) * ((L - R) - 0.5 * s * (L + R))
        diff.append(J[k] - Jc)
    return G.integrate(g, f * G.divergence(g, diff)) / D


def test_fitting_work_matches_central_split():
    p = make_problem(cells=(12, 10))
    s = random_state(p, seed=4)
    q = DG.q_fields(s, p)
    jumps = NP.potential_jumps(p.grid, s.phi, p.boundary.w)
    for i, sp in enumerate(p.params.species):
        w = DG.fitting_work(p, q[i], jumps, sp.valence)
        assert w >= 0
        assert w == pytest.approx(_central_work(p, q[i], s.phi, sp.valence, sp.diffusivity), rel=1e-10)


@pytest.mark.parametrize("equal", [False, True])
def test_l2_identity_is_exact_up_to_euler_term(equal):
    p = make_problem(cells=(16, 16), D=(1.0, 1.0) if equal else (1.0, 0.5), equal=equal)
    a = random_state(p, seed=6, velocity=0.5)
    b = _step(p, a)
    dt = b.t - a.t
    row = DG.audit_pair(a, b, p)
    qa, qb = DG.q_fields(a, p), DG.q_fields(b, p)
    euler = sum(G.integrate(p.grid, (qb[i] - qa[i]) ** 2) / (2 * sp.diffusivity * dt)
                for i, sp in enumerate(p.params.species))
    assert abs(row["r_l2"] - euler) <= 1e-8 * euler
    if equal:
        sa, sb = NP.to_sz(a.c, p), NP.to_sz(b.c, p)
        euler_sz = G.integrate(p.grid, (sb.S - sa.S) ** 2 + (sb.Z - sa.Z) ** 2) / (2 * dt)
        assert abs(row["r_sz"] - euler_sz) <= 1e-8 * euler_sz


def test_upwind_work_nonnegative():
    p = make_problem(cells=(12, 12))
    s = random_state(p, seed=8, velocity=3.0)
    q = DG.q_fields(s, p)
    assert all(DG.upwind_work(p, q[i], s.u) >= -1e-12 for i in range(2))


def test_generic_run_margins():
    p = make_problem(cells=(16, 16), gammas=("2 + linear 0 0 0.5", "1"), W="linear 0 5 1")
    s = random_state(p, seed=9, velocity=1.0)
    worst = np.inf
    for _ in range(500):
        b = _step(p, s)
        row = DG.audit_pair(s, b, p)
        tol = (b.t - s.t) + p.grid.spacing[0] ** 2
        worst = min(worst, (min(row["margin_e1"], row["margin_p"])) / tol)
        assert row["charge_margin"] <= 1e-13
        s = b
    assert worst >= -1.0


def test_audits_need_snapshots():
    p = make_problem()
    s = random_state(p)
    with pytest.raises(ValueError):
        DG.audit_exact_identities([s], p)
    with pytest.raises(ValueError):
        DG.audit_inequalities([s, s], p)


def test_record_flattening():
    p = make_problem()
    s = random_state(p)
    rec = DG.diagnostics_record(s, p, 1.0, 1e-3, {"B": 0.0, "R": 0.0, "U": 0.0, "diss": 0.0})
    row = rec.flat()
    assert "q_L2_1" in row and "grad_q_L2_2" in row and "q_L2" not in row
    assert row["F_lyap"] == pytest.approx(DG.lyapunov_f(s, 1.0, p))
    assert np.isnan(row["G_lyap"])
