"""Energies, dissipations, regularity monitors, and balance audits.

All integrals are midpoint sums; face quantities are averaged to cell centres
before summing (interior faces weight one, boundary faces one half).  With that
convention the discrete Dirichlet forms satisfy summation by parts exactly, so
the audited identities only carry time-stepping and flux-consistency errors.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import flow as FL
from . import grid as G
from .model import Problem, State
from .nernst_planck import (_pairs, bernoulli_even, potential_jumps, species_forcing, sz_forcing,
                            to_sz, upwind_flux)

log = logging.getLogger(__name__)

GRAD_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _phi0(state: State, problem: Problem) -> np.ndarray:
    if state.phi0 is None:
        _, state.phi0 = problem.solve_potential(state.c)
    return state.phi0


def _face_product(problem: Problem, *face_lists) -> float:
    prod = [np.prod(parts, axis=0) for parts in zip(*face_lists)]
    return G.integrate_faces(problem.grid, prod)


def _rho_faces(problem: Problem, rho: np.ndarray) -> list:
    return G.face_values(problem.grid, rho, problem.gamma_rho)


def coupling_term(state: State, problem: Problem) -> float:
    """int rho u . grad(phi), the work of the electric force (divided by -K)."""
    g = problem.grid
    rho = problem.rho(state.c)
    return _face_product(problem, _rho_faces(problem, rho), state.u,
                         G.face_gradient(g, state.phi, problem.boundary.w))


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def relative_entropy_density(c: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """Gamma (x log x - x + 1) with x = c / Gamma; equals Gamma where c = 0."""
    if c.min() < 0:
        raise ValueError(f"negative concentration {c.min():.3e} in relative entropy")
    pos = c > 0
    safe = np.where(pos, c, 1.0)
    return np.where(pos, c * np.log(safe / Gamma) - c + Gamma, Gamma)


def potential_energy_p(state: State, problem: Problem) -> float:
    """(1/2 eps) int rho (-lap_D)^{-1} rho = (1/2) int rho phi0."""
    rho = problem.rho(state.c)
    return 0.5 * G.integrate(problem.grid, rho * _phi0(state, problem))


def potential_energy_dual(state: State, problem: Problem) -> float:
    """(eps/2) int |grad phi0|^2, the integrated-by-parts form of P."""
    g = problem.grid
    return 0.5 * problem.params.epsilon * G.dirichlet_norm_sq(g, _phi0(state, problem),
                                                              G.zero_trace(g))


def energy_e1(state: State, problem: Problem) -> float:
    ent = sum(G.integrate(problem.grid, relative_entropy_density(state.c[i], problem.boundary.Gamma[i]))
              for i in range(problem.params.m))
    return ent + potential_energy_p(state, problem)


def dissipation_d1(state: State, problem: Problem, floor: float = GRAD_FLOOR) -> tuple:
    """Returns ``(D1, floored_cells)``; cells with c < floor drop the c^{-1}|grad c|^2 term."""
    g = problem.grid
    prm = problem.params
    gphi2 = G.grad_squared(g, state.phi, problem.boundary.w)
    rho = problem.rho(state.c)
    integrand = rho**2 / prm.epsilon
    floored = 0
    for i, s in enumerate(prm.species):
        c = state.c[i]
        gc2 = G.grad_squared(g, c, problem.boundary.gamma[i])
        ok = c >= floor
        floored += int(np.count_nonzero(~ok))
        integrand = integrand + np.where(ok, gc2 / np.where(ok, c, 1.0), 0.0)
        integrand = integrand + s.valence**2 * c * gphi2
    if floored:
        log.info("D1: %d cells below concentration floor %.1e", floored, floor)
    return 0.5 * prm.d_min * G.integrate(g, integrand), floored


def dissipation_d2(state: State, problem: Problem) -> float:
    g = problem.grid
    gphi2 = G.grad_squared(g, state.phi, problem.boundary.w)
    total = sum(s.valence**2 * s.diffusivity * state.c[i] for i, s in enumerate(problem.params.species))
    return 0.5 * G.integrate(g, total * gphi2)


def q_fields(state: State, problem: Problem) -> np.ndarray:
    return state.c - problem.boundary.Gamma


def energy_e3(state: State, problem: Problem) -> float:
    """sum_i (1/D_i) ||q_i||^2; defined for two species."""
    if problem.params.m != 2:
        raise ValueError(f"E3 is defined for two species, got m={problem.params.m}")
    q = q_fields(state, problem)
    return sum(G.integrate(problem.grid, q[i] ** 2) / s.diffusivity
               for i, s in enumerate(problem.params.species))


def grad_q_sq(state: State, problem: Problem) -> np.ndarray:
    g = problem.grid
    zero = G.zero_trace(g)
    q = q_fields(state, problem)
    return np.array([G.dirichlet_norm_sq(g, q[i], zero) for i in range(problem.params.m)])


def dissipation_d3(state: State, problem: Problem) -> float:
    if problem.params.m != 2:
        raise ValueError(f"D3 is defined for two species, got m={problem.params.m}")
    rho = problem.rho(state.c)
    cube = G.integrate(problem.grid, np.abs(rho) ** 3)
    return 0.5 * float(grad_q_sq(state, problem).sum()) + cube / (4 * problem.params.epsilon)


def kinetic(state: State, problem: Problem) -> float:
    return FL.kinetic_energy(problem.grid, state.u, problem.params.coupling_k)


def lyapunov_f(state: State, delta: float, problem: Problem) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return kinetic(state, problem) + potential_energy_p(state, problem) + delta * energy_e3(state, problem)


def sz_l2(state: State, problem: Problem) -> float:
    sz = to_sz(state.c, problem)
    return G.integrate(problem.grid, sz.S**2 + sz.Z**2)


def lyapunov_g(state: State, delta: float, problem: Problem) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not problem.params.equal_diffusivity_mode:
        raise ValueError("G is defined in equal_diffusivity_mode")
    return kinetic(state, problem) + potential_energy_p(state, problem) + delta * sz_l2(state, problem)


def negativity_functional(c: np.ndarray, exponent_m: int, grid: G.Grid) -> float:
    """sum_i int F(c_i) with F(y) = y^(2m) for y < 0 and 0 otherwise."""
    if int(exponent_m) != exponent_m or exponent_m < 1:
        raise ValueError("exponent must be an integer >= 1")
    neg = np.minimum(c, 0.0)
    return G.integrate(grid, np.sum(neg ** (2 * int(exponent_m)), axis=0))


def charge_bound_violation(c: np.ndarray, rho: np.ndarray) -> float:
    """max(|rho| - sum_i c_i); nonpositive whenever every |z_i| = 1 and c >= 0."""
    return float(np.max(np.abs(rho) - c.sum(axis=0)))


# ---------------------------------------------------------------------------
# error terms of the one-sided balances
# ---------------------------------------------------------------------------

def q1_term(state: State, problem: Problem) -> float:
    g = problem.grid
    prm = problem.params
    bd = problem.boundary
    rho = problem.rho(state.c)
    gphi = G.face_gradient(g, state.phi, bd.w)
    gphiw = G.face_gradient(g, bd.Phi_W, bd.w)
    total = 0.0
    for i, s in enumerate(prm.species):
        field_ = np.log(bd.Gamma[i]) + s.valence * bd.Phi_W
        trace = G.combine_traces([1.0, s.valence], [G.map_trace(np.log, bd.gamma[i]), bd.w])
        total += 0.5 * s.diffusivity * G.integrate(g, state.c[i] * G.grad_squared(g, field_, trace))
        glog = G.face_gradient(g, np.log(bd.Gamma[i]), G.map_trace(np.log, bd.gamma[i]))
        cf = G.face_values(g, state.c[i], bd.gamma[i])
        total -= _face_product(problem, cf, state.u, glog)
        gG = G.face_gradient(g, bd.Gamma[i], bd.gamma[i])
        total -= prm.d_min * s.valence * _face_product(problem, gG, gphi)
    total -= _face_product(problem, _rho_faces(problem, rho), state.u, gphiw)
    gz = np.tensordot(prm.valences, bd.Gamma, axes=(0, 0))
    total += prm.d_min / (2 * prm.epsilon) * G.integrate(g, gz**2)
    return total


def q2_term(state: State, problem: Problem) -> float:
    g = problem.grid
    prm = problem.params
    bd = problem.boundary
    rho = problem.rho(state.c)
    phi0 = _phi0(state, problem)
    gphiw2 = G.grad_squared(g, bd.Phi_W, bd.w)
    gphi0 = G.face_gradient(g, phi0, G.zero_trace(g))
    total = 0.0
    for i, s in enumerate(prm.species):
        z, D = s.valence, s.diffusivity
        total -= D * z / prm.epsilon * G.integrate(g, (state.c[i] - bd.Gamma[i]) * rho)
        total += 0.5 * z**2 * D * G.integrate(g, state.c[i] * gphiw2)
        gG = G.face_gradient(g, bd.Gamma[i], bd.gamma[i])
        total -= D * z * _face_product(problem, gG, gphi0)
    gphiw = G.face_gradient(g, bd.Phi_W, bd.w)
    total -= _face_product(problem, _rho_faces(problem, rho), state.u, gphiw)
    return total


# ---------------------------------------------------------------------------
# records and monitors
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    dt: float
    E1: float
    D1: float
    P: float
    D2: float
    E3: float
    D3: float
    F_lyap: float
    G_lyap: float
    kinetic: float
    norm_rho_L2: float
    norm_rho_L3: float
    norm_rho_L4: float
    q_L2: tuple
    grad_q_L2: tuple
    u_V: float
    negativity: float
    charge_bound_violation: float
    div_u_max: float
    min_c: float
    B: float
    R: float
    U: float
    dissipation_integral: float
    d1_floor_cells: int

    def flat(self) -> dict:
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                for i, x in enumerate(v, 1):
                    row[f"{f.name}_{i}"] = x
            else:
                row[f.name] = v
        return row


def monitor_integrands(state: State, problem: Problem, delta: float) -> dict:
    """Instantaneous integrands of B, R, U and of the running dissipation."""
    g = problem.grid
    prm = problem.params
    rho = problem.rho(state.c)
    rho2 = G.lp_norm(g, rho, 2)
    rho4 = G.lp_norm(g, rho, 4)
    cube = G.integrate(g, np.abs(rho) ** 3)
    grad_u2 = FL.velocity_gradient_sq(g, state.u)
    diss = (prm.nu / (2 * prm.coupling_k) * grad_u2 + 0.5 * delta * float(grad_q_sq(state, problem).sum())
            + delta / (4 * prm.epsilon) * cube)
    return {"B": rho2**4, "R": rho4**2, "U": grad_u2**2, "diss": diss}


@dataclass
class MonitorAccumulator:
    """Running trapezoidal integrals of the monitor integrands."""

    t: float | None = None
    last: dict | None = None
    totals: dict = field(default_factory=lambda: {"B": 0.0, "R": 0.0, "U": 0.0, "diss": 0.0})

    KEYS = ("B", "R", "U", "diss")

    def add(self, t: float, values: dict) -> dict:
        if self.t is not None:
            if t < self.t:
                raise ValueError("monitor samples must be added in time order")
            dt = t - self.t
            for k in self.KEYS:
                self.totals[k] += 0.5 * dt * (self.last[k] + values[k])
        self.t = t
        self.last = {k: float(values[k]) for k in self.KEYS}
        return dict(self.totals)

    def pack(self) -> list:
        """Flat float list for checkpoints: t, last values, totals."""
        if self.t is None:
            return [np.nan] * 9
        return [self.t] + [self.last[k] for k in self.KEYS] + [self.totals[k] for k in self.KEYS]

    @classmethod
    def unpack(cls, values) -> "MonitorAccumulator":
        values = [float(v) for v in values]
        if np.isnan(values[0]):
            return cls()
        last = dict(zip(cls.KEYS, values[1:5]))
        totals = dict(zip(cls.KEYS, values[5:9]))
        return cls(values[0], last, totals)


def regularity_monitors(history) -> tuple:
    """Running B, R, U over a time-sorted history.

    ``history`` items need ``t``, ``norm_rho_L2``, ``norm_rho_L4`` and ``u_V``
    (attributes or mapping keys).  Returns three arrays aligned with the history.
    """
    def get(item, key):
        return item[key] if isinstance(item, dict) else getattr(item, key)

    t = np.array([get(h, "t") for h in history], dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("history must be sorted in time")
    fb = np.array([get(h, "norm_rho_L2") for h in history]) ** 4
    fr = np.array([get(h, "norm_rho_L4") for h in history]) ** 2
    fu = np.array([get(h, "u_V") for h in history]) ** 4
    out = []
    for f in (fb, fr, fu):
        inc = 0.5 * np.diff(t) * (f[1:] + f[:-1])
        out.append(np.concatenate([[0.0], np.cumsum(inc)]))
    return tuple(out)


def diagnostics_record(state: State, problem: Problem, delta: float, dt: float,
                       totals: dict, div_u_max: float | None = None) -> DiagnosticsRecord:
    g = problem.grid
    prm = problem.params
    rho = problem.rho(state.c)
    q = q_fields(state, problem)
    gq2 = grad_q_sq(state, problem)
    P = potential_energy_p(state, problem)
    KE = kinetic(state, problem)
    D1, floored = dissipation_d1(state, problem)
    if prm.m == 2:
        E3 = energy_e3(state, problem)
        D3 = dissipation_d3(state, problem)
        F = KE + P + delta * E3
    else:
        E3 = D3 = F = float("nan")
    Gl = KE + P + delta * sz_l2(state, problem) if prm.equal_diffusivity_mode else float("nan")
    if div_u_max is None:
        div_u_max = float(np.abs(FL.divergence(g, state.u)).max())
    return DiagnosticsRecord(
        step=state.step, t=state.t, dt=dt,
        E1=energy_e1(state, problem), D1=D1, P=P, D2=dissipation_d2(state, problem),
        E3=E3, D3=D3, F_lyap=F, G_lyap=Gl, kinetic=KE,
        norm_rho_L2=G.lp_norm(g, rho, 2), norm_rho_L3=G.lp_norm(g, rho, 3),
        norm_rho_L4=G.lp_norm(g, rho, 4),
        q_L2=tuple(G.lp_norm(g, q[i], 2) for i in range(prm.m)),
        grad_q_L2=tuple(float(np.sqrt(v)) for v in gq2),
        u_V=float(np.sqrt(FL.velocity_gradient_sq(g, state.u))),
        negativity=negativity_functional(state.c, 2, g),
        charge_bound_violation=charge_bound_violation(state.c, rho),
        div_u_max=div_u_max, min_c=float(state.c.min()),
        B=totals["B"], R=totals["R"], U=totals["U"], dissipation_integral=totals["diss"],
        d1_floor_cells=floored,
    )


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def upwind_work(problem: Problem, f: np.ndarray, u: list) -> float:
    """<f, div(u f_upwind)> for a field vanishing on the wall; >= 0 up to div u."""
    g = problem.grid
    zero = G.zero_trace(g)
    return G.integrate(g, f * G.divergence(g, upwind_flux(g, f, zero, u)))


def fitting_work(problem: Problem, f: np.ndarray, jumps: list, z: float = 1.0) -> float:
    """<f, div((A(z dphi) - 1)(f_L - f_R)/d)> for a field vanishing on the wall; >= 0.

    The exponentially fitted flux is the central drift-diffusion flux plus this
    extra diffusion with coefficient A(s) - 1 = (s/2) coth(s/2) - 1 = O(s^2).
    """
    g = problem.grid
    zero = G.zero_trace(g)
    extra = []
    for k in range(g.dim):
        left, right = _pairs(g, f, zero, k)
        extra.append((bernoulli_even(z * jumps[k]) - 1.0) * (left - right) / G.face_distances(g, k))
    return G.integrate(g, f * G.divergence(g, extra))


def kinetic_balance_residual(grid: G.Grid, u0: list, u1: list, dt: float, nu: float,
                             K: float, coupling: float = 0.0, advective: float = 0.0) -> float:
    """Residual of the kinetic energy balance over one step.

    ``coupling`` is int rho u.grad(phi) and ``advective`` is -<u, advection(u)>.
    With ``K == 0`` the force is absent and the balance is used multiplied by K.
    """
    d_norm = (FL.inner(grid, u1, u1) - FL.inner(grid, u0, u0)) / dt
    grad2 = FL.velocity_gradient_sq(grid, u0)
    if K == 0:
        return 0.5 * d_norm + nu * grad2 - advective
    return 0.5 / K * d_norm + nu / K * grad2 + coupling - advective / K


def _pair_identities(a: State, b: State, problem: Problem) -> dict:
    g = problem.grid
    prm = problem.params
    dt = b.t - a.t
    if not dt > 0:
        raise ValueError("snapshots must be at increasing times")
    mode = prm.flow_mode
    coup = coupling_term(a, problem)
    adv = FL.advection_energy_rate(g, a.u) if mode == "navier_stokes" else 0.0
    r_ens = kinetic_balance_residual(g, a.u, b.u, dt, prm.nu, prm.coupling_k, coup, adv)

    qa, qb = q_fields(a, problem), q_fields(b, problem)
    rho = problem.rho(a.c)
    Fi = species_forcing(problem, a.phi, a.u)
    zero = G.zero_trace(g)
    jumps = potential_jumps(g, a.phi, problem.boundary.w)
    r_l2 = 0.0
    upw = 0.0
    fit = 0.0
    for i, s in enumerate(prm.species):
        D = s.diffusivity
        r_l2 += (G.integrate(g, qb[i] ** 2) - G.integrate(g, qa[i] ** 2)) / (2 * D * dt)
        r_l2 += G.dirichlet_norm_sq(g, qa[i], zero)
        r_l2 -= G.integrate(g, Fi[i] * qa[i]) / D
        w = upwind_work(problem, qa[i], a.u) / D
        upw += w
        fit += fitting_work(problem, qa[i], jumps, s.valence)
    r_l2 += G.integrate(g, rho * np.tensordot(prm.valences, qa**2, axes=(0, 0))) / (2 * prm.epsilon)
    r_l2 += upw + fit
    row = {"step": a.step, "t": a.t, "dt": dt, "r_ens": r_ens, "advective_energy_rate": adv,
           "r_l2": r_l2, "upwind_l2_work": upw, "fitting_l2_work": fit, "r_sz": float("nan")}
    if prm.equal_diffusivity_mode:
        D = prm.d_min
        sa, sb = to_sz(a.c, problem), to_sz(b.c, problem)
        FS, FZ = sz_forcing(problem, a.phi, a.u, sa)
        r = (G.integrate(g, sb.S**2 + sb.Z**2) - G.integrate(g, sa.S**2 + sa.Z**2)) / (2 * dt)
        r += D * (G.dirichlet_norm_sq(g, sa.S, zero) + G.dirichlet_norm_sq(g, sa.Z, zero))
        r += D / prm.epsilon * G.integrate(g, sa.S * sa.Z * rho)
        r -= G.integrate(g, sa.S * FS + sa.Z * FZ)
        r += upwind_work(problem, sa.S, a.u) + upwind_work(problem, sa.Z, a.u)
        r += D * (fitting_work(problem, sa.S, jumps) + fitting_work(problem, sa.Z, jumps))
        row["r_sz"] = r
    return row


def _pair_inequalities(a: State, b: State, problem: Problem) -> dict:
    dt = b.t - a.t
    if not dt > 0:
        raise ValueError("snapshots must be at increasing times")
    coup = coupling_term(a, problem)
    E1a, E1b = energy_e1(a, problem), energy_e1(b, problem)
    Pa, Pb = potential_energy_p(a, problem), potential_energy_p(b, problem)
    D1, _ = dissipation_d1(a, problem)
    D2 = dissipation_d2(a, problem)
    Q1 = q1_term(a, problem)
    Q2 = q2_term(a, problem)
    m1 = Q1 + coup - ((E1b - E1a) / dt + D1)
    m2 = Q2 + coup - ((Pb - Pa) / dt + D2)
    return {"step": a.step, "t": a.t, "dt": dt, "Q1": Q1, "Q2": Q2, "margin_e1": m1,
            "margin_p": m2,
            "charge_margin": charge_bound_violation(a.c, problem.rho(a.c))}


def _check_history(history) -> None:
    if len(history) < 2:
        raise ValueError("audits need at least two consecutive snapshots")
    for s in history:
        if s is None or s.c is None or s.phi is None:
            raise ValueError("missing snapshot fields")


def audit_exact_identities(history, problem: Problem) -> list:
    """Per-step residuals of the kinetic, L2 and (S, Z) balances over consecutive snapshots."""
    _check_history(history)
    return [_pair_identities(a, b, problem) for a, b in zip(history[:-1], history[1:])]


def audit_inequalities(history, problem: Problem) -> list:
    """Per-step margins of the entropy and potential-energy inequalities."""
    _check_history(history)
    return [_pair_inequalities(a, b, problem) for a, b in zip(history[:-1], history[1:])]


def audit_pair(a: State, b: State, problem: Problem) -> dict:
    row = _pair_identities(a, b, problem)
    row.update({k: v for k, v in _pair_inequalities(a, b, problem).items()
                if k not in ("step", "t", "dt")})
    return row


AUDIT_FIELDS = ("step", "t", "dt", "r_ens", "advective_energy_rate", "r_l2", "upwind_l2_work",
                "fitting_l2_work", "r_sz", "Q1", "Q2", "margin_e1", "margin_p", "charge_margin")


@dataclass
class AuditReport:
    rows: list
    tol_audit: float = float("nan")

    def summary(self) -> dict:
        if not self.rows:
            return {}
        def col(k):
            return np.array([r[k] for r in self.rows], dtype=float)
        out = {}
        for k in ("r_ens", "r_l2", "r_sz"):
            v = col(k)
            out[f"max_abs_{k}"] = float(np.nanmax(np.abs(v))) if np.any(np.isfinite(v)) else float("nan")
        out["min_margin_e1"] = float(col("margin_e1").min())
        out["min_margin_p"] = float(col("margin_p").min())
        out["max_charge_margin"] = float(col("charge_margin").max())
        out["max_advective_energy_rate"] = float(col("advective_energy_rate").max())
        out["min_upwind_l2_work"] = float(col("upwind_l2_work").min())
        out["min_fitting_l2_work"] = float(col("fitting_l2_work").min())
        out["tol_audit"] = self.tol_audit
        return out


# ---------------------------------------------------------------------------
# time-series checks
# ---------------------------------------------------------------------------

def relative_curvature(t, y) -> float:
    """|c| / |b| of the least-squares fit y = a + b s + c s^2 on the final half, s in [0, 1]."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 6:
        raise ValueError("need at least six samples")
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    tt, yy = t[half], y[half]
    s = (tt - tt[0]) / (tt[-1] - tt[0])
    c, b, _ = np.polyfit(s, yy, 2)
    if b == 0:
        return float("inf") if c != 0 else 0.0
    return float(abs(c) / abs(b))


def lyapunov_bounded(t, F, rel: float = 1e-6) -> tuple:
    """Second-half maximum against first-half maximum plus rel * (F(0) + 1).

    Returns ``(ok, excess)`` with ``excess = max_second - max_first - rel * (F0 + 1)``.
    """
    t = np.asarray(t, dtype=float)
    F = np.asarray(F, dtype=float)
    mid = t[0] + 0.5 * (t[-1] - t[0])
    first, second = F[t <= mid], F[t >= mid]
    excess = float(second.max() - first.max() - rel * (F[0] + 1.0))
    return excess <= 0, excess


def calibrate_tol_audit(levels) -> float:
    """Constant C of tol_audit = C (dt + h^2) from refinement levels.

    ``levels`` holds ``(dt, h, min_margin)`` triples.  C is twice the worst
    observed ratio of negative margin to (dt + h^2), and at least 1.
    """
    worst = 0.0
    for dt, h, margin in levels:
        worst = max(worst, max(0.0, -margin) / (dt + h * h))
    return max(1.0, 2.0 * worst)
