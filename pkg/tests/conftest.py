import numpy as np
import pytest

from npns import flow as FL
from npns.grid import build_grid
from npns.model import Problem, SimParams, Species


def two_species(eps=0.05, D=(1.0, 0.5), gammas=("2", "1"), W="linear 0 5 0",
                flow_mode="stokes", equal=False, nu=1.0, K=1.0):
    return SimParams(eps, nu, K, (Species(1, D[0], gammas[0]), Species(-1, D[1], gammas[1])),
                     flow_mode=flow_mode, equal_diffusivity_mode=equal, potential_boundary=W)


def make_problem(cells=(16, 16), extents=(1.0, 1.0), **kw):
    g = build_grid(len(cells), extents, cells)
    return Problem.build(two_species(**kw), g)


def random_state(problem, seed=0, amp=0.5, velocity=0.0):
    """Positive concentrations around Gamma, optionally with a solenoidal velocity."""
    rng = np.random.default_rng(seed)
    g = problem.grid
    c0 = problem.boundary.Gamma * (1 + amp * rng.random((problem.params.m, *g.shape)))
    st = problem.initial_state(c0)
    if velocity:
        u = [velocity * rng.standard_normal(v.shape) for v in st.u]
        st.u, _ = FL.project_divergence_free(u, FL.FlowWorkspace(g))
    return st


def full(grid, i):
    return np.broadcast_to(grid.mesh()[i], grid.shape)


def order(e_coarse, e_fine, ratio=2.0):
    return float(np.log(e_coarse / e_fine) / np.log(ratio))


@pytest.fixture
def problem():
    return make_problem()


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
