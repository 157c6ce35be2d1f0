"""Nernst-Planck ion transport coupled to Stokes / Navier-Stokes flow.

Finite-volume kernels on axis-aligned boxes with energy, dissipation and
regularity diagnostics.
"""
from .grid import Grid, build_grid
from .model import (BoundaryData, Problem, SimParams, Species, State, charge_density,
                    extend_boundary_data, validate_params)
from .poisson import PoissonWorkspace, gradient, solve_poisson_dirichlet, split_potential
from .nernst_planck import (SZState, advance_concentrations, advance_sz, np_face_flux,
                            stable_dt, to_sz)
from .flow import FlowWorkspace, advance_flow, electric_force, project_divergence_free
from .diagnostics import (AuditReport, DiagnosticsRecord, audit_exact_identities,
                          audit_inequalities, dissipation_d1, dissipation_d2, dissipation_d3,
                          energy_e1, energy_e3, lyapunov_f, lyapunov_g, negativity_functional,
                          potential_energy_p, regularity_monitors)

__version__ = "0.1.0"
