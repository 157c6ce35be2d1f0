"""INI run configuration.

Sections and keys (``*`` marks required keys)::

    [grid]        dim = 2, extents = 1 1, cells* = 64 64
    [physics]     epsilon*, nu*, coupling_k*, flow_mode = stokes,
                  equal_diffusivity_mode = false
    [potential]   boundary = 0                 (preset expression for W)
    [species.N]   valence*, diffusivity*, boundary*, initial = extension
                  (one section per species, N = 1, 2, ...)
    [initial]     perturbation = 0, seed = 0
    [run]         t_final*, dt_max = inf, safety = 0.9, output_every = 10,
                  checkpoint_every = 0, delta = 1.0, audit = true
    [tolerances]  poisson = 1e-10, projection = 1e-8, poisson_method = spectral
    [output]      directory = results

``initial`` is a preset expression; the word ``extension`` stands for the
harmonic extension of that species' boundary data, so ``extension + sin 1 1 1``
perturbs it by a mode vanishing on the walls.  ``perturbation = a`` multiplies
every initial field by ``1 + a*U(-1, 1)`` drawn from ``seed``.  Unknown
sections or keys are rejected before anything is allocated.
"""
from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import grid as G
from ..expressions import parse_expression
from ..model import FLOW_MODES, SimParams, Species, validate_params

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# key -> (type, default); default None means required
SCHEMA = {
    "grid": {"dim": (int, 2), "extents": ("floats", None), "cells": ("ints", None)},
    "physics": {"epsilon": (float, None), "nu": (float, None), "coupling_k": (float, None),
                "flow_mode": (str, "stokes"), "equal_diffusivity_mode": (bool, False)},
    "potential": {"boundary": (str, "0")},
    "initial": {"perturbation": (float, 0.0), "seed": (int, 0)},
    "run": {"t_final": (float, None), "dt_max": (float, math.inf), "safety": (float, 0.9),
            "output_every": (int, 10), "checkpoint_every": (int, 0), "delta": (float, 1.0),
            "audit": (bool, True)},
    "tolerances": {"poisson": (float, 1e-10), "projection": (float, 1e-8),
                   "poisson_method": (str, "spectral")},
    "output": {"directory": (str, "results")},
}
SPECIES_KEYS = {"valence": (int, None), "diffusivity": (float, None), "boundary": (str, None),
                "initial": (str, "extension")}
OPTIONAL_SECTIONS = {"potential", "initial", "tolerances", "output", "grid"}


@dataclass
class RunSpec:
    params: SimParams
    dim: int
    extents: tuple
    cells: tuple
    initial: tuple               # per-species preset text
    t_final: float
    dt_max: float = math.inf
    safety: float = 0.9
    output_every: int = 10
    checkpoint_every: int = 0
    delta: float = 1.0
    audit: bool = True
    perturbation: float = 0.0
    seed: int = 0
    poisson_tol: float = 1e-10
    projection_tol: float = 1e-8
    poisson_method: str = "spectral"
    output_dir: str = "results"
    base: Path | None = field(default=None, repr=False)

    def grid(self) -> G.Grid:
        return G.build_grid(self.dim, self.extents, self.cells)


def _convert(kind, raw: str, where: str):
    try:
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _section(parser, name: str, schema: dict) -> dict:
    out = {}
    present = parser[name] if parser.has_section(name) else {}
    for key in present:
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' in [{name}]")
    for key, (kind, default) in schema.items():
        if key in present:
            out[key] = _convert(kind, present[key], f"[{name}] {key}")
        elif default is None and not (name == "grid" and key == "extents"):
            raise ConfigError(f"missing required key '{key}' in [{name}]")
        else:
            out[key] = default
    return out


def parse_config(text: str, base: Path | None = None) -> RunSpec:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    species_names = []
    for name in parser.sections():
        if name.startswith("species."):
            species_names.append(name)
        elif name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
    for name in SCHEMA:
        if name not in OPTIONAL_SECTIONS and not parser.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    try:
        species_names.sort(key=lambda s: int(s.split(".", 1)[1]))
    except ValueError:
        raise ConfigError("species sections must be named [species.1], [species.2], ...") from None
    if [int(s.split(".")[1]) for s in species_names] != list(range(1, len(species_names) + 1)):
        raise ConfigError("species sections must be numbered 1..m without gaps")
    if not species_names:
        raise ConfigError("need at least one [species.N] section")

    grid = _section(parser, "grid", SCHEMA["grid"])
    phys = _section(parser, "physics", SCHEMA["physics"])
    pot = _section(parser, "potential", SCHEMA["potential"])
    init = _section(parser, "initial", SCHEMA["initial"])
    run = _section(parser, "run", SCHEMA["run"])
    tol = _section(parser, "tolerances", SCHEMA["tolerances"])
    out = _section(parser, "output", SCHEMA["output"])
    sp = [_section(parser, n, SPECIES_KEYS) for n in species_names]

    dim = grid["dim"]
    extents = grid["extents"] or (1.0,) * dim
    cells = grid["cells"]
    if len(extents) != dim or len(cells) != dim:
        raise ConfigError(f"[grid] extents and cells need {dim} values")
    try:
        G.build_grid(dim, extents, cells)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    def boundary_expr(text, where):
        try:
            return parse_expression(text, dim, base)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    species = tuple(Species(s["valence"], s["diffusivity"],
                            boundary_expr(s["boundary"], f"[species.{i}] boundary"))
                    for i, s in enumerate(sp, 1))
    if phys["flow_mode"] not in FLOW_MODES:
        raise ConfigError(f"[physics] flow_mode must be one of {FLOW_MODES}")
    params = SimParams(phys["epsilon"], phys["nu"], phys["coupling_k"], species,
                       phys["flow_mode"], phys["equal_diffusivity_mode"],
                       boundary_expr(pot["boundary"], "[potential] boundary"))
    errors = validate_params(params)
    if errors:
        raise ConfigError("; ".join(errors))
    if not run["t_final"] > 0:
        raise ConfigError("[run] t_final must be positive")
    if run["output_every"] < 1:
        raise ConfigError("[run] output_every must be >= 1")
    if run["checkpoint_every"] < 0:
        raise ConfigError("[run] checkpoint_every must be >= 0 (0 disables)")
    if not 0 < run["safety"] <= 1:
        raise ConfigError("[run] safety must lie in (0, 1]")
    if not run["delta"] > 0:
        raise ConfigError("[run] delta must be positive")
    if not 0 <= init["perturbation"] < 1:
        raise ConfigError("[initial] perturbation must lie in [0, 1)")
    for i, s in enumerate(sp, 1):
        _check_initial(s["initial"], dim, base, f"[species.{i}] initial")
    return RunSpec(params, dim, tuple(extents), tuple(cells), tuple(s["initial"] for s in sp),
                   run["t_final"], run["dt_max"], run["safety"], run["output_every"],
                   run["checkpoint_every"], run["delta"], run["audit"], init["perturbation"],
                   init["seed"], tol["poisson"], tol["projection"], tol["poisson_method"],
                   out["directory"], base)


def _split_initial(text: str) -> tuple:
    parts = [p.strip() for p in text.split(" + ")]
    use_ext = "extension" in parts
    rest = " + ".join(p for p in parts if p != "extension")
    return use_ext, rest


def _check_initial(text: str, dim: int, base, where: str) -> None:
    _, rest = _split_initial(text)
    if rest:
        try:
            parse_expression(rest, dim, base)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> RunSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def initial_concentrations(spec: RunSpec, grid: G.Grid, Gamma: np.ndarray) -> np.ndarray:
    """Evaluate the initial fields; warns where they disagree with the boundary data."""
    mesh = [np.broadcast_to(x, grid.shape) for x in grid.mesh()]
    c = np.zeros((spec.params.m, *grid.shape))
    for i, text in enumerate(spec.initial):
        use_ext, rest = _split_initial(text)
        if use_ext:
            c[i] += Gamma[i]
        if rest:
            c[i] += np.broadcast_to(parse_expression(rest, grid.dim, spec.base)(*mesh), grid.shape)
    if spec.perturbation > 0:
        rng = np.random.default_rng(spec.seed)
        c *= 1.0 + spec.perturbation * rng.uniform(-1.0, 1.0, c.shape)
    if not np.all(c > 0):
        raise ConfigError(f"initial concentrations must be positive; minimum {c.min():.3e}")
    trace_gap = 0.0
    for i in range(spec.params.m):
        trace = G.trace_of_field(grid, c[i])
        tr_g = G.trace_of_field(grid, Gamma[i])
        trace_gap = max(trace_gap, max(max(np.abs(a - b).max(), np.abs(c_ - d).max())
                                       for (a, c_), (b, d) in zip(trace, tr_g)))
    if trace_gap > 1e-2:
        log.warning("initial concentrations differ from boundary data at the walls by up to %.3e",
                    trace_gap)
    return c
