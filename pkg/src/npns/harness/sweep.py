"""Parameter sweeps over a template configuration.

A sweep file is an ordinary run configuration plus a ``[sweep]`` section::

    [sweep]
    workers = 2
    potential.boundary = linear 0 1 0 ; linear 0 5 0
    species.2.diffusivity = 0.5 ; 1.0

Each non-``workers`` key is ``section.key`` with values separated by ``;``.
The cross product runs in its own directory; failures are recorded and the
sweep carries on.
"""
from __future__ import annotations

import configparser
import csv
import itertools
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import diagnostics as DG
from .config import ConfigError, parse_config
from .simulate import fmt, run_simulation

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("status", "error", "steps", "t", "min_c", "max_charge_violation",
                  "max_negativity", "B", "R", "U", "dissipation_integral", "F_final",
                  "positivity_ok", "charge_bound_ok", "lyapunov_bounded")


def split_sweep(text: str) -> tuple:
    """Template config text without ``[sweep]``, the worker count, and ordered ranges."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    parser.read_string(text)
    if not parser.has_section("sweep"):
        raise ConfigError("sweep config needs a [sweep] section")
    workers = 1
    ranges = {}
    for key, raw in parser["sweep"].items():
        if key == "workers":
            workers = int(raw)
            if workers < 1:
                raise ConfigError("[sweep] workers must be >= 1")
            continue
        if "." not in key:
            raise ConfigError(f"[sweep] key {key!r} must be section.key")
        values = [v.strip() for v in raw.split(";") if v.strip()]
        if not values:
            raise ConfigError(f"[sweep] {key} has no values")
        ranges[key] = values
    parser.remove_section("sweep")
    return parser, workers, ranges


def _render(parser: configparser.ConfigParser) -> str:
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in parser[name].items())
        lines.append("")
    return "\n".join(lines)


def expand(parser, ranges: dict) -> list:
    """Config texts of the cross product, in row-major order of ``ranges``."""
    keys = list(ranges)
    out = []
    for combo in itertools.product(*(ranges[k] for k in keys)):
        p = configparser.ConfigParser(interpolation=None, default_section="__none__")
        p.optionxform = str
        p.read_dict({s: dict(parser[s]) for s in parser.sections()})
        for key, value in zip(keys, combo):
            section, option = key.rsplit(".", 1)
            if not p.has_section(section):
                p.add_section(section)
            p[section][option] = value
        out.append((dict(zip(keys, combo)), _render(p)))
    return out


def _run_one(args) -> dict:
    text, base, run_dir = args
    row = {k: "" for k in SUMMARY_FIELDS}
    Path(run_dir).mkdir(parents=True, exist_ok=True)
    (Path(run_dir) / "config.ini").write_text(text)
    try:
        spec = parse_config(text, Path(base) if base else None)
        res = run_simulation(spec, run_dir)
        s = res.summary
        row.update({k: s.get(k, "") for k in SUMMARY_FIELDS if k in s})
        t = [r.t for r in res.records]
        F = [r.F_lyap for r in res.records]
        row["F_final"] = F[-1]
        row["positivity_ok"] = bool(s["min_c"] >= -1e-13 and s["max_negativity"] == 0)
        row["charge_bound_ok"] = bool(s["max_charge_violation"] <= 1e-13)
        row["lyapunov_bounded"] = (bool(DG.lyapunov_bounded(t, F)[0])
                                   if len(t) > 2 and np.all(np.isfinite(F)) else "")
        row["status"] = "ok"
    except Exception as exc:  # recorded per run; the sweep continues
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        log.debug("sweep run failed\n%s", traceback.format_exc())
    return row


def sweep(text: str, out_dir, base: Path | None = None, workers: int | None = None) -> list:
    """Run every combination; writes ``summary.csv`` and returns its rows."""
    parser, cfg_workers, ranges = split_sweep(text)
    workers = workers or cfg_workers
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = expand(parser, ranges)
    jobs = [(cfg, str(base) if base else "", str(out / f"run_{i:03d}"))
            for i, (_, cfg) in enumerate(cases)]
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    rows = []
    for i, ((values, _), res) in enumerate(zip(cases, results)):
        rows.append({"run": f"run_{i:03d}", **values, **res})
    header = ["run", *ranges, *SUMMARY_FIELDS]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], str) else fmt(r[k]) for k in header])
    return rows
