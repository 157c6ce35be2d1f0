"""Command-line entry point: ``npns <subcommand> ...``.

On failure a single JSON line ``{"error": ..., "message": ...}`` goes to
stderr and the exit code is nonzero (2 for configuration problems, 3 for
numerical failures, 1 otherwise).  ``NPNS_OUTPUT_DIR`` overrides the output
directory of the configuration; an explicit ``--out`` overrides both.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..expressions import ExpressionError
from ..nernst_planck import StabilityError
from ..poisson import PoissonError
from ..flow import ProjectionError
from .config import ConfigError, load_config
from .simulate import SimulationError, fmt

log = logging.getLogger("npns")

ENV_OUT = "NPNS_OUTPUT_DIR"


def _out_dir(flag, configured) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    return Path(configured)


def cmd_simulate(args) -> int:
    from .report import write_report
    from .simulate import run_simulation
    spec = load_config(args.config)
    out = _out_dir(args.out, spec.output_dir)
    res = run_simulation(spec, out, restart=args.restart, stop_step=args.stop_step)
    write_report(out, figures=not args.no_figures)
    print(json.dumps({"out": str(out), **res.summary}, default=float))
    return 0


def cmd_verify_mms(args) -> int:
    from .mms import verify_mms
    table = verify_mms(args.case, levels=tuple(args.levels))
    print(table.format())
    if args.out or os.environ.get(ENV_OUT):
        out = _out_dir(args.out, ".")
        out.mkdir(parents=True, exist_ok=True)
        rows = table.to_rows()
        with open(out / f"mms_{args.case}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(rows[0]))
            for r in rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in r.values()])
    return 0


def _endpoint_values(expr, length: float, mid: float) -> tuple:
    lo = float(np.asarray(expr(np.array(0.0), np.array(mid))))
    hi = float(np.asarray(expr(np.array(length), np.array(mid))))
    return lo, hi


def cmd_oracle(args) -> int:
    from .oracle import compare_with_scheme, steady_oracle_1d
    spec = load_config(args.config)
    prm = spec.params
    if spec.dim != 2:
        raise ConfigError("oracle-1d expects a 2D configuration")
    L, Ly = spec.extents
    voltage = _endpoint_values(prm.potential_boundary, L, 0.5 * Ly)
    gammas = [_endpoint_values(s.boundary, L, 0.5 * Ly) for s in prm.species]
    res = steady_oracle_1d(prm, voltage, gammas, args.resolution, L)
    out = _out_dir(args.out, spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "c1", "c2", "phi"])
        for row in zip(res.x, res.c[0], res.c[1], res.phi):
            w.writerow([fmt(v) for v in row])
    report = {"out": str(out), "newton_residual": res.residual, "iterations": res.iterations}
    if args.compare:
        run = compare_with_scheme(prm, res, cells=spec.cells, extents=spec.extents)
        report.update({"steps": run.steps, "rate": run.rate,
                       **{f"linf_{k}": v for k, v in run.linf.items()}})
    (out / "oracle.json").write_text(json.dumps(report, indent=2, default=float))
    print(json.dumps(report, default=float))
    return 0


def cmd_sweep(args) -> int:
    from .sweep import sweep
    path = Path(args.config)
    text = path.read_text()
    out = _out_dir(args.out, "sweep")
    rows = sweep(text, out, base=path.parent, workers=args.workers)
    failed = sum(r["status"] != "ok" for r in rows)
    print(json.dumps({"out": str(out), "runs": len(rows), "failed": failed}))
    return 0


def cmd_audit(args) -> int:
    from .report import write_report
    summary = write_report(args.results_dir, tol_audit=args.tol_audit)
    print(json.dumps({k: v for k, v in summary.items() if not isinstance(v, dict)}, default=float))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="npns", description="Ion electrodiffusion in fluids")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a configuration")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("--restart", help="checkpoint to resume from")
    s.add_argument("--stop-step", type=int)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify-mms", help="manufactured-solution convergence")
    s.add_argument("case")
    s.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64])
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify_mms)

    s = sub.add_parser("oracle-1d", help="1D steady Newton reference")
    s.add_argument("config")
    s.add_argument("--resolution", type=int, default=4000)
    s.add_argument("--compare", action="store_true", help="also run the 2D scheme to steady state")
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sweep", help="parameter sweep")
    s.add_argument("config")
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("audit", help="figures and audit summary of a results directory")
    s.add_argument("results_dir")
    s.add_argument("--tol-audit", type=float)
    s.set_defaults(func=cmd_audit)
    return p


def _fail(kind: str, exc: Exception, code: int, **extra) -> int:
    print(json.dumps({"error": kind, "message": str(exc), **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ExpressionError) as exc:
        return _fail("config", exc, 2)
    except SimulationError as exc:
        return _fail("numerical", exc, 3, step=exc.step)
    except (PoissonError, ProjectionError, StabilityError) as exc:
        return _fail("numerical", exc, 3)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail(type(exc).__name__, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
