"""Figures and audit summary for a finished run directory."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .. import diagnostics as DG  # noqa: E402
from .simulate import AUDIT, SUMMARY, TIMESERIES, fmt, read_csv  # noqa: E402

log = logging.getLogger(__name__)

STYLE = {"figure.figsize": (7.0, 4.2), "axes.grid": True, "grid.alpha": 0.3,
         "font.size": 9, "legend.fontsize": 8, "savefig.dpi": 150}


def _cols(header, data):
    return {h: data[:, i] for i, h in enumerate(header)}


def _plot_series(ax, t, series, log_scale=False):
    for name, y in series.items():
        if not np.any(np.isfinite(y)):
            continue
        if log_scale:
            y = np.where(y > 0, y, np.nan)
        ax.plot(t, y, label=name, lw=1.2)
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend(loc="best")


def render_figures(run_dir) -> list:
    """Energy, monitor and audit figures as PNG files in ``run_dir``."""
    run_dir = Path(run_dir)
    header, data = read_csv(run_dir / TIMESERIES)
    ts = _cols(header, data)
    t = ts["t"]
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _plot_series(ax, t, {k: ts[k] for k in ("E1", "P", "E3", "F_lyap", "G_lyap", "kinetic")},
                     log_scale=True)
        ax.set_title("energies and Lyapunov functionals")
        paths.append(run_dir / "energies.png")
        fig.savefig(paths[-1])
        plt.close(fig)

        fig, ax = plt.subplots()
        _plot_series(ax, t, {k: ts[k] for k in ("B", "R", "U", "dissipation_integral")})
        ax.set_title("running time integrals")
        paths.append(run_dir / "monitors.png")
        fig.savefig(paths[-1])
        plt.close(fig)

        fig, ax = plt.subplots()
        _plot_series(ax, t, {k: ts[k] for k in ("D1", "D2", "D3")}, log_scale=True)
        ax.set_title("dissipations")
        paths.append(run_dir / "dissipations.png")
        fig.savefig(paths[-1])
        plt.close(fig)

        if (run_dir / AUDIT).exists():
            ah, ad = read_csv(run_dir / AUDIT)
            if ad.size:
                au = _cols(ah, ad)
                fig, (a1, a2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
                _plot_series(a1, au["t"], {"|r_ens|": np.abs(au["r_ens"]),
                                           "|r_l2|": np.abs(au["r_l2"]),
                                           "|r_sz|": np.abs(au["r_sz"])}, log_scale=True)
                a1.set_title("identity residuals")
                _plot_series(a2, au["t"], {"entropy margin": au["margin_e1"],
                                           "potential margin": au["margin_p"]})
                a2.set_title("inequality margins")
                fig.tight_layout()
                paths.append(run_dir / "audit.png")
                fig.savefig(paths[-1])
                plt.close(fig)
    return paths


def audit_summary(run_dir, tol_audit: float | None = None) -> dict:
    """Invariant verdicts from the CSV outputs of one run."""
    run_dir = Path(run_dir)
    header, data = read_csv(run_dir / TIMESERIES)
    ts = _cols(header, data)
    t = ts["t"]
    out = {"records": int(t.size), "t_final": float(t[-1]),
           "min_c": float(ts["min_c"].min()),
           "max_negativity": float(ts["negativity"].max()),
           "max_charge_violation": float(ts["charge_bound_violation"].max()),
           "max_div_u": float(ts["div_u_max"].max())}
    for name in ("F_lyap", "G_lyap"):
        if np.all(np.isfinite(ts[name])) and t.size > 2:
            ok, excess = DG.lyapunov_bounded(t, ts[name])
            out[f"{name}_bounded"] = bool(ok)
            out[f"{name}_excess"] = excess
    if t.size >= 12:
        out["B_relative_curvature"] = DG.relative_curvature(t, ts["B"])
        out["dissipation_relative_curvature"] = DG.relative_curvature(t, ts["dissipation_integral"])
    if (run_dir / AUDIT).exists():
        ah, ad = read_csv(run_dir / AUDIT)
        if ad.size:
            rows = [dict(zip(ah, r)) for r in ad]
            out.update(DG.AuditReport(rows, tol_audit if tol_audit is not None else float("nan")).summary())
    summary_path = run_dir / SUMMARY
    if summary_path.exists():
        out["run_summary"] = json.loads(summary_path.read_text())
    return out


def write_report(run_dir, tol_audit: float | None = None, figures: bool = True) -> dict:
    run_dir = Path(run_dir)
    if not (run_dir / TIMESERIES).exists():
        raise FileNotFoundError(f"no {TIMESERIES} in {run_dir}")
    summary = audit_summary(run_dir, tol_audit)
    flat = {k: v for k, v in summary.items() if not isinstance(v, dict)}
    with open(run_dir / "audit_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in flat.items():
            w.writerow([k, fmt(v)])
    lines = [f"{k:34s} {fmt(v)}" for k, v in flat.items()]
    (run_dir / "audit_summary.txt").write_text("\n".join(lines) + "\n")
    if figures:
        summary["figures"] = [str(p) for p in render_figures(run_dir)]
    return summary
