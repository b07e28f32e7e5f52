"""Render the harness CSV reports as static figures.

Readers validate the exact column contracts of the producing harness;
plotting never modifies or reorders the data. Convergence-style figures
are log-log with a dashed half-order reference line anchored at the
coarsest point, per-interval observed orders annotated on the segments,
and least-squares slopes in the legend. Each plot function returns the
numbers it annotated so callers can verify them without parsing images.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """CSV columns do not match the producing harness's contract."""


_SCHEMAS = {
    "convergence": ["k", "q", "E_u_q", "E_energy", "E_P_q", "order_u", "order_P"],
    "qsweep": ["q", "E_u_q", "E_P_q"],
    "pathwise": ["seed", "k", "err_u_L2", "err_P_L2"],
    "stokes": ["n", "h", "err_u_L2", "err_u_H1", "err_p_L2",
               "order_u_L2", "order_u_H1", "order_p_L2"],
}


def _read_rows(path, kind: str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input CSV not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        expected = _SCHEMAS[kind]
        if header != expected:
            raise SchemaError(
                f"{path} columns {header} do not match the {kind} "
                f"contract {expected}"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path} holds no data rows")
    return rows


def _interval_orders(errors) -> list[float]:
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]


def _lsq_slope(x, y) -> float:
    """Least-squares slope of log2 y against log2 x."""
    lx, ly = np.log2(np.asarray(x)), np.log2(np.asarray(y))
    return float(np.polyfit(lx, ly, 1)[0])


def _draw_error_ladders(ax, series, title):
    """Log-log error curves with a half-order reference and annotations.

    series maps label -> (k values, errors); returns per-label orders
    and least-squares slopes.
    """
    result = {}
    anchor = None
    for label, (ks, errs) in series.items():
        ks = np.asarray(ks, dtype=float)
        errs = np.asarray(errs, dtype=float)
        orders = _interval_orders(errs) if len(errs) > 1 else []
        slope = _lsq_slope(ks, errs) if len(errs) > 1 else float("nan")
        result[label] = {"k": ks.tolist(), "errors": errs.tolist(),
                         "orders": orders, "slope": slope}
        line_label = label if math.isnan(slope) else f"{label} (slope {slope:.3f})"
        ax.loglog(ks, errs, marker="o", label=line_label)
        for i, order in enumerate(orders):
            xm = math.sqrt(ks[i] * ks[i + 1])
            ym = math.sqrt(errs[i] * errs[i + 1])
            ax.annotate(f"{order:.2f}", (xm, ym), fontsize=7,
                        textcoords="offset points", xytext=(2, 2))
        if anchor is None:
            anchor = (ks, errs[0])
    if anchor is not None and len(anchor[0]) > 1:
        ks = anchor[0]
        ref = anchor[1] * np.sqrt(ks / ks[0])
        ax.loglog(ks, ref, "k--", linewidth=1, label="slope 1/2 reference")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    return result


def plot_convergence(csv_path, out_path, title=None) -> dict:
    """Render convergence.csv or pathwise.csv; returns the annotated
    orders/slopes per series plus any order columns read from the CSV."""
    try:
        rows = _read_rows(csv_path, "convergence")
        kind = "convergence"
    except SchemaError:
        rows = _read_rows(csv_path, "pathwise")
        kind = "pathwise"

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    csv_orders: dict = {}
    if kind == "convergence":
        qs = sorted({row["q"] for row in rows}, key=float)
        vel, pres = {}, {}
        for q in qs:
            sub = [r for r in rows if r["q"] == q]
            ks = [float(r["k"]) for r in sub]
            vel[f"E_u_q={q}"] = (ks, [float(r["E_u_q"]) for r in sub])
            pres[f"E_P_q={q}"] = (ks, [float(r["E_P_q"]) for r in sub])
            csv_orders[f"E_u_q={q}"] = [
                float(r["order_u"]) for r in sub if r["order_u"] != ""
            ]
            csv_orders[f"E_P_q={q}"] = [
                float(r["order_P"]) for r in sub if r["order_P"] != ""
            ]
        left = _draw_error_ladders(axes[0], vel, "velocity moment errors")
        right = _draw_error_ladders(axes[1], pres, "pressure moment errors")
    else:
        seeds = sorted({row["seed"] for row in rows}, key=float)
        vel, pres = {}, {}
        for s in seeds:
            sub = [r for r in rows if r["seed"] == s]
            ks = [float(r["k"]) for r in sub]
            vel[f"u seed {s}"] = (ks, [float(r["err_u_L2"]) for r in sub])
            pres[f"P seed {s}"] = (ks, [float(r["err_P_L2"]) for r in sub])
        left = _draw_error_ladders(axes[0], vel, "pathwise velocity errors")
        right = _draw_error_ladders(axes[1], pres, "pathwise pressure errors")

    for ax in axes:
        ax.set_xlabel("k")
        ax.set_ylabel("error")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return {"kind": kind, "series": {**left, **right}, "csv_orders": csv_orders}


def plot_qsweep(csv_path, out_path, title=None) -> dict:
    """Render qsweep.csv: moment errors against q on linear axes."""
    rows = _read_rows(csv_path, "qsweep")
    qs = [float(r["q"]) for r in rows]
    eu = [float(r["E_u_q"]) for r in rows]
    ep = [float(r["E_P_q"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(qs, eu, marker="o", label="velocity")
    ax.plot(qs, ep, marker="s", label="pressure")
    ax.set_xlabel("q")
    ax.set_ylabel("moment error")
    ax.set_title(title or "moment error growth in q")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return {"kind": "qsweep", "q": qs, "E_u_q": eu, "E_P_q": ep}


def plot_stokes(csv_path, out_path, title=None) -> dict:
    """Render stokes.csv: spatial errors against h, log-log."""
    rows = _read_rows(csv_path, "stokes")
    hs = [float(r["h"]) for r in rows]
    series = {
        "velocity L2": (hs, [float(r["err_u_L2"]) for r in rows]),
        "velocity H1": (hs, [float(r["err_u_H1"]) for r in rows]),
        "pressure L2": (hs, [float(r["err_p_L2"]) for r in rows]),
    }
    fig, ax = plt.subplots(figsize=(5, 3.6))
    result = _draw_error_ladders(ax, series, title or "manufactured spatial errors")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return {"kind": "stokes", "series": result}


def render(csv_path, kind: str, out_path, title=None) -> dict:
    """Dispatch on plot kind; convergence also accepts pathwise CSVs."""
    if kind in ("convergence", "pathwise"):
        return plot_convergence(csv_path, out_path, title=title)
    if kind == "qsweep":
        return plot_qsweep(csv_path, out_path, title=title)
    if kind == "stokes":
        return plot_stokes(csv_path, out_path, title=title)
    raise SchemaError(f"unknown plot kind: {kind}")
