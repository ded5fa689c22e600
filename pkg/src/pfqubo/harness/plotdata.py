"""Tidy ``figure,series,x,y`` data for redrawing the non-hardware figure series.

Figure ids:

- ``fig3``: logical edge count per sparsifier against N (scaling records)
- ``fig4``: target K, all-ones (N) and random (N/2) reference weights, plus
  pre-projection feasibility and mean raw weight, against N (scaling records)
- ``fig5``: best regret against edge retention per sparsifier (scaling records)
- ``fig6``: mean regret per ablation method and QUBO against N (ablation records)
- ``fig7``: penalized versus penalty-free dynamic-range ratio and best regret
  against N (scaling records)
"""

from __future__ import annotations

from typing import Iterable

from pfqubo.errors import ConfigError

PLOT_HEADER = ["figure", "series", "x", "y"]
FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7")


def _rows(records: Iterable[dict], kinds: tuple[str, ...]) -> list[dict]:
    out = []
    for rec in records:
        if rec.get("kind") in kinds:
            out.extend(rec.get("rows", []))
    return out


def _num(v):
    return float(v) if v not in ("", None) else None


def emit_plot_data(records: Iterable[dict], figure_id: str) -> list[dict]:
    """Observations for ``figure_id`` from serialized run records."""
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure id {figure_id!r}; expected one of {FIGURES}")
    records = list(records)
    obs: list[dict] = []

    def add(series, x, y):
        if x is not None and y is not None:
            obs.append({"figure": figure_id, "series": series, "x": x, "y": y})

    if figure_id == "fig6":
        for r in _rows(records, ("ablation",)):
            add(f"{r['qubo']}:{r['method']}", r["n"], r["regret_mean"])
        return obs

    rows = _rows(records, ("scaling", "pipeline"))
    if figure_id == "fig3":
        for r in rows:
            add(f"{r['case']}:{r['sparsifier']}", r["n"], r["edges_used"])
    elif figure_id == "fig4":
        for r in rows:
            if r["sparsifier"] != "dense":
                continue
            n = r["n"]
            add(f"{r['case']}:target_k", n, r["k"])
            add(f"{r['case']}:all_ones", n, n)
            add(f"{r['case']}:random", n, n / 2)
            add(f"{r['case']}:mean_weight", n, r["mean_weight"])
            add(f"{r['case']}:prefeas_rate", n, r["prefeas_rate"])
    elif figure_id == "fig5":
        for r in rows:
            total = _num(r["edges_penalized"])
            if total:
                add(f"{r['case']}:{r['sparsifier']}", r["edges_used"] / total, r["regret_best"])
    elif figure_id == "fig7":
        for r in rows:
            if r["sparsifier"] in ("dense", "penalty_free"):
                add(f"{r['case']}:{r['sparsifier']}:dynamic_range_ratio", r["n"], r["dynamic_range_ratio"])
                add(f"{r['case']}:{r['sparsifier']}:regret_best", r["n"], r["regret_best"])
    return obs
