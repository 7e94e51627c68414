"""Pearson correlations and IQR-based selection of monitoring periods."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, astuple
from typing import Iterable, Sequence

import numpy as np

from .data import Q_COOL, Q_HW, T_OA, T_RA, Dataset

# (x, y) pairs behind PCC_1 .. PCC_6
PCC_PAIRS: tuple[tuple[str, str], ...] = (
    (T_RA, Q_COOL),
    (T_RA, Q_HW),
    (Q_HW, Q_COOL),
    (T_OA, Q_COOL),
    (T_OA, Q_HW),
    (T_OA, T_RA),
)

DEFAULT_GRID = tuple(range(0, 60, 10))


class UndefinedCorrelation(ValueError):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two sequences of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("correlation undefined for a zero-variance sequence")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def daily_iqr(values: Sequence[float]) -> float:
    """Q3 - Q1 of one day's values, linear-interpolation quantiles."""
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75])
    return float(q3 - q1)


def _passes(iqr: np.ndarray, threshold: float) -> np.ndarray:
    # zero threshold imposes no constraint; otherwise strictly greater
    if threshold == 0:
        return np.ones_like(iqr, dtype=bool)
    return iqr > threshold


def filter_days(dataset: Dataset, thr_cool: float, thr_heat: float) -> Dataset:
    if thr_cool < 0 or thr_heat < 0:
        raise ValueError("thresholds must be non-negative")
    cool = np.array([daily_iqr(d) for d in dataset.select([Q_COOL])[:, 0]])
    heat = np.array([daily_iqr(d) for d in dataset.select([Q_HW])[:, 0]])
    keep = _passes(cool, thr_cool) & _passes(heat, thr_heat)
    return dataset.subset(np.flatnonzero(keep))


def pooled_pccs(dataset: Dataset) -> tuple[float, ...]:
    """PCC_1..PCC_6 over every timestep of every day (NaN when undefined)."""
    out = []
    for xv, yv in PCC_PAIRS:
        x = dataset.select([xv]).ravel()
        y = dataset.select([yv]).ravel()
        try:
            out.append(pearson(x, y))
        except (UndefinedCorrelation, ValueError):
            out.append(float("nan"))
    return tuple(out)


@dataclass(frozen=True)
class CorrelationRow:
    iqr_cool_threshold: float
    iqr_heat_threshold: float
    days: int
    pcc_1: float
    pcc_2: float
    pcc_3: float
    pcc_4: float
    pcc_5: float
    pcc_6: float

    @property
    def pccs(self) -> tuple[float, ...]:
        return astuple(self)[3:]


def correlation_table(
    dataset: Dataset,
    cool_grid: Iterable[float] = DEFAULT_GRID,
    heat_grid: Iterable[float] = DEFAULT_GRID,
) -> list[CorrelationRow]:
    """One row per threshold pair whose filtered dataset is non-empty."""
    cool_grid, heat_grid = list(cool_grid), list(heat_grid)
    if not cool_grid or not heat_grid:
        raise ValueError("threshold grid must be non-empty")
    rows = []
    for tc, th in itertools.product(cool_grid, heat_grid):
        subset = filter_days(dataset, tc, th)
        if len(subset) == 0:
            continue
        rows.append(CorrelationRow(tc, th, len(subset), *pooled_pccs(subset)))
    return rows


def format_table(rows: Sequence[CorrelationRow], sep: str = ",") -> str:
    header = ["iqr_cool_kw", "iqr_heat_kw", "days"] + [f"pcc_{i}" for i in range(1, 7)]
    lines = [sep.join(header)]
    for r in rows:
        lines.append(
            sep.join(
                [f"{r.iqr_cool_threshold:g}", f"{r.iqr_heat_threshold:g}", str(r.days)]
                + [f"{p:.4f}" for p in r.pccs]
            )
        )
    return "\n".join(lines) + "\n"
