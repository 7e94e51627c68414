"""Raw HVAC ingestion, derived heat flows, half-hourly resampling and daily slicing.

All per-day arrays use the variable order in :data:`VARIABLES` unless a
``Dataset`` says otherwise. Temperatures are in °C and heat flows in kW once
data leave :func:`aggregate_and_resample`.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

STEPS_PER_DAY = 48
BIN = "30min"

AIR_DENSITY = 1.204  # kg/m3
AIR_CP = 1006.0  # J/(kg K)
WATER_DENSITY = 1000.0  # kg/m3
WATER_CP = 4200.0  # J/(kg K)

N_RTU = 4

T_RA = "T_ra_avg"
T_OA = "T_oa_avg"
Q_COOL = "Q_cool_tot"
Q_HW = "Q_hw"
VARIABLES: tuple[str, ...] = (T_RA, T_OA, Q_COOL, Q_HW)
UNITS = {T_RA: "degC", T_OA: "degC", Q_COOL: "kW", Q_HW: "kW"}

RTU_FIELDS = ("t_sa", "t_ra", "t_ma", "t_oa", "v_sa")
HP_FIELDS = ("t_shw", "t_rhw", "v_shw")
REQUIRED_COLUMNS: tuple[str, ...] = tuple(
    f"{name}_{i}" for name in RTU_FIELDS for i in range(1, N_RTU + 1)
) + HP_FIELDS

_CFM_TO_M3S = 0.00047194745
_GPM_TO_M3H = 0.2271247


class IngestionError(ValueError):
    """Raised when a raw or processed data file cannot be used."""


@dataclass(frozen=True)
class DailyProfile:
    """One calendar day of half-hourly values, keyed by variable name."""

    date: dt.date
    values: dict[str, np.ndarray]

    def __post_init__(self):
        for name, arr in self.values.items():
            if np.shape(arr) != (STEPS_PER_DAY,):
                raise ValueError(f"{name}: expected {STEPS_PER_DAY} entries, got {np.shape(arr)}")


@dataclass(frozen=True)
class NormStats:
    """Per-variable min/max used for min-max scaling."""

    variables: tuple[str, ...]
    minimum: np.ndarray
    maximum: np.ndarray

    def _cols(self, variables: Sequence[str] | None) -> tuple[np.ndarray, np.ndarray]:
        if variables is None:
            return self.minimum, self.maximum
        idx = [self.variables.index(v) for v in variables]
        return self.minimum[idx], self.maximum[idx]

    def normalize(self, values: np.ndarray, variables: Sequence[str] | None = None) -> np.ndarray:
        """Scale ``(..., n_vars, 48)`` values to [0, 1] on the fit range."""
        lo, hi = self._cols(variables)
        span = (hi - lo)[:, None]
        degenerate = span == 0
        out = (np.asarray(values, dtype=float) - lo[:, None]) / np.where(degenerate, 1.0, span)
        return np.where(degenerate, 0.0, out)

    def denormalize(self, values: np.ndarray, variables: Sequence[str] | None = None) -> np.ndarray:
        lo, hi = self._cols(variables)
        return np.asarray(values, dtype=float) * (hi - lo)[:, None] + lo[:, None]

    def scale(self, variables: Sequence[str] | None = None) -> np.ndarray:
        """Range ``max - min`` per variable (the Jacobian of denormalize)."""
        lo, hi = self._cols(variables)
        return hi - lo

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "min": self.minimum.tolist(),
            "max": self.maximum.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(tuple(d["variables"]), np.asarray(d["min"], float), np.asarray(d["max"], float))


@dataclass
class Dataset:
    """Ordered daily profiles stored as a ``(days, variables, 48)`` array."""

    dates: list[dt.date]
    values: np.ndarray
    variables: tuple[str, ...] = VARIABLES
    stats: NormStats | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            self.values = self.values.reshape(0, len(self.variables), STEPS_PER_DAY)
        if self.values.shape[1:] != (len(self.variables), STEPS_PER_DAY):
            raise ValueError(f"values shape {self.values.shape} does not match variables {self.variables}")
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values disagree in length")

    def __len__(self) -> int:
        return len(self.dates)

    def subset(self, index: Iterable[int]) -> "Dataset":
        index = list(index)
        return Dataset([self.dates[i] for i in index], self.values[index], self.variables, self.stats)

    def select(self, variables: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.variables.index(v) for v in variables], :]

    def profiles(self) -> list[DailyProfile]:
        return [
            DailyProfile(d, {v: self.values[i, j].copy() for j, v in enumerate(self.variables)})
            for i, d in enumerate(self.dates)
        ]

    @classmethod
    def from_profiles(cls, profiles: Sequence[DailyProfile]) -> "Dataset":
        if not profiles:
            return cls([], np.empty((0, len(VARIABLES), STEPS_PER_DAY)))
        variables = tuple(profiles[0].values)
        for p in profiles:
            if tuple(p.values) != variables:
                raise ValueError(f"{p.date}: variable set differs from {variables}")
        values = np.stack([np.stack([p.values[v] for v in variables]) for p in profiles])
        return cls([p.date for p in profiles], values, variables)


# --------------------------------------------------------------------------
# raw ingestion


def read_raw(path: str | Path, units: str = "si", timestamp_column: str = "timestamp") -> pd.DataFrame:
    """Read a delimited raw HVAC file into a timestamp-indexed frame.

    ``units="us"`` converts °F to °C, cfm to m³/s and gpm to m³/h so that
    the result always carries the SI units used by :func:`derive_flows`.
    """
    df = pd.read_csv(path, sep=None, engine="python")
    df.columns = [c.strip().lower() for c in df.columns]
    timestamp_column = timestamp_column.lower()
    if timestamp_column not in df.columns:
        raise IngestionError(f"missing required column: {timestamp_column}")
    check_columns(df)
    df[timestamp_column] = pd.to_datetime(df[timestamp_column])
    df = df.set_index(timestamp_column).sort_index()
    if not df.index.is_unique:
        raise IngestionError("timestamps are not strictly increasing (duplicates found)")
    df = df[list(REQUIRED_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    if units == "us":
        temps = [c for c in df.columns if c.startswith("t_")]
        df[temps] = (df[temps] - 32.0) * 5.0 / 9.0
        vsa = [c for c in df.columns if c.startswith("v_sa")]
        df[vsa] = df[vsa] * _CFM_TO_M3S
        df["v_shw"] = df["v_shw"] * _GPM_TO_M3H
    elif units != "si":
        raise ValueError(f"unknown unit system {units!r}")
    return df


def check_columns(df: pd.DataFrame) -> None:
    for col in REQUIRED_COLUMNS:
        if col not in df.columns:
            raise IngestionError(f"missing required column: {col}")


def derive_flows(records: pd.DataFrame) -> pd.DataFrame:
    """Cooling flow per RTU and reheat water flow, in W, at the raw timestamps.

    ``v_shw`` is expected in m³/h and converted to m³/s here. The unknown
    heating correction factor is not applied.
    """
    check_columns(records)
    out = {}
    for i in range(1, N_RTU + 1):
        dT = records[f"t_sa_{i}"] - records[f"t_ma_{i}"]
        out[f"q_cool_{i}"] = records[f"v_sa_{i}"] * AIR_DENSITY * AIR_CP * dT
    v_shw = records["v_shw"] / 3600.0
    out["q_hw"] = v_shw * WATER_DENSITY * WATER_CP * (records["t_shw"] - records["t_rhw"])
    return pd.DataFrame(out, index=records.index)


def aggregate_and_resample(records: pd.DataFrame, flows: pd.DataFrame) -> pd.DataFrame:
    """Building-level half-hourly series of the four modelled variables.

    Every raw column is averaged inside each 30-minute bin first; RTU
    temperatures are then averaged and RTU cooling flows summed. A bin lacking
    samples for any contributing column comes out as NaN.
    """
    t_ra = records[[f"t_ra_{i}" for i in range(1, N_RTU + 1)]].resample(BIN).mean()
    t_oa = records[[f"t_oa_{i}" for i in range(1, N_RTU + 1)]].resample(BIN).mean()
    q_cool = flows[[f"q_cool_{i}" for i in range(1, N_RTU + 1)]].resample(BIN).mean()
    q_hw = flows["q_hw"].resample(BIN).mean()
    return pd.DataFrame(
        {
            T_RA: t_ra.mean(axis=1, skipna=False),
            T_OA: t_oa.mean(axis=1, skipna=False),
            Q_COOL: q_cool.sum(axis=1, min_count=N_RTU) / 1000.0,
            Q_HW: q_hw / 1000.0,
        }
    )


@dataclass
class SliceReport:
    kept: int = 0
    dropped: list[dt.date] = field(default_factory=list)


def slice_days(series: pd.DataFrame, variables: Sequence[str] = VARIABLES) -> tuple[Dataset, SliceReport]:
    """Cut a half-hourly frame into complete calendar days.

    Days with fewer than 48 finite bins for any variable are dropped and
    listed in the returned report.
    """
    report = SliceReport()
    if series.empty:
        return Dataset([], np.empty((0, len(variables), STEPS_PER_DAY)), tuple(variables)), report
    frame = series[list(variables)]
    dates, days = [], []
    for date, day in frame.groupby(frame.index.date):
        day = day[~day.index.duplicated()]
        complete = (
            len(day) == STEPS_PER_DAY
            and np.isfinite(day.to_numpy()).all()
            and (day.index - day.index[0] == pd.to_timedelta(np.arange(STEPS_PER_DAY) * 30, unit="min")).all()
            and day.index[0].time() == dt.time(0, 0)
        )
        if complete:
            dates.append(date)
            days.append(day.to_numpy().T)
        else:
            report.dropped.append(date)
    report.kept = len(dates)
    values = np.stack(days) if days else np.empty((0, len(variables), STEPS_PER_DAY))
    return Dataset(dates, values, tuple(variables)), report


def prepare(path: str | Path, units: str = "si") -> tuple[Dataset, SliceReport]:
    """Raw file to complete-day dataset in one call."""
    records = read_raw(path, units=units)
    flows = derive_flows(records)
    return slice_days(aggregate_and_resample(records, flows))


# --------------------------------------------------------------------------
# normalisation


def fit_stats(dataset: Dataset) -> NormStats:
    if len(dataset) == 0:
        raise ValueError("cannot fit normalisation statistics on an empty subset")
    lo = dataset.values.min(axis=(0, 2))
    hi = dataset.values.max(axis=(0, 2))
    return NormStats(dataset.variables, lo, hi)


def normalize(dataset: Dataset, fit_subset: Dataset | None = None) -> Dataset:
    """Min-max scale ``dataset`` with statistics from ``fit_subset``.

    The returned dataset carries the statistics so it can be inverted with
    :func:`denormalize`.
    """
    stats = fit_stats(dataset if fit_subset is None else fit_subset)
    return Dataset(list(dataset.dates), stats.normalize(dataset.values), dataset.variables, stats)


def denormalize(dataset: Dataset) -> Dataset:
    if dataset.stats is None:
        raise ValueError("dataset carries no normalisation statistics")
    return Dataset(list(dataset.dates), dataset.stats.denormalize(dataset.values), dataset.variables, None)


# --------------------------------------------------------------------------
# processed dataset file: one row per (day, variable), 48 value columns

_VALUE_COLUMNS = [f"t{i:02d}" for i in range(STEPS_PER_DAY)]


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    rows = []
    for i, date in enumerate(dataset.dates):
        for j, var in enumerate(dataset.variables):
            rows.append([date.isoformat(), var, *dataset.values[i, j]])
    frame = pd.DataFrame(rows, columns=["date", "variable", *_VALUE_COLUMNS])
    frame.to_csv(path, index=False, float_format="%.10g")


def read_dataset(path: str | Path) -> Dataset:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise IngestionError(f"cannot read dataset {path}: {exc}") from exc
    missing = {"date", "variable", *_VALUE_COLUMNS} - set(frame.columns)
    if missing:
        raise IngestionError(f"dataset file lacks columns: {sorted(missing)}")
    variables = tuple(dict.fromkeys(frame["variable"]))
    dates, days = [], []
    for date, group in frame.groupby("date", sort=False):
        group = group.set_index("variable")
        if tuple(group.index) != variables:
            raise IngestionError(f"{date}: variable rows {tuple(group.index)} differ from {variables}")
        dates.append(dt.date.fromisoformat(str(date)))
        days.append(group.loc[list(variables), _VALUE_COLUMNS].to_numpy(dtype=float))
    values = np.stack(days) if days else np.empty((0, len(variables), STEPS_PER_DAY))
    if not np.isfinite(values).all():
        raise IngestionError("dataset contains non-finite values")
    return Dataset(dates, values, variables)
