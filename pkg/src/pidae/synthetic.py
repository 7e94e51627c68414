"""Synthetic daily profiles that satisfy the thermal balance with known coefficients."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .corruption import as_rng
from .data import STEPS_PER_DAY, VARIABLES, Dataset
from .physics import PhysicsCoefficients

DEFAULT_TRUTH = PhysicsCoefficients(0.1, 0.02, 0.05)
T_RA_RANGE = (0.0, 45.0)


class GenerationError(ValueError):
    pass


def _pulse(t: np.ndarray, amplitude: float, centre: float, width: float) -> np.ndarray:
    return amplitude * np.exp(-0.5 * ((t - centre) / width) ** 2)


def generate(
    a: float = DEFAULT_TRUTH.a,
    b: float = DEFAULT_TRUTH.b,
    c: float = DEFAULT_TRUTH.c,
    days: int = 100,
    noise: float = 0.0,
    seed=0,
    start: dt.date = dt.date(2021, 1, 1),
    initial_temperature: float = 21.0,
) -> Dataset:
    """Integrate the forward-difference balance over ``days`` independent days.

    Outdoor temperature is a diurnal sinusoid with a per-day offset; cooling
    and heating are Gaussian pulses (afternoon and morning) with random
    amplitudes in [0, 60] kW and [0, 20] kW. Indoor temperature starts each day
    at ``initial_temperature`` and gets i.i.d. normal noise of standard
    deviation ``noise`` after integration.
    """
    if days < 1:
        raise GenerationError("days must be >= 1")
    if noise < 0:
        raise GenerationError("noise must be >= 0")
    if abs(1.0 - a) >= 1.0:
        raise GenerationError(f"|1 - a| = {abs(1 - a):.3g} >= 1: the recursion diverges")

    rng = as_rng(seed)
    t = np.arange(STEPS_PER_DAY, dtype=float)
    values = np.empty((days, len(VARIABLES), STEPS_PER_DAY))
    for d in range(days):
        t_oa = 15.0 + 8.0 * np.sin(2.0 * np.pi * t / STEPS_PER_DAY - np.pi / 2.0) + rng.uniform(-4.0, 4.0)
        q_cool = _pulse(t, rng.uniform(0.0, 60.0), rng.uniform(24.0, 36.0), rng.uniform(3.0, 6.0))
        q_hw = _pulse(t, rng.uniform(0.0, 20.0), rng.uniform(8.0, 18.0), rng.uniform(2.0, 5.0))
        t_ra = np.empty(STEPS_PER_DAY)
        t_ra[0] = initial_temperature
        for k in range(STEPS_PER_DAY - 1):
            t_ra[k + 1] = t_ra[k] + a * (t_oa[k] - t_ra[k]) - b * q_cool[k] + c * q_hw[k]
        values[d] = np.stack([t_ra, t_oa, q_cool, q_hw])
    # drawn after every driver so the noise level never changes the inputs
    if noise:
        values[:, 0] += rng.normal(0.0, noise, (days, STEPS_PER_DAY))
    for d in range(days):
        lo, hi = values[d, 0].min(), values[d, 0].max()
        if lo < T_RA_RANGE[0] or hi > T_RA_RANGE[1]:
            raise GenerationError(
                f"day {d}: indoor temperature left {T_RA_RANGE} (min {lo:.2f}, max {hi:.2f}); "
                f"coefficients ({a}, {b}, {c}) are outside the supported box"
            )
    dates = [start + dt.timedelta(days=i) for i in range(days)]
    return Dataset(dates, values, VARIABLES)
