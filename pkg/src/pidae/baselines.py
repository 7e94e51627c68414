"""Classical imputation benchmarks: linear interpolation and k-nearest neighbours."""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np


def _fill_mask(shape: tuple[int, ...], mask: np.ndarray, channels: Sequence[int] | None) -> np.ndarray:
    """Boolean array of entries to impute, broadcast over channels."""
    n_channels = shape[-2]
    idx = list(range(n_channels)) if channels is None else list(channels)
    fill = np.zeros(shape, dtype=bool)
    fill[..., idx, :] = np.asarray(mask, dtype=bool)[..., None, :]
    return fill


def linear_interpolate(values, mask, channels: Sequence[int] | None = None) -> np.ndarray:
    """Straight-line fill between the observations bracketing each gap.

    Gaps touching either end of the day hold the nearest observed value.
    ``values`` is ``(C, L)`` or ``(days, C, L)``; ``mask`` matches the leading
    shape without the channel axis.
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    out = values.copy()
    fill = _fill_mask(values.shape, mask, channels)
    steps = np.arange(values.shape[-1])
    for index in np.ndindex(values.shape[:-1]):
        missing = fill[index]
        if not missing.any():
            continue
        if missing.all():
            raise ValueError("cannot interpolate a fully masked day: no observed anchors")
        observed = ~missing
        out[index][missing] = np.interp(steps[missing], steps[observed], values[index][observed])
    return out


def knn_impute(query, mask, reference, k: int = 5, channels: Sequence[int] | None = None,
               weights: str = "distance") -> np.ndarray:
    """Fill masked steps of one day from its ``k`` closest reference days.

    Distance is Euclidean over every entry observed in ``query`` (all
    channels concatenated). With ``weights="distance"`` neighbours are
    weighted by inverse distance; neighbours at distance zero, if any, are
    averaged on their own.
    """
    query = np.asarray(query, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if len(reference) == 0:
        raise ValueError("reference set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(reference):
        warnings.warn(f"k={k} exceeds reference size {len(reference)}; using {len(reference)}", stacklevel=2)
        k = len(reference)
    fill = _fill_mask(query.shape, mask, channels)
    observed = ~fill
    diff = (reference - query)[:, observed]
    dist = np.sqrt(np.sum(diff**2, axis=1))
    nearest = np.argsort(dist, kind="stable")[:k]
    d = dist[nearest]
    if weights == "uniform":
        w = np.full(k, 1.0 / k)
    elif weights == "distance":
        if np.any(d == 0):
            w = (d == 0).astype(float)
        else:
            w = 1.0 / d
        w = w / w.sum()
    else:
        raise ValueError(f"unknown weighting {weights!r}")
    estimate = np.tensordot(w, reference[nearest], axes=1)
    return np.where(fill, estimate, query)


def knn_impute_many(queries, masks, reference, k: int = 5, channels: Sequence[int] | None = None,
                    weights: str = "distance") -> np.ndarray:
    with warnings.catch_warnings():
        if k > len(reference):
            warnings.warn(f"k={k} exceeds reference size {len(reference)}; using {len(reference)}", stacklevel=2)
            warnings.simplefilter("ignore")
        return np.stack([knn_impute(q, m, reference, k, channels, weights) for q, m in zip(queries, masks)])


def mean_fill(values, mask, channels: Sequence[int] | None = None) -> np.ndarray:
    """Replace masked steps by the mean of the observed steps of the same day."""
    values = np.asarray(values, dtype=float)
    fill = _fill_mask(values.shape, mask, channels)
    observed = np.where(fill, 0.0, values)
    count = np.maximum((~fill).sum(axis=-1, keepdims=True), 1)
    return np.where(fill, observed.sum(axis=-1, keepdims=True) / count, values)
