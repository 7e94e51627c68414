"""Continuous-gap masking noise for daily profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import STEPS_PER_DAY, T_OA, DailyProfile

DEFAULT_CRS = (0.2, 0.4, 0.6, 0.8)


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gap_length(cr: float, steps: int = STEPS_PER_DAY) -> int:
    """Number of missing steps for corruption rate ``cr`` (round half up)."""
    if not 0 < cr <= 1:
        raise ValueError(f"corruption rate must lie in (0, 1], got {cr}")
    return min(steps, int(math.floor(cr * steps + 0.5)))


def make_mask(cr: float, seed=None, steps: int = STEPS_PER_DAY) -> np.ndarray:
    """Boolean mask with one contiguous missing run (``True`` = missing).

    The start index is uniform over the positions that keep the whole run
    inside the day.
    """
    length = gap_length(cr, steps)
    start = int(as_rng(seed).integers(0, steps - length + 1))
    mask = np.zeros(steps, dtype=bool)
    mask[start : start + length] = True
    return mask


def draw_masks(n: int, crs: Sequence[float], seed=None, steps: int = STEPS_PER_DAY) -> np.ndarray:
    """``n`` independent masks, each at a rate drawn uniformly from ``crs``."""
    rng = as_rng(seed)
    masks = np.zeros((n, steps), dtype=bool)
    for i in range(n):
        masks[i] = make_mask(crs[int(rng.integers(len(crs)))], rng, steps)
    return masks


def corrupt(profile, mask: np.ndarray, channels: Sequence[int] | Sequence[str] | None = None):
    """Zero the masked steps of the selected channels.

    ``profile`` is either a ``(..., C, 48)`` array (``channels`` are indices,
    default all) or a :class:`DailyProfile` (``channels`` are variable names,
    default all). The outdoor temperature of a ``DailyProfile`` is never
    touched. ``mask`` may be a single 48-vector or one per leading row.
    """
    mask = np.asarray(mask, dtype=bool)
    if isinstance(profile, DailyProfile):
        names = list(profile.values) if channels is None else list(channels)
        out = {}
        for name, arr in profile.values.items():
            arr = arr.copy()
            if name in names and name != T_OA:
                arr[mask] = 0.0
            out[name] = arr
        return DailyProfile(profile.date, out)

    out = np.array(profile, dtype=float, copy=True)
    idx = list(range(out.shape[-2])) if channels is None else list(channels)
    if mask.ndim == 1:
        out[..., idx, :] = np.where(mask, 0.0, out[..., idx, :])
    else:
        out[..., idx, :] = np.where(mask[:, None, :], 0.0, out[..., idx, :])
    return out


@dataclass
class TrainingPairs:
    """Corrupted inputs, clean targets and the masks that produced them."""

    inputs: np.ndarray
    targets: np.ndarray
    masks: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)


def augment(
    clean: np.ndarray,
    copies: int,
    seed=None,
    crs: Sequence[float] = DEFAULT_CRS,
    channels: Sequence[int] | None = None,
) -> TrainingPairs:
    """Stack ``copies`` masked duplicates of every day after the originals.

    Originals keep an empty mask. Output holds ``(copies + 1) * len(clean)``
    pairs; each duplicate gets an independent mask at a rate drawn from
    ``crs``.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    clean = np.asarray(clean, dtype=float)
    n = len(clean)
    targets = np.concatenate([clean] * (copies + 1)) if n else clean.copy()
    masks = np.zeros((len(targets), clean.shape[-1]), dtype=bool)
    if copies:
        masks[n:] = draw_masks(n * copies, crs, seed, clean.shape[-1])
    inputs = corrupt(targets, masks, channels)
    return TrainingPairs(inputs, targets, masks)
