"""Seeded random search over the autoencoder hyperparameters."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .corruption import as_rng
from .data import Dataset
from .models import BATCH_RANGE, FILTER_RANGE, KERNEL_RANGE, LR_RANGE, ModelSpec, TrainLimits, build, train

DEFAULT_BUDGET = 25


@dataclass(frozen=True)
class SearchSpace:
    filters: tuple[int, int] = FILTER_RANGE
    kernel: tuple[int, int] = KERNEL_RANGE
    learning_rate: tuple[float, float] = LR_RANGE
    batch_size: tuple[int, int] = BATCH_RANGE

    def sample(self, kind: str, rng: np.random.Generator, **fixed) -> ModelSpec:
        lo, hi = (math.log(v) for v in self.learning_rate)
        return ModelSpec(
            kind=kind,
            filters_external=int(rng.integers(self.filters[0], self.filters[1] + 1)),
            filters_internal=int(rng.integers(self.filters[0], self.filters[1] + 1)),
            kernel=int(rng.integers(self.kernel[0], self.kernel[1] + 1)),
            learning_rate=float(math.exp(rng.uniform(lo, hi))),
            batch_size=int(rng.integers(self.batch_size[0], self.batch_size[1] + 1)),
            **fixed,
        )


@dataclass
class TrainingObjective:
    """Best validation reconstruction loss of one budgeted training run."""

    train_set: Dataset
    val_set: Dataset
    seed: int = 0
    limits: TrainLimits | None = None

    def __call__(self, spec: ModelSpec) -> float:
        model = build(spec, seed=self.seed)
        trained = train(model, self.train_set, self.val_set, seed=self.seed + 1, limits=self.limits)
        return float(trained.history["val_loss"][trained.best_epoch])


def random_search(kind: str, budget: int, objective: Callable[[ModelSpec], float], seed=0,
                  space: SearchSpace | None = None, workers: int = 1, **fixed):
    """Evaluate ``budget`` sampled specs; return ``(best_spec, trial_log)``.

    Specs are drawn up front from ``seed`` so the trial sequence does not
    depend on ``workers``. The log is ordered by trial index.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    space = space or SearchSpace()
    rng = as_rng(seed)
    specs = [space.sample(kind, rng, **fixed) for _ in range(budget)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            scores = list(pool.map(objective, specs))
    else:
        scores = [objective(s) for s in specs]
    log = [
        {"trial": i, **{k: v for k, v in s.to_dict().items() if k != "channels"}, "objective": float(score)}
        for i, (s, score) in enumerate(zip(specs, scores))
    ]
    best = int(np.argmin(scores))
    return specs[best], log


def write_trial_log(log: list[dict], path: str | Path) -> None:
    if not log:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(log[0]))
        writer.writeheader()
        writer.writerows(log)
