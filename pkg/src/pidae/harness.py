"""Splits, RMSE evaluation and the ablation / coefficient / timing experiments."""

from __future__ import annotations

import csv
import logging
import math
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import knn_impute_many, linear_interpolate
from .corruption import DEFAULT_CRS, make_mask
from .data import Q_COOL, Q_HW, T_RA, Dataset, fit_stats
from .models import KINDS, ModelSpec, TrainedModel, TrainLimits, build, impute, train

log = logging.getLogger(__name__)

VAL_RATE = 0.1
TARGETS = (Q_COOL, Q_HW, T_RA)
BASELINES = ("LIN", "KNN")
ALL_MODELS = BASELINES + KINDS
PAPER_TRS = (0.1, 0.2, 0.3, 0.4, 0.5)
DESK_TRS = (0.1, 0.5)
DESK_CRS = (0.2, 0.8)


class SplitError(ValueError):
    pass


def split(dataset: Dataset, tr: float, seed) -> tuple[Dataset, Dataset, Dataset]:
    """Random train/validation/evaluation partition.

    Train gets ``floor(tr * N)`` days, validation ``max(1, floor(0.1 * N))``
    and evaluation the rest.
    """
    if not 0 < tr <= 0.5:
        raise SplitError(f"training rate must lie in (0, 0.5], got {tr}")
    n = len(dataset)
    n_train = math.floor(tr * n + 1e-9)
    n_val = max(1, math.floor(VAL_RATE * n + 1e-9))
    if n_train < 1 or n - n_train - n_val < 1:
        raise SplitError(f"{n} days are too few for tr={tr}: need non-empty train, validation and evaluation sets")
    order = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(order[:n_train])
    val_idx = np.sort(order[n_train : n_train + n_val])
    eval_idx = np.sort(order[n_train + n_val :])
    return dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(eval_idx)


def rmse(imputed: np.ndarray, truth: np.ndarray, mask: np.ndarray,
         variables: Sequence[str] | None = None) -> dict[str, float] | np.ndarray:
    """Per-variable RMSE over masked entries only, pooled over days.

    ``imputed`` and ``truth`` are ``(days, C, 48)`` (or ``(C, 48)``); ``mask``
    is ``(days, 48)`` (or ``(48,)``) and applies to every channel.
    """
    imputed = np.asarray(imputed, dtype=float)
    truth = np.asarray(truth, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if imputed.shape != truth.shape:
        raise ValueError(f"shape mismatch {imputed.shape} vs {truth.shape}")
    if imputed.ndim == 2:
        imputed, truth, mask = imputed[None], truth[None], mask[None]
    if not mask.any():
        raise ValueError("rmse needs at least one masked entry")
    sq = (imputed - truth) ** 2
    per_channel = np.sqrt(np.array([sq[:, c][mask].mean() for c in range(sq.shape[1])]))
    if variables is None:
        return per_channel
    return dict(zip(variables, per_channel.tolist()))


# --------------------------------------------------------------------------
# configuration


def default_specs() -> dict[str, ModelSpec]:
    specs = {kind: ModelSpec(kind) for kind in KINDS}
    specs["PI_DAE"] = replace(specs["Multivariate_DAE_2"], kind="PI_DAE")
    return specs


@dataclass
class HarnessConfig:
    training_rates: tuple[float, ...] = DESK_TRS
    corruption_rates: tuple[float, ...] = DESK_CRS
    split_seeds: int = 3
    restarts: int = 3
    models: tuple[str, ...] = ALL_MODELS
    specs: dict[str, ModelSpec] = field(default_factory=default_specs)
    limits: TrainLimits = field(default_factory=lambda: TrainLimits(crs=DESK_CRS))
    knn_k: int = 5
    seed: int = 0
    workers: int = 1

    @classmethod
    def paper_scale(cls, **kw) -> "HarnessConfig":
        kw.setdefault("limits", TrainLimits(crs=DEFAULT_CRS))
        return cls(training_rates=PAPER_TRS, corruption_rates=DEFAULT_CRS, split_seeds=10, restarts=10, **kw)

    def spec_for(self, kind: str) -> ModelSpec:
        spec = self.specs.get(kind, ModelSpec(kind))
        if kind == "PI_DAE":
            # identical hyperparameters to the multivariate model it extends
            base = self.specs.get("Multivariate_DAE_2", ModelSpec("Multivariate_DAE_2"))
            spec = replace(base, kind="PI_DAE", physics_weight=spec.physics_weight,
                           physics_scaled=spec.physics_scaled)
        return spec


def _case_id(case: str) -> int:
    return zlib.crc32(case.encode())


def training_seed(base: int, case: str, tr: float, split_seed: int, restart: int) -> np.random.SeedSequence:
    """Seed for one restart; independent of the model kind so that
    PI_DAE and Multivariate_DAE_2 start from identical weights."""
    return np.random.SeedSequence([base, _case_id(case), round(tr * 1000), split_seed, restart])


def eval_masks(base: int, case: str, split_seed: int, cr: float, n_days: int) -> np.ndarray:
    rng = np.random.default_rng([base, _case_id(case), split_seed, round(cr * 1000), 7])
    return np.array([make_mask(cr, rng) for _ in range(n_days)]).reshape(n_days, -1)


def split_seed_value(base: int, case: str, split_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base, _case_id(case), split_seed, 3])


# --------------------------------------------------------------------------
# training with restarts


def train_best_of(spec: ModelSpec, train_set: Dataset, val_set: Dataset, seeds: Iterable,
                  limits: TrainLimits, coefficient_init=(1.0, 1.0, 1.0)) -> tuple[TrainedModel, float]:
    """Train once per seed, keep the restart with the lowest validation loss.

    Returns the winner and the wall-clock time of the whole protocol.
    """
    start = time.perf_counter()
    best, best_val = None, np.inf
    for seed in seeds:
        init_seq, train_seq = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key).spawn(2)
        model = build(spec, coefficient_init, seed=np.random.default_rng(init_seq))
        trained = train(model, train_set, val_set, seed=np.random.default_rng(train_seq), limits=limits)
        val = trained.history["val_loss"][trained.best_epoch]
        if val < best_val:
            best, best_val = trained, val
    return best, time.perf_counter() - start


# --------------------------------------------------------------------------
# ablation


@dataclass(frozen=True)
class Job:
    case: str
    tr: float
    split_seed: int
    model: str

    def key(self):
        return (self.case, self.tr, self.split_seed, ALL_MODELS.index(self.model) if self.model in ALL_MODELS else 99,
                self.model)


@dataclass
class JobResult:
    job: Job
    rmse_rows: list[dict] = field(default_factory=list)
    coefficients: tuple[float, float, float] | None = None
    running_time: float = 0.0
    error: str | None = None


def _impute_eval(model_name: str, job: Job, cfg: HarnessConfig, train_set: Dataset, val_set: Dataset,
                 eval_set: Dataset, trained: TrainedModel | None) -> list[dict]:
    rows = []
    truth_all = eval_set.values
    for cr in cfg.corruption_rates:
        masks = eval_masks(cfg.seed, job.case, job.split_seed, cr, len(eval_set))
        if model_name == "LIN":
            variables = eval_set.variables
            channels = [variables.index(v) for v in TARGETS]
            imputed = linear_interpolate(truth_all, masks, channels)
        elif model_name == "KNN":
            variables = eval_set.variables
            channels = [variables.index(v) for v in TARGETS]
            stats = fit_stats(train_set)
            ref = stats.normalize(train_set.values)
            query = stats.normalize(truth_all)
            imputed = stats.denormalize(knn_impute_many(query, masks, ref, cfg.knn_k, channels))
        else:
            variables = trained.model.variables
            imputed = impute(trained, eval_set.select(variables), masks)
        truth = eval_set.select(variables)
        scores = rmse(imputed, truth, masks, variables)
        targets = TARGETS if model_name in BASELINES else trained.spec.targets
        for var in TARGETS:
            if var in targets:
                rows.append(
                    {"case": job.case, "model": model_name, "tr": job.tr, "split": job.split_seed,
                     "cr": cr, "variable": var, "rmse": scores[var]}
                )
    return rows


def run_job(job: Job, dataset: Dataset, cfg: HarnessConfig) -> JobResult:
    result = JobResult(job)
    try:
        train_set, val_set, eval_set = split(dataset, job.tr, split_seed_value(cfg.seed, job.case, job.split_seed))
        trained = None
        if job.model not in BASELINES:
            seeds = [training_seed(cfg.seed, job.case, job.tr, job.split_seed, r) for r in range(cfg.restarts)]
            trained, result.running_time = train_best_of(cfg.spec_for(job.model), train_set, val_set, seeds,
                                                         cfg.limits)
            if trained.coefficients is not None:
                c = trained.coefficients
                result.coefficients = (c.a, c.b, c.c)
        result.rmse_rows = _impute_eval(job.model, job, cfg, train_set, val_set, eval_set, trained)
    except Exception as exc:  # a failed cell must not stop the grid
        result.error = f"{type(exc).__name__}: {exc}"
        log.error("cell %s failed: %s\n%s", job, exc, traceback.format_exc())
    return result


def _run_job_star(args):
    return run_job(*args)


@dataclass
class AblationResult:
    results: list[JobResult]

    @property
    def failed(self) -> list[JobResult]:
        return [r for r in self.results if r.error]

    def rows(self) -> list[dict]:
        return [row for r in self.results for row in r.rmse_rows]


def run_ablation(cases: dict[str, Dataset], cfg: HarnessConfig) -> AblationResult:
    """Every (case, training rate, split seed, model) cell; results sorted by cell key."""
    jobs = [
        Job(case, tr, s, model)
        for case in cases
        for tr in cfg.training_rates
        for s in range(cfg.split_seeds)
        for model in cfg.models
    ]
    args = [(job, cases[job.case], cfg) for job in jobs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_job_star, args))
        if any(r.error for r in results):
            for r in results:
                if r.error:
                    log.error("cell %s failed: %s", r.job, r.error)
    else:
        results = [run_job(*a) for a in args]
    results.sort(key=lambda r: r.job.key())
    return AblationResult(results)


# --------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6g}"
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _model_order(name: str) -> int:
    return ALL_MODELS.index(name) if name in ALL_MODELS else len(ALL_MODELS)


def summarize(ablation: AblationResult) -> dict[str, list[tuple]]:
    """Aggregate raw RMSE rows into the per-CR, table and spread reports."""
    raw = ablation.rows()
    groups: dict[tuple, list[float]] = {}
    for r in raw:
        groups.setdefault((r["case"], r["model"], r["tr"], r["cr"], r["variable"]), []).append(r["rmse"])

    def sort_key(k):
        return (k[0], _model_order(k[1]), k[1], k[2], k[3], TARGETS.index(k[4]))

    by_cr = []
    for key in sorted(groups, key=sort_key):
        vals = np.array(groups[key])
        by_cr.append((*key, float(vals.mean()), float(vals.std()), len(vals)))

    # average over seeds within each CR, then over CRs
    table: dict[tuple, list[float]] = {}
    for case, model, tr, cr, var, mean, _, _ in by_cr:
        table.setdefault((case, model, tr, var), []).append(mean)
    # alternative order: average over CRs within each seed, then over seeds
    per_seed: dict[tuple, dict[int, list[float]]] = {}
    for r in raw:
        per_seed.setdefault((r["case"], r["model"], r["tr"], r["variable"]), {}).setdefault(r["split"], []).append(
            r["rmse"]
        )
    lin = {(k[0], k[2], k[3]): float(np.mean(v)) for k, v in table.items() if k[1] == "LIN"}

    def table_key(k):
        return (k[0], k[2], _model_order(k[1]), k[1], TARGETS.index(k[3]))

    table_rows, spread_rows = [], []
    for key in sorted(table, key=table_key):
        case, model, tr, var = key
        mean = float(np.mean(table[key]))
        alt = float(np.mean([np.mean(v) for v in per_seed[key].values()]))
        base = lin.get((case, tr, var), float("nan"))
        pct = 100.0 * (mean - base) / base if base and not math.isnan(base) else float("nan")
        table_rows.append((case, model, tr, var, mean, alt, pct))
        spread_rows.append((case, model, tr, var, float(np.std(table[key])), len(table[key])))
    return {"by_cr": by_cr, "table": table_rows, "spread": spread_rows}


def coefficient_rows(ablation: AblationResult) -> list[tuple]:
    groups: dict[tuple, list[tuple]] = {}
    for r in ablation.results:
        if r.coefficients is not None:
            groups.setdefault((r.job.case, r.job.tr), []).append(r.coefficients)
    rows = []
    for key in sorted(groups):
        arr = np.array(groups[key])
        rows.append((*key, *arr.mean(axis=0).tolist(), *arr.std(axis=0).tolist(), len(arr)))
    return rows


def write_reports(ablation: AblationResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the deterministic reports plus a separate timing file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(ablation)
    paths = {
        "results": out / "results.csv",
        "rmse_by_cr": out / "rmse_by_cr.csv",
        "table": out / "rmse_table.csv",
        "cr_spread": out / "rmse_cr_spread.csv",
        "coefficients": out / "coefficients.csv",
        "failures": out / "failures.csv",
        "timing": out / "running_time.csv",
    }
    _write_csv(
        paths["results"],
        ["case", "model", "tr", "split", "cr", "variable", "rmse"],
        ([r[k] for k in ("case", "model", "tr", "split", "cr", "variable", "rmse")] for r in ablation.rows()),
    )
    _write_csv(paths["rmse_by_cr"], ["case", "model", "tr", "cr", "variable", "rmse_mean", "rmse_std", "n"],
               summary["by_cr"])
    _write_csv(paths["table"], ["case", "model", "tr", "variable", "rmse", "rmse_seed_first", "pct_vs_lin"],
               summary["table"])
    _write_csv(paths["cr_spread"], ["case", "model", "tr", "variable", "rmse_std_over_cr", "n_cr"],
               summary["spread"])
    _write_csv(paths["coefficients"], ["case", "tr", "a", "b", "c", "a_std", "b_std", "c_std", "n"],
               coefficient_rows(ablation))
    _write_csv(paths["failures"], ["case", "tr", "split", "model", "error"],
               ((r.job.case, r.job.tr, r.job.split_seed, r.job.model, r.error) for r in ablation.failed))
    _write_csv(paths["timing"], ["case", "model", "tr", "split", "running_time_s"],
               ((r.job.case, r.job.model, r.job.tr, r.job.split_seed, r.running_time)
                for r in ablation.results if r.job.model not in BASELINES))
    return paths


# --------------------------------------------------------------------------
# coefficient convergence


@dataclass
class CoefficientStudy:
    starts: np.ndarray
    finals: np.ndarray

    def rows(self) -> list[tuple]:
        """One ``(trial, coefficient, start, final)`` row per coefficient."""
        return [
            (i, name, float(self.starts[i, j]), float(self.finals[i, j]))
            for i in range(len(self.starts))
            for j, name in enumerate("abc")
        ]

    @property
    def mean(self) -> np.ndarray:
        return self.finals.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.finals.std(axis=0)

    @property
    def relative_dispersion(self) -> np.ndarray:
        return self.std / np.abs(self.mean)


def coefficient_study(dataset: Dataset, tr: float, trials: int, spec: ModelSpec | None = None,
                      limits: TrainLimits | None = None, seed: int = 0, case: str = "study",
                      split_seed: int = 0, starts: np.ndarray | None = None) -> CoefficientStudy:
    """Train PI_DAE from ``trials`` random starting coefficients in [0, 1).

    Split and network seeds are those of restart 0 in :func:`run_ablation`, so
    a single trial started at ``(1, 1, 1)`` reproduces the ablation's
    coefficients when ``restarts == 1``.
    """
    spec = spec or default_specs()["PI_DAE"]
    limits = limits or TrainLimits()
    train_set, val_set, _ = split(dataset, tr, split_seed_value(seed, case, split_seed))
    if starts is None:
        starts = np.random.default_rng([seed, 11]).random((trials, 3))
    starts = np.asarray(starts, dtype=float).reshape(-1, 3)
    finals = []
    for start in starts:
        s = training_seed(seed, case, tr, split_seed, 0)
        trained, _ = train_best_of(spec, train_set, val_set, [s], limits, coefficient_init=start)
        finals.append(trained.model.coeffs.copy())
    return CoefficientStudy(starts, np.array(finals))


# --------------------------------------------------------------------------
# timing


def timing_report(models: dict[str, TrainedModel], dataset: Dataset, day_counts: Sequence[int] | None = None,
                  repeats: int = 3, cr: float = 0.4, seed: int = 0) -> list[tuple[str, int, float]]:
    """Wall-clock seconds to impute the first ``d`` days, one day at a time.

    Each pass records a cumulative clock reading after every day; the
    reported time for ``d`` days is the fastest pass, so it cannot decrease
    with ``d``.
    """
    n = len(dataset)
    day_counts = list(range(1, n + 1)) if day_counts is None else list(day_counts)
    if not day_counts:
        return []
    horizon = max(day_counts)
    if horizon > n:
        raise ValueError(f"asked for {horizon} days, dataset has {n}")
    rng = np.random.default_rng(seed)
    masks = np.array([make_mask(cr, rng) for _ in range(horizon)])
    rows = []
    for name, trained in models.items():
        values = dataset.select(trained.model.variables)[:horizon]
        best = np.full(horizon, np.inf)
        for _ in range(repeats):
            cumulative = np.empty(horizon)
            t0 = time.perf_counter()
            for d in range(horizon):
                impute(trained, values[d], masks[d])
                cumulative[d] = time.perf_counter() - t0
            best = np.minimum(best, cumulative)
        rows.extend((name, d, float(best[d - 1])) for d in day_counts)
    return rows
