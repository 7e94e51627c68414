"""Denoising autoencoder configurations, composite loss, training and imputation."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .corruption import DEFAULT_CRS, as_rng, augment, corrupt, draw_masks, make_mask
from .data import Q_COOL, Q_HW, STEPS_PER_DAY, T_OA, T_RA, DailyProfile, Dataset, NormStats, fit_stats
from .physics import PhysicsCoefficients, physics_loss_grad

log = logging.getLogger(__name__)

KIND_VARIABLES: dict[str, tuple[str, ...]] = {
    "Univariate_DAE_1": (T_RA,),
    "Univariate_DAE_2": (Q_HW,),
    "Univariate_DAE_3": (Q_COOL,),
    "Multivariate_DAE_1": (T_RA, Q_COOL, Q_HW),
    "Multivariate_DAE_2": (T_RA, Q_COOL, Q_HW, T_OA),
    "PI_DAE": (T_RA, Q_COOL, Q_HW, T_OA),
}
KINDS = tuple(KIND_VARIABLES)

# hyperparameter bounds (inclusive)
FILTER_RANGE = (5, 200)
KERNEL_RANGE = (1, 10)
LR_RANGE = (1e-4, 1e-1)
BATCH_RANGE = (32, 256)

CHECKPOINT_VERSION = 1


class SpecError(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message: str, history: dict):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    filters_external: int = 16
    filters_internal: int = 8
    kernel: int = 5
    learning_rate: float = 3e-3
    batch_size: int = 32
    physics_weight: float = 1.0
    physics_scaled: bool = True
    channels: int | None = None

    def __post_init__(self):
        self.validate()

    @property
    def physics(self) -> bool:
        return self.kind == "PI_DAE"

    @property
    def variables(self) -> tuple[str, ...]:
        return KIND_VARIABLES[self.kind]

    @property
    def targets(self) -> tuple[str, ...]:
        """Variables the model reconstructs (outdoor temperature is input only)."""
        return tuple(v for v in self.variables if v != T_OA)

    def validate(self) -> None:
        if self.kind not in KIND_VARIABLES:
            raise SpecError(f"unknown model kind {self.kind!r}")
        expected = len(KIND_VARIABLES[self.kind])
        if self.channels is not None and self.channels != expected:
            raise SpecError(f"{self.kind} takes {expected} channel(s), spec asks for {self.channels}")
        for name in ("filters_external", "filters_internal"):
            value = getattr(self, name)
            if not FILTER_RANGE[0] <= value <= FILTER_RANGE[1]:
                raise SpecError(f"{name}={value} outside {FILTER_RANGE}")
        if not KERNEL_RANGE[0] <= self.kernel <= KERNEL_RANGE[1]:
            raise SpecError(f"kernel={self.kernel} outside {KERNEL_RANGE}")
        if not LR_RANGE[0] <= self.learning_rate <= LR_RANGE[1]:
            raise SpecError(f"learning_rate={self.learning_rate} outside {LR_RANGE}")
        if not BATCH_RANGE[0] <= self.batch_size <= BATCH_RANGE[1]:
            raise SpecError(f"batch_size={self.batch_size} outside {BATCH_RANGE}")
        if self.physics_weight < 0:
            raise SpecError("physics_weight must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainLimits:
    max_epochs: int = 1000
    patience: int = 20
    min_delta: float = 0.0
    copies: int = 4
    crs: tuple[float, ...] = DEFAULT_CRS


class DAE:
    """An (untrained or trained) autoencoder plus optional physics coefficients."""

    def __init__(self, spec: ModelSpec, net: nn.Network, coeffs: np.ndarray | None):
        self.spec = spec
        self.net = net
        self.coeffs = coeffs

    @property
    def variables(self) -> tuple[str, ...]:
        return self.spec.variables

    @property
    def target_index(self) -> list[int]:
        return [self.variables.index(v) for v in self.spec.targets]

    def params(self) -> dict[str, np.ndarray]:
        out = self.net.params()
        if self.coeffs is not None:
            out["physics.coeffs"] = self.coeffs
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        state = dict(state)
        if self.coeffs is not None:
            self.coeffs[...] = state.pop("physics.coeffs")
        self.net.load_state_dict(state)

    @property
    def coefficients(self) -> PhysicsCoefficients | None:
        return None if self.coeffs is None else PhysicsCoefficients.from_array(self.coeffs)


def build(spec: ModelSpec, coefficient_init: Sequence[float] | PhysicsCoefficients = (1.0, 1.0, 1.0),
          seed=None) -> DAE:
    """Fresh network for ``spec``; PI_DAE also gets learnable ``(a, b, c)``."""
    spec.validate()
    rng = as_rng(seed)
    c = len(spec.variables)
    net = nn.conv_autoencoder(c, c, spec.filters_external, spec.filters_internal, spec.kernel, rng)
    coeffs = None
    if spec.physics:
        if isinstance(coefficient_init, PhysicsCoefficients):
            coefficient_init = coefficient_init.as_array()
        coeffs = np.array(coefficient_init, dtype=float)
        if coeffs.shape != (3,):
            raise SpecError("coefficient_init needs exactly three values")
    return DAE(spec, net, coeffs)


def total_loss(model: DAE, output: np.ndarray, target: np.ndarray, stats: NormStats | None = None,
               with_grad: bool = False):
    """Reconstruction MSE over target channels, plus the physics term for PI_DAE.

    ``output`` and ``target`` are normalised ``(batch, channels, 48)`` arrays
    in the model's variable order. The physics term is evaluated on
    denormalised values and needs ``stats``; the outdoor temperature it uses
    comes from ``target`` since that channel is never corrupted.

    Returns ``loss`` or, with ``with_grad``, ``(loss, d_output, d_coeffs)``.
    """
    idx = model.target_index
    diff = output[:, idx, :] - target[:, idx, :]
    loss = float(np.mean(diff**2))
    d_out = np.zeros_like(output)
    d_out[:, idx, :] = 2.0 * diff / diff.size
    d_coeffs = None if model.coeffs is None else np.zeros(3)

    weight = model.spec.physics_weight
    if model.spec.physics and weight != 0:
        if stats is None:
            raise ValueError("physics loss needs normalisation statistics")
        v = model.variables
        phys = stats.denormalize(output, v)
        clean = stats.denormalize(target, v)
        i_t, i_o, i_c, i_h = (v.index(n) for n in (T_RA, T_OA, Q_COOL, Q_HW))
        p_loss, g = physics_loss_grad(phys[:, i_t], clean[:, i_o], phys[:, i_c], phys[:, i_h], model.coeffs)
        if model.spec.physics_scaled:
            # residual measured in units of the indoor-temperature range
            k = 1.0 / max(stats.scale(v)[i_t], 1e-12) ** 2
            p_loss *= k
            g = {n: x * k for n, x in g.items()}
        loss += weight * p_loss
        scale = stats.scale(v)
        d_out[:, i_t] += weight * g["t_ra"] * scale[i_t]
        d_out[:, i_c] += weight * g["q_cool"] * scale[i_c]
        d_out[:, i_h] += weight * g["q_hw"] * scale[i_h]
        d_coeffs = weight * g["coeffs"]

    if with_grad:
        return loss, d_out, d_coeffs
    return loss


@dataclass
class TrainedModel:
    model: DAE
    stats: NormStats
    history: dict = field(default_factory=dict)
    best_epoch: int = -1
    limits: TrainLimits = field(default_factory=TrainLimits)

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    @property
    def coefficients(self) -> PhysicsCoefficients | None:
        return self.model.coefficients

    def impute(self, values, mask):
        return impute(self, values, mask)


def _corruptible(model: DAE) -> list[int]:
    return model.target_index


def validation_set(clean: np.ndarray, crs: Sequence[float], seed, channels: Sequence[int]):
    """One fixed mask per (day, rate) pair."""
    rng = as_rng(seed)
    masks = np.array([make_mask(cr, rng) for _ in range(len(clean)) for cr in crs]).reshape(-1, clean.shape[-1])
    targets = np.repeat(clean, len(crs), axis=0)
    return corrupt(targets, masks, channels), targets


def reconstruction_loss(model: DAE, inputs: np.ndarray, targets: np.ndarray) -> float:
    out = model.net(inputs)
    idx = model.target_index
    return float(np.mean((out[:, idx] - targets[:, idx]) ** 2))


def train(model: DAE, train_set: Dataset, val_set: Dataset, seed=None,
          limits: TrainLimits | None = None) -> TrainedModel:
    """Mini-batch Adam training with per-epoch re-masking and early stopping.

    Normalisation statistics come from ``train_set``. The returned model holds
    the parameters of the epoch with the lowest validation reconstruction
    loss.
    """
    limits = limits or TrainLimits()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    rng = as_rng(seed)
    spec = model.spec
    variables = model.variables
    stats = fit_stats(Dataset(train_set.dates, train_set.select(variables), variables))
    channels = _corruptible(model)

    clean = stats.normalize(train_set.select(variables))
    pairs = augment(clean, limits.copies, rng, limits.crs, channels)
    n_orig = len(clean)
    val_in, val_tgt = validation_set(stats.normalize(val_set.select(variables)), limits.crs, rng, channels)

    opt = nn.Adam(spec.learning_rate)
    history = {"train_loss": [], "val_loss": []}
    if model.coeffs is not None:
        history["coeffs"] = []
    best = (np.inf, -1, model.state_dict())
    batch = min(spec.batch_size, len(pairs))
    wait = 0

    for epoch in range(limits.max_epochs):
        if epoch and limits.copies:
            masks = draw_masks(len(pairs) - n_orig, limits.crs, rng)
            pairs.masks[n_orig:] = masks
            pairs.inputs[n_orig:] = corrupt(pairs.targets[n_orig:], masks, channels)
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), batch):
            sel = order[start : start + batch]
            out = model.net(pairs.inputs[sel])
            loss, d_out, d_coeffs = total_loss(model, out, pairs.targets[sel], stats, with_grad=True)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}", history)
            model.net.backward(d_out)
            grads = model.net.grads()
            if model.coeffs is not None:
                grads["physics.coeffs"] = d_coeffs
            try:
                opt.step(model.params(), grads)
            except nn.NonFiniteGradient as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", history) from exc
            losses.append(loss)

        val = reconstruction_loss(model, val_in, val_tgt)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}", history)
        history["train_loss"].append(float(np.mean(losses)))
        history["val_loss"].append(val)
        if model.coeffs is not None:
            history["coeffs"].append(model.coeffs.tolist())
        if val < best[0] - limits.min_delta:
            best = (val, epoch, model.state_dict())
            wait = 0
        else:
            wait += 1
            if wait >= limits.patience:
                break

    model.load_state_dict(best[2])
    log.debug("%s: best epoch %d of %d, val %.4g", spec.kind, best[1], len(history["val_loss"]), best[0])
    return TrainedModel(model, stats, history, best[1], limits)


def impute(trained: TrainedModel, values, mask) -> np.ndarray:
    """Fill masked steps of physical-unit profiles with the network output.

    ``values`` is a ``(channels, 48)`` or ``(days, channels, 48)`` array in
    the model's variable order (or a :class:`DailyProfile`); ``mask`` is one
    48-vector or one per day. Observed entries and the outdoor temperature are
    returned unchanged; network outputs are clipped to the training range.
    """
    model = trained.model
    variables = model.variables
    if isinstance(values, DailyProfile):
        missing = set(variables) - set(values.values)
        if missing:
            raise ValueError(f"profile lacks variables {sorted(missing)}")
        values = np.stack([values.values[v] for v in variables])
    values = np.asarray(values, dtype=float)
    single = values.ndim == 2
    if single:
        values = values[None]
    if values.shape[1:] != (len(variables), STEPS_PER_DAY):
        raise ValueError(f"expected (days, {len(variables)}, {STEPS_PER_DAY}) for {variables}, got {values.shape}")
    mask = np.asarray(mask, dtype=bool)
    masks = np.broadcast_to(mask, (len(values), STEPS_PER_DAY)) if mask.ndim == 1 else mask

    channels = _corruptible(model)
    x = corrupt(trained.stats.normalize(values, variables), masks, channels)
    recon = trained.stats.denormalize(np.clip(model.net(x), 0.0, 1.0), variables)
    fill = np.zeros(values.shape, dtype=bool)
    fill[:, channels, :] = masks[:, None, :]
    out = np.where(fill, recon, values)
    return out[0] if single else out


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(trained: TrainedModel, path: str | Path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": trained.spec.to_dict(),
        "stats": trained.stats.to_dict(),
        "best_epoch": trained.best_epoch,
        "history": trained.history,
        "limits": {**asdict(trained.limits), "crs": list(trained.limits.crs)},
    }
    arrays = {f"param::{k}": v for k, v in trained.model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        state = {k.split("::", 1)[1]: data[k].copy() for k in data.files if k.startswith("param::")}
    spec = ModelSpec.from_dict(meta["spec"])
    model = build(spec, seed=0)
    model.load_state_dict(state)
    limits = meta["limits"]
    limits["crs"] = tuple(limits["crs"])
    return TrainedModel(model, NormStats.from_dict(meta["stats"]), meta["history"], meta["best_epoch"],
                        TrainLimits(**limits))


def clone(trained: TrainedModel) -> TrainedModel:
    return copy.deepcopy(trained)
