"""TOML run configuration: data, corruption, model specs, tuning and harness settings."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .corruption import DEFAULT_CRS
from .harness import DESK_CRS, HarnessConfig, default_specs
from .models import KINDS, ModelSpec, TrainLimits
from .synthetic import DEFAULT_TRUTH
from .tuning import DEFAULT_BUDGET


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    dataset: str | None = None
    units: str = "si"
    case2_thresholds: tuple[float, float] = (50.0, 20.0)
    synthetic_days: int = 19
    synthetic_noise: float = 0.0
    synthetic_truth: tuple[float, float, float] = (DEFAULT_TRUTH.a, DEFAULT_TRUTH.b, DEFAULT_TRUTH.c)
    synthetic_seed: int = 0


@dataclass
class TuningConfig:
    budget: int = DEFAULT_BUDGET
    tr: float = 0.5
    split_seed: int = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    cases: tuple[str, ...] = ("Case2", "Synthetic")


def _pick(cls, table: dict, section: str, tuples=()):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{section}] has unknown keys {sorted(unknown)}")
    return {k: tuple(v) if k in tuples else v for k, v in table.items()}


def load(path: str | Path | None = None, paper_scale: bool = False, seed: int | None = None,
         workers: int | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, an optional TOML file and CLI overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(raw) - {"data", "corruption", "model", "tuning", "harness"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    data = DataConfig(**_pick(DataConfig, raw.get("data", {}), "data",
                              ("case2_thresholds", "synthetic_truth")))
    tuning = TuningConfig(**_pick(TuningConfig, raw.get("tuning", {}), "tuning"))

    specs = default_specs()
    for kind, table in raw.get("model", {}).items():
        if kind not in KINDS:
            raise ConfigError(f"[model.{kind}] is not a model kind; expected one of {KINDS}")
        try:
            specs[kind] = ModelSpec.from_dict({**specs[kind].to_dict(), **table, "kind": kind})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[model.{kind}]: {exc}") from exc

    h = dict(raw.get("harness", {}))
    corruption = raw.get("corruption", {})
    cases = tuple(h.pop("cases", ("Case2", "Synthetic")))
    limit_keys = {"max_epochs", "patience", "min_delta"}
    limit_kw = {k: h.pop(k) for k in list(h) if k in limit_keys}
    base = HarnessConfig.paper_scale() if paper_scale else HarnessConfig()
    crs = tuple(corruption.get("rates", base.corruption_rates))
    limits = TrainLimits(crs=crs, copies=corruption.get("copies", 4), **limit_kw)
    harness_kw = _pick(HarnessConfig, h, "harness", ("training_rates", "models"))
    harness = replace(base, specs=specs, limits=limits, corruption_rates=crs, **harness_kw)
    if seed is not None:
        harness.seed = seed
    if workers is not None:
        harness.workers = workers
    for case in cases:
        if case not in ("Case1", "Case2", "Synthetic"):
            raise ConfigError(f"unknown case {case!r}")
    return RunConfig(data, harness, tuning, cases)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def write_model_specs(path: str | Path, specs: dict[str, ModelSpec]) -> None:
    """Merge tuned specs into ``path`` as ``[model.<kind>]`` tables.

    Other sections already in the file are kept.
    """
    path = Path(path)
    existing = {}
    if path.exists():
        with open(path, "rb") as fh:
            existing = tomllib.load(fh)
    existing.setdefault("model", {})
    for kind, spec in specs.items():
        existing["model"][kind] = {k: v for k, v in spec.to_dict().items() if k not in ("kind", "channels")}
    lines = []
    for section, table in existing.items():
        if section == "model":
            continue
        lines.append(f"[{section}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in table.items()]
        lines.append("")
    for kind, table in existing["model"].items():
        lines.append(f"[model.{kind}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in table.items()]
        lines.append("")
    path.write_text("\n".join(lines))


__all__ = ["ConfigError", "DataConfig", "RunConfig", "TuningConfig", "load", "write_model_specs",
           "DEFAULT_CRS", "DESK_CRS"]
