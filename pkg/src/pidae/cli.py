"""Command-line entry point (``pidae``).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 one or more ablation cells failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import correlation, data, harness, models, synthetic, tuning
from .corruption import make_mask

log = logging.getLogger("pidae")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CELL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0, help="base random seed")
    p.add_argument("--workers", type=int, default=default, help="parallel worker processes")
    p.add_argument("--config", type=Path, default=default, help="TOML run configuration")
    p.add_argument("--paper-scale", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="full 10-seed / 10-restart / 5-TR / 4-CR grid")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pidae", description="Physics-informed denoising autoencoders for HVAC data imputation.",
                     parents=[_global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_flags(True)]

    p = sub.add_parser("prepare", parents=common, help="raw sensor log -> daily dataset")
    p.add_argument("raw", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--units", choices=("si", "us"), default="si")

    p = sub.add_parser("filter", parents=common, help="IQR threshold grid and pooled correlations")
    p.add_argument("dataset", type=Path)
    p.add_argument("--cool-grid", type=_float_list, default=list(correlation.DEFAULT_GRID))
    p.add_argument("--heat-grid", type=_float_list, default=list(correlation.DEFAULT_GRID))
    p.add_argument("-o", "--output", type=Path, help="write the table here instead of stdout")
    p.add_argument("--select", type=float, nargs=2, metavar=("COOL", "HEAT"),
                   help="write the subset passing these thresholds to --subset-output")
    p.add_argument("--subset-output", type=Path)

    p = sub.add_parser("synth", parents=common, help="generate a synthetic dataset with known coefficients")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--days", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--a", type=float, default=synthetic.DEFAULT_TRUTH.a)
    p.add_argument("--b", type=float, default=synthetic.DEFAULT_TRUTH.b)
    p.add_argument("--c", type=float, default=synthetic.DEFAULT_TRUTH.c)

    p = sub.add_parser("tune", parents=common, help="random search over hyperparameters")
    p.add_argument("dataset", type=Path)
    p.add_argument("--kind", choices=models.KINDS, required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--tr", type=float)
    p.add_argument("--cr", type=float, help="tune at this corruption rate only (default: configured set)")
    p.add_argument("--spec-output", type=Path, help="TOML file receiving [model.<kind>] (default: --config)")
    p.add_argument("--log", type=Path, help="trial log CSV")

    p = sub.add_parser("train", parents=common, help="train one model and save a checkpoint")
    p.add_argument("dataset", type=Path)
    p.add_argument("--kind", choices=models.KINDS, required=True)
    p.add_argument("--tr", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("evaluate", parents=common, help="RMSE of a checkpoint on masked days")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--crs", type=_float_list)

    p = sub.add_parser("ablation", parents=common, help="run the model x TR x CR x seed grid")
    p.add_argument("--dataset", type=Path, help="prepared full dataset (Case 1; Case 2 is filtered from it)")
    p.add_argument("-o", "--output", type=Path, required=True, help="report directory")

    p = sub.add_parser("coeff-study", parents=common, help="PI-DAE coefficients from random starts")
    p.add_argument("dataset", type=Path)
    p.add_argument("--tr", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("timing", parents=common, help="inference time versus number of days")
    p.add_argument("dataset", type=Path)
    p.add_argument("--checkpoint", type=Path, action="append", required=True)
    p.add_argument("--days", type=int, help="largest day count (default: all)")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("-o", "--output", type=Path)
    return parser


# --------------------------------------------------------------------------
# commands


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _rows_to_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_prepare(args, run) -> int:
    dataset, report = data.prepare(args.raw, args.units)
    data.write_dataset(dataset, args.output)
    log.warning("kept %d days, dropped %d", report.kept, len(report.dropped))
    for day in report.dropped:
        log.info("dropped incomplete day %s", day)
    return EXIT_OK


def cmd_filter(args, run) -> int:
    dataset = data.read_dataset(args.dataset)
    rows = correlation.correlation_table(dataset, args.cool_grid, args.heat_grid)
    _emit(correlation.format_table(rows), args.output)
    if args.select:
        if args.subset_output is None:
            raise UsageError("--select needs --subset-output")
        data.write_dataset(correlation.filter_days(dataset, *args.select), args.subset_output)
    return EXIT_OK


def cmd_synth(args, run) -> int:
    dataset = synthetic.generate(args.a, args.b, args.c, days=args.days, noise=args.noise, seed=args.seed)
    data.write_dataset(dataset, args.output)
    return EXIT_OK


def cmd_tune(args, run) -> int:
    dataset = data.read_dataset(args.dataset)
    tr = args.tr if args.tr is not None else run.tuning.tr
    budget = args.budget if args.budget is not None else run.tuning.budget
    h = run.harness
    train_set, val_set, _ = harness.split(dataset, tr, harness.split_seed_value(h.seed, "tune", run.tuning.split_seed))
    limits = h.limits if args.cr is None else replace(h.limits, crs=(args.cr,))
    objective = tuning.TrainingObjective(train_set, val_set, seed=h.seed, limits=limits)
    fixed = {}
    if args.kind == "PI_DAE":
        spec = h.specs["PI_DAE"]
        fixed = {"physics_weight": spec.physics_weight, "physics_scaled": spec.physics_scaled}
    best, trials = tuning.random_search(args.kind, budget, objective, seed=h.seed, workers=h.workers, **fixed)
    if args.log:
        tuning.write_trial_log(trials, args.log)
    target = args.spec_output or args.config
    if target is None:
        raise UsageError("tune needs --spec-output or --config to store the best spec")
    cfgmod.write_model_specs(target, {args.kind: best})
    print(f"best {args.kind}: {best.to_dict()}")
    return EXIT_OK


def cmd_train(args, run) -> int:
    dataset = data.read_dataset(args.dataset)
    h = run.harness
    train_set, val_set, _ = harness.split(dataset, args.tr, harness.split_seed_value(h.seed, "train", args.split_seed))
    seeds = [harness.training_seed(h.seed, "train", args.tr, args.split_seed, r) for r in range(h.restarts)]
    trained, seconds = harness.train_best_of(h.spec_for(args.kind), train_set, val_set, seeds, h.limits)
    models.save_checkpoint(trained, args.output)
    log.warning("trained %s in %.1f s (best epoch %d)", args.kind, seconds, trained.best_epoch)
    if trained.coefficients is not None:
        c = trained.coefficients
        print(f"coefficients a={c.a:.6g} b={c.b:.6g} c={c.c:.6g}")
    return EXIT_OK


def cmd_evaluate(args, run) -> int:
    trained = models.load_checkpoint(args.checkpoint)
    dataset = data.read_dataset(args.dataset)
    variables = trained.model.variables
    values = dataset.select(variables)
    rows = []
    rng = np.random.default_rng(args.seed)
    for cr in args.crs or run.harness.corruption_rates:
        masks = np.array([make_mask(cr, rng) for _ in range(len(dataset))])
        scores = harness.rmse(models.impute(trained, values, masks), values, masks, variables)
        rows += [(cr, v, scores[v]) for v in trained.spec.targets]
    sys.stdout.write(_rows_to_csv(["cr", "variable", "rmse"], rows))
    return EXIT_OK


def build_cases(run: cfgmod.RunConfig, dataset_path: Path | None) -> dict[str, data.Dataset]:
    d = run.data
    path = dataset_path or (Path(d.dataset) if d.dataset else None)
    full = data.read_dataset(path) if path is not None else None
    cases = {}
    for case in run.cases:
        if case == "Synthetic":
            cases[case] = synthetic.generate(*d.synthetic_truth, days=d.synthetic_days, noise=d.synthetic_noise,
                                             seed=d.synthetic_seed)
        elif full is None:
            log.warning("no dataset given; skipping %s", case)
        elif case == "Case1":
            cases[case] = full
        else:
            cases[case] = correlation.filter_days(full, *d.case2_thresholds)
    if not cases:
        raise data.IngestionError("no case could be built")
    return cases


def cmd_ablation(args, run) -> int:
    cases = build_cases(run, args.dataset)
    result = harness.run_ablation(cases, run.harness)
    paths = harness.write_reports(result, args.output)
    for name, path in paths.items():
        log.info("%s -> %s", name, path)
    if result.failed:
        log.error("%d of %d cells failed; see %s", len(result.failed), len(result.results), paths["failures"])
        return EXIT_CELL
    return EXIT_OK


def cmd_coeff_study(args, run) -> int:
    dataset = data.read_dataset(args.dataset)
    h = run.harness
    study = harness.coefficient_study(dataset, args.tr, args.trials, spec=h.spec_for("PI_DAE"), limits=h.limits,
                                      seed=h.seed)
    lines = _rows_to_csv(["trial", "coefficient", "start", "final"], study.rows())
    summary = [(name, float(m), float(s)) for name, m, s in zip("abc", study.mean, study.std)]
    args.output.write_text(lines)
    sys.stdout.write(_rows_to_csv(["coefficient", "mean", "std"], summary))
    return EXIT_OK


def cmd_timing(args, run) -> int:
    dataset = data.read_dataset(args.dataset)
    trained = {}
    for path in args.checkpoint:
        model = models.load_checkpoint(path)
        trained[f"{model.spec.kind}:{path.stem}"] = model
    horizon = args.days or len(dataset)
    rows = harness.timing_report(trained, dataset, range(1, horizon + 1), repeats=args.repeats, seed=args.seed)
    _emit(_rows_to_csv(["model", "days", "seconds"], rows), args.output)
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "filter": cmd_filter,
    "synth": cmd_synth,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablation": cmd_ablation,
    "coeff-study": cmd_coeff_study,
    "timing": cmd_timing,
}

DATA_ERRORS = (
    data.IngestionError,
    synthetic.GenerationError,
    harness.SplitError,
    correlation.UndefinedCorrelation,
    FileNotFoundError,
    IsADirectoryError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
        run = cfgmod.load(args.config, paper_scale=args.paper_scale, seed=args.seed, workers=args.workers)
        return COMMANDS[args.command](args, run)
    except (UsageError, cfgmod.ConfigError, models.SpecError) as exc:
        print(f"pidae: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"pidae: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
