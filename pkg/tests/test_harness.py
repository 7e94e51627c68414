import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pidae.corruption import make_mask
from pidae.harness import (
    HarnessConfig,
    SplitError,
    coefficient_study,
    default_specs,
    eval_masks,
    rmse,
    run_ablation,
    split,
    timing_report,
    train_best_of,
    training_seed,
    write_reports,
)
from pidae.models import ModelSpec, TrainLimits
from pidae.synthetic import generate

TINY = TrainLimits(max_epochs=4, patience=4, crs=(0.2, 0.8))


def tiny_config(**kw):
    base = dict(training_rates=(0.5,), corruption_rates=(0.2, 0.8), split_seeds=1, restarts=1,
                models=("LIN", "KNN", "Multivariate_DAE_2", "PI_DAE"), limits=TINY)
    base.update(kw)
    return HarnessConfig(**base)


@pytest.fixture(scope="module")
def ablation(small_synthetic):
    return run_ablation({"Synthetic": small_synthetic}, tiny_config())


class TestSplit:
    def test_sizes(self):
        ds = generate(days=46, seed=0)
        tr, va, ev = split(ds, 0.2, 0)
        assert (len(tr), len(va), len(ev)) == (9, 4, 33)
        tr, va, ev = split(generate(days=19, seed=0), 0.5, 0)
        assert (len(tr), len(va), len(ev)) == (9, 1, 9)

    @given(st.integers(3, 60), st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5]), st.integers(0, 100))
    @settings(max_examples=40, deadline=None)
    def test_partition(self, n, tr, seed):
        ds = generate(days=n, seed=1)
        try:
            parts = split(ds, tr, seed)
        except SplitError:
            assert int(tr * n + 1e-9) < 1 or n - int(tr * n + 1e-9) - max(1, int(0.1 * n + 1e-9)) < 1
            return
        dates = [d for p in parts for d in p.dates]
        assert sorted(dates) == sorted(ds.dates)
        assert all(len(p) > 0 for p in parts)

    def test_deterministic(self):
        ds = generate(days=20, seed=0)
        assert split(ds, 0.3, 5)[0].dates == split(ds, 0.3, 5)[0].dates

    @pytest.mark.parametrize("n, tr", [(5, 0.1), (2, 0.5)])
    def test_too_small(self, n, tr):
        with pytest.raises(SplitError):
            split(generate(days=n, seed=0), tr, 0)

    @pytest.mark.parametrize("tr", [0.0, 0.6, -0.1])
    def test_bad_rate(self, tr):
        with pytest.raises(SplitError):
            split(generate(days=20, seed=0), tr, 0)


class TestRMSE:
    def test_perfect(self, rng):
        x = rng.random((3, 4, 48))
        assert (rmse(x, x, np.ones((3, 48), bool)) == 0).all()

    def test_constant_error(self, rng):
        x = rng.random((2, 2, 48))
        mask = make_mask(0.4, 0)
        np.testing.assert_allclose(rmse(x + 0.3, x, np.stack([mask, mask])), [0.3, 0.3])

    def test_only_masked_entries_count(self, rng):
        x = rng.random((2, 48))
        mask = make_mask(0.3, 1)
        y = x.copy()
        y[:, ~mask] += 100.0
        assert rmse(y, x, mask).max() == 0.0

    def test_named(self, rng):
        x = rng.random((2, 48))
        out = rmse(x, x, make_mask(0.2, 0), ["u", "v"])
        assert out == {"u": 0.0, "v": 0.0}

    def test_empty_mask(self, rng):
        x = rng.random((2, 48))
        with pytest.raises(ValueError):
            rmse(x, x, np.zeros(48, bool))


def test_eval_masks_rate():
    masks = eval_masks(0, "Synthetic", 0, 0.4, 5)
    assert masks.shape == (5, 48) and (masks.sum(axis=1) == 19).all()


def test_default_pi_spec_matches_multivariate():
    specs = default_specs()
    assert replace(specs["PI_DAE"], kind="Multivariate_DAE_2") == specs["Multivariate_DAE_2"]


class TestAblation:
    def test_reports(self, ablation, tmp_path):
        assert not ablation.failed
        rows = ablation.rows()
        # LIN/KNN/PI: 3 targets, MD2: 3 targets; 2 CRs each
        assert len(rows) == 4 * 3 * 2
        paths = write_reports(ablation, tmp_path)
        for name in ("results", "rmse_by_cr", "table", "cr_spread", "coefficients", "failures", "timing"):
            assert paths[name].exists()
        with open(paths["table"]) as fh:
            table = list(csv.DictReader(fh))
        lin = [r for r in table if r["model"] == "LIN"]
        assert all(float(r["pct_vs_lin"]) == 0 for r in lin)
        # one TR, one seed: both averaging orders agree
        for r in table:
            assert float(r["rmse"]) == pytest.approx(float(r["rmse_seed_first"]))
        with open(paths["coefficients"]) as fh:
            coeffs = list(csv.DictReader(fh))
        assert len(coeffs) == 1 and coeffs[0]["n"] == "1"

    def test_reports_are_reproducible(self, ablation, small_synthetic, tmp_path):
        again = run_ablation({"Synthetic": small_synthetic}, tiny_config())
        p1 = write_reports(ablation, tmp_path / "a")
        p2 = write_reports(again, tmp_path / "b")
        for name in p1:
            if name != "timing":
                assert p1[name].read_bytes() == p2[name].read_bytes(), name

    def test_baselines_ignore_restarts(self, small_synthetic):
        cfg = tiny_config(models=("LIN", "KNN"))
        one = run_ablation({"Synthetic": small_synthetic}, cfg).rows()
        three = run_ablation({"Synthetic": small_synthetic}, replace(cfg, restarts=3)).rows()
        assert one == three

    def test_failed_cell_is_recorded(self, small_synthetic, tmp_path):
        cases = {"Synthetic": small_synthetic, "Tiny": generate(days=2, seed=0)}
        result = run_ablation(cases, tiny_config(models=("LIN",)))
        assert len(result.failed) == 1 and "SplitError" in result.failed[0].error
        assert {r["case"] for r in result.rows()} == {"Synthetic"}
        paths = write_reports(result, tmp_path)
        assert "Tiny" in paths["failures"].read_text()

    def test_zero_physics_weight_rows_equal_multivariate(self, small_synthetic):
        specs = default_specs()
        specs["PI_DAE"] = ModelSpec("PI_DAE", physics_weight=0.0)
        cfg = tiny_config(models=("Multivariate_DAE_2", "PI_DAE"), specs=specs)
        rows = run_ablation({"Synthetic": small_synthetic}, cfg).rows()
        md2 = [(r["cr"], r["variable"], r["rmse"]) for r in rows if r["model"] == "Multivariate_DAE_2"]
        pi = [(r["cr"], r["variable"], r["rmse"]) for r in rows if r["model"] == "PI_DAE"]
        assert md2 == pi and len(md2) == 6

    def test_workers_match_serial(self, ablation, small_synthetic):
        parallel = run_ablation({"Synthetic": small_synthetic}, tiny_config(workers=2))
        assert parallel.rows() == ablation.rows()


class TestCoefficientStudy:
    def test_rows(self, small_synthetic):
        study = coefficient_study(small_synthetic, 0.5, 10, limits=TrainLimits(max_epochs=1, crs=(0.2,)))
        assert len(study.rows()) == 30
        assert study.starts.shape == study.finals.shape == (10, 3)
        assert ((study.starts >= 0) & (study.starts < 1)).all()

    def test_unit_start_matches_ablation(self, ablation, small_synthetic):
        cfg = tiny_config()
        study = coefficient_study(small_synthetic, 0.5, 1, spec=cfg.spec_for("PI_DAE"), limits=cfg.limits,
                                  seed=cfg.seed, case="Synthetic", split_seed=0, starts=[[1.0, 1.0, 1.0]])
        cell = next(r for r in ablation.results if r.job.model == "PI_DAE")
        np.testing.assert_array_equal(study.finals[0], cell.coefficients)


def test_timing_report(small_synthetic):
    tr = small_synthetic.subset(range(6))
    va = small_synthetic.subset([6])
    specs = default_specs()
    models = {}
    for kind in ("Multivariate_DAE_2", "PI_DAE"):
        models[kind], _ = train_best_of(specs[kind], tr, va, [training_seed(0, "t", 0.5, 0, 0)],
                                        TrainLimits(max_epochs=1, crs=(0.2,)))
    rows = timing_report(models, small_synthetic, range(1, 11), repeats=3)
    assert len(rows) == 2 * 10
    for kind in models:
        seconds = [s for name, _, s in rows if name == kind]
        assert all(b >= a for a, b in zip(seconds, seconds[1:]))
    total = {name: s for name, d, s in rows if d == 10}
    assert 0.5 <= total["PI_DAE"] / total["Multivariate_DAE_2"] <= 2.0
    with pytest.raises(ValueError):
        timing_report(models, small_synthetic, [100])
