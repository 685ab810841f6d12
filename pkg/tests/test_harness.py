import json
import time

import numpy as np
import pytest

from xaitu.game import DataError, Dataset, XaiGame
from xaitu.harness.experiment import (
    AugmentSpec,
    ExperimentError,
    augment_features,
    compute_rule,
    deviation_from_shap,
    deviation_on_games,
    load_config,
    run_experiment,
    timing_bench,
)
from xaitu.harness.fixtures import fixture_mlp, synthetic_dataset
from xaitu.harness.report import line_chart, write_csv
from xaitu.predictors import CallablePredictor, LinearPredictor

from conftest import EXAMPLE

# -- augmentation -------------------------------------------------------------


def test_augment_appends_standardized_columns():
    ds = synthetic_dataset(300, seed=1)
    out = augment_features(ds, AugmentSpec(16, seed=2))
    assert out.n == 16 and out.columns[:8] == ds.columns
    assert out.columns[8:] == tuple(f"noise{k}" for k in range(1, 9))
    assert np.abs(out.rows.mean(axis=0)).max() <= 1e-9
    assert np.abs(out.rows.std(axis=0) - 1).max() <= 1e-9


def test_augment_to_same_size_only_standardizes():
    ds = synthetic_dataset(50, seed=0)
    out = augment_features(ds, AugmentSpec(8, standardize=True))
    want = (ds.rows - ds.rows.mean(axis=0)) / ds.rows.std(axis=0)
    np.testing.assert_allclose(out.rows, want, rtol=0, atol=1e-12)
    assert np.array_equal(augment_features(ds, AugmentSpec(8, standardize=False)).rows, ds.rows)


def test_augment_is_deterministic_and_seeded():
    ds = synthetic_dataset(40, seed=0)
    a = augment_features(ds, AugmentSpec(12, seed=5))
    b = augment_features(ds, AugmentSpec(12, seed=5))
    c = augment_features(ds, AugmentSpec(12, seed=6))
    assert np.array_equal(a.rows, b.rows)
    assert not np.array_equal(a.rows, c.rows)


def test_augment_unstandardized_keeps_draws():
    ds = synthetic_dataset(40, seed=0)
    out = augment_features(ds, AugmentSpec(10, seed=3, standardize=False))
    extra = np.random.default_rng(3).standard_normal((40, 2))
    assert np.array_equal(out.rows[:, 8:], extra)


def test_augment_cannot_shrink():
    with pytest.raises(DataError):
        augment_features(synthetic_dataset(10), AugmentSpec(4))


def test_augment_avoids_name_clash():
    ds = Dataset(("noise1", "b"), np.random.default_rng(0).normal(size=(5, 2)))
    assert augment_features(ds, AugmentSpec(4)).columns == ("noise1", "b", "noise2", "noise3")


# -- deviation --------------------------------------------------------------


def mlp_setup(n=8, seed=0):
    ds = augment_features(synthetic_dataset(120, seed=seed), AugmentSpec(n, seed))
    return ds, fixture_mlp(n, seed)


def test_deviation_of_shap_is_zero():
    ds, model = mlp_setup()
    row = deviation_from_shap("SHAP", ds, model, [0, 1, 2], background=range(40))["SHAP"]
    assert row.deviation == 0.0 and row.raw_deviation == 0.0 and row.observations == 3


def test_linear_model_deviation_vanishes():
    rng = np.random.default_rng(0)
    ds = Dataset.from_array(rng.normal(size=(60, 9)))
    model = LinearPredictor(0.1, rng.normal(size=9))
    res = deviation_from_shap(["ES", "ESENSC_REV2", "ENSC", "GATELY_ADJ"], ds, model, range(5))
    for row in res.values():
        assert row.deviation <= 1e-9


def example_as_model():
    # Feature j is 1 on the explained row and 0 on the sole background row,
    # so v(S) is the predictor at the 0/1 indicator of S.
    ds = Dataset.from_array([[1.0, 1.0], [0.0, 0.0]])
    lookup = CallablePredictor(lambda r: EXAMPLE[(r[:, 0] + 2 * r[:, 1]).astype(int)], 2)
    return ds, lookup


def test_example_wrapped_as_model():
    ds, model = example_as_model()
    game = XaiGame(ds, model, 0, [1])
    assert game.table().tolist() == EXAMPLE.tolist()
    row = deviation_from_shap("PA", ds, model, [0], background=[1])["PA"]
    assert row.raw_deviation == 5.0
    assert row.feature_max == [5.0, 5.0]


def test_undefined_observations_are_excluded():
    ds = Dataset.from_array([[1.0, 1.0], [0.0, 0.0]])
    # v = (0, 1, -1, 2): singleton marginals cancel, PA is undefined.
    table = np.array([0.0, 1.0, -1.0, 2.0])
    model = CallablePredictor(lambda r: table[(r[:, 0] + 2 * r[:, 1]).astype(int)], 2)
    res = deviation_from_shap(["PA", "ES"], ds, model, [0], background=[1])
    assert res["PA"].excluded == 1 and res["PA"].observations == 0 and np.isnan(res["PA"].deviation)
    assert res["ES"].observations == 1


def test_deviation_needs_observations_and_known_rules():
    ds, model = mlp_setup()
    with pytest.raises(ExperimentError):
        deviation_from_shap("SHAP", ds, model, [])
    with pytest.raises(ExperimentError, match="unknown rule"):
        deviation_from_shap("MAGIC", ds, model, [0])
    with pytest.raises(ExperimentError, match="exact SHAP"):
        deviation_on_games(["ES"], [XaiGame(Dataset.from_array(np.zeros((2, 26))), LinearPredictor(0, np.ones(26)), 0)])


def test_rev2_beats_its_components_on_fixture():
    res = deviation_from_shap(["ES", "ENSC", "ESENSC_REV2"], *mlp_setup(10, seed=1), range(10), background=range(100))
    assert res["ESENSC_REV2"].deviation < min(res["ES"].deviation, res["ENSC"].deviation)


def test_approx_rules_in_the_sweep():
    ds, model = mlp_setup()
    res = deviation_from_shap(["PERMUTATION_SHAP", "KERNEL_SHAP"], ds, model, [0, 1], background=range(30))
    assert all(r.deviation >= 0 for r in res.values())
    # The default kernel budget covers all 256 coalitions at n = 8.
    assert res["KERNEL_SHAP"].deviation <= 1e-9


# -- timing ------------------------------------------------------------------


@pytest.fixture(scope="module")
def wide():
    rng = np.random.default_rng(0)
    return Dataset.from_array(rng.normal(size=(20, 512)))


def linear_factory(n):
    return LinearPredictor(0.0, np.linspace(-1, 1, n))


def test_rev2_evaluation_counts(wide):
    rows = timing_bench(["ESENSC_REV2"], wide, linear_factory, [8, 64, 512], repeats=1)
    assert [r.evals for r in rows] == [18, 130, 1026]
    assert [r.model_calls for r in rows] == [18 * 20, 130 * 20, 1026 * 20]


def test_shap_evaluation_count_at_16(wide):
    small = Dataset(wide.columns[:16], wide.rows[:4, :16])
    (row,) = timing_bench(["SHAP"], small, linear_factory, [16], repeats=1)
    assert row.evals == 65_536


def test_permutation_budget_at_8(wide):
    rows = timing_bench(["PERMUTATION_SHAP"], wide, linear_factory, [8], repeats=1)
    assert rows[0].evals <= 170
    res = compute_rule("PERMUTATION_SHAP", XaiGame(Dataset(wide.columns[:8], wide.rows[:, :8]), linear_factory(8), 0))
    assert res.meta["budget"] == 170


def test_timing_skips_exact_shap_beyond_limit(wide):
    rows = timing_bench(["SHAP", "ES"], wide, linear_factory, [8, 20], repeats=1, exact_max_n=10)
    assert [(r.rule, r.n) for r in rows] == [("SHAP", 8), ("ES", 8), ("ES", 20)]


def test_timing_grid_must_be_sorted(wide):
    with pytest.raises(ExperimentError, match="sorted"):
        timing_bench(["ES"], wide, linear_factory, [16, 8])


def test_timing_rows_carry_hardware(wide):
    (row,) = timing_bench(["ES"], wide, linear_factory, [8], repeats=2)
    assert row.repeats == 2 and row.hardware and row.seconds >= 0


@pytest.mark.slow
def test_exact_shap_cost_grows_exponentially():
    data = augment_features(synthetic_dataset(60), AugmentSpec(12))
    model = fixture_mlp(12)

    def clock(rule):
        best = np.inf
        for _ in range(3):
            game = XaiGame(data, model, 0)
            start = time.perf_counter()
            compute_rule(rule, game)
            best = min(best, time.perf_counter() - start)
        return best

    assert clock("SHAP") >= 2 ** (12 - 6) * clock("ESENSC_REV2")


# -- reports ---------------------------------------------------------------


def test_csv_writes_floats_exactly(tmp_path):
    path = write_csv([{"a": 0.1 + 0.2, "b": "x"}], tmp_path / "r.csv", ["a", "b"])
    text = path.read_text().splitlines()
    assert text == ["a,b", "0.30000000000000004,x"]


def test_svg_is_deterministic(tmp_path):
    rows = [{"n": n, "y": 2.0**-n, "rule": r} for n in (8, 10) for r in ("A", "B")]
    a = line_chart(rows, x="n", y="y", group="rule", path=tmp_path / "a.svg", title="t")
    b = line_chart(rows, x="n", y="y", group="rule", path=tmp_path / "b.svg", title="t")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert a is not None and b is not None


# -- config-driven runs --------------------------------------------------------

SMALL = {
    "seed": 3,
    "dataset": {"synthetic": {"rows": 60}},
    "n_grid": [8, 10, 12],
    "rules": ["ESENSC_REV2", "PAROP", "PA"],
    "observations": 3,
    "background": 20,
    "timing": {"n_grid": [8, 16], "repeats": 1, "rules": ["ESENSC_REV2"]},
}


def test_run_experiment_cells_and_replay(tmp_path):
    manifest = run_experiment(SMALL, tmp_path / "a")
    lines = (tmp_path / "a" / "deviation.csv").read_text().splitlines()
    assert len(lines) == 1 + 9
    assert {tuple(line.split(",")[:2]) for line in lines[1:]} == {
        (r, str(n)) for r in SMALL["rules"] for n in SMALL["n_grid"]
    }
    for name in ("timing.csv", "deviation.svg", "timing.svg", "manifest.json"):
        assert (tmp_path / "a" / name).exists()
    saved = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert saved["config"]["seed"] == 3 and "hardware" in saved
    again = run_experiment(saved["config"], tmp_path / "b", timing=False)
    assert again["files"]["deviation.csv"] == manifest["files"]["deviation.csv"]
    assert (tmp_path / "a" / "deviation.csv").read_bytes() == (tmp_path / "b" / "deviation.csv").read_bytes()


def test_failed_cells_are_recorded(tmp_path):
    cfg = {**SMALL, "n_grid": [4, 8], "rules": ["ES"], "timing": {}}
    run_experiment(cfg, tmp_path)
    lines = (tmp_path / "deviation.csv").read_text().splitlines()
    assert "below the dataset" in lines[1] and lines[2].startswith("ES,8,")


def test_empty_rule_list_rejected():
    with pytest.raises(ExperimentError, match="no rules selected"):
        load_config({"rules": []})


def test_config_file_paths_resolve(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"dataset": {"path": "d.csv"}, "rules": ["es"]}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg["dataset"]["path"] == str((tmp_path / "d.csv").resolve())
    assert cfg["rules"] == ["ES"]
    with pytest.raises(ExperimentError):
        load_config(tmp_path / "missing.json")
