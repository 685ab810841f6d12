import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xaitu.approx import ApproxConfig, InsufficientCoalitionsError, default_budget, kernel_shap, permutation_shap
from xaitu.game import Dataset, XaiGame
from xaitu.predictors import BuiltinPredictor, LinearPredictor, random_mlp
from xaitu.rules import exact_shap
from xaitu.verify.generators import random_table

from conftest import EXAMPLE, tabular

ESTIMATORS = {"permutation": permutation_shap, "kernel": kernel_shap}


def linear_game(n, seed=0, row=3):
    rng = np.random.default_rng(seed)
    ds = Dataset.from_array(rng.normal(size=(30, n)) * 2 - 1)
    beta = rng.normal(size=n)
    want = beta * (ds.rows[row] - ds.rows.mean(axis=0))
    return XaiGame(ds, LinearPredictor(0.5, beta), row), want


@pytest.mark.parametrize("method", ESTIMATORS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_constant_model_gives_zeros(method, seed):
    ds = Dataset.from_array(np.random.default_rng(seed).normal(size=(10, 6)))
    game = XaiGame(ds, BuiltinPredictor("constant", 6, 4.0), 0)
    np.testing.assert_array_equal(ESTIMATORS[method](game, seed=seed).values, 0.0)


def test_permutation_two_players_is_exact():
    # Budget 6 buys two passes: one ordering and its reverse, which are all of them.
    res = permutation_shap(tabular(EXAMPLE), budget=6, seed=4)
    np.testing.assert_allclose(res.values, (-2, 3), rtol=0, atol=1e-12)


def test_kernel_two_players_is_exact():
    res = kernel_shap(tabular(EXAMPLE))
    np.testing.assert_allclose(res.values, (-2, 3), rtol=0, atol=1e-9)


def test_kernel_full_enumeration_linear_identity():
    game, want = linear_game(4)
    res = kernel_shap(game, budget=16)
    np.testing.assert_allclose(res.values, want, rtol=0, atol=1e-9)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_kernel_full_enumeration_matches_exact_shap(n):
    table = random_table(n, np.random.default_rng(n))
    res = kernel_shap(tabular(table), budget=1 << n)
    np.testing.assert_allclose(res.values, exact_shap(tabular(table)).values, rtol=0, atol=1e-9)


def test_permutation_linear_identity_at_default_budget():
    game, want = linear_game(8, seed=5)
    res = permutation_shap(game)
    assert res.meta["budget"] == (2 * 8 + 1) * 10
    assert np.abs(res.values - want).max() <= 1e-9


@pytest.mark.parametrize("method", ESTIMATORS)
def test_determinism(method):
    game_a = XaiGame(Dataset.from_array(np.random.default_rng(0).normal(size=(20, 9))), random_mlp(9, seed=1), 2)
    game_b = XaiGame(game_a.dataset, game_a.predictor, 2)
    a = ESTIMATORS[method](game_a, seed=11, budget=200)
    b = ESTIMATORS[method](game_b, seed=11, budget=200)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("method", ESTIMATORS)
@pytest.mark.parametrize("budget", [40, 100, 333])
def test_evaluations_stay_within_budget(method, budget):
    game = tabular(random_table(9, np.random.default_rng(budget)))
    res = ESTIMATORS[method](game, budget=budget, seed=0)
    assert res.evals_used <= budget
    assert game.evals <= budget


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1), st.sampled_from(list(ESTIMATORS)))
def test_efficiency_is_exact(n, seed, method):
    table = random_table(n, np.random.default_rng(seed))
    res = ESTIMATORS[method](tabular(table), seed=seed)
    total = table[-1] - table[0]
    assert abs(res.values.sum() - total) <= 1e-12 * max(1.0, np.abs(res.values).sum())


def test_every_permutation_pass_telescopes():
    game = tabular(random_table(8, np.random.default_rng(0)))
    res = permutation_shap(game, seed=3)
    assert res.meta["max_pass_efficiency_gap"] <= 1e-12


def test_budget_below_minimum_rejected():
    game = tabular(random_table(5, np.random.default_rng(0)))
    with pytest.raises(ValueError, match="at least 11"):
        permutation_shap(game, budget=10)
    with pytest.raises(ValueError, match="at least 12"):
        kernel_shap(game, budget=11)


def test_kernel_budget_floor_for_tiny_games():
    assert ApproxConfig("kernel", budget=4).resolved_budget(2) == 4
    assert ApproxConfig("kernel", budget=10**6).resolved_budget(3) == 8


def test_default_budgets():
    assert default_budget("permutation", 8) == 170
    assert default_budget("kernel", 8) == 256
    assert default_budget("kernel", 12) == 2 * 12 + 2048


def test_unknown_method_rejected():
    with pytest.raises(ValueError, match="unknown"):
        ApproxConfig("bootstrap").run(tabular(EXAMPLE))


def test_config_recorded_in_report():
    res = kernel_shap(tabular(random_table(6, np.random.default_rng(0))), budget=30, seed=9)
    assert res.meta["config"] == {"method": "kernel", "seed": 9, "budget": 30}


def test_insufficient_diversity_message():
    assert "increase budget" in str(InsufficientCoalitionsError())


def test_duplicate_draws_are_paid_once():
    # At n = 3 the 8 coalitions are exhausted long before 400 budgeted evaluations.
    game = tabular(random_table(3, np.random.default_rng(0)))
    res = permutation_shap(game, budget=400, seed=0)
    assert res.evals_used == 8 and game.evals == 8


@pytest.mark.parametrize("method", ESTIMATORS)
@pytest.mark.parametrize("n", [6, 8, 10])
def test_median_error_does_not_grow_with_budget(method, n):
    # Budgets climb from the floor to full enumeration (kernel) or 40 passes (permutation).
    if method == "kernel":
        budgets = [2 * n + 2, 4 * n, 8 * n, 16 * n, 1 << n]
    else:
        budgets = [(n + 1) * k for k in (2, 5, 10, 20, 40)]
    rng = np.random.default_rng(n)
    games = []
    for _ in range(50):
        table = random_table(n, rng)
        games.append((table, exact_shap(tabular(table)).values))
    medians = []
    for budget in budgets:
        errs = [np.abs(ESTIMATORS[method](tabular(t), budget=budget, seed=s).values - want).max()
                for s, (t, want) in enumerate(games)]  # fmt: skip
        medians.append(float(np.median(errs)))
    assert all(b <= a for a, b in zip(medians, medians[1:])), medians
    if method == "kernel" and budgets[-1] >= 1 << n:
        assert medians[-1] <= 1e-9
