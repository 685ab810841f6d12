"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION k PASS|FAIL`` line with the measured
numbers, visible even when pytest captures output.
"""

import time

import numpy as np
import pytest

from xaitu.approx import permutation_shap
from xaitu.game import Dataset, TabularGame, XaiGame
from xaitu.harness.experiment import AugmentSpec, augment_features, deviation_from_shap
from xaitu.harness.fixtures import fixture_mlp, synthetic_dataset
from xaitu.predictors import LinearPredictor
from xaitu.rules import RuleId, attribute, exact_shap
from xaitu.verify import (
    DESIGNATED_FAILURE,
    AxiomId,
    Case,
    Verdict,
    check_axiom,
    check_order_preservation,
    run_suite,
    shapley_oracle,
    sign_case_census,
    stratified_games,
)
from xaitu.verify.generators import random_table

from conftest import BLOWUP, EXAMPLE, tabular

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, seconds):
        with capsys.disabled():
            print(f"\nCRITERION {k} {'PASS' if ok else 'FAIL'}: {detail} ({seconds:.1f}s)")
        assert ok, detail

    return emit


def test_criterion_1_worked_examples(report):
    start = time.perf_counter()
    pa = attribute("PA", tabular(EXAMPLE)).values
    rpa = attribute("RPA", tabular(EXAMPLE)).values
    blow = attribute("PA", tabular(BLOWUP)).values
    errs = [np.abs(pa - (3, -2)).max(), np.abs(rpa - (-1 / 3, 4 / 3)).max(), np.abs(blow - (150, -135)).max()]
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-12 and elapsed < 1
    report(1, ok, f"PA={pa.tolist()} RPA={rpa.tolist()} blow-up PA={blow.tolist()} max err {max(errs):.1e}", elapsed)


def test_criterion_2_oracle_equivalence(report):
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 8):
        rng = np.random.default_rng((2, n))
        for _ in range(1000):
            t = random_table(n, rng)
            a = exact_shap(TabularGame(n, t)).values
            b = shapley_oracle(t, n)
            worst = max(worst, float(np.abs(a - b).max() / max(1.0, np.abs(b).max())))
    elapsed = time.perf_counter() - start
    report(2, worst <= 1e-9 and elapsed < 120, f"6000 games n=2..7, max relative gap {worst:.2e}", elapsed)


def test_criterion_3_linear_identity(report):
    start = time.perf_counter()
    rules = ["SHAP", "ES", "ENSC", "ESENSC_REV2", "GATELY_ADJ"]
    worst = 0.0
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 13))
        ds = Dataset.from_array(rng.normal(size=(int(rng.integers(5, 60)), n)) * rng.uniform(0.5, 3))
        beta = rng.normal(size=n)
        tau = int(rng.integers(ds.t))
        want = beta * (ds.rows[tau] - ds.rows.mean(axis=0))
        game = XaiGame(ds, LinearPredictor(float(rng.normal()), beta), tau)
        for r in rules:
            got = attribute(r, game).values
            worst = max(worst, float(np.abs(got - want).max() / max(1e-300, np.abs(want).max())))
    elapsed = time.perf_counter() - start
    report(3, worst <= 1e-9 and elapsed < 60, f"20 linear models, 5 rules, max relative gap {worst:.2e}", elapsed)


def test_criterion_4_rev2_axiom_suites(report):
    start = time.perf_counter()
    parts, ok = [], True
    for n in (2, 4, 5, 8):
        verdicts = run_suite("ESENSC_REV2", n, 10_000, seed=4)
        fails = sum(v.failures for v in verdicts.values())
        skipped = sum(v.undefined for v in verdicts.values())
        vacuous = verdicts[AxiomId.REDUCTION_COMPLEXITY].vacuous
        ok &= fails == 0 and skipped == 0 and all(v.checked == 10_000 for v in verdicts.values())
        parts.append(f"n={n}: {fails} failures, {skipped} undefined, {vacuous} vacuous reduction pairs")
    elapsed = time.perf_counter() - start
    report(4, ok and elapsed < 300, "; ".join(parts), elapsed)


def test_criterion_5_independence(report):
    start = time.perf_counter()
    ok, parts = True, []
    for rule, designated in DESIGNATED_FAILURE.items():
        for n in (4, 5, 8):
            verdicts = run_suite(rule, n, 2000, seed=5)
            failing = {a for a, v in verdicts.items() if not v.passed}
            v = verdicts[designated]
            replayed = False
            if v.witnesses:
                w = Verdict.from_dict(v.to_dict()).witnesses[0]
                games = [s.table() for s in w.snapshots()]
                case = Case(n, games[0], games[1] if len(games) > 1 else None, tuple(p - 1 for p in w.players))
                replayed = not check_axiom(designated, rule, [case]).passed
            good = failing == {designated} and replayed
            ok &= good
            if not good:
                parts.append(f"{rule} n={n} failing={sorted(map(str, failing))} replayed={replayed}")
    # Two players: four of the five counterexamples coincide with the characterized rule.
    collapsed = [str(r) for r in DESIGNATED_FAILURE if all(v.passed for v in run_suite(r, 2, 200).values())]
    elapsed = time.perf_counter() - start
    detail = "; ".join(parts) or "each counterexample fails only its designated axiom at n=4,5,8 with a replayable witness"
    report(5, ok and elapsed < 300, f"{detail} (n=2 informational: {','.join(collapsed)} pass everything)", elapsed)


def test_criterion_6_sign_census(report):
    start = time.perf_counter()
    ok, parts = True, []
    for n in (2, 4, 5):
        games = stratified_games(n, 500, seed=6)
        for rule in (RuleId.PA, RuleId.RPA):
            census = sign_case_census(rule, games)
            ok &= census.matches and census.contradictions == 0
            parts.append(f"{rule} n={n} {census.contradictions} contradictions")
        all_games = [(t, n) for ts in games.values() for t in ts]
        v = check_order_preservation("PARPA", all_games)
        ok &= v.passed
        parts.append(f"PARPA n={n} {v.failures}/{v.checked} reversals")
    for n in (2, 4, 5, 8):
        rng = np.random.default_rng((6, n))
        v = check_order_preservation("PARPA", [(random_table(n, rng), n) for _ in range(10_000)])
        ok &= v.passed
        parts.append(f"PARPA random n={n} {v.failures}/{v.checked}")
    elapsed = time.perf_counter() - start
    report(6, ok and elapsed < 120, "; ".join(parts), elapsed)


FOOTPRINT = {
    "ES": lambda n: n + 2,
    "ENSC": lambda n: n + 2,
    "PA": lambda n: n + 2,
    "RPA": lambda n: n + 2,
    "PARPA": lambda n: n + 2,
    "ESENSC": lambda n: 2 * n + 2,
    "ESENSC_REV2": lambda n: 2 * n + 2,
    "PAROP": lambda n: 2 * n + 2,
    "GATELY_ADJ": lambda n: 2 * n + 2,
}


def test_criterion_7_footprints(report):
    start = time.perf_counter()
    bad = []
    for n in (4, 8, 16, 512):
        rng = np.random.default_rng(n)
        ds = Dataset.from_array(rng.normal(size=(10, n)))
        model = LinearPredictor(0.0, rng.normal(size=n))
        rules = dict(FOOTPRINT)
        if n <= 8:
            rules["SHAP"] = lambda n: 2**n
        for r, want in rules.items():
            game = XaiGame(ds, model, 0)
            res = attribute(r, game)
            if not (game.evals == res.evals_used == want(n)):
                bad.append(f"{r} n={n}: {game.evals} != {want(n)}")
    elapsed = time.perf_counter() - start
    report(7, not bad and elapsed < 60, "; ".join(bad) or "all counts match at n=4,8,16,512", elapsed)


def test_criterion_8_protocol_replication(report):
    start = time.perf_counter()
    rules = ["ES", "ENSC", "ESENSC_REV2"]
    ok, parts = True, []
    for n in (8, 10, 12):
        devs = {r: [] for r in rules}
        worst_pass = 0.0
        for seed in range(5):
            ds = augment_features(synthetic_dataset(400, seed=seed), AugmentSpec(n, seed))
            model = fixture_mlp(n, seed)
            rng = np.random.default_rng((seed, n))
            obs = rng.permutation(ds.t)[:20]
            bg = np.sort(rng.choice(ds.t, 100, replace=False))
            res = deviation_from_shap(rules, ds, model, obs, background=bg, seed=seed)
            for r in rules:
                devs[r].append(res[r].deviation)
            for o in obs[:5]:
                game = XaiGame(ds, model, int(o), bg)
                p = permutation_shap(game, seed=seed)
                total = game.value(game.full) - game.value(0)
                assert p.meta["budget"] == (2 * n + 1) * 10
                worst_pass = max(worst_pass, p.meta["max_pass_efficiency_gap"], abs(p.values.sum() - total))
        med = {r: float(np.median(v)) for r, v in devs.items()}
        good = med["ESENSC_REV2"] < med["ES"] and med["ESENSC_REV2"] < med["ENSC"] and worst_pass <= 1e-12
        ok &= good
        parts.append(f"n={n} median REV2={med['ESENSC_REV2']:.4f} ES={med['ES']:.4f} ENSC={med['ENSC']:.4f} "
                     f"perm pass gap {worst_pass:.1e}")  # fmt: skip
    elapsed = time.perf_counter() - start
    report(8, ok and elapsed < 900, "; ".join(parts), elapsed)


def test_criterion_9_scaling(report):
    start = time.perf_counter()
    grid = (64, 128, 256, 512)
    base = synthetic_dataset(1000, seed=9)
    times = []
    for n in grid:
        ds = augment_features(base, AugmentSpec(n, 9))
        model = fixture_mlp(n, 9)
        runs = []
        for _ in range(3):
            game = XaiGame(ds, model, 0)
            t0 = time.perf_counter()
            attribute("ESENSC_REV2", game)
            runs.append(time.perf_counter() - t0)
        times.append(float(np.median(runs)))
    slope = float(np.polyfit(np.log(grid), np.log(times), 1)[0])
    elapsed = time.perf_counter() - start
    ok = times[-1] < 60 and slope <= 1.5
    detail = ", ".join(f"n={n} {t:.3f}s" for n, t in zip(grid, times)) + f"; log-log slope {slope:.2f}"
    report(9, ok, detail, elapsed)
