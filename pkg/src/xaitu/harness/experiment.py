"""Deviation-from-SHAP and cost experiments on tabular data.

The deviation of a rule is the mean over explained rows and features of
``|psi - psi_SHAP|``, divided by the population standard deviation of the
model's predictions on the explained rows. The un-normalized mean is reported
next to it.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from xaitu import __version__
from xaitu.approx import ApproxConfig
from xaitu.game import Dataset, DataError, Game, XaiGame, load_csv
from xaitu.harness.fixtures import fixture_mlp, synthetic_dataset
from xaitu.harness.report import line_chart, write_csv
from xaitu.predictors import ModelFileError, Predictor, load_predictor
from xaitu.rules import EXACT_SHAP_GUARD, AttributionVector, RuleId, attribute

__all__ = [
    "APPROX_RULES",
    "AugmentSpec",
    "DeviationRow",
    "ExperimentError",
    "TimingRow",
    "augment_features",
    "compute_rule",
    "deviation_from_shap",
    "deviation_on_games",
    "run_experiment",
    "timing_bench",
]

APPROX_RULES = {"PERMUTATION_SHAP": "permutation", "KERNEL_SHAP": "kernel"}


class ExperimentError(ValueError):
    pass


def rule_names() -> list[str]:
    return [r.value for r in RuleId] + list(APPROX_RULES)


def _check_rule(name: str) -> str:
    name = str(name).upper()
    if name not in APPROX_RULES and name not in RuleId.__members__:
        raise ExperimentError(f"unknown rule {name!r}; choose from {', '.join(rule_names())}")
    return name


def compute_rule(
    rule: str, game: Game, *, seed: int = 0, budget: int | None = None, force: bool = False
) -> AttributionVector:
    """Exact rules by id, plus the two sampling estimators."""
    rule = _check_rule(rule)
    if rule in APPROX_RULES:
        return ApproxConfig(APPROX_RULES[rule], seed, budget).run(game)
    return attribute(rule, game, force=force)


# ---------------------------------------------------------------------------
# Feature augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentSpec:
    target_n: int
    seed: int = 0
    standardize: bool = True


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    out = (x - mu) / sd
    # One correction pass removes the rounding left by the first.
    return out - out.mean(axis=0)


def augment_features(ds: Dataset, spec: AugmentSpec) -> Dataset:
    """Append seeded standard-normal columns up to ``spec.target_n``."""
    if spec.target_n < ds.n:
        raise DataError(f"target feature count {spec.target_n} is below the dataset's {ds.n}")
    rng = np.random.default_rng(spec.seed)
    extra = rng.standard_normal((ds.t, spec.target_n - ds.n))
    rows = np.hstack([ds.rows, extra])
    if spec.standardize:
        rows = _standardize(rows)
    names = list(ds.columns)
    taken = set(names)
    k = 1
    while len(names) < spec.target_n:
        name = f"noise{k}"
        k += 1
        if name not in taken:
            names.append(name)
    return Dataset(tuple(names), rows)


# ---------------------------------------------------------------------------
# Deviation
# ---------------------------------------------------------------------------


@dataclass
class DeviationRow:
    rule: str
    n: int
    seed: int
    deviation: float
    raw_deviation: float
    observations: int
    excluded: int = 0
    feature_max: list[float] = field(default_factory=list)
    error: str = ""


def deviation_on_games(
    rules: Sequence[str],
    games: Sequence[Game],
    *,
    scale: float = 1.0,
    seed: int = 0,
    budget: int | None = None,
) -> dict[str, DeviationRow]:
    """Deviation of each rule from exact SHAP over explained-row games.

    Exact SHAP is computed once per game; the game cache then serves every
    coalition the other rules ask for.
    """
    rules = [_check_rule(r) for r in rules]
    if not games:
        raise ExperimentError("at least one observation is required")
    n = games[0].n
    if n > EXACT_SHAP_GUARD:
        raise ExperimentError(f"deviation needs exact SHAP, refused for n > {EXACT_SHAP_GUARD}")
    diffs = {r: [] for r in rules}
    excluded = dict.fromkeys(rules, 0)
    for k, game in enumerate(games):
        exact = attribute(RuleId.SHAP, game).values
        for r in rules:
            psi = compute_rule(r, game, seed=seed * 100_003 + k, budget=budget).values
            if np.isnan(psi).any():
                excluded[r] += 1
            else:
                diffs[r].append(np.abs(psi - exact))
    out = {}
    for r in rules:
        if diffs[r]:
            d = np.array(diffs[r])
            raw = float(d.mean())
            dev = raw / scale if scale > 0 else float("nan")
            fmax = [float(x) for x in d.max(axis=0)]
        else:
            raw = dev = float("nan")
            fmax = []
        out[r] = DeviationRow(r, n, seed, dev, raw, len(diffs[r]), excluded[r], fmax)
    return out


def observation_games(
    ds: Dataset, predictor: Predictor, observations: Sequence[int], background: Sequence[int] | None = None
) -> tuple[list[XaiGame], float]:
    """One game per explained row sharing ``v(empty)``, and the prediction std."""
    observations = list(observations)
    if not observations:
        raise ExperimentError("at least one observation is required")
    bg = np.arange(ds.t) if background is None else np.asarray(background)
    base = float(predictor.predict_batch(ds.rows[bg]).mean())
    games = [XaiGame(ds, predictor, int(o), bg, base_value=base) for o in observations]
    preds = predictor.predict_batch(ds.rows[observations])
    return games, float(preds.std())


def deviation_from_shap(
    rules: str | Sequence[str],
    ds: Dataset,
    predictor: Predictor,
    observations: Sequence[int],
    *,
    background: Sequence[int] | None = None,
    seed: int = 0,
    budget: int | None = None,
) -> dict[str, DeviationRow]:
    if isinstance(rules, str):
        rules = [rules]
    games, sd = observation_games(ds, predictor, observations, background)
    return deviation_on_games(rules, games, scale=sd, seed=seed, budget=budget)


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


@dataclass
class TimingRow:
    rule: str
    n: int
    seconds: float
    evals: int
    model_calls: int
    repeats: int
    hardware: str = ""


def hardware_note() -> str:
    return f"{platform.machine()} {platform.processor() or 'cpu'} x{os.cpu_count()} python {platform.python_version()}"


def timing_bench(
    rules: Sequence[str],
    ds: Dataset,
    predictor: Predictor | Callable[[int], Predictor],
    n_grid: Sequence[int],
    repeats: int = 3,
    *,
    row: int = 0,
    seed: int = 0,
    exact_max_n: int = 16,
) -> list[TimingRow]:
    """Median wall time per (rule, n) on fresh games.

    ``ds`` is augmented (or truncated) to each ``n``; ``predictor`` is either
    fixed or a factory called with ``n``. Exact SHAP is skipped above
    ``exact_max_n``.
    """
    rules = [_check_rule(r) for r in rules]
    n_grid = list(n_grid)
    if n_grid != sorted(n_grid):
        raise ExperimentError("n grid must be sorted")
    if repeats < 1:
        raise ExperimentError("repeats must be >= 1")
    note = hardware_note()
    out = []
    for n in n_grid:
        if n <= ds.n:
            data = Dataset(ds.columns[:n], ds.rows[:, :n])
        else:
            data = augment_features(ds, AugmentSpec(n, seed))
        model = predictor(n) if callable(predictor) and not isinstance(predictor, Predictor) else predictor
        for r in rules:
            if r in ("SHAP", "PSI5") and n > min(exact_max_n, EXACT_SHAP_GUARD):
                continue
            times, evals, calls = [], 0, 0
            for rep in range(repeats):
                game = XaiGame(data, model, row)
                start = time.perf_counter()
                compute_rule(r, game, seed=seed + rep)
                times.append(time.perf_counter() - start)
                evals, calls = game.read_counters()
            out.append(TimingRow(r, n, float(np.median(times)), evals, calls, repeats, note))
    return out


# ---------------------------------------------------------------------------
# Config-driven experiment
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {"synthetic": {"rows": 400}},
    "model": {"fixture": "mlp"},
    "n_grid": [8, 10, 12],
    "rules": ["ESENSC_REV2", "PARPA", "GATELY_ADJ", "ES", "ENSC", "PAROP", "PERMUTATION_SHAP", "KERNEL_SHAP"],
    "observations": 20,
    "background": 100,
    "standardize": True,
    "timing": {"n_grid": [8, 16, 32, 64], "repeats": 3, "rules": ["ESENSC_REV2", "PARPA", "SHAP"], "exact_max_n": 12},
}


def load_config(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        cfg = dict(source)
        base = Path(".")
    else:
        path = Path(source)
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentError(f"{path}: {exc}") from None
        base = path.parent
    merged = {**DEFAULT_CONFIG, **cfg}
    if not merged["rules"]:
        raise ExperimentError("no rules selected")
    merged["rules"] = [_check_rule(r) for r in merged["rules"]]
    for key in ("dataset", "model"):
        spec = merged[key]
        if "path" in spec:
            spec = dict(spec)
            spec["path"] = str((base / spec["path"]).resolve()) if not Path(spec["path"]).is_absolute() else spec["path"]
            merged[key] = spec
    return merged


def _dataset_from(cfg: dict) -> Dataset:
    spec = cfg["dataset"]
    if "path" in spec:
        return load_csv(spec["path"])
    syn = spec.get("synthetic", {})
    return synthetic_dataset(syn.get("rows", 400), syn.get("seed", cfg["seed"]))


def _model_for(cfg: dict, n: int, seed: int) -> Predictor:
    spec = cfg["model"]
    if "path" in spec:
        model = load_predictor(spec["path"])
        if model.n != n:
            raise ModelFileError(f"model expects {model.n} features, experiment cell has {n}", spec["path"])
        return model
    return fixture_mlp(n, seed)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: str | Path | dict, out_dir: str | Path, *, timing: bool = True) -> dict:
    """Run the deviation sweep (and optionally timing) and write the bundle.

    Writes ``deviation.csv``, ``timing.csv``, ``deviation.svg``,
    ``timing.svg`` and ``manifest.json`` into ``out_dir``. A failing cell is
    recorded with its error; the bundle is written regardless. Feeding the
    manifest's ``config`` back in reproduces ``deviation.csv`` byte for byte.
    """
    cfg = load_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["seed"])
    base = _dataset_from(cfg)
    dev_rows: list[dict] = []
    for n in cfg["n_grid"]:
        try:
            ds = augment_features(base, AugmentSpec(n, seed, cfg["standardize"])) if n >= base.n else None
            if ds is None:
                raise DataError(f"n={n} is below the dataset's {base.n} features")
            model = _model_for(cfg, n, seed)
            rng = np.random.default_rng((seed, n))
            order = rng.permutation(ds.t)
            obs = order[: min(cfg["observations"], ds.t)]
            bg = None if cfg["background"] is None else np.sort(rng.choice(ds.t, min(cfg["background"], ds.t), replace=False))
            res = deviation_from_shap(cfg["rules"], ds, model, obs, background=bg, seed=seed)
            dev_rows += [asdict(row) for row in res.values()]
        except (DataError, ModelFileError, ExperimentError, ValueError, RuntimeError) as exc:
            dev_rows += [asdict(DeviationRow(r, n, seed, float("nan"), float("nan"), 0, error=str(exc))) for r in cfg["rules"]]
    dev_cols = ["rule", "n", "seed", "deviation", "raw_deviation", "observations", "excluded", "error"]
    write_csv(dev_rows, out / "deviation.csv", dev_cols)
    line_chart(dev_rows, x="n", y="deviation", group="rule", path=out / "deviation.svg",
               title="deviation from exact SHAP", ylabel="normalized mean |psi - SHAP|")  # fmt: skip

    time_rows: list[dict] = []
    tcfg = cfg.get("timing") or {}
    if timing and tcfg:
        try:
            rows = timing_bench(
                tcfg.get("rules", ["ESENSC_REV2"]),
                base if not cfg["standardize"] else augment_features(base, AugmentSpec(base.n, seed)),
                lambda n: _model_for(cfg, n, seed),
                tcfg.get("n_grid", [8, 16]),
                tcfg.get("repeats", 3),
                seed=seed,
                exact_max_n=tcfg.get("exact_max_n", 16),
            )
            time_rows = [asdict(r) for r in rows]
        except (DataError, ModelFileError, ExperimentError, ValueError, RuntimeError) as exc:
            time_rows = [{"rule": "", "n": 0, "seconds": float("nan"), "evals": 0, "model_calls": 0,
                          "repeats": 0, "hardware": f"error: {exc}"}]  # fmt: skip
    time_cols = ["rule", "n", "seconds", "evals", "model_calls", "repeats", "hardware"]
    write_csv(time_rows, out / "timing.csv", time_cols)
    line_chart(time_rows, x="n", y="seconds", group="rule", path=out / "timing.svg",
               title="computation time", ylabel="seconds")  # fmt: skip

    manifest = {
        "config": cfg,
        "versions": {"xaitu": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "hardware": hardware_note(),
        "normalization": "population std of predictions over the explained rows",
        "files": {name: _sha256(out / name) for name in ("deviation.csv", "timing.csv")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
