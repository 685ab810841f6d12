"""Sampling estimators of SHAP used as comparators.

Budgets count coalition evaluations of the game, the unit the exact rules are
costed in. Both estimators go through the game's cache, so a coalition drawn
twice is paid for once.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np
from numpy.typing import NDArray

from xaitu.game import Game
from xaitu.rules import AttributionVector

__all__ = [
    "ApproxConfig",
    "InsufficientCoalitionsError",
    "default_budget",
    "kernel_shap",
    "permutation_shap",
]

KERNEL = "kernel"
PERMUTATION = "permutation"


class InsufficientCoalitionsError(ValueError):
    def __init__(self, message: str = "insufficient coalition diversity; increase budget"):
        super().__init__(message)


def default_budget(method: str, n: int) -> int:
    if method == PERMUTATION:
        return (2 * n + 1) * 10
    # Same default as the reference Kernel SHAP implementation; capped at the
    # point where every coalition is enumerated.
    return min(2 * n + 2048, 1 << min(n, 62))


@dataclass(frozen=True)
class ApproxConfig:
    method: str = PERMUTATION
    seed: int = 0
    budget: int | None = None

    def resolved_budget(self, n: int) -> int:
        budget = default_budget(self.method, n) if self.budget is None else int(self.budget)
        if self.method == KERNEL:
            # Small games have fewer than 2n + 2 coalitions in total.
            minimum = min(2 * n + 2, 1 << n)
            budget = min(budget, 1 << min(n, 62))
        else:
            minimum = 2 * n + 1
        if budget < minimum:
            raise ValueError(f"{self.method} budget must be at least {minimum} for n={n}, got {budget}")
        return budget

    def run(self, game: Game) -> AttributionVector:
        if self.method == PERMUTATION:
            return permutation_shap(game, budget=self.budget, seed=self.seed)
        if self.method == KERNEL:
            return kernel_shap(game, budget=self.budget, seed=self.seed)
        raise ValueError(f"unknown approximation method {self.method!r}")


def permutation_shap(game: Game, *, budget: int | None = None, seed: int = 0) -> AttributionVector:
    """Average marginal contributions along sampled feature orderings.

    Each ordering is a complete forward pass from the empty set to ``N``
    (``n + 1`` coalitions), so every pass telescopes to ``v(N) - v(empty)``.
    Orderings are drawn in antithetic pairs: a random permutation followed by
    its reverse.
    """
    cfg = ApproxConfig(PERMUTATION, seed, budget)
    n = game.n
    budget = cfg.resolved_budget(n)
    n_perm = budget // (n + 1)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    with game.footprint() as touched:
        total_sum = np.zeros(n)
        worst_gap = 0.0
        drawn = 0
        while drawn < n_perm:
            base = rng.permutation(n)
            for perm in (base, base[::-1]):
                if drawn == n_perm:
                    break
                chain = [0]
                mask = 0
                for j in perm:
                    mask |= 1 << int(j)
                    chain.append(mask)
                vals = game.values(chain)
                marg = np.diff(vals)
                total_sum[perm] += marg
                gap = abs(marg.sum() - (vals[-1] - vals[0]))
                worst_gap = max(worst_gap, gap)
                drawn += 1
        values = total_sum / n_perm
    return AttributionVector(
        values,
        "PERMUTATION_SHAP",
        len(touched),
        time.perf_counter() - start,
        meta={
            "config": asdict(cfg),
            "budget": budget,
            "permutations": n_perm,
            "max_pass_efficiency_gap": worst_gap,
        },
    )


def _kernel_mass(n: int, s: int) -> float:
    # Total Shapley-kernel weight of all coalitions of size s.
    return (n - 1) / (s * (n - s))


def _pick_coalitions(n: int, budget: int, rng: np.random.Generator) -> dict[int, float]:
    """Coalition -> regression weight, filling sizes from both ends first."""
    remaining = budget - 2
    chosen: dict[int, float] = {}
    leftover: list[int] = []
    for s in range(1, n // 2 + 1):
        sizes = [s] if 2 * s == n else [s, n - s]
        count = sum(math.comb(n, k) for k in sizes)
        if leftover or count > remaining:
            leftover += sizes
            continue
        for k in sizes:
            w = _kernel_mass(n, k) / math.comb(n, k)
            for idx in combinations(range(n), k):
                mask = 0
                for j in idx:
                    mask |= 1 << j
                chosen[mask] = w
        remaining -= count
    if not leftover or remaining <= 0:
        return chosen
    masses = np.array([_kernel_mass(n, k) for k in leftover])
    probs = masses / masses.sum()
    counts: dict[int, int] = {}
    draws = 0
    # Cap the number of draws so tiny leftover pools cannot loop forever.
    max_draws = 50 * remaining + 100
    while len(counts) < remaining and draws < max_draws:
        k = int(leftover[rng.choice(len(leftover), p=probs)])
        idx = rng.choice(n, size=k, replace=False)
        mask = 0
        for j in idx:
            mask |= 1 << int(j)
        for m in (mask, ((1 << n) - 1) ^ mask):
            if len(counts) < remaining or m in counts:
                counts[m] = counts.get(m, 0) + 1
                draws += 1
    share = masses.sum() / max(draws, 1)
    for m, c in counts.items():
        chosen[m] = chosen.get(m, 0.0) + c * share
    return chosen


def _constrained_wls(
    z: NDArray[np.float64], y: NDArray[np.float64], w: NDArray[np.float64], total: float
) -> NDArray[np.float64]:
    """``argmin sum w (y - z phi)^2`` subject to ``sum(phi) == total``."""
    n = z.shape[1]
    if n == 1:
        return np.array([total])
    # Substitute phi_n = total - sum(phi_:-1).
    zr = z[:, :-1] - z[:, -1:]
    yr = y - z[:, -1] * total
    sw = np.sqrt(w)[:, None]
    a = zr * sw
    if np.linalg.matrix_rank(a) < n - 1:
        raise InsufficientCoalitionsError()
    head, *_ = np.linalg.lstsq(a, yr * sw[:, 0], rcond=None)
    return np.append(head, total - head.sum())


def kernel_shap(game: Game, *, budget: int | None = None, seed: int = 0) -> AttributionVector:
    """Shapley-kernel weighted least squares with exact efficiency.

    Coalition sizes are enumerated completely from both ends (1 and n-1, then
    2 and n-2, ...) while they fit in the budget; the rest of the budget is
    sampled in complementary pairs from the remaining sizes, with the
    remaining kernel mass split across the draws.
    """
    cfg = ApproxConfig(KERNEL, seed, budget)
    n = game.n
    budget = cfg.resolved_budget(n)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    with game.footprint() as touched:
        chosen = _pick_coalitions(n, budget, rng)
        v0, vn = game.values([0, game.full])
        total = float(vn - v0)
        if n == 1:
            values = np.array([total])
        else:
            masks = sorted(chosen)
            if not masks:
                raise InsufficientCoalitionsError()
            y = game.values(masks) - v0
            z = np.array([[(m >> j) & 1 for j in range(n)] for m in masks], dtype=np.float64)
            w = np.array([chosen[m] for m in masks])
            values = _constrained_wls(z, y, w, total)
    return AttributionVector(
        values,
        "KERNEL_SHAP",
        len(touched),
        time.perf_counter() - start,
        meta={"config": asdict(cfg), "budget": budget, "coalitions": len(chosen) + 2},
    )
