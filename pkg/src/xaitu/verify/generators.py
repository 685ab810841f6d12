"""Seeded random games whose defining property is checked before return.

Values are uniform on [-10, 10] quantized to multiples of 2**-20. On that grid
sums and halvings of a few values stay exact in double precision, so the
constructions below (injected null players, closing the intermediate identity,
pairs sharing marginal differences) hold exactly rather than up to rounding.

Tables are arrays of length ``2**n`` indexed by coalition bitmask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from xaitu.game import GameSnapshot
from xaitu.rules import null_players

__all__ = [
    "MODES",
    "GeneratorExhausted",
    "PairCase",
    "generate_game",
    "in_domain",
    "random_table",
]

GRID = 2.0**-20
_SPAN = 10 * 2**20
MAX_TRIES = 10_000


class GeneratorExhausted(RuntimeError):
    def __init__(self, what: str, tries: int):
        super().__init__(f"generator exhausted: {what} not found in {tries} tries")


def uniform(rng: np.random.Generator, size) -> NDArray[np.float64]:
    return rng.integers(-_SPAN, _SPAN, size=size, endpoint=True) * GRID


def random_table(n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    return uniform(rng, 1 << n)


def marginals(table: NDArray, n: int) -> tuple[NDArray, NDArray, float]:
    full = (1 << n) - 1
    bits = 1 << np.arange(n)
    first = table[bits] - table[0]
    last = table[full] - table[full ^ bits]
    return first, last, float(table[full] - table[0])


def active_players(table: NDArray, n: int) -> NDArray[np.bool_]:
    first, last, _ = marginals(table, n)
    return (first != 0) | (last != 0)


def in_domain(table: NDArray, n: int) -> bool:
    """Some player has a nonzero singleton or leave-one-out marginal."""
    return bool(active_players(table, n).any())


def lift(base: NDArray, n: int, nulls: int) -> NDArray[np.float64]:
    """Make every player in bitmask ``nulls`` a null player.

    ``v(S) = base(S minus nulls)``, so adding a null player never changes a
    worth.
    """
    masks = np.arange(1 << n)
    return base[masks & ~nulls]


def _possible_null(table: NDArray, n: int, player: int, keep: int) -> None:
    # v(i) = v(empty) and v(keep) = v(keep - i), leaving interior coalitions free.
    bit = 1 << player
    table[bit] = table[0]
    table[keep ^ bit] = table[keep]


def close_intermediate(table: NDArray, n: int, player: int, keep: int | None = None) -> NDArray[np.float64]:
    """Shift ``v(keep minus player)`` so that the intermediate identity holds.

    ``keep`` is the grand coalition of the non-null players (all of ``N`` by
    default) and needs at least three members so that ``keep minus player``
    is not a singleton.
    """
    keep = (1 << n) - 1 if keep is None else keep
    first, last, total = marginals(lift(table, n, ((1 << n) - 1) & ~keep), n)
    residual = total - 0.5 * (first.sum() + last.sum())
    out = table.copy()
    # Raising v(N - p) by d lowers last[p] by d and the residual rises by d / 2.
    out[keep ^ (1 << player)] -= 2.0 * residual
    return out


def _subset_of(rng: np.random.Generator, pool: list[int], low: int, high: int) -> list[int]:
    high = min(high, len(pool))
    if high < low:
        return []
    k = int(rng.integers(low, high + 1))
    return sorted(int(x) for x in rng.choice(pool, size=k, replace=False)) if k else []


@dataclass
class Structured:
    """A game with declared null and possible-null players."""

    table: NDArray[np.float64]
    nulls: tuple[int, ...] = ()
    possible: tuple[int, ...] = ()


def structured_game(
    n: int,
    rng: np.random.Generator,
    *,
    nulls: list[int] | None = None,
    possible: list[int] | None = None,
    close: int | None = None,
) -> Structured:
    nulls = list(nulls or [])
    possible = list(possible or [])
    null_mask = sum(1 << j for j in nulls)
    keep = ((1 << n) - 1) & ~null_mask
    base = random_table(n, rng)
    for p in possible:
        _possible_null(base, n, p, keep)
    if close is not None:
        base = close_intermediate(base, n, close, keep)
    return Structured(lift(base, n, null_mask), tuple(nulls), tuple(possible))


def _draw_structure(n: int, rng: np.random.Generator, *, reserved=(), want_null=False, want_possible=False):
    pool = [j for j in range(n) if j not in reserved]
    # At least one player stays outside both sets so the game can be in the domain.
    cap = len(pool) - (0 if reserved else 1)
    nulls = _subset_of(rng, pool, 1 if want_null else 0, max(cap // 2, 1 if want_null else 0))
    rest = [j for j in pool if j not in nulls]
    cap_possible = len(rest) - (0 if reserved else 1)
    possible = _subset_of(rng, rest, 1 if want_possible else 0, max(cap_possible // 2, 1 if want_possible else 0))
    return nulls, possible


MODES = (
    "uniform",
    "with-null-player",
    "possible-null",
    "intermediate-inessential",
    "sign-stratified",
    "outside-domain",
)


def _certify_domain(table: NDArray, n: int) -> bool:
    return in_domain(table, n)


def make_table(n: int, mode: str, rng: np.random.Generator, **opts) -> Structured:
    """Draw a game of the given mode and check its certificate, retrying as needed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for _ in range(MAX_TRIES):
        if mode == "uniform":
            g = Structured(random_table(n, rng))
            if _certify_domain(g.table, n):
                return g
        elif mode == "with-null-player":
            if n < 2:
                raise ValueError("a null player in a 1-player game leaves the domain")
            nulls, possible = _draw_structure(n, rng, want_null=True)
            g = structured_game(n, rng, nulls=nulls, possible=possible if opts.get("mixed") else [])
            declared = np.zeros(n, dtype=bool)
            declared[list(g.nulls)] = True
            if _certify_domain(g.table, n) and np.all(null_players(g.table, n, 0.0)[declared]):
                return g
        elif mode == "possible-null":
            if n < 2:
                raise ValueError("possible-null players need n >= 2")
            nulls, possible = _draw_structure(n, rng, want_possible=True)
            g = structured_game(n, rng, nulls=nulls, possible=possible)
            if _certify_domain(g.table, n) and not active_players(g.table, n)[list(g.possible)].any():
                return g
        elif mode == "intermediate-inessential":
            if opts.get("structure", True) and n >= 2:
                nulls, possible = _draw_structure(n, rng)
            else:
                nulls, possible = [], []
            free = [j for j in range(n) if j not in nulls and j not in possible]
            close = free[0] if free and len(free) + len(possible) >= 3 else None
            g = structured_game(n, rng, nulls=nulls, possible=possible, close=close)
            first, last, total = marginals(g.table, n)
            if _certify_domain(g.table, n) and total == 0.5 * (first.sum() + last.sum()):
                return g
        elif mode == "sign-stratified":
            g = _sign_stratified(n, rng, opts["total_sign"], opts["sum_sign"])
            if g is not None:
                return g
        elif mode == "outside-domain":
            if n < 3:
                raise ValueError("outside the domain a nonzero total needs n >= 3")
            t = random_table(n, rng)
            full = (1 << n) - 1
            for j in range(n):
                t[1 << j] = t[0]
                t[full ^ (1 << j)] = t[full]
            if t[full] != t[0]:
                return Structured(t, (), tuple(range(n)))
        else:
            raise ValueError(f"unknown generator mode {mode!r}")
    raise GeneratorExhausted(f"{mode} game with n={n}", MAX_TRIES)


def _sign(x: float) -> str:
    return "+" if x > 0 else "-" if x < 0 else "0"


def _sign_stratified(n: int, rng, total_sign: str, sum_sign: str) -> Structured | None:
    if total_sign not in "+-" or sum_sign not in "+-0":
        raise ValueError(f"bad stratum ({total_sign}, {sum_sign})")
    if n == 1 and total_sign != sum_sign:
        raise ValueError("with one player the singleton marginal is the total")
    t = random_table(n, rng)
    if sum_sign == "0":
        if n == 1:
            raise ValueError("with one player a zero marginal sum means a zero total")
        bits = 1 << np.arange(n)
        others = (t[bits[:-1]] - t[0]).sum()
        t[bits[-1]] = t[0] - others
        if abs(t[bits[-1]]) > 10:
            return None
    first, _, total = marginals(t, n)
    if _sign(total) != total_sign or _sign(first.sum()) != sum_sign:
        return None
    # Reversal questions need strictly ordered marginals.
    if np.unique(first).size != n:
        return None
    return Structured(t)


# ---------------------------------------------------------------------------
# Pairs
# ---------------------------------------------------------------------------


@dataclass
class PairCase:
    v: NDArray[np.float64]
    w: NDArray[np.float64]
    players: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)


def rdm_pair(n: int, rng: np.random.Generator) -> PairCase:
    """Games ``v, w`` and players ``i, j`` meeting restricted differential marginality's hypotheses.

    ``w = v + h`` where ``h(S + i) = h(S + j)`` for every ``S`` avoiding both,
    which keeps every difference ``v(S + i) - v(S + j)``. Players that are
    inactive in ``v`` are kept inactive in ``h`` so the active sets agree.
    """
    if n < 2:
        raise ValueError("restricted differential marginality needs two players")
    full = (1 << n) - 1
    for _ in range(MAX_TRIES):
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        nulls, possible = _draw_structure(n, rng, reserved=(i, j))
        g = structured_game(n, rng, nulls=nulls, possible=possible)
        h = random_table(n, rng)
        bi, bj = 1 << i, 1 << j
        masks = np.arange(1 << n)
        s = masks[(masks & (bi | bj)) == 0]
        h[s | bj] = h[s | bi]
        for k in (*nulls, *possible):
            h[1 << k] = h[0]
            h[full ^ (1 << k)] = h[full]
        v, w = g.table, g.table + h
        if _rdm_hypotheses(v, w, n, i, j):
            return PairCase(v, w, (i, j), {"nulls": nulls, "possible": possible})
    raise GeneratorExhausted(f"restricted differential marginality pair with n={n}", MAX_TRIES)


def _rdm_hypotheses(v: NDArray, w: NDArray, n: int, i: int, j: int) -> bool:
    bi, bj = 1 << i, 1 << j
    masks = np.arange(1 << n)
    s = masks[(masks & (bi | bj)) == 0]
    if not np.array_equal(v[s | bi] - v[s | bj], w[s | bi] - w[s | bj]):
        return False
    av, aw = active_players(v, n), active_players(w, n)
    return bool(av[i] and av[j] and aw[i] and aw[j] and np.array_equal(av, aw))


def reduction_pair(n: int, rng: np.random.Generator, *, with_null: bool | None = None) -> PairCase:
    """Games agreeing on coalitions of size 0, 1, n-1 and n.

    Interior coalitions of ``w`` are resampled. When ``v`` has a null player
    the perturbation usually breaks it while it stays a possible-null player,
    which is what separates rules that inspect the full game.
    """
    if with_null is None:
        with_null = bool(rng.integers(2)) and n >= 2
    g = make_table(n, "with-null-player" if with_null else "uniform", rng)
    v = g.table
    w = v.copy()
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    interior = (sizes >= 2) & (sizes <= n - 2)
    w[interior] = uniform(rng, int(interior.sum()))
    return PairCase(v, w, (), {"nulls": list(g.nulls), "vacuous": not interior.any()})


# ---------------------------------------------------------------------------
# Public entry point
# ---------------------------------------------------------------------------


def generate_game(n: int, mode: str = "uniform", seed: int = 0, **opts) -> GameSnapshot:
    """Certified snapshot of a random game.

    ``mode`` is one of :data:`MODES`. ``sign-stratified`` takes ``total_sign``
    in ``{"+", "-"}`` and ``sum_sign`` in ``{"+", "-", "0"}``.
    """
    rng = np.random.default_rng(seed)
    g = make_table(n, mode, rng, **opts)
    meta = {"mode": mode, "seed": seed, "nulls": [j + 1 for j in g.nulls], "possible": [j + 1 for j in g.possible]}
    meta.update({k: v for k, v in opts.items() if isinstance(v, (str, int, float, bool))})
    return GameSnapshot.from_table(g.table, note=f"generated {mode}", meta=meta)
