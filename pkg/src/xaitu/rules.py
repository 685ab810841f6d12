"""Attribution rules for coalition games.

Every rule except exact SHAP and ``PSI5`` reads only the "edge" coalitions:
the empty set, singletons, complements of singletons and the grand coalition.
Formulas are written against four quantities::

    first[j] = v({j}) - v(empty)       (singleton marginal)
    last[j]  = v(N) - v(N \\ {j})       (leave-one-out marginal)
    total    = v(N) - v(empty)

Equality tests such as ``v({j}) == v(empty)`` use an absolute tolerance
``tol * max(1, |total|, |v(empty)|, |v(N)|)`` (``tol`` defaults to 1e-12), as
do the zero-denominator tests of the proportional rules.

Rules never raise on an undefined configuration. They return NaN values with
the ``rule_undefined`` flag so that batch sweeps can record a missing cell.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from xaitu.game import Game

__all__ = [
    "DEGENERATE_TOTAL",
    "FALLBACK_TAKEN",
    "RULE_UNDEFINED",
    "AttributionVector",
    "Edges",
    "ExactShapRefused",
    "RuleId",
    "attribute",
    "edges",
    "exact_shap",
    "null_players",
    "possible_null",
]

RULE_UNDEFINED = "rule_undefined"
FALLBACK_TAKEN = "fallback_taken"
DEGENERATE_TOTAL = "degenerate_total"

DEFAULT_TOL = 1e-12
EXACT_SHAP_GUARD = 25


class RuleId(str, Enum):
    SHAP = "SHAP"
    ES = "ES"
    ENSC = "ENSC"
    ESENSC = "ESENSC"
    ES_REV1 = "ES_REV1"
    ENSC_REV1 = "ENSC_REV1"
    ESENSC_REV1 = "ESENSC_REV1"
    ESENSC_REV2 = "ESENSC_REV2"
    PA = "PA"
    ROP = "ROP"
    PAROP = "PAROP"
    RPA = "RPA"
    PARPA = "PARPA"
    GATELY_ADJ = "GATELY_ADJ"
    PSI1 = "PSI1"
    PSI2 = "PSI2"
    PSI3 = "PSI3"
    PSI4 = "PSI4"
    PSI5 = "PSI5"

    def __str__(self) -> str:
        return self.value


class ExactShapRefused(ValueError):
    pass


@dataclass
class AttributionVector:
    values: NDArray[np.float64]
    rule: str
    evals_used: int
    elapsed: float
    flags: frozenset[str] = frozenset()
    meta: dict = field(default_factory=dict)

    @property
    def defined(self) -> bool:
        return RULE_UNDEFINED not in self.flags

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_dict(self) -> dict:
        return {
            "rule": str(self.rule),
            "values": [None if math.isnan(x) else float(x) for x in self.values],
            "evals_used": self.evals_used,
            "elapsed": self.elapsed,
            "flags": sorted(self.flags),
            "meta": self.meta,
        }


@dataclass(frozen=True)
class Edges:
    empty: float
    full: float
    singles: NDArray[np.float64]
    without: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.singles.shape[0] if self.singles.size else self.without.shape[0]

    @property
    def total(self) -> float:
        return self.full - self.empty

    @property
    def first(self) -> NDArray[np.float64]:
        return self.singles - self.empty

    @property
    def last(self) -> NDArray[np.float64]:
        return self.full - self.without

    def zero_tol(self, tol: float = DEFAULT_TOL) -> float:
        return tol * max(1.0, abs(self.total), abs(self.empty), abs(self.full))


def edges(game: Game, *, singles: bool = True, without: bool = True) -> Edges:
    """Fetch the edge coalitions a rule needs in one batched request."""
    n, full = game.n, game.full
    masks = [0, full]
    if singles:
        masks += [1 << j for j in range(n)]
    if without:
        masks += [full ^ (1 << j) for j in range(n)]
    vals = game.values(masks)
    k = 2
    s = vals[k : k + n] if singles else np.full(n, np.nan)
    k += n if singles else 0
    w = vals[k : k + n] if without else np.full(n, np.nan)
    return Edges(float(vals[0]), float(vals[1]), s, w)


def possible_null(e: Edges, tol: float = DEFAULT_TOL) -> NDArray[np.bool_]:
    """Players with ``v(j) == v(empty)`` and ``v(N) == v(N \\ j)``."""
    z = e.zero_tol(tol)
    return (np.abs(e.first) <= z) & (np.abs(e.last) <= z)


def null_players(table: NDArray[np.float64], n: int, tol: float = DEFAULT_TOL) -> NDArray[np.bool_]:
    """True null players of a full value table."""
    table = np.asarray(table, dtype=np.float64)
    full = (1 << n) - 1
    z = tol * max(1.0, abs(table[full] - table[0]), abs(table[0]), abs(table[full]))
    masks = np.arange(1 << n)
    out = np.empty(n, dtype=bool)
    for j in range(n):
        bit = 1 << j
        s = masks[(masks & bit) == 0]
        out[j] = bool(np.all(np.abs(table[s | bit] - table[s]) <= z))
    return out


# ---------------------------------------------------------------------------
# Formula kernels on edge values. Each returns (values, flags, meta).
# ---------------------------------------------------------------------------

Result = tuple[NDArray[np.float64], frozenset, dict]


def _undefined(n: int, **meta) -> Result:
    return np.full(n, np.nan), frozenset({RULE_UNDEFINED}), meta


def _outside_domain(e: Edges, tol: float, **meta) -> Result:
    # A zero total with no usable players has the all-zero vector as its only
    # efficient answer; a nonzero total cannot be allocated.
    if abs(e.total) <= e.zero_tol(tol):
        return np.zeros(e.n), frozenset({DEGENERATE_TOTAL}), meta
    return _undefined(e.n, **meta)


def _es(e: Edges, tol: float) -> Result:
    m = e.first
    return m + (e.total - m.sum()) / e.n, frozenset(), {}


def _ensc(e: Edges, tol: float) -> Result:
    m = e.last
    return m + (e.total - m.sum()) / e.n, frozenset(), {}


def _esensc(e: Edges, tol: float) -> Result:
    return 0.5 * (_es(e, tol)[0] + _ensc(e, tol)[0]), frozenset(), {}


def _rev1(m: NDArray, e: Edges, tol: float) -> Result:
    active = np.abs(m) > e.zero_tol(tol)
    k = int(active.sum())
    if k == 0:
        return _outside_domain(e, tol)
    return np.where(active, m + (e.total - m.sum()) / k, 0.0), frozenset(), {"active": k}


def _es_rev1(e: Edges, tol: float) -> Result:
    return _rev1(e.first, e, tol)


def _ensc_rev1(e: Edges, tol: float) -> Result:
    return _rev1(e.last, e, tol)


def _esensc_rev1(e: Edges, tol: float) -> Result:
    a, fa, _ = _es_rev1(e, tol)
    b, fb, _ = _ensc_rev1(e, tol)
    if RULE_UNDEFINED in fa or RULE_UNDEFINED in fb or DEGENERATE_TOTAL in fa | fb:
        return _outside_domain(e, tol)
    return 0.5 * (a + b), frozenset(), {}


def _intermediate(e: Edges) -> NDArray:
    return 0.5 * (e.first + e.last)


def _esensc_rev2(e: Edges, tol: float) -> Result:
    active = ~possible_null(e, tol)
    k = int(active.sum())
    if k == 0:
        return _outside_domain(e, tol)
    a = _intermediate(e)
    residual = e.total - a.sum()
    return np.where(active, a + residual / k, 0.0), frozenset(), {"active": k, "residual": residual}


def _proportional(weights: NDArray, denom: float, e: Edges, tol: float, **meta) -> Result:
    if abs(denom) <= e.zero_tol(tol):
        return _undefined(e.n, denominator=denom, **meta)
    factor = e.total / denom
    return weights * factor, frozenset(), {"factor": factor, **meta}


def _pa(e: Edges, tol: float) -> Result:
    m = e.first
    return _proportional(m, m.sum(), e, tol)


def _rop(e: Edges, tol: float) -> Result:
    m = e.last
    return _proportional(m, m.sum(), e, tol)


def _parop(e: Edges, tol: float) -> Result:
    a, fa, _ = _pa(e, tol)
    b, fb, _ = _rop(e, tol)
    if RULE_UNDEFINED in fa | fb:
        return _undefined(e.n)
    return 0.5 * (a + b), frozenset(), {}


def _rpa(e: Edges, tol: float) -> Result:
    m = e.first
    n, total, s = e.n, e.total, m.sum()
    weights = total - s + m
    return _proportional(weights, n * total - (n - 1) * s, e, tol)


def _parpa(e: Edges, tol: float) -> Result:
    if e.total * e.first.sum() > 0:
        vals, flags, meta = _pa(e, tol)
        return vals, flags, {**meta, "branch": "PA"}
    vals, flags, meta = _rpa(e, tol)
    return vals, flags, {**meta, "branch": "RPA"}


def _gately_adj(e: Edges, tol: float) -> Result:
    m, big_m = e.first, e.last
    sm, sM = m.sum(), big_m.sum()
    denom = sm - sM
    z = e.zero_tol(tol)
    flags: set[str] = set()
    if abs(denom) <= z:
        if abs(e.total - 0.5 * (sm + sM)) > z:
            return _undefined(e.n, alpha=None)
        # Every alpha is efficient here; take the midpoint.
        alpha = 0.5
        flags.add(FALLBACK_TAKEN)
        branch = "alpha_default"
    else:
        alpha = (e.total - sM) / denom
        branch = "convex"
    if 0.0 <= alpha <= 1.0:
        return alpha * m + (1.0 - alpha) * big_m, frozenset(flags), {"alpha": alpha, "branch": branch}
    inner = _pa if alpha > 1.0 else _rop
    vals, inner_flags, _ = inner(e, tol)
    branch = "PA" if alpha > 1.0 else "ROP"
    return vals, frozenset(inner_flags | {FALLBACK_TAKEN}), {"alpha": alpha, "branch": branch}


def _psi1(e: Edges, tol: float) -> Result:
    return _intermediate(e), frozenset(), {}


def _psi2(e: Edges, tol: float) -> Result:
    a = _intermediate(e)
    return a + (e.total - a.sum()) / e.n, frozenset(), {}


def _psi3(e: Edges, tol: float) -> Result:
    active = ~possible_null(e, tol)
    if not active.any():
        return _outside_domain(e, tol)
    a = _intermediate(e)
    labels = np.arange(1, e.n + 1, dtype=np.float64)
    share = labels / labels[active].sum()
    return np.where(active, a + share * (e.total - a.sum()), 0.0), frozenset(), {}


def _psi4(e: Edges, tol: float) -> Result:
    active = ~possible_null(e, tol)
    k = int(active.sum())
    if k == 0:
        return _outside_domain(e, tol)
    return np.where(active, e.total / k, 0.0), frozenset(), {}


EDGE_KERNELS: dict[RuleId, Callable[[Edges, float], Result]] = {
    RuleId.ES: _es,
    RuleId.ENSC: _ensc,
    RuleId.ESENSC: _esensc,
    RuleId.ES_REV1: _es_rev1,
    RuleId.ENSC_REV1: _ensc_rev1,
    RuleId.ESENSC_REV1: _esensc_rev1,
    RuleId.ESENSC_REV2: _esensc_rev2,
    RuleId.PA: _pa,
    RuleId.ROP: _rop,
    RuleId.PAROP: _parop,
    RuleId.RPA: _rpa,
    RuleId.PARPA: _parpa,
    RuleId.GATELY_ADJ: _gately_adj,
    RuleId.PSI1: _psi1,
    RuleId.PSI2: _psi2,
    RuleId.PSI3: _psi3,
    RuleId.PSI4: _psi4,
}

# Which edge coalitions each kernel reads: (singletons, complements).
_NEEDS = {
    RuleId.ES: (True, False),
    RuleId.ES_REV1: (True, False),
    RuleId.PA: (True, False),
    RuleId.RPA: (True, False),
    RuleId.PARPA: (True, False),
    RuleId.ENSC: (False, True),
    RuleId.ENSC_REV1: (False, True),
    RuleId.ROP: (False, True),
}


# ---------------------------------------------------------------------------
# Full-table rules
# ---------------------------------------------------------------------------


def _popcounts(n: int) -> NDArray[np.int64]:
    pc = np.zeros(1 << n, dtype=np.int64)
    for j in range(n):
        pc[1 << j : 1 << (j + 1)] = pc[: 1 << j] + 1
    return pc


def shapley_from_table(table: NDArray[np.float64], n: int) -> NDArray[np.float64]:
    """Subset-weight Shapley formula over a full value table."""
    pc = _popcounts(n)
    weights = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])
    masks = np.arange(1 << n)
    out = np.empty(n)
    for j in range(n):
        bit = 1 << j
        s = masks[(masks & bit) == 0]
        out[j] = np.dot(weights[pc[s]], table[s | bit] - table[s])
    return out


def exact_shap(game: Game, *, force: bool = False, guard: int = EXACT_SHAP_GUARD) -> AttributionVector:
    """Exact SHAP by evaluating all ``2**n`` coalitions."""
    if game.n > guard and not force:
        raise ExactShapRefused(f"exact SHAP refused for n > {guard}")

    def compute() -> Result:
        return shapley_from_table(game.table(), game.n), frozenset(), {}

    return _run(RuleId.SHAP, game, compute)


def _psi5(game: Game, tol: float, force: bool, guard: int) -> AttributionVector:
    if game.n > guard and not force:
        raise ExactShapRefused(f"PSI5 needs the full game and is refused for n > {guard}")

    def compute() -> Result:
        table = game.table()
        e = edges(game)
        nonnull = ~null_players(table, game.n, tol)
        k = int(nonnull.sum())
        if k == 0:
            return _outside_domain(e, tol)
        a = _intermediate(e)
        return np.where(nonnull, a + (e.total - a.sum()) / k, 0.0), frozenset(), {"non_null": k}

    return _run(RuleId.PSI5, game, compute)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _run(rule: RuleId, game: Game, compute: Callable[[], Result]) -> AttributionVector:
    with game.footprint() as touched:
        start = time.perf_counter()
        values, flags, meta = compute()
        elapsed = time.perf_counter() - start
    meta = {k: float(v) if isinstance(v, np.floating) else v for k, v in meta.items()}
    return AttributionVector(np.asarray(values, dtype=np.float64), rule, len(touched), elapsed, flags, meta)


def attribute(
    rule: RuleId | str,
    game: Game,
    *,
    tol: float = DEFAULT_TOL,
    force: bool = False,
    guard: int = EXACT_SHAP_GUARD,
) -> AttributionVector:
    """Apply ``rule`` to ``game``."""
    rule = RuleId(rule)
    if rule is RuleId.SHAP:
        return exact_shap(game, force=force, guard=guard)
    if rule is RuleId.PSI5:
        return _psi5(game, tol, force, guard)
    kernel = EDGE_KERNELS[rule]
    singles, without = _NEEDS.get(rule, (True, True))

    def compute() -> Result:
        return kernel(edges(game, singles=singles, without=without), tol)

    return _run(rule, game, compute)


def attribute_edges(rule: RuleId | str, e: Edges, *, tol: float = DEFAULT_TOL) -> NDArray[np.float64]:
    """Values of an edge-only rule straight from precomputed edges."""
    return EDGE_KERNELS[RuleId(rule)](e, tol)[0]
