"""Executable versions of the five axioms characterizing ESENSC_REV2.

A suite is a list of :class:`Case` objects built from certified generators.
``check_axiom`` applies a rule to every case and returns a :class:`Verdict`;
failures carry the offending games as snapshot dictionaries so they can be
replayed from the command line.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from xaitu.game import GameSnapshot, TabularGame
from xaitu.rules import RuleId, attribute, null_players
from xaitu.verify.generators import (
    in_domain,
    make_table,
    marginals,
    rdm_pair,
    reduction_pair,
)

__all__ = [
    "AxiomId",
    "Case",
    "DESIGNATED_FAILURE",
    "ImpossibilityCertificate",
    "Verdict",
    "Witness",
    "axiom_suite",
    "check_axiom",
    "claim_game",
    "impossibility_certificate",
    "merge",
    "run_suite",
]

REL_TOL = 1e-9
MAX_WITNESSES = 5


class AxiomId(str, Enum):
    EFFICIENCY = "EFFICIENCY"
    NULL_PLAYER = "NULL_PLAYER"
    RESTRICTED_DIFF_MARGINALITY = "RESTRICTED_DIFF_MARGINALITY"
    INTERMEDIATE_INESSENTIAL = "INTERMEDIATE_INESSENTIAL"
    REDUCTION_COMPLEXITY = "REDUCTION_COMPLEXITY"

    def __str__(self) -> str:
        return self.value


# The one axiom each counterexample rule is built to break.
DESIGNATED_FAILURE = {
    RuleId.PSI1: AxiomId.EFFICIENCY,
    RuleId.PSI2: AxiomId.NULL_PLAYER,
    RuleId.PSI3: AxiomId.RESTRICTED_DIFF_MARGINALITY,
    RuleId.PSI4: AxiomId.INTERMEDIATE_INESSENTIAL,
    RuleId.PSI5: AxiomId.REDUCTION_COMPLEXITY,
}

_PAIRWISE = {AxiomId.RESTRICTED_DIFF_MARGINALITY, AxiomId.REDUCTION_COMPLEXITY}


@dataclass
class Case:
    """One game (or pair) satisfying an axiom's hypotheses."""

    n: int
    v: NDArray[np.float64]
    w: NDArray[np.float64] | None = None
    players: tuple[int, ...] = ()
    seed: tuple[int, ...] = ()
    vacuous: bool = False

    @classmethod
    def from_snapshot(cls, snap: GameSnapshot, other: GameSnapshot | None = None, players=()) -> Case:
        return cls(snap.n, snap.table(), None if other is None else other.table(), tuple(players))


@dataclass
class Witness:
    seed: list[int]
    players: list[int]  # 1-based
    gap: float
    games: list[dict]

    def snapshots(self) -> list[GameSnapshot]:
        return [GameSnapshot.from_dict(g) for g in self.games]


@dataclass
class Verdict:
    check: str
    rule: str
    n: int | None
    passed: bool
    checked: int = 0
    failures: int = 0
    undefined: int = 0
    vacuous: int = 0
    max_gap: float = 0.0
    witnesses: list[Witness] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> Verdict:
        d = dict(d)
        d["witnesses"] = [Witness(**w) for w in d.get("witnesses", [])]
        return cls(**d)


def merge(verdicts: Iterable[Verdict]) -> Verdict:
    """Combine verdicts from shards of one suite; the result ignores shard order."""
    verdicts = list(verdicts)
    if not verdicts:
        raise ValueError("nothing to merge")
    head = verdicts[0]
    witnesses = sorted((w for v in verdicts for w in v.witnesses), key=lambda w: w.seed)
    return Verdict(
        head.check,
        head.rule,
        head.n if all(v.n == head.n for v in verdicts) else None,
        all(v.passed for v in verdicts),
        sum(v.checked for v in verdicts),
        sum(v.failures for v in verdicts),
        sum(v.undefined for v in verdicts),
        sum(v.vacuous for v in verdicts),
        max(v.max_gap for v in verdicts),
        witnesses[:MAX_WITNESSES],
    )


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

_AXIOM_CODE = {a: k for k, a in enumerate(AxiomId)}
_EFFICIENCY_MODES = ("uniform", "with-null-player", "possible-null", "intermediate-inessential")


def _case_rng(seed: int, axiom: AxiomId, n: int, k: int) -> tuple[tuple[int, ...], np.random.Generator]:
    key = (int(seed), _AXIOM_CODE[axiom], int(n), int(k))
    return key, np.random.default_rng(key)


def axiom_suite(axiom: AxiomId | str, n: int, count: int, seed: int = 0) -> list[Case]:
    """``count`` certified cases for ``axiom`` with ``n`` players.

    Every game lies in the domain where some player has a nonzero edge
    marginal. Reduction pairs with ``n < 4`` have no interior coalitions, so
    the two games coincide; those cases are marked vacuous.
    """
    axiom = AxiomId(axiom)
    if n < 1:
        raise ValueError("n must be >= 1")
    if axiom in (AxiomId.NULL_PLAYER, AxiomId.RESTRICTED_DIFF_MARGINALITY) and n < 2:
        raise ValueError(f"{axiom} needs at least two players")
    cases = []
    for k in range(count):
        key, rng = _case_rng(seed, axiom, n, k)
        if axiom is AxiomId.EFFICIENCY:
            mode = _EFFICIENCY_MODES[k % len(_EFFICIENCY_MODES)] if n >= 2 else "uniform"
            cases.append(Case(n, make_table(n, mode, rng, mixed=True).table, seed=key))
        elif axiom is AxiomId.NULL_PLAYER:
            g = make_table(n, "with-null-player", rng, mixed=bool(k % 2))
            cases.append(Case(n, g.table, players=g.nulls, seed=key))
        elif axiom is AxiomId.INTERMEDIATE_INESSENTIAL:
            g = make_table(n, "intermediate-inessential", rng)
            cases.append(Case(n, g.table, seed=key))
        elif axiom is AxiomId.RESTRICTED_DIFF_MARGINALITY:
            p = rdm_pair(n, rng)
            cases.append(Case(n, p.v, p.w, p.players, seed=key))
        else:
            p = reduction_pair(n, rng)
            cases.append(Case(n, p.v, p.w, seed=key, vacuous=p.meta["vacuous"]))
    return cases


# ---------------------------------------------------------------------------
# Checking
# ---------------------------------------------------------------------------


def _values(rule: RuleId, table: NDArray, n: int) -> NDArray[np.float64]:
    return attribute(rule, TabularGame(n, table, cache=False)).values


def _scale(*arrays) -> float:
    return max([1.0] + [float(np.max(np.abs(a))) for a in arrays if a is not None and a.size])


def _gap(axiom: AxiomId, rule: RuleId, case: Case) -> tuple[float | None, float, tuple[int, ...]]:
    """(gap or None when undefined, tolerance scale, players involved)."""
    n, v = case.n, case.v
    psi = _values(rule, v, n)
    if np.isnan(psi).any():
        return None, 1.0, ()
    if axiom is AxiomId.EFFICIENCY:
        total = v[-1] - v[0]
        return abs(psi.sum() - total), _scale(v, psi, np.array([np.abs(psi).sum()])), ()
    if axiom is AxiomId.NULL_PLAYER:
        nulls = np.flatnonzero(null_players(v, n, 0.0))
        if nulls.size == 0:
            raise ValueError("null-player case without a null player")
        worst = int(nulls[np.argmax(np.abs(psi[nulls]))])
        return abs(psi[worst]), _scale(v, psi), (worst,)
    if axiom is AxiomId.INTERMEDIATE_INESSENTIAL:
        first, last, _ = marginals(v, n)
        target = 0.5 * (first + last)
        worst = int(np.argmax(np.abs(psi - target)))
        return abs(psi[worst] - target[worst]), _scale(v, psi), (worst,)
    other = _values(rule, case.w, n)
    if np.isnan(other).any():
        return None, 1.0, ()
    if axiom is AxiomId.RESTRICTED_DIFF_MARGINALITY:
        i, j = case.players
        gap = abs((psi[i] - psi[j]) - (other[i] - other[j]))
        return gap, _scale(v, case.w, psi, other), (i, j)
    worst = int(np.argmax(np.abs(psi - other)))
    return abs(psi[worst] - other[worst]), _scale(v, case.w, psi, other), (worst,)


def check_axiom(
    axiom: AxiomId | str,
    rule: RuleId | str,
    cases: Iterable[Case | GameSnapshot],
    *,
    rel_tol: float = REL_TOL,
    max_witnesses: int = MAX_WITNESSES,
) -> Verdict:
    """Check ``rule`` against ``axiom`` on every case.

    Cases where the rule is undefined are counted and skipped. The verdict
    passes when every defined case is within ``rel_tol`` of the axiom, scaled
    by the largest magnitude among the game values and attributions.
    """
    axiom, rule = AxiomId(axiom), RuleId(rule)
    out = Verdict(str(axiom), str(rule), None, True)
    ns = set()
    for case in cases:
        if isinstance(case, GameSnapshot):
            case = Case.from_snapshot(case)
        ns.add(case.n)
        if not in_domain(case.v, case.n) or (case.w is not None and not in_domain(case.w, case.n)):
            raise ValueError("axiom cases must lie in the domain")
        gap, scale, players = _gap(axiom, rule, case)
        if gap is None:
            out.undefined += 1
            continue
        out.checked += 1
        out.vacuous += int(case.vacuous)
        out.max_gap = max(out.max_gap, gap / scale)
        if gap > rel_tol * scale:
            out.passed = False
            out.failures += 1
            if len(out.witnesses) < max_witnesses:
                games = [GameSnapshot.from_table(case.v, note="v").to_dict()]
                if case.w is not None:
                    games.append(GameSnapshot.from_table(case.w, note="w").to_dict())
                out.witnesses.append(Witness(list(case.seed), [p + 1 for p in players], float(gap), games))
    out.n = ns.pop() if len(ns) == 1 else None
    return out


def run_suite(
    rule: RuleId | str,
    n: int,
    count: int,
    seed: int = 0,
    axioms: Iterable[AxiomId | str] | None = None,
) -> dict[AxiomId, Verdict]:
    """Verdict per axiom on freshly generated certified suites."""
    axioms = list(AxiomId) if axioms is None else [AxiomId(a) for a in axioms]
    return {a: check_axiom(a, rule, axiom_suite(a, n, count, seed)) for a in axioms}


# ---------------------------------------------------------------------------
# Games outside the domain
# ---------------------------------------------------------------------------


def claim_game(table: NDArray[np.float64], n: int, i: int) -> NDArray[np.float64]:
    """Game agreeing with ``table`` on sizes 0, 1, n-1, n in which ``i`` is null.

    This works when ``table`` is outside the domain (every singleton equals
    the empty coalition and every leave-one-out equals the grand coalition)
    and ``n >= 4``.
    """
    if n < 4:
        raise ValueError("the construction needs n >= 4")
    bit = 1 << i
    out = np.empty(1 << n)
    for s in range(1 << n):
        size = bin(s).count("1")
        if s & bit:
            out[s] = table[s ^ bit] if size == 2 else table[s]
        elif size in (0, 1, n - 1):
            out[s] = table[s]
        else:
            out[s] = table[s | bit]
    return out


@dataclass
class ImpossibilityCertificate:
    """Why no allocation can satisfy efficiency, null player and reduction together.

    For every player ``i`` the modified game agrees with ``v`` on the edge
    coalitions and has ``i`` as a null player, so the other two axioms force
    ``psi_i(v) = 0``; efficiency then needs a zero total.
    """

    n: int
    total: float
    agrees_on_edges: list[bool]
    player_is_null: list[bool]

    @property
    def holds(self) -> bool:
        return self.total != 0 and all(self.agrees_on_edges) and all(self.player_is_null)


def impossibility_certificate(table: NDArray[np.float64], n: int) -> ImpossibilityCertificate:
    table = np.asarray(table, dtype=np.float64)
    if in_domain(table, n):
        raise ValueError("game lies in the domain")
    sizes = np.array([bin(s).count("1") for s in range(1 << n)])
    edge = np.isin(sizes, (0, 1, n - 1, n))
    agrees, null = [], []
    for i in range(n):
        g = claim_game(table, n, i)
        agrees.append(bool(np.array_equal(g[edge], table[edge])))
        null.append(bool(null_players(g, n, 0.0)[i]))
    return ImpossibilityCertificate(n, float(table[-1] - table[0]), agrees, null)

