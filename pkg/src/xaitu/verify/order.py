"""Order preservation and the sign-case census for proportional rules.

A rule preserves order on a game when a strictly smaller singleton marginal
never receives a strictly larger attribution. For PA and RPA whether that
holds depends only on the signs of the total and of the summed singleton
marginals; :data:`SIGN_TABLE` records the expected outcome for each sign pair.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.typing import NDArray

from xaitu.game import GameSnapshot, TabularGame
from xaitu.rules import RuleId, attribute
from xaitu.verify.axioms import Verdict, Witness
from xaitu.verify.generators import make_table, marginals

__all__ = [
    "CensusCell",
    "branch_frequencies",
    "SIGN_TABLE",
    "STRATA",
    "SignCensus",
    "check_order_preservation",
    "find_reversal",
    "sign_case_census",
    "stratified_games",
]

ORDER_TOL = 1e-12

OK, REVERSES, UNDEFINED, EITHER = "OK", "X", "NA", "?"

STRATA = tuple((t, s) for t in "+-" for s in "+-0")

# (sign of total, sign of summed singleton marginals) -> expected outcome.
SIGN_TABLE = {
    RuleId.PA: {
        ("+", "+"): OK, ("+", "-"): REVERSES, ("+", "0"): UNDEFINED,
        ("-", "+"): REVERSES, ("-", "-"): OK, ("-", "0"): UNDEFINED,
    },
    RuleId.RPA: {
        ("+", "+"): EITHER, ("+", "-"): OK, ("+", "0"): OK,
        ("-", "+"): OK, ("-", "-"): EITHER, ("-", "0"): OK,
    },
}  # fmt: skip


def find_reversal(first: NDArray, psi: NDArray, tol: float = ORDER_TOL) -> tuple[int, int, float] | None:
    """Worst pair ``(i, j)`` with ``first[i] < first[j]`` but ``psi[i] > psi[j]``."""
    slack = tol * max(1.0, float(np.max(np.abs(psi))))
    lower = first[:, None] < first[None, :]
    excess = np.where(lower, psi[:, None] - psi[None, :], -np.inf)
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    gap = float(excess[i, j])
    return (int(i), int(j), gap) if gap > slack else None


def _as_table(game) -> tuple[NDArray, int]:
    if isinstance(game, GameSnapshot):
        return game.table(), game.n
    table, n = game
    return np.asarray(table, dtype=np.float64), int(n)


def check_order_preservation(rule: RuleId | str, games: Iterable, *, tol: float = ORDER_TOL) -> Verdict:
    """Pass when no game shows a reversal of singleton-marginal order.

    ``games`` holds snapshots or ``(table, n)`` pairs. Games on which the rule
    is undefined are counted separately.
    """
    rule = RuleId(rule)
    if isinstance(games, GameSnapshot) or (isinstance(games, tuple) and len(games) == 2 and np.ndim(games[0]) == 1):
        games = [games]
    out = Verdict("ORDER_PRESERVATION", str(rule), None, True)
    for k, game in enumerate(games):
        table, n = _as_table(game)
        psi = attribute(rule, TabularGame(n, table, cache=False)).values
        if np.isnan(psi).any():
            out.undefined += 1
            continue
        out.checked += 1
        hit = find_reversal(marginals(table, n)[0], psi, tol)
        if hit is not None:
            i, j, gap = hit
            out.passed = False
            out.failures += 1
            out.max_gap = max(out.max_gap, gap)
            if len(out.witnesses) < 5:
                snap = GameSnapshot.from_table(table, note="order reversal")
                out.witnesses.append(Witness([k], [i + 1, j + 1], gap, [snap.to_dict()]))
    return out


def stratified_games(n: int, per_stratum: int, seed: int = 0) -> dict[tuple[str, str], list[NDArray]]:
    """``per_stratum`` games for each sign pair, with distinct singleton marginals."""
    out = {}
    for code, stratum in enumerate(STRATA):
        rng = np.random.default_rng((seed, n, code))
        out[stratum] = [
            make_table(n, "sign-stratified", rng, total_sign=stratum[0], sum_sign=stratum[1]).table
            for _ in range(per_stratum)
        ]
    return out


@dataclass
class CensusCell:
    expected: str
    games: int = 0
    undefined: int = 0
    reversed: int = 0
    preserved: int = 0

    @property
    def contradictions(self) -> int:
        if self.expected == UNDEFINED:
            return self.games - self.undefined
        if self.expected == OK:
            return self.reversed + self.undefined
        if self.expected == REVERSES:
            return self.preserved + self.undefined
        return 0

    @property
    def observed(self) -> str:
        if self.undefined == self.games:
            return UNDEFINED
        if self.reversed and self.preserved:
            return EITHER
        return REVERSES if self.reversed else OK

    @property
    def matches(self) -> bool:
        if self.expected == EITHER:
            return bool(self.reversed and self.preserved)
        return self.games > 0 and self.contradictions == 0


@dataclass
class SignCensus:
    rule: str
    n: int
    cells: dict[tuple[str, str], CensusCell] = field(default_factory=dict)

    @property
    def matches(self) -> bool:
        return all(c.matches for c in self.cells.values())

    @property
    def contradictions(self) -> int:
        return sum(c.contradictions for c in self.cells.values())

    def rows(self) -> list[dict]:
        return [
            {"total": t, "sum": s, "expected": c.expected, "observed": c.observed, "games": c.games,
             "reversed": c.reversed, "preserved": c.preserved, "undefined": c.undefined}
            for (t, s), c in self.cells.items()
        ]  # fmt: skip


def sign_case_census(
    rule: RuleId | str, games: dict[tuple[str, str], list[NDArray]], *, tol: float = ORDER_TOL
) -> SignCensus:
    """Tally reversals per sign stratum and compare with :data:`SIGN_TABLE`."""
    rule = RuleId(rule)
    if rule not in SIGN_TABLE:
        raise ValueError(f"no sign table for {rule}")
    n = None
    report = SignCensus(str(rule), 0)
    for stratum, tables in games.items():
        cell = CensusCell(SIGN_TABLE[rule][stratum])
        for table in tables:
            n = int(np.log2(len(table)))
            cell.games += 1
            psi = attribute(rule, TabularGame(n, table, cache=False)).values
            if np.isnan(psi).any():
                cell.undefined += 1
            elif find_reversal(marginals(table, n)[0], psi, tol) is None:
                cell.preserved += 1
            else:
                cell.reversed += 1
        report.cells[stratum] = cell
    report.n = n or 0
    return report


def branch_frequencies(games: Iterable[NDArray]) -> Counter:
    """How often PARPA takes each branch on ``games``."""
    counts = Counter()
    for table in games:
        n = int(np.log2(len(table)))
        res = attribute(RuleId.PARPA, TabularGame(n, table, cache=False))
        counts[res.meta.get("branch", "undefined")] += 1
    return counts

