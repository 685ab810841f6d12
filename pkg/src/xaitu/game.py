"""Coalition games over feature sets.

A coalition is stored as a Python ``int`` bitmask: bit ``j`` set means feature
``j`` (0-based) belongs to the coalition. Python integers are unbounded, so the
same key works for 8 features and for 512.

Two concrete games are provided:

- :class:`XaiGame` evaluates ``v(S) = mean_b f(x_target on S, x_b off S)`` over
  a set of background rows (the interventional expectation).
- :class:`TabularGame` looks values up in an explicit table, optionally
  restricted to the "edge" family of coalition sizes ``{0, 1, n-1, n}``.

Both share memoization and evaluation counters through :class:`Game`.
"""

from __future__ import annotations

import csv
import json
import math
from abc import ABC, abstractmethod
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from xaitu.predictors import Predictor, PredictorError

__all__ = [
    "DataError",
    "Dataset",
    "Game",
    "GameSnapshot",
    "OutsideFamilyError",
    "TabularGame",
    "XaiGame",
    "coalition",
    "edge_masks",
    "from_key",
    "load_csv",
    "members",
    "to_key",
]

FULL = "full"
EDGES = "edges"


class DataError(ValueError):
    """Malformed dataset or snapshot input."""


class OutsideFamilyError(LookupError):
    def __init__(self, mask: int):
        super().__init__(f"coalition outside declared family: {{{to_key(mask)}}}")
        self.mask = mask


# ---------------------------------------------------------------------------
# Coalition helpers
# ---------------------------------------------------------------------------


def coalition(indices: Iterable[int]) -> int:
    """Bitmask for a collection of 0-based feature indices."""
    mask = 0
    for j in indices:
        if j < 0:
            raise ValueError(f"negative feature index {j}")
        mask |= 1 << int(j)
    return mask


def members(mask: int) -> tuple[int, ...]:
    """Sorted 0-based indices contained in ``mask``."""
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return tuple(out)


def to_key(mask: int) -> str:
    """Snapshot key: comma-separated sorted 1-based player labels."""
    return ",".join(str(j + 1) for j in members(mask))


def from_key(key: str) -> int:
    key = key.strip()
    if not key:
        return 0
    labels = [int(part) for part in key.split(",")]
    if labels != sorted(set(labels)) or labels[0] < 1:
        raise DataError(f"coalition key {key!r} is not a strictly increasing list of labels >= 1")
    return coalition(label - 1 for label in labels)


def edge_masks(n: int) -> list[int]:
    """Coalitions of size 0, 1, n-1 and n, deduplicated, in a stable order."""
    full = (1 << n) - 1
    masks = [0, full]
    masks += [1 << j for j in range(n)]
    masks += [full ^ (1 << j) for j in range(n)]
    return list(dict.fromkeys(masks))


def _mask_to_bool(mask: int, n: int) -> NDArray[np.bool_]:
    raw = np.frombuffer(mask.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """A ``t x n`` matrix of reals with unique column names."""

    columns: tuple[str, ...]
    rows: NDArray[np.float64]

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DataError("dataset rows must form a 2-D matrix")
        t, n = rows.shape
        if t < 1 or n < 1:
            raise DataError(f"dataset must have at least one row and one column, got {t}x{n}")
        if len(self.columns) != n:
            raise DataError(f"{len(self.columns)} column names for {n} columns")
        if len(set(self.columns)) != n:
            raise DataError("column names must be unique")
        if not np.isfinite(rows).all():
            raise DataError("dataset contains missing or non-finite values")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", rows)

    @property
    def t(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def from_array(cls, rows, columns: Sequence[str] | None = None) -> Dataset:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if columns is None:
            columns = [f"x{j + 1}" for j in range(rows.shape[1])]
        return cls(tuple(columns), rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(float(x)) for x in row])


def load_csv(path: str | Path) -> Dataset:
    """Read a header-first CSV of decimal reals."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        records = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
            try:
                records.append([float(cell) for cell in record])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise DataError(f"{path}: no data rows")
    return Dataset(tuple(h.strip() for h in header), np.array(records))


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------


class Game(ABC):
    """Characteristic function with memoization and cost counters.

    ``evals`` counts coalitions actually computed (cache misses) and
    ``model_calls`` the predictor rows paid for; both only grow until
    :meth:`reset_counters`.
    """

    def __init__(self, n: int, *, cache: bool = True):
        if n < 1:
            raise ValueError("a game needs at least one player")
        self.n = n
        self.full = (1 << n) - 1
        self._cache: dict[int, float] | None = {} if cache else None
        self._touched: list[set[int]] = []
        self.evals = 0
        self.model_calls = 0

    @abstractmethod
    def _evaluate(self, masks: list[int]) -> NDArray[np.float64]:
        """Compute ``v`` for distinct, validated masks."""

    def value(self, mask: int) -> float:
        return float(self.values([mask])[0])

    def values(self, masks: Iterable[int]) -> NDArray[np.float64]:
        masks = [int(m) for m in masks]
        for m in masks:
            if m < 0 or m > self.full:
                raise ValueError(f"coalition mask {m} outside a {self.n}-player game")
        for touched in self._touched:
            touched.update(masks)
        if self._cache is None:
            out = self._evaluate(masks)
            self.evals += len(masks)
            return np.asarray(out, dtype=np.float64)
        cache = self._cache
        missing = [m for m in dict.fromkeys(masks) if m not in cache]
        if missing:
            fresh = self._evaluate(missing)
            self.evals += len(missing)
            cache.update(zip(missing, (float(x) for x in fresh)))
        return np.fromiter((cache[m] for m in masks), dtype=np.float64, count=len(masks))

    def table(self) -> NDArray[np.float64]:
        """All ``2**n`` values indexed by mask."""
        return self.values(range(1 << self.n))

    @contextmanager
    def footprint(self) -> Iterator[set[int]]:
        """Collect every coalition requested inside the block, cached or not."""
        touched: set[int] = set()
        self._touched.append(touched)
        try:
            yield touched
        finally:
            self._touched.remove(touched)

    def reset_counters(self) -> None:
        self.evals = 0
        self.model_calls = 0

    def read_counters(self) -> tuple[int, int]:
        return self.evals, self.model_calls

    def clear_cache(self) -> None:
        if self._cache is not None:
            self._cache.clear()


class _Composer:
    """Generic route: materialize composed rows and run the predictor."""

    def __init__(self, predictor: Predictor, background: NDArray, target: NDArray):
        self.predictor = predictor
        self.background = background
        self.target = target

    def mean(self, cols: NDArray[np.bool_]) -> float:
        rows = self.background.copy()
        rows[:, cols] = self.target[cols]
        return _checked_mean(self.predictor.forward(rows))


class _AffineComposer:
    """Route for predictors whose first layer is affine.

    Composed rows differ from either the background or the repeated target in
    only ``min(|S|, n-|S|)`` columns, so the first-layer pre-activations are a
    low-rank update of a precomputed matrix. This keeps a coalition at
    ``O(t * h * min(|S|, n-|S|))`` instead of ``O(t * h * n)``.
    """

    def __init__(self, predictor: Predictor, background: NDArray, target: NDArray):
        weights, bias, head = predictor.affine_split()
        self.weights = weights
        self.head = head
        self.delta = target[None, :] - background
        self.z_background = background @ weights + bias
        self.z_target = target @ weights + bias

    def mean(self, cols: NDArray[np.bool_]) -> float:
        k = int(cols.sum())
        n = cols.shape[0]
        if k <= n - k:
            z = self.z_background
            if k:
                z = z + self.delta[:, cols] @ self.weights[cols]
        else:
            rest = ~cols
            z = self.z_target - self.delta[:, rest] @ self.weights[rest]
        return _checked_mean(self.head(z))


def _checked_mean(y: NDArray) -> float:
    y = np.asarray(y, dtype=np.float64)
    bad = ~np.isfinite(y)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise PredictorError(f"predictor produced non-finite value at background row {row}", row=row)
    return float(y.mean())


class XaiGame(Game):
    """Interventional game for one explained row.

    Args:
        dataset: Feature matrix supplying the explained row and the background.
        predictor: Model ``f``; must accept ``dataset.n`` inputs.
        target_row: 0-based index of the explained observation.
        background: Row indices averaged over for out-of-coalition features.
            Defaults to every row, the explained one included.
        cache: Disable to recompute every request (used to check that
            memoization is transparent).
        base_value: Precomputed ``v(empty)`` to share across explained rows of
            the same dataset and background; no model calls are charged for it.
    """

    def __init__(
        self,
        dataset: Dataset,
        predictor: Predictor,
        target_row: int,
        background: Sequence[int] | NDArray[np.int_] | None = None,
        *,
        cache: bool = True,
        base_value: float | None = None,
    ):
        if predictor.n != dataset.n:
            raise DataError(f"predictor expects {predictor.n} features, dataset has {dataset.n}")
        if not 0 <= target_row < dataset.t:
            raise DataError(f"target row {target_row} outside 0..{dataset.t - 1}")
        super().__init__(dataset.n, cache=cache)
        self.dataset = dataset
        self.predictor = predictor
        self.target_row = target_row
        if background is None:
            self.background_rows = np.arange(dataset.t)
        else:
            self.background_rows = np.asarray(background, dtype=np.int64)
            if self.background_rows.size == 0:
                raise DataError("background must contain at least one row")
        self.target = dataset.rows[target_row]
        self.base_value = base_value
        self._composer = None

    @property
    def background(self) -> NDArray[np.float64]:
        return self.dataset.rows[self.background_rows]

    def _get_composer(self):
        if self._composer is None:
            cls = _AffineComposer if self.predictor.affine_split() is not None else _Composer
            self._composer = cls(self.predictor, self.background, self.target)
        return self._composer

    def _evaluate(self, masks: list[int]) -> NDArray[np.float64]:
        t = len(self.background_rows)
        out = np.empty(len(masks))
        for k, mask in enumerate(masks):
            if mask == self.full:
                # No feature is resampled: the prediction itself, not an average.
                out[k] = self.predictor.predict(self.target)
                self.model_calls += t
            elif mask == 0 and self.base_value is not None:
                out[k] = self.base_value
            else:
                out[k] = self._get_composer().mean(_mask_to_bool(mask, self.n))
                self.model_calls += t
        return out


class TabularGame(Game):
    """Game backed by an explicit value table.

    ``values`` is either a length-``2**n`` array indexed by mask or a mapping
    from mask to value. With ``family="edges"`` only coalitions of size 0, 1,
    n-1 and n may be requested.
    """

    def __init__(self, n: int, values, family: str = FULL, *, cache: bool = True):
        super().__init__(n, cache=cache)
        if family not in (FULL, EDGES):
            raise DataError(f"unknown coalition family {family!r}")
        self.family = family
        if isinstance(values, dict):
            self._lookup = {int(k): float(v) for k, v in values.items()}
            self._array = None
            if family == FULL and len(self._lookup) == 1 << n:
                self._array = np.array([self._lookup[m] for m in range(1 << n)])
        else:
            arr = np.asarray(values, dtype=np.float64)
            if family != FULL or arr.shape != (1 << n,):
                raise DataError(f"a full table for n={n} needs {1 << n} entries")
            self._array = arr
            self._lookup = None

    def _evaluate(self, masks: list[int]) -> NDArray[np.float64]:
        if self._array is not None:
            return self._array[masks]
        out = np.empty(len(masks))
        for k, mask in enumerate(masks):
            try:
                out[k] = self._lookup[mask]
            except KeyError:
                raise OutsideFamilyError(mask) from None
        return out

    def raw_table(self) -> NDArray[np.float64]:
        """Full value array without touching counters (full family only)."""
        if self._array is None:
            raise OutsideFamilyError(0)
        return self._array


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def _family_masks(n: int, family: str) -> set[int]:
    if family == FULL:
        return set(range(1 << n))
    if family == EDGES:
        return set(edge_masks(n))
    raise DataError(f"unknown coalition family {family!r}")


@dataclass
class GameSnapshot:
    """Explicit values over a declared coalition family, serializable to JSON."""

    n: int
    family: str
    values: dict[int, float]
    note: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError("snapshot needs n >= 1")
        if self.family == FULL and self.n > 25:
            raise DataError("full snapshots are limited to n <= 25")
        expected = _family_masks(self.n, self.family)
        got = set(self.values)
        if got != expected:
            extra = sorted(got - expected)[:3]
            missing = sorted(expected - got)[:3]
            raise DataError(
                f"snapshot values do not cover the {self.family!r} family exactly "
                f"(missing {[to_key(m) for m in missing]}, extra {[to_key(m) for m in extra]})"
            )

    @classmethod
    def from_table(cls, table, note: str = "", meta: dict | None = None) -> GameSnapshot:
        table = np.asarray(table, dtype=np.float64)
        n = int(round(math.log2(table.shape[0])))
        return cls(n, FULL, {m: float(x) for m, x in enumerate(table)}, note, dict(meta or {}))

    @classmethod
    def from_game(cls, game: Game, family: str = FULL, note: str = "") -> GameSnapshot:
        masks = sorted(_family_masks(game.n, family))
        vals = game.values(masks)
        return cls(game.n, family, dict(zip(masks, (float(x) for x in vals))), note)

    def to_game(self, *, cache: bool = True) -> TabularGame:
        return TabularGame(self.n, dict(self.values), self.family, cache=cache)

    def table(self) -> NDArray[np.float64]:
        if self.family != FULL:
            raise OutsideFamilyError(0)
        return np.array([self.values[m] for m in range(1 << self.n)])

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "family": self.family,
            "values": {to_key(m): self.values[m] for m in sorted(self.values)},
        }
        if self.note:
            out["note"] = self.note
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> GameSnapshot:
        try:
            n = int(data["n"])
            family = data["family"]
            raw = data["values"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed snapshot: {exc}") from None
        if not isinstance(raw, dict):
            raise DataError("snapshot 'values' must be an object")
        values = {}
        for key, val in raw.items():
            mask = from_key(key)
            if mask >> n:
                raise DataError(f"coalition {{{key}}} mentions a player beyond n={n}")
            values[mask] = float(val)
        return cls(n, family, values, data.get("note", ""), dict(data.get("meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> GameSnapshot:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from None
        return cls.from_dict(data)
