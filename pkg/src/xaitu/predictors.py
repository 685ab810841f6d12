"""Inference-only regression models loaded from JSON model files.

Model file layout (all feature indices are 0-based)::

    {"kind": "linear", "n": 2, "intercept": 0.0, "coefficients": [1.0, 1.0]}

    {"kind": "mlp", "n": 2, "layers": [
        {"weights": [[...], [...]], "bias": [...], "activation": "relu"},
        {"weights": [[...]], "bias": [0.0], "activation": "identity"}]}

    {"kind": "tree_ensemble", "n": 3, "base_score": 0.5, "trees": [
        {"feature": 0, "threshold": 0.5, "left": {"leaf": 1.0}, "right": {"leaf": 2.0}}]}

    {"kind": "builtin", "n": 3, "name": "constant", "value": 4.0}

MLP weights are stored ``(inputs, outputs)`` so a layer computes
``act(x @ W + b)``. Tree nodes send ``x[feature] < threshold`` to ``left``.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from pathlib import Path

import jsonschema
import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ArityError",
    "BuiltinPredictor",
    "CallablePredictor",
    "LinearPredictor",
    "MLPPredictor",
    "ModelFileError",
    "Predictor",
    "PredictorError",
    "TreeEnsemblePredictor",
    "load_predictor",
    "predictor_from_dict",
    "random_mlp",
    "save_predictor",
]

ACTIVATIONS: dict[str, Callable[[NDArray], NDArray]] = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "identity": lambda z: z,
}


class PredictorError(RuntimeError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ModelFileError(ValueError):
    """Model file violates the schema; ``path`` is the JSON path of the fault."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ArityError(ModelFileError):
    pass


_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["kind", "n"],
    "properties": {
        "kind": {"enum": ["linear", "mlp", "tree_ensemble", "builtin"]},
        "n": {"type": "integer", "minimum": 1},
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "linear"}}},
            "then": {
                "required": ["intercept", "coefficients"],
                "properties": {"intercept": _NUM, "coefficients": _VEC},
            },
        },
        {
            "if": {"properties": {"kind": {"const": "mlp"}}},
            "then": {
                "required": ["layers"],
                "properties": {
                    "layers": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["weights", "bias", "activation"],
                            "properties": {
                                "weights": {"type": "array", "minItems": 1, "items": _VEC},
                                "bias": _VEC,
                                "activation": {"enum": sorted(ACTIVATIONS)},
                            },
                        },
                    }
                },
            },
        },
        {
            "if": {"properties": {"kind": {"const": "tree_ensemble"}}},
            "then": {
                "required": ["trees"],
                "properties": {
                    "base_score": _NUM,
                    "trees": {"type": "array", "items": {"$ref": "#/$defs/node"}},
                },
            },
        },
        {
            "if": {"properties": {"kind": {"const": "builtin"}}},
            "then": {
                "required": ["name"],
                "properties": {"name": {"enum": ["constant", "sum"]}, "value": _NUM},
            },
        },
    ],
    "$defs": {
        "node": {
            "oneOf": [
                {"type": "object", "required": ["leaf"], "properties": {"leaf": _NUM}},
                {
                    "type": "object",
                    "required": ["feature", "threshold", "left", "right"],
                    "properties": {
                        "feature": {"type": "integer", "minimum": 0},
                        "threshold": _NUM,
                        "left": {"$ref": "#/$defs/node"},
                        "right": {"$ref": "#/$defs/node"},
                    },
                },
            ]
        }
    },
}


class Predictor(ABC):
    """A pure map from a length-``n`` row to a real prediction."""

    kind: str = "abstract"
    n: int

    @abstractmethod
    def forward(self, rows: NDArray[np.float64]) -> NDArray[np.float64]:
        """Vectorized predictions for an ``(m, n)`` matrix, unchecked."""

    def affine_split(self):
        """``(W, b, head)`` when ``f(x) = head(x @ W + b)``, else ``None``."""
        return None

    @abstractmethod
    def to_dict(self) -> dict: ...

    def predict_batch(self, rows) -> NDArray[np.float64]:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.n:
            raise ArityError(f"expected rows of length {self.n}, got {rows.shape[1]}")
        # Overflow surfaces below as a non-finite output, so silence the warning.
        with np.errstate(over="ignore", invalid="ignore"):
            y = np.asarray(self.forward(rows), dtype=np.float64).reshape(-1)
        bad = ~np.isfinite(y)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise PredictorError(f"predictor produced non-finite value at row {row}", row=row)
        return y

    def predict(self, row) -> float:
        row = np.asarray(row, dtype=np.float64).reshape(-1)
        if row.shape[0] != self.n:
            raise ArityError(f"expected a row of length {self.n}, got {row.shape[0]}")
        with np.errstate(over="ignore", invalid="ignore"):
            y = float(np.asarray(self.forward(row[None, :])).reshape(-1)[0])
        if not np.isfinite(y):
            raise PredictorError("predictor produced non-finite value", row=0)
        return y

    __call__ = predict


class LinearPredictor(Predictor):
    kind = "linear"

    def __init__(self, intercept: float, coefficients: Sequence[float]):
        self.intercept = float(intercept)
        self.coefficients = np.asarray(coefficients, dtype=np.float64).reshape(-1)
        self.n = self.coefficients.shape[0]
        if self.n < 1:
            raise ArityError("linear model needs at least one coefficient", "$.coefficients")

    def forward(self, rows):
        return rows @ self.coefficients + self.intercept

    def affine_split(self):
        return self.coefficients[:, None], np.array([self.intercept]), lambda z: z[:, 0]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "intercept": self.intercept,
            "coefficients": self.coefficients.tolist(),
        }


class MLPPredictor(Predictor):
    kind = "mlp"

    def __init__(self, layers: Sequence[tuple[NDArray, NDArray, str]]):
        self.layers = []
        for k, (w, b, act) in enumerate(layers):
            w = np.atleast_2d(np.asarray(w, dtype=np.float64))
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if act not in ACTIVATIONS:
                raise ModelFileError(f"unknown activation {act!r}", f"$.layers[{k}].activation")
            if b.shape[0] != w.shape[1]:
                raise ArityError(
                    f"bias has {b.shape[0]} entries for {w.shape[1]} outputs", f"$.layers[{k}].bias"
                )
            if k and w.shape[0] != self.layers[-1][0].shape[1]:
                raise ArityError(
                    f"layer expects {w.shape[0]} inputs, previous layer emits "
                    f"{self.layers[-1][0].shape[1]}",
                    f"$.layers[{k}].weights",
                )
            self.layers.append((w, b, act))
        if not self.layers:
            raise ModelFileError("MLP needs at least one layer", "$.layers")
        if self.layers[-1][0].shape[1] != 1:
            raise ArityError("final layer must have one output", f"$.layers[{len(self.layers) - 1}]")
        self.n = self.layers[0][0].shape[0]

    def _head(self, z):
        w0, b0, act0 = self.layers[0]
        h = ACTIVATIONS[act0](z)
        for w, b, act in self.layers[1:]:
            h = ACTIVATIONS[act](h @ w + b)
        return h[:, 0]

    def forward(self, rows):
        w0, b0, _ = self.layers[0]
        return self._head(rows @ w0 + b0)

    def affine_split(self):
        w0, b0, _ = self.layers[0]
        return w0, b0, self._head

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist(), "activation": act} for w, b, act in self.layers
            ],
        }


class TreeEnsemblePredictor(Predictor):
    """Sum of binary regression trees plus a base score."""

    kind = "tree_ensemble"

    def __init__(self, n: int, trees: Sequence[dict], base_score: float = 0.0):
        self.n = int(n)
        self.base_score = float(base_score)
        self.trees = [dict(t) for t in trees]
        self._flat = [self._flatten(t, k) for k, t in enumerate(self.trees)]

    def _flatten(self, root: dict, k: int):
        # Preorder layout: the left child of internal node i is i + 1 and the
        # right child starts after the whole left subtree.
        feature, threshold, value = [], [], []
        depth = 0
        stack = [(root, f"$.trees[{k}]", 0)]
        while stack:
            node, path, d = stack.pop()
            depth = max(depth, d)
            if "leaf" in node:
                feature.append(-1)
                threshold.append(0.0)
                value.append(float(node["leaf"]))
                continue
            j = int(node["feature"])
            if not 0 <= j < self.n:
                raise ArityError(f"split on feature {j} but n={self.n}", f"{path}.feature")
            feature.append(j)
            threshold.append(float(node["threshold"]))
            value.append(0.0)
            stack.append((node["right"], f"{path}.right", d + 1))
            stack.append((node["left"], f"{path}.left", d + 1))
        size = len(feature)
        left = np.full(size, -1, dtype=np.int64)
        right = np.full(size, -1, dtype=np.int64)
        subtree = np.ones(size, dtype=np.int64)
        for idx in range(size - 1, -1, -1):
            if feature[idx] >= 0:
                left[idx] = idx + 1
                right[idx] = idx + 1 + subtree[idx + 1]
                subtree[idx] = 1 + subtree[left[idx]] + subtree[right[idx]]
        return (
            np.array(feature, dtype=np.int64),
            np.array(threshold),
            left,
            right,
            np.array(value),
            depth,
        )

    def forward(self, rows):
        out = np.full(rows.shape[0], self.base_score)
        for feature, threshold, left, right, value, depth in self._flat:
            node = np.zeros(rows.shape[0], dtype=np.int64)
            for _ in range(depth):
                f = feature[node]
                active = np.flatnonzero(f >= 0)
                if active.size == 0:
                    break
                cur = node[active]
                go_left = rows[active, f[active]] < threshold[cur]
                node[active] = np.where(go_left, left[cur], right[cur])
            out += value[node]
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "base_score": self.base_score, "trees": self.trees}


class BuiltinPredictor(Predictor):
    """Small closed-form models for fixtures: ``constant`` and ``sum``."""

    kind = "builtin"

    def __init__(self, name: str, n: int, value: float = 0.0):
        if name not in ("constant", "sum"):
            raise ModelFileError(f"unknown builtin {name!r}", "$.name")
        self.name = name
        self.n = int(n)
        self.value = float(value)

    def forward(self, rows):
        if self.name == "constant":
            return np.full(rows.shape[0], self.value)
        return rows.sum(axis=1) + self.value

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "name": self.name, "value": self.value}


class CallablePredictor(Predictor):
    """Wrap a vectorized Python function ``(m, n) -> (m,)``; not serializable."""

    kind = "builtin"

    def __init__(self, fn: Callable[[NDArray], NDArray], n: int):
        self.fn = fn
        self.n = int(n)

    def forward(self, rows):
        return self.fn(rows)

    def to_dict(self) -> dict:
        raise TypeError("callable predictors cannot be serialized")


def predictor_from_dict(data: dict) -> Predictor:
    try:
        jsonschema.validate(data, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        best = jsonschema.exceptions.best_match([exc]) or exc
        raise ModelFileError(best.message, best.json_path) from None
    kind, n = data["kind"], data["n"]
    if kind == "linear":
        p: Predictor = LinearPredictor(data["intercept"], data["coefficients"])
    elif kind == "mlp":
        layers = []
        for k, layer in enumerate(data["layers"]):
            widths = {len(r) for r in layer["weights"]}
            if len(widths) != 1:
                raise ArityError("ragged weight matrix", f"$.layers[{k}].weights")
            layers.append((layer["weights"], layer["bias"], layer["activation"]))
        p = MLPPredictor(layers)
    elif kind == "tree_ensemble":
        p = TreeEnsemblePredictor(n, data["trees"], data.get("base_score", 0.0))
    else:
        p = BuiltinPredictor(data["name"], n, data.get("value", 0.0))
    if p.n != n:
        raise ArityError(f"model declares n={n} but its parameters imply n={p.n}", "$.n")
    return p


def load_predictor(path: str | Path) -> Predictor:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"invalid JSON: {exc}") from None
    return predictor_from_dict(data)


def save_predictor(predictor: Predictor, path: str | Path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly.
    Path(path).write_text(json.dumps(predictor.to_dict()) + "\n", encoding="utf-8")


def random_mlp(
    n: int,
    hidden: Sequence[int] = (64, 32),
    *,
    seed: int = 0,
    activation: str = "relu",
    relevant: int | None = None,
    irrelevant_scale: float = 0.1,
) -> MLPPredictor:
    """Seeded random-weight MLP used as a fixture model.

    Inputs beyond the first ``relevant`` columns get their first-layer weights
    scaled by ``irrelevant_scale``, which mimics a model fitted on a few real
    features plus appended noise columns.
    """
    rng = np.random.default_rng(seed)
    dims = [n, *hidden, 1]
    layers = []
    for k in range(len(dims) - 1):
        w = rng.normal(0.0, 1.0 / np.sqrt(dims[k]), size=(dims[k], dims[k + 1]))
        if k == 0 and relevant is not None:
            w[relevant:] *= irrelevant_scale
        b = rng.normal(0.0, 0.1, size=dims[k + 1])
        act = activation if k < len(dims) - 2 else "identity"
        layers.append((w, b, act))
    return MLPPredictor(layers)
