"""Shipped fixture data and models.

The experiments run on a seeded synthetic table with eight correlated
features and random-weight MLPs whose inputs past the first eight carry
little weight, standing in for a model fitted on real features plus appended
noise columns.
"""

from __future__ import annotations

import numpy as np

from xaitu.game import Dataset
from xaitu.predictors import MLPPredictor, random_mlp

BASE_FEATURES = 8
RELEVANT = 8


def synthetic_dataset(rows: int = 400, seed: int = 0, n: int = BASE_FEATURES) -> Dataset:
    """Correlated Gaussian features with unequal scales and offsets."""
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(n, n)) / np.sqrt(n) + np.eye(n)
    z = rng.normal(size=(rows, n)) @ mix
    scale = rng.uniform(0.5, 3.0, size=n)
    shift = rng.uniform(-2.0, 2.0, size=n)
    return Dataset.from_array(z * scale + shift, [f"x{j + 1}" for j in range(n)])


def fixture_mlp(n: int, seed: int = 0, *, hidden=(64, 32), activation: str = "tanh") -> MLPPredictor:
    return random_mlp(n, hidden, seed=seed, activation=activation, relevant=min(RELEVANT, n))
