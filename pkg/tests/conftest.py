import numpy as np
import pytest

from xaitu.game import TabularGame

# Two-player game with mixed-sign singleton marginals: v(0)=0, v(1)=-3, v(2)=2, v(12)=1.
EXAMPLE = np.array([0.0, -3.0, 2.0, 1.0])
# Two-player game whose singleton marginals nearly cancel: PA blows up.
BLOWUP = np.array([0.0, 10.0, -9.0, 15.0])


def tabular(values, family="full", cache=True):
    values = np.asarray(values, dtype=np.float64) if not isinstance(values, dict) else values
    n = int(np.log2(len(values))) if not isinstance(values, dict) else max(max(values).bit_length(), 1)
    return TabularGame(n, values, family, cache=cache)


@pytest.fixture
def example_game():
    return tabular(EXAMPLE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
