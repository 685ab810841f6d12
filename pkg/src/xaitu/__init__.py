"""Feature attribution with cooperative-game allocation rules."""

__version__ = "0.1.0"

from xaitu.approx import ApproxConfig, kernel_shap, permutation_shap  # noqa: E402
from xaitu.game import Dataset, GameSnapshot, TabularGame, XaiGame, load_csv  # noqa: E402
from xaitu.predictors import load_predictor  # noqa: E402
from xaitu.rules import AttributionVector, RuleId, attribute, exact_shap  # noqa: E402

__all__ = [
    "ApproxConfig",
    "AttributionVector",
    "Dataset",
    "GameSnapshot",
    "RuleId",
    "TabularGame",
    "XaiGame",
    "attribute",
    "exact_shap",
    "kernel_shap",
    "load_csv",
    "load_predictor",
    "permutation_shap",
]
