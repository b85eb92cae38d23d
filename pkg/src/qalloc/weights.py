from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

WEIGHT_TOL = 1e-9


class Regime(str, enum.Enum):
    LONG_ONLY = "LongOnly"  # w >= 0, sum(w) = 1
    LONG_SHORT = "LongShort"  # sum(|w|) = 1
    # sum(w) = 1 with any signs; unconstrained minimum-variance weights and
    # the signed-sum long-short normalization live here
    FULLY_INVESTED = "FullyInvested"


class WeightError(ValueError):
    pass


def check_weights(w: np.ndarray, regime: Regime, tol: float = WEIGHT_TOL) -> None:
    if w.ndim != 1 or w.size == 0:
        raise WeightError("weights must be a non-empty vector")
    if not np.isfinite(w).all():
        raise WeightError("weights must be finite")
    if regime is Regime.LONG_ONLY:
        if w.min() < 0:
            raise WeightError(f"long-only weights must be non-negative: {w}")
        if abs(w.sum() - 1.0) > tol:
            raise WeightError(f"long-only weights sum to {w.sum()!r}, not 1")
    elif regime is Regime.LONG_SHORT:
        if abs(np.abs(w).sum() - 1.0) > tol:
            raise WeightError(f"long-short gross exposure is {np.abs(w).sum()!r}, not 1")
    elif regime is Regime.FULLY_INVESTED:
        if abs(w.sum() - 1.0) > tol:
            raise WeightError(f"fully-invested weights sum to {w.sum()!r}, not 1")


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    regime: Regime

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        regime = Regime(self.regime)
        check_weights(w, regime)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "regime", regime)

    def __len__(self):
        return self.weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self.regime is other.regime and np.array_equal(self.weights, other.weights)

    __hash__ = None
