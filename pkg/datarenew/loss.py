"""Monitoring losses and the loss change rate LC."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossPair:
    """Loss of one frozen model on the reference batch (lm) and the new batch (ln)."""

    lm: float
    ln: float
    lc: float

    @classmethod
    def from_losses(cls, lm: float, ln: float) -> "LossPair":
        """Pair two losses with their change rate."""
        return cls(float(lm), float(ln), loss_change_rate(lm, ln))


def rmse(pred, target) -> float:
    """Root mean squared error."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ValueError(f"Prediction and target lengths differ: {pred.size} vs {target.size}.")
    if pred.size == 0:
        raise ValueError("RMSE of an empty vector is undefined.")
    resid = pred - target
    return math.sqrt(float(np.dot(resid, resid)) / resid.size)


def perceptron_loss(w, b: float, features, labels) -> float:
    """Perceptron criterion: sum of margin violations max(0, -y (w.x + b)), labels in {-1, +1}."""
    w = np.asarray(w, dtype=np.float64).ravel()
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[1] != w.size:
        raise ValueError(f"Feature width {x.shape[1]} does not match weight length {w.size}.")
    if x.shape[0] != y.size:
        raise ValueError(f"Got {x.shape[0]} feature rows for {y.size} labels.")
    if np.any((y != 1.0) & (y != -1.0)):
        raise ValueError("Perceptron labels must be -1 or +1.")
    margins = y * (x @ w + b)
    return float(np.maximum(0.0, -margins).sum())


def loss_change_rate(lm: float, ln: float) -> float:
    """Relative loss change |ln - lm| / lm.

    Returns 0.0 when both losses are zero and +inf when only lm is zero.
    """
    if lm < 0 or ln < 0 or math.isnan(lm) or math.isnan(ln):
        raise ValueError(f"Losses must be non-negative, got lm={lm}, ln={ln}.")
    if lm == 0.0:
        return 0.0 if ln == 0.0 else math.inf
    return abs(ln - lm) / lm
