"""Batch-to-batch similarity: counting for binary attributes, absolute Pearson for numeric ones."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from datarenew.core import Batch, SchemaError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeSimilarity:
    """Similarity of one attribute between two batches."""

    name: str
    sim: float
    used: bool
    delta: float


@dataclass(frozen=True)
class SimilarityReport:
    """Per-attribute similarities and their delta-weighted aggregate."""

    per_attribute: tuple[AttributeSimilarity, ...]
    aggregate: float

    def to_frame(self) -> pd.DataFrame:
        """One row per attribute plus an aggregate row."""
        rows = [{"name": a.name, "sim": a.sim, "used": a.used} for a in self.per_attribute]
        rows.append({"name": "aggregate", "sim": self.aggregate, "used": True})
        return pd.DataFrame(rows, columns=["name", "sim", "used"])

    def to_csv(self, path: Union[str, Path]):
        """Write the report as CSV (name, sim, used)."""
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def binary_similarity(a, b) -> float:
    """Fraction of positions where two binary vectors agree (both 0 or both 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"Binary vectors must be 1-D and of equal length, got {a.shape} and {b.shape}.")
    if a.size == 0:
        raise ValueError("Binary similarity needs at least one position.")
    for vec in (a, b):
        if np.any((vec != 0.0) & (vec != 1.0)):
            raise ValueError("Binary similarity only accepts values 0 and 1.")
    both_zero = np.count_nonzero((a == 0.0) & (b == 0.0))
    both_one = np.count_nonzero((a == 1.0) & (b == 1.0))
    return (both_zero + both_one) / a.size


def numeric_similarity(a, b) -> float:
    """Absolute Pearson correlation of two equally long numeric vectors.

    Constant vectors have no defined correlation: two constant, elementwise equal
    vectors score 1.0; any other case with a constant vector scores 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"Numeric vectors must be 1-D and of equal length, got {a.shape} and {b.shape}.")
    if a.size < 2:
        raise ValueError(f"Numeric similarity needs at least 2 values, got {a.size}.")

    da = a - a.mean()
    db = b - b.mean()
    ss_a = float(np.dot(da, da))
    ss_b = float(np.dot(db, db))
    a_const = np.all(a == a[0])
    b_const = np.all(b == b[0])
    if a_const or b_const or ss_a == 0.0 or ss_b == 0.0:
        return 1.0 if (a_const and b_const and np.array_equal(a, b)) else 0.0

    rho = float(np.dot(da, db)) / math.sqrt(ss_a * ss_b)
    return min(1.0, abs(rho))


def batch_similarity(prev: Batch, nxt: Batch) -> SimilarityReport:
    """Compare two batches attribute by attribute and aggregate with the delta weights.

    Batches of unequal length are compared on their most recent common rows.
    The target column never takes part.
    """
    if prev.schema != nxt.schema:
        raise SchemaError("Similarity needs both batches to share one schema.")
    if prev.n_rows == 0 or nxt.n_rows == 0:
        raise ValueError("Similarity needs two non-empty batches.")

    common = min(prev.n_rows, nxt.n_rows)
    a_rows = prev.rows[-common:]
    b_rows = nxt.rows[-common:]

    parts = []
    for i in prev.schema.feature_indices:
        attr = prev.schema.attributes[i]
        used = attr.delta > 0
        compare = binary_similarity if attr.kind.is_binary else numeric_similarity
        try:
            sim = compare(a_rows[:, i], b_rows[:, i])
        except ValueError as exc:
            if used:
                raise ValueError(f"Attribute '{attr.name}': {exc}") from exc
            sim = float("nan")
        parts.append(AttributeSimilarity(attr.name, sim, used, attr.delta))
        logger.debug("similarity %s = %.6f (used=%s)", attr.name, sim, used)

    weights = np.array([p.delta for p in parts if p.used])
    if weights.size == 0 or weights.sum() <= 0:
        raise ValueError("All effective delta weights are zero.")
    sims = np.array([p.sim for p in parts if p.used])
    aggregate = float(np.dot(weights, sims) / weights.sum())
    return SimilarityReport(tuple(parts), min(1.0, max(0.0, aggregate)))
