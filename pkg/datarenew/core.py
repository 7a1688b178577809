"""Domain types shared by all modules: schema, batch, thresholds and renewal flags."""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class RenewalError(Exception):
    """Base class for all errors raised by the renewal engine."""


class SchemaError(RenewalError, ValueError):
    """Invalid schema, or two batches that do not share a schema."""


class BatchError(RenewalError, ValueError):
    """Rows that cannot form a valid batch."""


class TrainingError(RenewalError, RuntimeError):
    """A predictor could not be fitted.

    The renewal flag that triggered the fit is kept in ``flag`` (None outside the pipeline).
    """

    def __init__(self, message: str, flag: Optional["RenewalFlag"] = None):
        """Store the message and the triggering flag."""
        super().__init__(message)
        self.flag = flag

    def __str__(self):
        """Prefix the message with the flag that triggered the fit."""
        msg = super().__str__()
        if self.flag is None:
            return msg
        return f"{self.flag.name} failed: {msg}"


class ReplayError(RenewalError, ValueError):
    """A data file could not be parsed; ``line`` is the 1-based file line, if known."""

    def __init__(self, message: str, line: Optional[int] = None):
        """Store the message and the offending line."""
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class AttributeKind(str, Enum):
    """Kind of a schema attribute."""

    BINARY = "binary"
    NUMERIC = "numeric"
    TARGET_NUMERIC = "target_numeric"
    TARGET_BINARY = "target_binary"

    @property
    def is_target(self) -> bool:
        """Whether the attribute is the prediction target."""
        return self in (AttributeKind.TARGET_NUMERIC, AttributeKind.TARGET_BINARY)

    @property
    def is_binary(self) -> bool:
        """Whether the attribute only holds 0/1 values."""
        return self in (AttributeKind.BINARY, AttributeKind.TARGET_BINARY)


class RenewalFlag(IntEnum):
    """Three-valued outcome of a renewal decision."""

    RETAIN = 0
    UPDATE = 1
    RETRAIN = 2


@dataclass(frozen=True)
class Attribute:
    """One column of a stream."""

    name: str
    kind: AttributeKind
    delta: float = 1.0


@dataclass(frozen=True)
class Schema:
    """Ordered attribute list shared by every batch of a stream."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        """Check the schema invariants."""
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"Attribute names must be unique, duplicated: {', '.join(dupes)}")
        targets = [a for a in self.attributes if a.kind.is_target]
        if len(targets) != 1:
            raise SchemaError(f"Schema needs exactly one target attribute, found {len(targets)}.")
        for attr in self.attributes:
            if not 0.0 <= attr.delta <= 1.0:
                raise SchemaError(f"Delta of '{attr.name}' must lie in [0, 1], got {attr.delta}.")
        if not any(a.delta > 0 for a in self.attributes if not a.kind.is_target):
            raise SchemaError("At least one non-target attribute needs a delta above 0.")

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------
    @property
    def names(self) -> list[str]:
        """Attribute names in column order."""
        return [a.name for a in self.attributes]

    @property
    def width(self) -> int:
        """Number of columns, target included."""
        return len(self.attributes)

    @property
    def target_index(self) -> int:
        """Column index of the target."""
        return next(i for i, a in enumerate(self.attributes) if a.kind.is_target)

    @property
    def target(self) -> Attribute:
        """The target attribute."""
        return self.attributes[self.target_index]

    @property
    def feature_indices(self) -> list[int]:
        """Column indices of all non-target attributes."""
        return [i for i, a in enumerate(self.attributes) if not a.kind.is_target]

    @property
    def features(self) -> list[Attribute]:
        """All non-target attributes in column order."""
        return [self.attributes[i] for i in self.feature_indices]

    @property
    def task(self) -> str:
        """'regression' for a numeric target, 'classification' for a binary one."""
        return "classification" if self.target.kind.is_binary else "regression"

    @property
    def schema_hash(self) -> str:
        """Stable digest of names, kinds and deltas."""
        payload = json.dumps(self.to_dict(), sort_keys=False, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    # ------------------------------------------------------------------
    # (De)serialisation
    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        """Schema sidecar form: name -> {kind, delta}, in column order."""
        return {a.name: {"kind": a.kind.value, "delta": a.delta} for a in self.attributes}

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        """Build a schema from the sidecar mapping name -> {kind, delta}."""
        if not isinstance(data, dict) or not data:
            raise SchemaError("Schema must be a non-empty JSON object mapping names to {kind, delta}.")
        attrs = []
        for name, spec in data.items():
            if isinstance(spec, str):
                spec = {"kind": spec}
            if not isinstance(spec, dict) or "kind" not in spec:
                raise SchemaError(f"Attribute '{name}' needs a 'kind'.")
            try:
                kind = AttributeKind(spec["kind"])
            except ValueError as exc:
                valid = ", ".join(k.value for k in AttributeKind)
                raise SchemaError(f"Attribute '{name}' has unknown kind '{spec['kind']}' ({valid}).") from exc
            attrs.append(Attribute(str(name), kind, float(spec.get("delta", 1.0))))
        return cls(tuple(attrs))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "Schema":
        """Load a schema sidecar file."""
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"Schema file '{path}' is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]):
        """Write the schema sidecar file."""
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=4)


@dataclass(frozen=True, eq=False)
class Batch:
    """A validated, read-only window of rows.

    Build batches through :func:`validate_batch`; the constructor does not re-check values.
    """

    schema: Schema
    rows: np.ndarray
    timestamps: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def n_rows(self) -> int:
        """Number of rows."""
        return self.rows.shape[0]

    def __len__(self):
        """Number of rows."""
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        """Values of one attribute."""
        return self.rows[:, self.schema.names.index(name)]

    @property
    def features(self) -> np.ndarray:
        """The n x (m-1) feature matrix."""
        return self.rows[:, self.schema.feature_indices]

    @property
    def target(self) -> np.ndarray:
        """The target column."""
        return self.rows[:, self.schema.target_index]

    def tail(self, n: int) -> "Batch":
        """The most recent ``n`` rows."""
        if n >= self.n_rows:
            return self
        ts = None if self.timestamps is None else self.timestamps[-n:]
        return _frozen_batch(self.schema, self.rows[-n:], ts)

    def concat(self, other: "Batch") -> "Batch":
        """This batch followed by ``other``."""
        if other.schema != self.schema:
            raise SchemaError("Cannot concatenate batches with different schemas.")
        ts = None
        if self.timestamps is not None and other.timestamps is not None:
            ts = np.concatenate([self.timestamps, other.timestamps])
        return _frozen_batch(self.schema, np.vstack([self.rows, other.rows]), ts)


def _frozen_batch(schema: Schema, rows: np.ndarray, timestamps: Optional[np.ndarray]) -> Batch:
    rows = np.array(rows, dtype=np.float64, copy=True)
    rows.setflags(write=False)
    if timestamps is not None:
        timestamps = np.array(timestamps, dtype=np.float64, copy=True)
        timestamps.setflags(write=False)
    return Batch(schema, rows, timestamps)


def validate_batch(
    rows: Union[np.ndarray, Sequence[Sequence[float]]],
    schema: Schema,
    timestamps: Optional[Iterable[float]] = None,
) -> Batch:
    """Check rows against the schema and wrap them in a read-only Batch.

    Raises
    ------
    BatchError
        Empty input, ragged or wrongly sized rows, missing or non-finite values,
        non-binary values in a binary column, or non-monotone timestamps.

    """
    try:
        matrix = np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise BatchError(f"Rows are not a rectangular numeric matrix: {exc}") from exc

    if matrix.size == 0 or matrix.ndim == 0 or matrix.shape[0] == 0:
        raise BatchError("A batch needs at least one row.")
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise BatchError(f"Rows must form a 2-D matrix, got {matrix.ndim} dimensions.")
    if matrix.shape[1] != schema.width:
        raise BatchError(f"Rows have {matrix.shape[1]} values, the schema defines {schema.width} attributes.")

    bad = ~np.isfinite(matrix)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise BatchError(f"Missing or non-finite value in row {r}, column '{schema.names[c]}'.")

    for i, attr in enumerate(schema.attributes):
        if attr.kind.is_binary:
            col = matrix[:, i]
            off = (col != 0.0) & (col != 1.0)
            if off.any():
                r = int(np.argmax(off))
                raise BatchError(f"Binary column '{attr.name}' holds {col[r]!r} in row {r}; expected 0 or 1.")

    ts = None
    if timestamps is not None:
        ts = np.asarray(list(timestamps), dtype=np.float64)
        if ts.shape != (matrix.shape[0],):
            raise BatchError(f"Got {ts.shape[0]} timestamps for {matrix.shape[0]} rows.")
        if np.any(np.diff(ts) < 0):
            raise BatchError("Timestamps must be non-decreasing.")

    return _frozen_batch(schema, matrix, ts)


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds: similarity z, loss-change bounds x < y and the gate L."""

    z: float = 0.5
    x: float = 0.3
    y: float = 0.9
    min_rows: int = 10000

    def __post_init__(self):
        """Check 0 < z < 1, 0 < x < y and L >= 1."""
        if not 0.0 < self.z < 1.0:
            raise ValueError(f"Similarity threshold z must lie in (0, 1), got {self.z}.")
        if not 0.0 < self.x < self.y:
            raise ValueError(f"Loss-change bounds need 0 < x < y, got x={self.x}, y={self.y}.")
        if int(self.min_rows) != self.min_rows or self.min_rows < 1:
            raise ValueError(f"Minimum rows L must be a positive integer, got {self.min_rows}.")
