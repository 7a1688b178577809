"""Synthetic industrial-style streams with controlled drift, and CSV replay of recorded streams.

Numeric attributes follow a periodic process profile (offset + amplitude * sin)
plus Gaussian noise; binary attributes follow the same cycle, agreeing with it
at a Bernoulli ``rate``. Regression targets are linear in the attributes,
classification targets shift the class-conditional attribute means.
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from pandas.errors import ParserError

from datarenew.core import Attribute, AttributeKind, ReplayError, Schema, SchemaError

logger = logging.getLogger(__name__)

LAW_FIELDS = ("offset", "amplitude", "phase", "rate", "coef", "shift0", "shift1")


class DriftKind(str, Enum):
    """How the stream moves from the pre-drift to the post-drift law."""

    NONE = "none"
    ABRUPT = "abrupt"
    GRADUAL = "gradual"


@dataclass(frozen=True)
class Law:
    """Data-generating parameters, one entry per non-target attribute.

    offset/amplitude/phase shape the periodic profile, rate is the binary
    agreement rate, coef/intercept/noise define a regression target and
    shift0/shift1 the class-conditional mean offsets of a classification target.
    """

    offset: tuple
    amplitude: tuple
    phase: tuple
    rate: tuple
    coef: tuple
    shift0: tuple
    shift1: tuple
    intercept: float = 0.0
    noise: float = 0.1
    positive_rate: float = 0.5

    def __post_init__(self):
        """All vectors share one length."""
        lengths = {len(getattr(self, name)) for name in LAW_FIELDS}
        if len(lengths) != 1:
            raise ValueError(f"Law vectors must share one length, got lengths {sorted(lengths)}.")
        if self.noise < 0:
            raise ValueError(f"Target noise must be non-negative, got {self.noise}.")
        if any(not 0.0 <= r <= 1.0 for r in self.rate) or not 0.0 <= self.positive_rate <= 1.0:
            raise ValueError("Rates must lie in [0, 1].")

    @property
    def dim(self) -> int:
        """Number of attributes the law describes."""
        return len(self.offset)

    def blend(self, other: "Law", weight: float) -> "Law":
        """Linear interpolation: weight 0 gives self, 1 gives other."""
        values = {}
        for name in LAW_FIELDS:
            a = np.asarray(getattr(self, name))
            b = np.asarray(getattr(other, name))
            values[name] = tuple(((1.0 - weight) * a + weight * b).tolist())
        for name in ("intercept", "noise", "positive_rate"):
            values[name] = (1.0 - weight) * getattr(self, name) + weight * getattr(other, name)
        return Law(**values)

    @classmethod
    def from_dict(cls, data: dict) -> "Law":
        """Build a law from a JSON object."""
        unknown = set(data) - set(LAW_FIELDS) - {"intercept", "noise", "positive_rate"}
        if unknown:
            raise ValueError(f"Unknown law parameters: {', '.join(sorted(unknown))}.")
        values = {k: tuple(float(v) for v in data[k]) for k in LAW_FIELDS if k in data}
        missing = set(LAW_FIELDS) - set(values)
        if missing:
            raise ValueError(f"Law is missing: {', '.join(sorted(missing))}.")
        for k in ("intercept", "noise", "positive_rate"):
            if k in data:
                values[k] = float(data[k])
        return cls(**values)


@dataclass(frozen=True)
class DriftSpec:
    """Drift kind, its position in rows and the two laws."""

    pre: Law
    post: Law
    kind: DriftKind = DriftKind.NONE
    at_row: int = 0
    start_row: int = 0
    end_row: int = 0

    def __post_init__(self):
        """Check row positions and law dimensions."""
        object.__setattr__(self, "kind", DriftKind(self.kind))
        if self.pre.dim != self.post.dim:
            raise ValueError("Pre- and post-drift laws must describe the same attributes.")
        if self.kind is DriftKind.ABRUPT and self.at_row < 0:
            raise ValueError(f"Abrupt drift row must be non-negative, got {self.at_row}.")
        if self.kind is DriftKind.GRADUAL and not 0 <= self.start_row < self.end_row:
            raise ValueError(f"Gradual drift needs 0 <= start < end, got {self.start_row}:{self.end_row}.")

    def weights(self, rows: np.ndarray) -> np.ndarray:
        """Post-law weight per row index: 0 before drift, 1 after."""
        rows = np.asarray(rows, dtype=np.float64)
        if self.kind is DriftKind.NONE:
            return np.zeros_like(rows)
        if self.kind is DriftKind.ABRUPT:
            return (rows >= self.at_row).astype(np.float64)
        span = self.end_row - self.start_row
        return np.clip((rows - self.start_row) / span, 0.0, 1.0)

    def describe(self) -> str:
        """CLI notation of the drift."""
        if self.kind is DriftKind.ABRUPT:
            return f"abrupt:{self.at_row}"
        if self.kind is DriftKind.GRADUAL:
            return f"gradual:{self.start_row}:{self.end_row}"
        return "none"


@dataclass(frozen=True)
class StreamSpec:
    """Everything :func:`generate` needs; the output is a pure function of it."""

    schema: Schema
    total_rows: int
    drift: DriftSpec
    noise: float = 0.15
    seed: int = 0
    period: int = 100

    def __post_init__(self):
        """Check sizes and the match between schema and laws."""
        if self.total_rows < 1:
            raise ValueError(f"A stream needs at least one row, got {self.total_rows}.")
        if self.noise < 0:
            raise ValueError(f"Noise must be non-negative, got {self.noise}.")
        if self.period < 2:
            raise ValueError(f"Period must be at least 2 rows, got {self.period}.")
        if self.drift.pre.dim != len(self.schema.feature_indices):
            width = len(self.schema.feature_indices)
            raise SchemaError(f"Laws describe {self.drift.pre.dim} attributes, schema has {width}.")


# ----------------------------------------------------------------------
# Default schemas and laws
# ----------------------------------------------------------------------
def default_schema(
    task: str = "regression", numeric: int = 3, binary: int = 1, indicators: int = 2
) -> Schema:
    """Process attributes x1.., state flags s1.. and the target y.

    Classification streams add fault indicators f1.. with delta 0: they carry
    the class signal but are left out of the similarity.
    """
    attrs = [Attribute(f"x{i + 1}", AttributeKind.NUMERIC) for i in range(numeric)]
    attrs += [Attribute(f"s{i + 1}", AttributeKind.BINARY) for i in range(binary)]
    if task == "classification":
        attrs += [Attribute(f"f{i + 1}", AttributeKind.NUMERIC, 0.0) for i in range(indicators)]
        attrs.append(Attribute("y", AttributeKind.TARGET_BINARY))
    elif task == "regression":
        attrs.append(Attribute("y", AttributeKind.TARGET_NUMERIC))
    else:
        raise ValueError(f"Unknown task '{task}', expected regression or classification.")
    return Schema(tuple(attrs))


_OFFSETS = (20.0, 100.0, 5.0, 50.0)
_AMPLITUDES = (2.0, 10.0, 0.5, 4.0)
_WEIGHTS = (1.0, -0.6, 0.8, 0.4)


def default_laws(schema: Schema, phase_shift: float = math.pi / 2, class_gap: float = 1.0) -> tuple[Law, Law]:
    """Pre- and post-drift laws for a schema built by :func:`default_schema`.

    The post law shifts every process phase by ``phase_shift``, inverts the
    binary agreement rates, reverses and re-weights the regression coefficients
    and swaps the class means.
    """
    pre, post = {k: [] for k in LAW_FIELDS}, {k: [] for k in LAW_FIELDS}
    process = 0
    for j, attr in enumerate(schema.features):
        indicator = attr.delta == 0 and not attr.kind.is_binary and schema.task == "classification"
        if attr.kind.is_binary:
            offset, amplitude, weight = 0.0, 1.0, 0.5
        elif indicator:
            offset, amplitude, weight = 0.0, 0.0, 0.0
        else:
            offset = _OFFSETS[process % len(_OFFSETS)]
            amplitude = _AMPLITUDES[process % len(_AMPLITUDES)]
            weight = _WEIGHTS[process % len(_WEIGHTS)] / amplitude
            process += 1
        phase = 0.7 * j
        gap = class_gap if indicator else 0.0
        for law, sign in ((pre, 1.0), (post, -1.0)):
            law["offset"].append(offset)
            law["amplitude"].append(amplitude)
            law["rate"].append(0.97 if sign > 0 else 0.03)
            law["shift0"].append(-sign * gap)
            law["shift1"].append(sign * gap)
        pre["phase"].append(phase)
        post["phase"].append(phase + phase_shift)
        pre["coef"].append(weight)
        post["coef"].append(-1.5 * weight if j % 2 == 0 else 0.5 * weight)

    pre_law = Law(**{k: tuple(v) for k, v in pre.items()}, intercept=0.0, noise=0.1)
    post_law = Law(**{k: tuple(v) for k, v in post.items()}, intercept=3.0, noise=0.1)
    return pre_law, post_law


def parse_drift(text: Optional[str]) -> tuple[DriftKind, tuple[int, ...]]:
    """Parse 'none', 'abrupt:ROW' or 'gradual:START:END'."""
    if not text or text == "none":
        return DriftKind.NONE, ()
    kind, *parts = str(text).split(":")
    try:
        rows = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"Drift rows must be integers: '{text}'.") from exc
    if kind == "abrupt" and len(rows) == 1:
        return DriftKind.ABRUPT, rows
    if kind == "gradual" and len(rows) == 2:
        return DriftKind.GRADUAL, rows
    raise ValueError(f"Invalid drift '{text}'; use none, abrupt:ROW or gradual:START:END.")


def build_stream_spec(
    task: str = "regression",
    total_rows: int = 10000,
    drift: Optional[str] = None,
    *,
    noise: float = 0.15,
    seed: int = 0,
    period: int = 100,
    phase_shift: float = math.pi / 2,
    schema: Optional[Schema] = None,
    laws: Optional[tuple[Law, Law]] = None,
) -> StreamSpec:
    """Assemble a StreamSpec from CLI-level settings."""
    schema = schema or default_schema(task)
    pre, post = laws or default_laws(schema, phase_shift)
    kind, rows = parse_drift(drift)
    positions = {}
    if kind is DriftKind.ABRUPT:
        positions = {"at_row": rows[0]}
    elif kind is DriftKind.GRADUAL:
        positions = {"start_row": rows[0], "end_row": rows[1]}
    drift_spec = DriftSpec(pre, post, kind, **positions)
    return StreamSpec(schema, total_rows, drift_spec, noise, seed, period)


def stream_spec_from_dict(data: dict, **overrides) -> StreamSpec:
    """StreamSpec from the "stream" object of a JSON run config; ``overrides`` win."""
    settings = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    schema = None
    if "schema" in settings:
        schema = Schema.from_dict(settings["schema"])
    laws = None
    if "pre" in settings or "post" in settings:
        if not ("pre" in settings and "post" in settings):
            raise ValueError("A stream config needs both 'pre' and 'post' laws, or neither.")
        laws = (Law.from_dict(settings["pre"]), Law.from_dict(settings["post"]))
    return build_stream_spec(
        settings.get("task", "regression"),
        int(settings.get("rows", settings.get("total_rows", 10000))),
        settings.get("drift"),
        noise=float(settings.get("noise", 0.15)),
        seed=int(settings.get("seed", 0)),
        period=int(settings.get("period", 100)),
        phase_shift=float(settings.get("phase_shift", math.pi / 2)),
        schema=schema,
        laws=laws,
    )


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------
def law_at(spec: StreamSpec, row: int) -> Law:
    """The law in force at a row index."""
    weight = float(spec.drift.weights(np.array([row]))[0])
    if weight == 0.0:
        return spec.drift.pre
    if weight == 1.0:
        return spec.drift.post
    return spec.drift.pre.blend(spec.drift.post, weight)


def _law_matrix(spec: StreamSpec, name: str, weights: np.ndarray) -> np.ndarray:
    a = np.asarray(getattr(spec.drift.pre, name), dtype=np.float64)
    b = np.asarray(getattr(spec.drift.post, name), dtype=np.float64)
    if a.ndim == 0:
        return (1.0 - weights) * a + weights * b
    return (1.0 - weights)[:, None] * a[None, :] + weights[:, None] * b[None, :]


def generate(spec: StreamSpec) -> np.ndarray:
    """Generate the full n x m row matrix described by ``spec``."""
    n = spec.total_rows
    schema = spec.schema
    k = len(schema.feature_indices)
    rng = np.random.default_rng(spec.seed)
    feature_noise = rng.normal(size=(n, k))
    binary_draws = rng.random((n, k))
    label_draws = rng.random(n)
    target_noise = rng.normal(size=n)

    t = np.arange(n, dtype=np.float64)
    w = spec.drift.weights(t)
    offset = _law_matrix(spec, "offset", w)
    amplitude = _law_matrix(spec, "amplitude", w)
    phase = _law_matrix(spec, "phase", w)
    cycle = np.sin(2.0 * np.pi * t[:, None] / spec.period + phase)

    positive_rate = _law_matrix(spec, "positive_rate", w)
    labels = (label_draws < positive_rate).astype(np.float64)

    feats = np.empty((n, k))
    binary = np.array([a.kind.is_binary for a in schema.features])
    scale = np.where(amplitude > 0, amplitude, 1.0) * spec.noise
    numeric = offset + amplitude * cycle + scale * feature_noise
    if schema.task == "classification":
        shift0 = _law_matrix(spec, "shift0", w)
        shift1 = _law_matrix(spec, "shift1", w)
        numeric = numeric + np.where(labels[:, None] == 1.0, shift1, shift0)
    agree = np.where(cycle >= 0.0, 1.0, 0.0)
    rate = _law_matrix(spec, "rate", w)
    flip = binary_draws >= rate
    states = np.where(flip, 1.0 - agree, agree)
    feats[:, ~binary] = numeric[:, ~binary]
    feats[:, binary] = states[:, binary]

    if schema.task == "classification":
        target = labels
    else:
        coef = _law_matrix(spec, "coef", w)
        intercept = _law_matrix(spec, "intercept", w)
        noise = _law_matrix(spec, "noise", w)
        target = np.einsum("ij,ij->i", feats, coef) + intercept + noise * target_noise

    rows = np.empty((n, schema.width))
    rows[:, schema.feature_indices] = feats
    rows[:, schema.target_index] = target
    logger.debug("generated %d rows (%s drift, seed %d)", n, spec.drift.kind.value, spec.seed)
    return rows


def stream(spec: StreamSpec, chunk_rows: int = 1000) -> Iterator[np.ndarray]:
    """Yield the generated rows in chunks."""
    rows = generate(spec)
    for start in range(0, rows.shape[0], chunk_rows):
        yield rows[start : start + chunk_rows]


# ----------------------------------------------------------------------
# CSV replay
# ----------------------------------------------------------------------
class ReplayedStream(NamedTuple):
    """Rows read from a file, in file order, with their schema."""

    schema: Schema
    rows: np.ndarray


def write_stream(rows: np.ndarray, schema: Schema, csv_path: Union[str, Path], schema_path: Union[str, Path]):
    """Write rows as CSV plus the JSON schema sidecar; floats are written in shortest round-trip form."""
    Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.asarray(rows, dtype=np.float64), columns=schema.names)
    frame.to_csv(csv_path, index=False, lineterminator="\n")
    schema.save(schema_path)


def replay(csv_path: Union[str, Path], schema_path: Union[str, Path]) -> ReplayedStream:
    """Read a recorded stream; rows keep their file order.

    Raises
    ------
    ReplayError
        Unparseable file, header/schema name mismatch, a non-numeric or
        non-finite value, or a binary cell other than 0 or 1 (the message
        cites the file line).

    """
    schema = Schema.from_json(schema_path)
    try:
        frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except ParserError as exc:
        raise ReplayError(f"Cannot parse '{csv_path}': {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ReplayError(f"'{csv_path}' is empty.") from exc

    header = [str(c).strip() for c in frame.columns]
    frame.columns = header
    for name in header:
        if name not in schema.names:
            raise ReplayError(f"Column '{name}' is not defined in the schema '{schema_path}'.", line=1)
    for name in schema.names:
        if name not in header:
            raise ReplayError(f"Schema attribute '{name}' has no column in '{csv_path}'.", line=1)

    frame = frame[schema.names]
    values = np.empty(frame.shape, dtype=np.float64)
    for j, attr in enumerate(schema.attributes):
        column = frame[attr.name].str.strip()
        parsed = pd.to_numeric(column, errors="coerce").to_numpy(dtype=np.float64)
        bad = np.isnan(parsed)
        if bad.any():
            i = int(np.argmax(bad))
            raise ReplayError(
                f"Value {column.iloc[i]!r} in column '{attr.name}' is not a number.", line=i + 2
            )
        bad = ~np.isfinite(parsed)
        if attr.kind.is_binary:
            bad |= (parsed != 0.0) & (parsed != 1.0)
        if bad.any():
            i = int(np.argmax(bad))
            expected = "0 or 1" if attr.kind.is_binary else "a finite number"
            raise ReplayError(
                f"Value {column.iloc[i]!r} in column '{attr.name}' is not {expected}.", line=i + 2
            )
        values[:, j] = [float(v) for v in column]
    logger.info("replayed %d rows from %s", values.shape[0], csv_path)
    return ReplayedStream(schema, values)


def spec_summary(spec: StreamSpec) -> dict:
    """Flat description of a spec for run headers."""
    return {
        "task": spec.schema.task,
        "total_rows": spec.total_rows,
        "drift": spec.drift.describe(),
        "noise": spec.noise,
        "seed": spec.seed,
        "period": spec.period,
        "pre_law": asdict(spec.drift.pre),
        "post_law": asdict(spec.drift.post),
    }
