"""Renewal decisions: flag computation, flag application and the row-gated lifelong loop."""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from datarenew.core import Batch, RenewalFlag, Thresholds, TrainingError, validate_batch
from datarenew.loss import LossPair
from datarenew.metrics import FLAG_COLUMNS, RECORD_COLUMNS, batch_metric
from datarenew.models import Predictor
from datarenew.similarity import SimilarityReport, batch_similarity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecisionRecord:
    """Outcome of one decision.

    ``post_metric`` scores the model left by this decision on the next decided
    batch (test-then-train); it stays None until that batch arrives.
    ``rows_accumulated`` is the stream position just past the decided batch.
    ``baseline_metric`` scores the never-renewed initial model on the same rows.
    """

    batch_index: int
    rows_accumulated: int
    similarity: float
    lm: Optional[float]
    ln: Optional[float]
    lc: Optional[float]
    flag: RenewalFlag
    post_metric: Optional[float] = None
    baseline_metric: Optional[float] = None

    def to_row(self, flags_only: bool = False) -> dict:
        """CSV row keyed by column name."""
        row = {
            "batch_index": self.batch_index,
            "rows": self.rows_accumulated,
            "similarity": self.similarity,
            "lm": self.lm,
            "ln": self.ln,
            "lc": self.lc,
            "flag": int(self.flag),
            "post_metric": self.post_metric,
            "baseline_metric": self.baseline_metric,
        }
        columns = FLAG_COLUMNS if flags_only else RECORD_COLUMNS
        return {k: row[k] for k in columns}


class Decision(NamedTuple):
    """Flag plus the evidence it was based on; ``losses`` is None when similarity sufficed."""

    flag: RenewalFlag
    report: SimilarityReport
    losses: Optional[LossPair]


def classify(similarity: float, lc: Optional[float], thresholds: Thresholds) -> RenewalFlag:
    """Map a similarity and a loss change rate to a flag.

    Ties resolve toward the cheaper action: p >= z retains, lc > y retrains,
    x < lc <= y updates, lc <= x retains.
    """
    if similarity >= thresholds.z:
        return RenewalFlag.RETAIN
    if lc is None or math.isnan(lc):
        raise ValueError("A loss change rate is required when similarity is below z.")
    if lc > thresholds.y:
        return RenewalFlag.RETRAIN
    if lc > thresholds.x:
        return RenewalFlag.UPDATE
    return RenewalFlag.RETAIN


def decide(prev: Batch, nxt: Batch, model: Predictor, thresholds: Thresholds) -> Decision:
    """Decide whether to retain, update or retrain ``model`` given the reference and new batch.

    Losses are only evaluated when the aggregate similarity falls below z.
    """
    report = batch_similarity(prev, nxt)
    if report.aggregate >= thresholds.z:
        return Decision(RenewalFlag.RETAIN, report, None)
    losses = LossPair.from_losses(model.loss_on(prev), model.loss_on(nxt))
    return Decision(classify(report.aggregate, losses.lc, thresholds), report, losses)


def apply(flag: RenewalFlag, model: Predictor, prev: Batch, nxt: Batch) -> Predictor:
    """Carry out a flag.

    RETAIN returns the model itself, UPDATE warm-starts on prev followed by nxt,
    RETRAIN fits a fresh model on nxt alone.
    """
    flag = RenewalFlag(flag)
    try:
        if flag is RenewalFlag.RETAIN:
            return model
        if flag is RenewalFlag.UPDATE:
            return model.warm_fit(prev.concat(nxt))
        return model.fresh().fit(nxt)
    except TrainingError as exc:
        raise TrainingError(exc.args[0], flag) from exc


# ----------------------------------------------------------------------
# Lifelong loop
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class PipelineState:
    """Everything the loop carries between calls.

    ``pending`` holds the rows accumulated toward the next batch; there are
    always fewer than L of them between decisions.
    """

    reference: Batch
    model: Predictor
    thresholds: Thresholds
    pending: tuple = ()
    history: tuple = ()
    baseline: Optional[Predictor] = None
    rows_seen: int = 0

    @property
    def pending_rows(self) -> int:
        """Rows waiting for the gate."""
        return sum(chunk.shape[0] for chunk in self.pending)


def initialize(
    initial_rows,
    model: Predictor,
    thresholds: Thresholds,
    track_baseline: bool = True,
    start_row: Optional[int] = None,
):
    """Fit ``model`` on the initial rows (unless already fitted) and make them the reference batch.

    ``start_row`` is the stream position of the first row fed afterwards; it
    defaults to the size of the initial block, so ``rows_accumulated`` is the
    position in the whole stream. Pass 0 when the initial rows are history
    kept outside the stream.
    """
    if start_row is not None and start_row < 0:
        raise ValueError(f"start_row must be non-negative, got {start_row}.")
    reference = validate_batch(initial_rows, model.schema)
    fitted = model if model.fitted else model.fit(reference)
    logger.info("initial model fitted on %d rows", reference.n_rows)
    return PipelineState(
        reference=reference,
        model=fitted,
        thresholds=thresholds,
        baseline=fitted if track_baseline else None,
        rows_seen=reference.n_rows if start_row is None else start_row,
    )


def step(state: PipelineState, incoming) -> tuple[PipelineState, Optional[DecisionRecord]]:
    """Append rows; once L rows have accumulated, decide on them and roll the reference over.

    At most L rows may arrive per call (use :func:`feed` for larger chunks).
    """
    limit = state.thresholds.min_rows
    rows = np.asarray(incoming, dtype=np.float64)
    if rows.size == 0:
        return state, None
    chunk = validate_batch(rows, state.reference.schema).rows
    if chunk.shape[0] > limit:
        raise ValueError(f"step accepts at most L={limit} rows per call, got {chunk.shape[0]}.")

    pending = state.pending + (chunk,)
    seen = state.rows_seen + chunk.shape[0]
    if state.pending_rows + chunk.shape[0] < limit:
        return replace(state, pending=pending, rows_seen=seen), None

    stacked = np.vstack(pending)
    batch = validate_batch(stacked[:limit], state.reference.schema)
    rest = stacked[limit:]

    history = list(state.history)
    if history:
        history[-1] = _score_record(history[-1], state, batch)

    decision = decide(state.reference, batch, state.model, state.thresholds)
    model = apply(decision.flag, state.model, state.reference, batch)
    losses = decision.losses
    record = DecisionRecord(
        batch_index=len(history) + 1,
        rows_accumulated=seen - rest.shape[0],
        similarity=decision.report.aggregate,
        lm=None if losses is None else losses.lm,
        ln=None if losses is None else losses.ln,
        lc=None if losses is None else losses.lc,
        flag=decision.flag,
    )
    logger.info(
        "batch %d at %d rows: similarity=%.4f lc=%s -> %s",
        record.batch_index,
        record.rows_accumulated,
        record.similarity,
        "-" if record.lc is None else f"{record.lc:.4f}",
        record.flag.name,
    )
    history.append(record)
    new_state = replace(
        state,
        reference=batch,
        model=model,
        pending=(rest,) if rest.shape[0] else (),
        history=tuple(history),
        rows_seen=seen,
    )
    return new_state, record


def feed(state: PipelineState, rows) -> tuple[PipelineState, list[DecisionRecord]]:
    """Stream any number of rows through :func:`step` in chunks of at most L."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return state, []
    rows = np.atleast_2d(rows)
    limit = state.thresholds.min_rows
    records = []
    for start in range(0, rows.shape[0], limit):
        state, record = step(state, rows[start : start + limit])
        if record is not None:
            records.append(record)
    return state, records


def finalize(state: PipelineState) -> PipelineState:
    """Score the last record on any leftover rows that never reached the gate."""
    if not state.history or not state.pending:
        return state
    leftover = validate_batch(np.vstack(state.pending), state.reference.schema)
    history = list(state.history)
    history[-1] = _score_record(history[-1], state, leftover)
    return replace(state, history=tuple(history))


def run_pipeline(rows, model: Predictor, thresholds: Thresholds, initial_rows: Optional[int] = None):
    """Fit on the first ``initial_rows`` rows (default L), stream the rest, then finalize."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    initial_rows = thresholds.min_rows if initial_rows is None else initial_rows
    if initial_rows < 2 or initial_rows > rows.shape[0]:
        raise ValueError(f"Need between 2 and {rows.shape[0]} initial rows, got {initial_rows}.")
    state = initialize(rows[:initial_rows], model, thresholds)
    state, _ = feed(state, rows[initial_rows:])
    return finalize(state)


def _score_record(record: DecisionRecord, state: PipelineState, batch: Batch) -> DecisionRecord:
    baseline = None if state.baseline is None else batch_metric(state.baseline, batch)
    return replace(record, post_metric=batch_metric(state.model, batch), baseline_metric=baseline)
