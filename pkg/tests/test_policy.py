import statistics
import time
from unittest.mock import MagicMock

import numpy as np
import pytest

from datarenew.core import (
    Attribute,
    AttributeKind,
    RenewalFlag,
    Schema,
    Thresholds,
    TrainingError,
    validate_batch,
)
from datarenew.models import LinearRegressor, linreg_fit
from datarenew.policy import (
    DecisionRecord,
    apply,
    classify,
    decide,
    feed,
    finalize,
    initialize,
    run_pipeline,
    step,
)
from datarenew.similarity import SimilarityReport
from datarenew.simgen import build_stream_spec, generate

EPS = 1e-6
ONE_FEATURE = Schema((Attribute("x", AttributeKind.NUMERIC), Attribute("y", AttributeKind.TARGET_NUMERIC)))


def stream_rows(rows, drift=None, seed=0):
    spec = build_stream_spec("regression", rows, drift, seed=seed)
    return spec.schema, generate(spec)


def line_rows(slope, intercept, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, n)
    return np.column_stack([x, slope * x + intercept + rng.normal(scale=0.05, size=n)])


@pytest.fixture
def report_with():
    """Factory for a similarity report with a fixed aggregate."""

    def make(aggregate):
        return SimilarityReport((), aggregate)

    return make


# -----------------------------
# classify / decide
# -----------------------------
@pytest.mark.parametrize("p_offset", [-EPS, 0.0, EPS])
@pytest.mark.parametrize("lc_point", ["x", "y"])
@pytest.mark.parametrize("lc_offset", [-EPS, 0.0, EPS])
def test_decision_table_grid(p_offset, lc_point, lc_offset):
    t = Thresholds()
    p = t.z + p_offset
    lc = getattr(t, lc_point) + lc_offset
    flag = classify(p, lc, t)
    if p >= t.z:
        assert flag is RenewalFlag.RETAIN
    elif lc > t.y:
        assert flag is RenewalFlag.RETRAIN
    elif lc > t.x:
        assert flag is RenewalFlag.UPDATE
    else:
        assert flag is RenewalFlag.RETAIN


@pytest.mark.parametrize(
    "p, lc, expected",
    [
        (0.8, None, RenewalFlag.RETAIN),
        (0.5, None, RenewalFlag.RETAIN),
        (0.2, 1.2, RenewalFlag.RETRAIN),
        (0.2, 0.9, RenewalFlag.UPDATE),
        (0.2, 0.5, RenewalFlag.UPDATE),
        (0.2, 0.3, RenewalFlag.RETAIN),
        (0.2, 0.1, RenewalFlag.RETAIN),
        (0.2, float("inf"), RenewalFlag.RETRAIN),
    ],
)
def test_classify_cases(p, lc, expected):
    assert classify(p, lc, Thresholds()) is expected


def test_classify_needs_lc_below_z():
    with pytest.raises(ValueError):
        classify(0.2, None, Thresholds())


@pytest.mark.parametrize(
    "ln, expected",
    [(2.2, RenewalFlag.RETRAIN), (1.5, RenewalFlag.UPDATE), (1.1, RenewalFlag.RETAIN)],
)
def test_decide_consults_losses_below_z(monkeypatch, report_with, ln, expected):
    monkeypatch.setattr("datarenew.policy.batch_similarity", lambda prev, nxt: report_with(0.2))
    model = MagicMock()
    model.loss_on.side_effect = [1.0, ln]
    decision = decide("prev", "next", model, Thresholds())
    assert decision.flag is expected
    assert decision.losses.lm == 1.0
    assert decision.losses.ln == ln
    assert [c.args[0] for c in model.loss_on.call_args_list] == ["prev", "next"]


def test_decide_short_circuits_on_similarity():
    batch = validate_batch(line_rows(2.0, 1.0, 50, seed=0), ONE_FEATURE)
    probe = MagicMock(wraps=linreg_fit(batch))
    decision = decide(batch, batch, probe, Thresholds())
    assert decision.flag is RenewalFlag.RETAIN
    assert decision.losses is None
    assert probe.loss_on.call_count == 0


# -----------------------------
# apply
# -----------------------------
@pytest.fixture
def law_batches():
    """A batch from y = 2x + 1 and one from the new law y = -3x + 4."""
    prev = validate_batch(line_rows(2.0, 1.0, 200, seed=1), ONE_FEATURE)
    nxt = validate_batch(line_rows(-3.0, 4.0, 200, seed=2), ONE_FEATURE)
    return prev, nxt


def test_apply_retain_is_idempotent(law_batches):
    prev, nxt = law_batches
    model = linreg_fit(prev)
    snapshot = model.snapshot()
    current = model
    for _ in range(5):
        current = apply(RenewalFlag.RETAIN, current, prev, nxt)
    assert current is model
    assert current.snapshot() == snapshot


def test_apply_update_trains_on_both_batches(law_batches):
    prev, nxt = law_batches
    updated = apply(RenewalFlag.UPDATE, linreg_fit(prev), prev, nxt)
    assert updated.n_trained == prev.n_rows + nxt.n_rows


def test_apply_retrain_fits_new_law(law_batches):
    prev, nxt = law_batches
    frozen = linreg_fit(prev)
    retrained = apply(RenewalFlag.RETRAIN, frozen, prev, nxt)
    held_out = validate_batch(line_rows(-3.0, 4.0, 200, seed=3), ONE_FEATURE)
    assert retrained.n_trained == nxt.n_rows
    assert retrained.loss_on(held_out) < frozen.loss_on(held_out)


def test_apply_reports_flag_on_training_failure(law_batches):
    prev, _ = law_batches
    broken = validate_batch([[1.0, 2.0], [1.0, 5.0]], ONE_FEATURE)
    with pytest.raises(TrainingError) as excinfo:
        apply(RenewalFlag.RETRAIN, linreg_fit(prev), prev, broken)
    assert excinfo.value.flag is RenewalFlag.RETRAIN
    assert str(excinfo.value).startswith("RETRAIN failed")


# -----------------------------
# Lifelong loop
# -----------------------------
def test_gating_counts_rows_from_the_stream_start():
    schema, rows = stream_rows(45000)
    state = initialize(rows[:10000], LinearRegressor(schema), Thresholds(min_rows=10000))
    state, records = feed(state, rows[10000:])
    assert [r.rows_accumulated for r in records] == [20000, 30000, 40000]
    assert [r.batch_index for r in records] == [1, 2, 3]
    assert state.pending_rows == 5000
    assert state.rows_seen == 45000


def test_gating_on_a_stream_after_offline_training():
    schema, rows = stream_rows(45000)
    state = initialize(rows[:10000], LinearRegressor(schema), Thresholds(min_rows=10000), start_row=0)
    state, records = feed(state, rows[10000:])
    assert [r.rows_accumulated for r in records] == [10000, 20000, 30000]
    assert state.pending_rows == 5000


def test_initialize_rejects_negative_start_row():
    schema, rows = stream_rows(1000)
    with pytest.raises(ValueError, match="start_row"):
        initialize(rows, LinearRegressor(schema), Thresholds(min_rows=1000), start_row=-1)


def test_step_fires_at_the_l_th_row():
    schema, rows = stream_rows(20000)
    state = initialize(rows[:10000], LinearRegressor(schema), Thresholds(min_rows=10000))
    state, record = step(state, rows[10000:19999])
    assert record is None
    assert state.pending_rows == 9999
    state, record = step(state, rows[19999:20000])
    assert record is not None
    assert record.rows_accumulated == 20000
    assert state.pending_rows == 0
    np.testing.assert_array_equal(state.reference.rows, rows[10000:20000])


def test_step_below_gate_keeps_model():
    schema, rows = stream_rows(1500)
    state = initialize(rows[:1000], LinearRegressor(schema), Thresholds(min_rows=1000))
    new_state, record = step(state, rows[1000:1500])
    assert record is None
    assert new_state.model is state.model
    assert new_state.history == ()


def test_step_rejects_more_than_l_rows():
    schema, rows = stream_rows(3000)
    state = initialize(rows[:1000], LinearRegressor(schema), Thresholds(min_rows=1000))
    with pytest.raises(ValueError, match="at most"):
        step(state, rows[1000:2001])


def test_uneven_chunks_still_decide_at_multiples_of_l():
    schema, rows = stream_rows(6500)
    state = initialize(rows[:1000], LinearRegressor(schema), Thresholds(min_rows=1000))
    rng = np.random.default_rng(0)
    start, fired = 1000, []
    while start < rows.shape[0]:
        size = int(rng.integers(1, 1001))
        state, record = step(state, rows[start : start + size])
        start += size
        if record is not None:
            fired.append(record.rows_accumulated)
    assert fired == [2000, 3000, 4000, 5000, 6000]


def test_thirty_batches_give_thirty_records():
    schema, rows = stream_rows(31000)
    state = run_pipeline(rows, LinearRegressor(schema), Thresholds(min_rows=1000))
    assert len(state.history) == 30


def test_no_drift_stream_retains_throughout():
    schema, rows = stream_rows(12000, seed=4)
    state = run_pipeline(rows, LinearRegressor(schema), Thresholds(min_rows=1000))
    assert all(r.flag is RenewalFlag.RETAIN for r in state.history)
    assert all(r.lm is None for r in state.history)


def test_prequential_metrics_are_backfilled():
    schema, rows = stream_rows(4500)
    state = initialize(rows[:1000], LinearRegressor(schema), Thresholds(min_rows=1000))
    state, records = feed(state, rows[1000:])
    assert len(records) == 3
    assert records[-1].post_metric is None
    assert all(r.post_metric is not None for r in state.history[:2])
    assert state.history[-1].post_metric is None

    done = finalize(state)
    assert done.history[-1].post_metric is not None
    assert all(r.baseline_metric is not None for r in done.history)
    # nothing renewed, so the model is the frozen baseline
    assert [r.post_metric for r in done.history] == [r.baseline_metric for r in done.history]


def test_abrupt_drift_triggers_retrain():
    schema, rows = stream_rows(8000, drift="abrupt:5000", seed=2)
    state = run_pipeline(rows, LinearRegressor(schema), Thresholds(min_rows=1000))
    by_row = {r.rows_accumulated: r for r in state.history}
    # the batch of rows 5000..5999 is the first one drawn after the drift
    assert by_row[6000].flag is RenewalFlag.RETRAIN
    assert by_row[6000].batch_index == 5
    assert by_row[6000].similarity < 0.5
    assert all(by_row[end].flag is RenewalFlag.RETAIN for end in (2000, 3000, 4000, 5000, 7000, 8000))


def test_record_row_contract():
    record = DecisionRecord(1, 100000, 0.34, 0.5929, 0.75, 0.265, RenewalFlag.RETAIN, 30.17)
    assert list(record.to_row()) == [
        "batch_index",
        "rows",
        "similarity",
        "lm",
        "ln",
        "lc",
        "flag",
        "post_metric",
        "baseline_metric",
    ]
    assert record.to_row()["flag"] == 0
    assert "post_metric" not in record.to_row(flags_only=True)


def test_decide_runtime_scales_at_most_quadratically():
    schema, rows = stream_rows(80000, drift="abrupt:40000")
    model = linreg_fit(validate_batch(rows[:1000], schema))

    def median_time(n):
        prev = validate_batch(rows[40000 - n : 40000], schema)
        nxt = validate_batch(rows[40000 : 40000 + n], schema)
        timings = []
        for _ in range(10):
            start = time.perf_counter()
            decide(prev, nxt, model, Thresholds())
            timings.append(time.perf_counter() - start)
        return statistics.median(timings)

    base = median_time(5000)
    for ratio in (2, 4):
        assert median_time(5000 * ratio) <= base * ratio**2 * 1.2 + 0.05
