import numpy as np
import pytest

from datarenew.core import Attribute, AttributeKind, RenewalFlag, Schema, validate_batch
from datarenew.metrics import (
    FLAG_COLUMNS,
    RECORD_COLUMNS,
    MetricKind,
    MetricTrajectory,
    auc,
    batch_metric,
    export,
    flag_counts,
    relative_improvement,
)
from datarenew.models import LinearRegressor, Perceptron
from datarenew.policy import DecisionRecord
from tests.helpers import read_commented_csv

CLASS_SCHEMA = Schema(
    (Attribute("p", AttributeKind.NUMERIC), Attribute("label", AttributeKind.TARGET_BINARY))
)
REG_SCHEMA = Schema((Attribute("p", AttributeKind.NUMERIC), Attribute("y", AttributeKind.TARGET_NUMERIC)))


def all_pairs_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


@pytest.fixture
def records():
    """Three decisions: retain, retrain, update."""
    return [
        DecisionRecord(1, 1000, 0.93, None, None, None, RenewalFlag.RETAIN, 30.17, 30.17),
        DecisionRecord(2, 2000, 0.12, 0.59, 4.2, 6.12, RenewalFlag.RETRAIN, 12.5, 41.0),
        DecisionRecord(3, 3000, 0.41, 0.61, 0.9, 0.47, RenewalFlag.UPDATE, 10.88, 40.2),
    ]


# -----------------------------
# auc
# -----------------------------
def test_auc_examples():
    assert auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == 0.75
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5


def test_auc_errors():
    with pytest.raises(ValueError, match="both"):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 2])
    with pytest.raises(ValueError):
        auc([0.1], [1, 0])


def test_auc_matches_all_pairs_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        # integer scores keep ties in play
        scores = rng.integers(0, 10, n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
        assert auc(scores, labels) == pytest.approx(all_pairs_auc(scores, labels), abs=1e-12)


def test_auc_properties():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = 80
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = rng.normal(size=n)
        value = auc(scores, labels)
        assert 0.0 <= value <= 1.0
        assert value + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)
        assert auc(np.exp(3 * scores) + 7, labels) == pytest.approx(value, abs=1e-12)


# -----------------------------
# relative_improvement
# -----------------------------
def test_relative_improvement_reproduces_reported_figures():
    assert relative_improvement(30.17, 10.88, "rmse") == pytest.approx(0.6394, abs=1e-4)
    assert relative_improvement(0.68, 0.91, MetricKind.AUC) == pytest.approx(0.3382, abs=1e-4)


def test_relative_improvement_sign_and_errors():
    assert relative_improvement(10.0, 12.0, "rmse") < 0
    assert relative_improvement(0.9, 0.8, "auc") < 0
    with pytest.raises(ValueError):
        relative_improvement(0.0, 1.0, "rmse")
    with pytest.raises(ValueError):
        relative_improvement(1.0, 1.0, "accuracy")


# -----------------------------
# batch_metric
# -----------------------------
def test_batch_metric_regression_and_classification():
    reg = LinearRegressor.from_coefficients(REG_SCHEMA, [1.0], 0.0)
    assert batch_metric(reg, validate_batch([[1.0, 2.0], [2.0, 2.0]], REG_SCHEMA)) == pytest.approx(
        np.sqrt(0.5)
    )

    clf = Perceptron.from_coefficients(CLASS_SCHEMA, [1.0], 0.0)
    batch = validate_batch([[-2.0, 0], [1.0, 1], [2.0, 0], [3.0, 1]], CLASS_SCHEMA)
    assert batch_metric(clf, batch) == 0.75
    assert batch_metric(clf, validate_batch([[1.0, 1], [2.0, 1]], CLASS_SCHEMA)) is None


# -----------------------------
# Trajectories and export
# -----------------------------
def test_trajectory_from_records(records):
    trajectory = MetricTrajectory.from_records(records, "rmse")
    assert trajectory.values == [30.17, 12.5, 10.88]
    assert trajectory.final == 10.88
    assert trajectory.improvement() == pytest.approx(0.6394, abs=1e-4)


def test_trajectory_indices_must_increase():
    with pytest.raises(ValueError):
        MetricTrajectory(MetricKind.RMSE, ((2, 1.0, RenewalFlag.RETAIN), (2, 1.0, RenewalFlag.RETAIN)))


def test_flag_counts(records):
    assert flag_counts(records) == {"retain": 1, "update": 1, "retrain": 1}


def test_export_writes_records_and_summary(tmp_path, records):
    path = tmp_path / "metrics.csv"
    summary = export(records, MetricTrajectory.from_records(records, "rmse"), path, {"seed": 0})
    header, frame, footer = read_commented_csv(path)
    assert header == {"seed": "0"}
    assert list(frame.columns) == list(RECORD_COLUMNS)
    assert list(frame["flag"]) == [0, 2, 1]
    assert np.isnan(frame["lm"].iloc[0])
    assert footer["decisions"] == "3"
    assert float(footer["improvement_vs_batch_1"]) == pytest.approx(0.6394, abs=1e-4)
    assert summary["mean_baseline_metric"] > summary["mean_metric"]
    assert summary["improvement_vs_frozen"] > 0


def test_export_is_byte_identical(tmp_path, records):
    trajectory = MetricTrajectory.from_records(records, "rmse")
    export(records, trajectory, tmp_path / "a.csv", {"seed": 0})
    export(records, trajectory, tmp_path / "b.csv", {"seed": 0})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_export_flags_only(tmp_path, records):
    path = tmp_path / "flags.csv"
    export(records, MetricTrajectory.from_records(records, "rmse"), path, flags_only=True)
    _, frame, _ = read_commented_csv(path)
    assert list(frame.columns) == list(FLAG_COLUMNS)


def test_export_empty(tmp_path):
    path = tmp_path / "empty.csv"
    summary = export([], MetricTrajectory(MetricKind.AUC), path)
    _, frame, footer = read_commented_csv(path)
    assert frame.empty
    assert list(frame.columns) == list(RECORD_COLUMNS)
    assert summary["decisions"] == 0
    assert footer["final_metric"] == ""


def test_export_rejects_inconsistent_input(tmp_path, records):
    with pytest.raises(ValueError):
        export(records[::-1], MetricTrajectory(MetricKind.RMSE), tmp_path / "x.csv")
    trajectory = MetricTrajectory(MetricKind.RMSE, ((9, 1.0, RenewalFlag.RETAIN),))
    with pytest.raises(ValueError):
        export(records, trajectory, tmp_path / "x.csv")
