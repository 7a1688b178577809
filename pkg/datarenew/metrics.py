"""Post-decision metrics: RMSE and AUC trajectories, relative improvement and CSV export."""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from datarenew.core import Batch, RenewalFlag
from datarenew.loss import rmse
from datarenew.utils import write_commented_csv

FLAG_COLUMNS = ("batch_index", "rows", "similarity", "lm", "ln", "lc", "flag")
RECORD_COLUMNS = FLAG_COLUMNS + ("post_metric", "baseline_metric")


class MetricKind(str, Enum):
    """Which metric a trajectory tracks."""

    RMSE = "rmse"
    AUC = "auc"

    @classmethod
    def for_task(cls, task: str) -> "MetricKind":
        """RMSE for regression, AUC for classification."""
        return cls.AUC if task == "classification" else cls.RMSE


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"Got {scores.size} scores for {labels.size} labels.")
    if np.any((labels != 0.0) & (labels != 1.0)):
        raise ValueError("AUC labels must be 0 or 1.")
    positive = labels == 1.0
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels.")
    ranks = rankdata(scores)
    u_stat = float(ranks[positive].sum()) - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def relative_improvement(before: float, after: float, kind: Union[MetricKind, str]) -> float:
    """Relative metric change, positive when the model got better.

    RMSE: (before - after) / before; AUC: (after - before) / before.
    """
    kind = MetricKind(kind)
    if before == 0:
        raise ValueError(f"Relative improvement is undefined for a {kind.value} of 0 before.")
    if kind is MetricKind.RMSE:
        return (before - after) / before
    return (after - before) / before


def batch_metric(model, batch: Batch) -> Optional[float]:
    """Score a model on a batch: RMSE for regression, AUC on raw margins for classification.

    Returns None when the metric is undefined (AUC of a single-class batch).
    """
    scores = model.predict(batch.features)
    if model.task == "regression":
        return rmse(scores, batch.target)
    labels = batch.target
    if np.all(labels == labels[0]):
        return None
    return auc(scores, labels)


@dataclass(frozen=True)
class MetricTrajectory:
    """Metric per decided batch, with the flag whose model was scored."""

    kind: MetricKind
    points: tuple[tuple[int, float, RenewalFlag], ...] = ()

    def __post_init__(self):
        """Batch indices must increase strictly."""
        indices = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("Trajectory batch indices must be strictly increasing.")

    @classmethod
    def from_records(cls, records: Sequence, kind: Union[MetricKind, str]) -> "MetricTrajectory":
        """Collect the scored records."""
        points = tuple(
            (r.batch_index, r.post_metric, r.flag) for r in records if r.post_metric is not None
        )
        return cls(MetricKind(kind), points)

    @property
    def values(self) -> list[float]:
        """Metric values in batch order."""
        return [p[1] for p in self.points]

    @property
    def final(self) -> Optional[float]:
        """Last metric value."""
        return self.points[-1][1] if self.points else None

    def improvement(self) -> Optional[float]:
        """Relative improvement of the last value over the first."""
        if len(self.points) < 2 or self.points[0][1] == 0:
            return None
        return relative_improvement(self.points[0][1], self.final, self.kind)


def flag_counts(records: Sequence) -> dict[str, int]:
    """Number of decisions per flag."""
    counts = {flag.name.lower(): 0 for flag in RenewalFlag}
    for record in records:
        counts[record.flag.name.lower()] += 1
    return counts


def summarize(records: Sequence, trajectory: MetricTrajectory) -> dict:
    """Summary figures written under the metrics table and printed by the CLI."""
    summary = {"decisions": len(records), **flag_counts(records)}
    summary["metric"] = trajectory.kind.value
    summary["final_metric"] = trajectory.final
    summary["improvement_vs_batch_1"] = trajectory.improvement()

    paired = [(r.post_metric, r.baseline_metric) for r in records]
    paired = [(m, b) for m, b in paired if m is not None and b is not None]
    if paired:
        renewal = float(np.mean([m for m, _ in paired]))
        baseline = float(np.mean([b for _, b in paired]))
        summary["mean_metric"] = renewal
        summary["mean_baseline_metric"] = baseline
        summary["improvement_vs_frozen"] = (
            relative_improvement(baseline, renewal, trajectory.kind) if baseline != 0 else None
        )
    return summary


def export(
    records: Sequence,
    trajectory: MetricTrajectory,
    path: Union[str, Path],
    header: Optional[dict] = None,
    flags_only: bool = False,
) -> dict:
    """Write the decision records as CSV with '#' header and summary lines; returns the summary."""
    indices = [r.batch_index for r in records]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("Record batch indices must be strictly increasing.")
    if not {p[0] for p in trajectory.points} <= set(indices):
        raise ValueError("Trajectory refers to batches that have no record.")

    columns = FLAG_COLUMNS if flags_only else RECORD_COLUMNS
    frame = pd.DataFrame([r.to_row(flags_only) for r in records], columns=list(columns))
    summary = summarize(records, trajectory)
    write_commented_csv(path, frame, header or {}, summary)
    return summary
