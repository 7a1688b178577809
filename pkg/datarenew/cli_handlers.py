"""Handlers behind the datarenew subcommands."""

import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from datarenew.core import Schema, Thresholds
from datarenew.metrics import MetricKind, MetricTrajectory, export, flag_counts, summarize
from datarenew.models import make_predictor
from datarenew.policy import run_pipeline
from datarenew.run_conf import RunConfig
from datarenew.simgen import StreamSpec, generate, replay, spec_summary, stream_spec_from_dict, write_stream
from datarenew.utils import calculate_local_checksum, format_value, write_commented_csv

logger = logging.getLogger(__name__)

# (z, y, x) cells of the threshold grid; the default cell is the baseline
TUNE_SIMILARITY = (0.3, 0.5, 0.7)
TUNE_LOSS_BOUNDS = ((1.0, 0.4), (0.9, 0.4), (0.8, 0.4), (1.0, 0.3), (0.9, 0.3), (0.8, 0.3))
TUNE_BASELINE = (0.5, 0.9, 0.3)
TUNE_PHASE_STEP = 0.9


def stream_spec_for(cfg: RunConfig, **overrides) -> StreamSpec:
    """Stream spec from the config; top-level settings beat the "stream" section."""
    settings = {
        "task": cfg.task,
        "rows": cfg.rows,
        "drift": None if cfg.drift == "none" else cfg.drift,
        "noise": cfg.noise,
        "seed": cfg.seed,
        "period": cfg.period,
        **overrides,
    }
    spec = stream_spec_from_dict(cfg.stream, **settings)
    for size in {cfg.batch, cfg.initial or cfg.batch}:
        if size % spec.period:
            warnings.warn(
                f"Batch size {size} is not a multiple of the period {spec.period}; "
                "similarities of aligned batches will be lower."
            )
    return spec


def run_records(rows: np.ndarray, schema: Schema, cfg: RunConfig, thresholds: Thresholds, initial=None):
    """Run one pipeline over ``rows`` and return its decision records."""
    model = make_predictor(schema, cfg.model, cfg.model_config(schema.task))
    state = run_pipeline(rows, model, thresholds, initial)
    logger.info("pipeline done: %d rows, %d decisions", state.rows_seen, len(state.history))
    return list(state.history)


def handle_simulate(cfg: RunConfig):
    """Generate a stream, run the renewal pipeline and export the metrics."""
    spec = stream_spec_for(cfg)
    rows = generate(spec)
    if cfg.dump_stream:
        dump = Path(cfg.dump_stream)
        write_stream(rows, spec.schema, dump / "stream.csv", dump / "schema.json")
        print(f"💾 Stream written to {dump / 'stream.csv'} (schema: {dump / 'schema.json'})")
    header = {**cfg.header(), **{f"stream_{k}": v for k, v in spec_summary(spec).items()}}
    _run_and_export(rows, spec.schema, cfg, header)


def handle_replay(cfg: RunConfig):
    """Run the renewal pipeline over a recorded CSV stream."""
    replayed = replay(cfg.csv, cfg.schema)
    header = {
        **cfg.header(),
        "schema_hash": replayed.schema.schema_hash,
        "stream_sha256": calculate_local_checksum(Path(cfg.csv)),
        "stream_rows": len(replayed.rows),
    }
    _run_and_export(replayed.rows, replayed.schema, cfg, header)


def _run_and_export(rows, schema: Schema, cfg: RunConfig, header: dict):
    records = run_records(rows, schema, cfg, cfg.thresholds(), cfg.initial)
    trajectory = MetricTrajectory.from_records(records, MetricKind.for_task(schema.task))
    summary = export(records, trajectory, cfg.out, header, cfg.flags_only)
    print_summary(summary, cfg.out)


def print_summary(summary: dict, out):
    """Print flag counts and metric figures of one run."""
    print(f"✅ {summary['decisions']} decisions written to {out}")
    print(f"   retain: {summary['retain']}  update: {summary['update']}  retrain: {summary['retrain']}")
    metric = summary["metric"].upper()
    if summary["final_metric"] is None:
        print(f"⚠️ No {metric} recorded (fewer than two decided batches).")
        return
    print(f"   final {metric}: {summary['final_metric']:.4f}")
    if summary["improvement_vs_batch_1"] is not None:
        print(f"   improvement vs batch 1: {summary['improvement_vs_batch_1']:.2%}")
    if summary.get("improvement_vs_frozen") is not None:
        print(f"   improvement vs frozen model: {summary['improvement_vs_frozen']:.2%}")


# ----------------------------------------------------------------------
# Threshold grid
# ----------------------------------------------------------------------
def tune_grid() -> list[tuple[float, float, float]]:
    """All (z, y, x) cells in report order."""
    return [(z, y, x) for z in TUNE_SIMILARITY for y, x in TUNE_LOSS_BOUNDS]


def _tune_stream(cfg: RunConfig) -> StreamSpec:
    """One shared stream; without an explicit drift it drifts gradually over the middle third.

    The process phases then move by about TUNE_PHASE_STEP radians per batch, so batch
    similarities spread across the similarity thresholds of the grid.
    """
    if cfg.drift != "none" or "drift" in cfg.stream:
        return stream_spec_for(cfg)
    start = (cfg.rows // 3) // cfg.batch * cfg.batch
    end = max(start + cfg.batch, (2 * cfg.rows // 3) // cfg.batch * cfg.batch)
    phase_shift = cfg.stream.get("phase_shift", TUNE_PHASE_STEP * (end - start) / cfg.batch)
    return stream_spec_for(cfg, drift=f"gradual:{start}:{end}", phase_shift=phase_shift)


def tune_frame(rows, schema: Schema, cfg: RunConfig) -> pd.DataFrame:
    """Run every grid cell on the same rows; cell order is fixed whatever the job count."""
    cells = tune_grid()
    kind = MetricKind.for_task(schema.task)

    def run_cell(cell):
        z, y, x = cell
        records = run_records(rows, schema, cfg, Thresholds(z, x, y, cfg.batch), cfg.initial)
        return summarize(records, MetricTrajectory.from_records(records, kind))

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            summaries = list(pool.map(run_cell, cells))
    else:
        summaries = [run_cell(cell) for cell in cells]

    table = []
    for (z, y, x), summary in zip(cells, summaries):
        table.append(
            {
                "z": z,
                "y": y,
                "x": x,
                "baseline": (z, y, x) == TUNE_BASELINE,
                "decisions": summary["decisions"],
                "retain": summary["retain"],
                "update": summary["update"],
                "retrain": summary["retrain"],
                "non_retain": summary["update"] + summary["retrain"],
                "final_metric": summary["final_metric"],
                "improvement_vs_batch_1": summary["improvement_vs_batch_1"],
                "mean_metric": summary.get("mean_metric"),
            }
        )
    return pd.DataFrame(table)


def handle_tune(cfg: RunConfig):
    """Evaluate the threshold grid on one seeded stream and write the grid report."""
    spec = _tune_stream(cfg)
    rows = generate(spec)
    frame = tune_frame(rows, spec.schema, cfg)
    header = {**cfg.header(), **{f"stream_{k}": v for k, v in spec_summary(spec).items()}}
    footer = {"cells": len(frame), "metric": MetricKind.for_task(spec.schema.task).value}
    write_commented_csv(cfg.out, frame, header, footer)

    print(f"✅ {len(frame)} grid cells written to {cfg.out}")
    for row in frame.itertuples(index=False):
        marker = "*" if row.baseline else " "
        print(
            f"{marker} z={row.z:<4} y/x={row.y}/{row.x}  "
            f"retain={row.retain:<3} update={row.update:<3} retrain={row.retrain:<3} "
            f"final={format_value(row.final_metric)}"
        )


# ----------------------------------------------------------------------
# Update-frequency sweep
# ----------------------------------------------------------------------
def sweep_frame(rows, schema: Schema, cfg: RunConfig) -> pd.DataFrame:
    """Run the pipeline once per batch size L on the same rows."""
    kind = MetricKind.for_task(schema.task)
    table = []
    for size in cfg.sizes:
        size = int(size)
        initial = cfg.initial or size
        if initial + size > len(rows):
            print(f"⚠️ Skipping L={size}: the stream has too few rows for one decision.", file=sys.stderr)
            continue
        records = run_records(rows, schema, cfg, cfg.thresholds(size), initial)
        summary = summarize(records, MetricTrajectory.from_records(records, kind))
        table.append(
            {
                "batch": size,
                "decisions": summary["decisions"],
                **flag_counts(records),
                "final_metric": summary["final_metric"],
                "mean_metric": summary.get("mean_metric"),
                "mean_baseline_metric": summary.get("mean_baseline_metric"),
                "improvement_vs_frozen": summary.get("improvement_vs_frozen"),
            }
        )
    return pd.DataFrame(
        table,
        columns=[
            "batch",
            "decisions",
            "retain",
            "update",
            "retrain",
            "final_metric",
            "mean_metric",
            "mean_baseline_metric",
            "improvement_vs_frozen",
        ],
    )


def handle_sweep(cfg: RunConfig):
    """Compare update frequencies on one generated stream."""
    spec = stream_spec_for(cfg)
    rows = generate(spec)
    frame = sweep_frame(rows, spec.schema, cfg)
    header = {**cfg.header(), **{f"stream_{k}": v for k, v in spec_summary(spec).items()}}
    write_commented_csv(cfg.out, frame, header, {"sizes": len(frame)})

    print(f"✅ {len(frame)} batch sizes written to {cfg.out}")
    for row in frame.itertuples(index=False):
        gain = row.improvement_vs_frozen
        gain_text = "-" if gain is None or (isinstance(gain, float) and math.isnan(gain)) else f"{gain:.2%}"
        print(
            f"  L={row.batch:<6} decisions={row.decisions:<3} retain={row.retain:<3} "
            f"update={row.update:<3} retrain={row.retrain:<3} vs frozen: {gain_text}"
        )
