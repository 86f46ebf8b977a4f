"""Replicated experiments: seeds, mean/std aggregation and the CSV format.

CSV layout (UTF-8, LF)::

    # stddev: population (ddof=0) over runs
    metric,round,mean,stddev
    cum_regret,500,12.25,0.5
    ...

Metrics appear in the order cum_regret, cum_comm, cluster_error with rounds
ascending inside each metric. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .agent import AlgorithmParams
from .environment import GroundTruth, SyntheticConfig
from .protocol import RunResult, default_snapshot_interval, run, snapshot_rounds

METRICS = ("cum_regret", "cum_comm", "cluster_error")
HEADER = ("metric", "round", "mean", "stddev")
COMMENT = "# stddev: population (ddof=0) over runs"


@dataclass
class ExperimentConfig:
    env: SyntheticConfig
    params: AlgorithmParams
    num_runs: int = 1
    base_seed: int = 0
    snapshot_interval: Optional[int] = None
    output_path: Optional[str] = None
    truth: Optional[GroundTruth] = None     # set for embedding-backed worlds

    def __post_init__(self):
        if self.num_runs < 1:
            raise ValueError("num_runs must be >= 1")
        if self.snapshot_interval is not None and self.snapshot_interval < 1:
            raise ValueError("snapshot_interval must be >= 1")

    @property
    def interval(self) -> int:
        return self.snapshot_interval or default_snapshot_interval(self.env.horizon)


@dataclass
class AggregateSeries:
    # metric -> list of (round, mean, stddev)
    rows: dict = field(default_factory=lambda: {m: [] for m in METRICS})

    def __eq__(self, other):
        return isinstance(other, AggregateSeries) and all(
            self.rows.get(m, []) == other.rows.get(m, []) for m in METRICS)

    def final(self, metric: str):
        series = self.rows[metric]
        return series[-1] if series else None

    @property
    def horizon(self) -> int:
        last = self.final("cum_regret")
        return last[0] if last else 0


def run_metrics(result: RunResult, rounds: list[int]) -> dict:
    """Per-snapshot metric values of one run."""
    errors = dict(result.snapshots)
    return {
        "cum_regret": [float(result.cumulative_regret[r - 1]) for r in rounds],
        "cum_comm": [float(result.cumulative_comm[r - 1]) for r in rounds],
        "cluster_error": [float(errors[r]) for r in rounds],
    }


def aggregate(per_run: list[dict], rounds: list[int]) -> AggregateSeries:
    series = AggregateSeries()
    for m in METRICS:
        values = np.array([pr[m] for pr in per_run], dtype=float).reshape(len(per_run), len(rounds))
        means = values.mean(axis=0) if len(per_run) else np.zeros(len(rounds))
        stds = values.std(axis=0) if len(per_run) else np.zeros(len(rounds))
        series.rows[m] = [(r, float(mu), float(sd)) for r, mu, sd in zip(rounds, means, stds)]
    return series


def _one_replication(cfg: ExperimentConfig, run_index: int) -> dict:
    rounds = snapshot_rounds(cfg.env.horizon, cfg.interval)
    result = run(cfg.env, cfg.params, cfg.base_seed + run_index, cfg.interval, truth=cfg.truth)
    return run_metrics(result, rounds)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> AggregateSeries:
    rounds = snapshot_rounds(cfg.env.horizon, cfg.interval)
    indices = range(cfg.num_runs)
    if jobs > 1 and cfg.num_runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_run = list(pool.map(_one_replication, [cfg] * cfg.num_runs, indices))
    else:
        per_run = [_one_replication(cfg, i) for i in indices]
    series = aggregate(per_run, rounds)
    if cfg.output_path:
        write_csv(series, cfg.output_path)
    return series


def format_csv(series: AggregateSeries) -> str:
    buf = io.StringIO()
    buf.write(COMMENT + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for m in METRICS:
        for r, mu, sd in series.rows.get(m, []):
            w.writerow((m, int(r), repr(float(mu)), repr(float(sd))))
    return buf.getvalue()


def write_csv(series: AggregateSeries, path) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(series))


class SchemaError(ValueError):
    pass


def read_csv(path) -> AggregateSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    reader = csv.reader(lines)
    if tuple(next(reader)) != HEADER:
        raise SchemaError(f"{path}: header must be {','.join(HEADER)}")
    series = AggregateSeries()
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 4 or row[0] not in METRICS:
            raise SchemaError(f"{path}: bad row {lineno}: {row}")
        try:
            series.rows[row[0]].append((int(row[1]), float(row[2]), float(row[3])))
        except ValueError as exc:
            raise SchemaError(f"{path}: bad number in row {lineno}") from exc
    return series
