"""Experiment runners: dispatch repeats, aggregate them into tables, write CSV and the manifest."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import ExperimentConfig, ExperimentKind, WorkerBackend
from src.distributions.families import RandomSource
from src.errors import ConfigError
from src.harness import io
from src.harness.models import asset_model_from_config, discrete_model_from_config, model_kind
from src.harness.pool import run_repeats
from src.harness.repeats import (
    SAMPLE_STREAM,
    Row,
    marginal_levels,
    normal_intervals,
    queue_model,
    regime_from_name,
    true_asset_box,
)
from src.queueing.waiting_time import simulate_queue
from src.uncertainty_sets.base import Tail
from src.uncertainty_sets.box import build_coordinate_box
from src.uncertainty_sets.discrete import build_discrete
from src.uncertainty_sets.geometry import clip_to_support

logger = logging.getLogger(__name__)

TRUTH_RUN = -1


@dataclass
class ExperimentOutput:
    """Paths written by a runner plus the aggregated tables, keyed by file stem."""

    out_dir: Path
    files: List[Path] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)

    def add(self, name: str, rows: Sequence[Row], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
        frame = pd.DataFrame(list(rows), columns=list(columns) if columns is not None else None)
        self.files.append(io.write_csv(frame.to_dict("records"), self.out_dir / f"{name}.csv", frame.columns))
        self.tables[name] = frame
        return frame


def _finish(output: ExperimentOutput, config: ExperimentConfig, inputs: Sequence[str] = ()) -> ExperimentOutput:
    output.files.append(io.write_manifest(output.out_dir, config.to_dict(), output.files, inputs))
    logger.info(f"Finished {config.experiment.value}: {len(output.files)} files in {output.out_dir}")
    return output


def _start(config: ExperimentConfig, kind: ExperimentKind) -> ExperimentOutput:
    if config.experiment is not kind:
        raise ConfigError(f"Expected a {kind.value} configuration, got {config.experiment.value}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Starting {kind.value} with seed={config.seed}, sizes={config.sizes}, repeats={config.repeats}")
    return ExperimentOutput(out_dir)


def summarize(values: Sequence[float]) -> Dict[str, float]:
    """10% quantile, mean, 90% quantile, sample SD and coefficient of variation."""
    array = np.asarray(values, dtype=float)
    mean = float(array.mean())
    sd = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return {
        "q10": float(np.quantile(array, 0.1)),
        "mean": mean,
        "q90": float(np.quantile(array, 0.9)),
        "sd": sd,
        "cv": sd / abs(mean) if mean != 0.0 else float("nan"),
    }


# Set geometry


def run_set_geometry(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> ExperimentOutput:
    """Box endpoints of the chosen coordinates per (regime, N, run), plus the true-θ^c boxes."""
    output = _start(config, ExperimentKind.GEOMETRY)
    rows = run_repeats(config, backend)
    model = asset_model_from_config(config.model)
    coordinates = [int(c) for c in config.model.get("coordinates", [1, model.dimension])]
    tail = Tail.from_name(config.tail)
    truth: List[Row] = []
    for name in config.regimes:
        regime = regime_from_name(name, model.dimension, config.model)
        box = true_asset_box(model, regime, config.eps, tail)
        for coordinate in coordinates:
            truth.append(
                {
                    "seed": config.seed,
                    "run": TRUTH_RUN,
                    "N": 0,
                    "regime": regime.tag.value,
                    "coordinate": coordinate,
                    "lower": float(box.lower[coordinate - 1]),
                    "upper": float(box.upper[coordinate - 1]),
                    "level": float(box.levels[coordinate - 1]),
                    "hausdorff": 0.0,
                }
            )
    output.add("geometry_intervals", truth + rows)
    frame = pd.DataFrame(rows)
    per_run = frame.drop_duplicates(["regime", "N", "run"])
    convergence = [
        {"seed": config.seed, "regime": regime, "N": int(n), "hausdorff_median": float(group["hausdorff"].median())}
        for (regime, n), group in per_run.groupby(["regime", "N"], sort=True)
    ]
    output.add("geometry_convergence", convergence)
    return _finish(output, config)


# Robust portfolio


def run_portfolio_experiment(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> ExperimentOutput:
    """Mean v_in and v_out per (regime, N), in the shape of the in/out-of-sample tables."""
    output = _start(config, ExperimentKind.PORTFOLIO)
    rows = run_repeats(config, backend)
    output.add("portfolio_runs", rows)
    frame = pd.DataFrame(rows)
    table = [
        {
            "seed": config.seed,
            "method": regime,
            "N": int(n),
            "runs": int(len(group)),
            "v_in": float(group["v_in"].mean()),
            "v_out": float(group["v_out"].mean()),
        }
        for (regime, n), group in frame.groupby(["regime", "N"], sort=True)
    ]
    output.add("portfolio_table", table)
    return _finish(output, config)


# Queue


def run_queue_experiment(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> ExperimentOutput:
    """Bound statistics per (method, N) and the validity of each bound against the simulated true quantile."""
    output = _start(config, ExperimentKind.QUEUE)
    rows = run_repeats(config, backend)
    output.add("queue_runs", rows)
    frame = pd.DataFrame(rows)

    model = queue_model(config)
    waits = simulate_queue(
        model.service_family(),
        model.interarrival_family(),
        model.n_customers,
        config.monte_carlo_draws,
        RandomSource(config.seed, SAMPLE_STREAM).generator(model.n_customers),
    )
    true_quantile = float(np.quantile(waits, 1.0 - config.eps_bar))

    table: List[Row] = []
    validity: List[Row] = []
    for (method, n), group in frame.groupby(["method", "N"], sort=True):
        stats = summarize(group["value"])
        table.append({"seed": config.seed, "method": method, "N": int(n), **stats})
        validity.append(
            {
                "seed": config.seed,
                "method": method,
                "N": int(n),
                "true_quantile": true_quantile,
                "coverage": float(np.mean(group["value"].to_numpy() >= true_quantile)),
            }
        )
    output.add("queue_table", table, ["seed", "method", "N", "q10", "mean", "q90", "sd", "cv"])
    output.add("queue_validity", validity)
    return _finish(output, config)


# Single set


def build_set(config: ExperimentConfig) -> ExperimentOutput:
    """Build one uncertainty set per regime (or one discrete polytope) and write it as JSON."""
    output = _start(config, ExperimentKind.BUILD_SET)
    n_samples = config.sizes[0]
    generator = RandomSource(config.seed, 0).generator(n_samples, SAMPLE_STREAM)
    clip = None
    if config.clip is not None:
        clip = (config.clip.get("lower"), config.clip.get("upper"))
    inputs: List[str] = []

    if config.returns_csv:
        data = io.ingest_returns_csv(config.returns_csv)
        inputs.append(config.returns_csv)
        samples = data.matrix[-n_samples:]
        kind = "returns"
    else:
        kind = model_kind(config.model)
        samples = None

    interval_rows: List[Row] = []
    if kind == "discrete":
        model = discrete_model_from_config(config.model)
        region = model.region(model.sample_labels(n_samples, generator), config.alpha, str(config.model.get("region", "box")))
        uncertainty_set = build_discrete(region, model.support, config.eps)
        if clip is not None:
            uncertainty_set = clip_to_support(uncertainty_set, *clip)
        output.files.append(io.write_json(uncertainty_set.to_dict(), output.out_dir / "set_discrete.json"))
    else:
        tail = Tail.from_name(config.tail)
        if samples is None:
            model = asset_model_from_config(config.model)
            samples = model.sample(n_samples, generator)
        for name in config.regimes:
            if kind == "returns":
                regime = regime_from_name(name, samples.shape[1], config.model)
                intervals = normal_intervals(samples, marginal_levels(regime, config.alpha, samples.shape[1]))
            else:
                regime = regime_from_name(name, model.dimension, config.model)
                intervals = model.marginal_intervals(samples, marginal_levels(regime, config.alpha, model.dimension))
            box = build_coordinate_box(regime, intervals, config.eps, tail)
            if clip is not None:
                box = clip_to_support(box, *clip)
            output.files.append(io.write_json(box.to_dict(), output.out_dir / f"set_{regime.tag.value}.json"))
            interval_rows.extend({"seed": config.seed, "N": n_samples, "regime": regime.tag.value, **row} for row in box.rows())
        output.add("set_intervals", interval_rows)
    return _finish(output, config, inputs)
