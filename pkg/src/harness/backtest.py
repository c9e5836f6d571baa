"""Real-data backtest: in-sample bound against the model percentile, plus out-of-sample returns."""
from __future__ import annotations

import logging
from typing import List

import pandas as pd

from src.config import ExperimentConfig, ExperimentKind, WorkerBackend
from src.harness.experiments import ExperimentOutput, _finish, _start
from src.harness.pool import run_repeats

logger = logging.getLogger(__name__)

DEVIATION_COLUMNS = ["seed", "alpha", "N", "r_in", "r_star", "d", "D"]
RETURNS_COLUMNS = ["seed", "N", "alpha", "r_in", "cumulative_return", "holdout_quantile"]


def run_backtest(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> ExperimentOutput:
    """One NoAssumption lower-tail portfolio per (N, α) fitted on the training window.

    Writes the deviation table (α, N, r_in, r*, d, D), the holdout returns table when
    ``holdout`` > 0, and the per-run rows with the chosen weights.
    """
    output = _start(config, ExperimentKind.BACKTEST)
    rows = run_repeats(config, backend)
    output.add("backtest_runs", rows)
    frame = pd.DataFrame(rows).sort_values(["alpha", "N"], kind="stable")
    output.add("backtest_deviation", frame[DEVIATION_COLUMNS].to_dict("records"), DEVIATION_COLUMNS)
    if config.holdout > 0:
        output.add("backtest_returns", frame[RETURNS_COLUMNS].to_dict("records"), RETURNS_COLUMNS)
    inputs: List[str] = [config.returns_csv]
    if config.correlation_csv:
        inputs.append(config.correlation_csv)
    return _finish(output, config, inputs)
