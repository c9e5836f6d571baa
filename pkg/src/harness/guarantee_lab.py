"""Monte Carlo checks of the finite-sample guarantees and of convergence to the true set."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from src.config import ExperimentConfig, ExperimentKind, WorkerBackend
from src.harness.experiments import ExperimentOutput, _finish, _start
from src.harness.pool import run_repeats

logger = logging.getLogger(__name__)

CONFIDENCE = 0.99


def binomial_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
    """Exact (Clopper-Pearson) interval of a success frequency."""
    interval = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="exact")
    return float(interval.low), float(interval.high)


@dataclass
class GuaranteeReport:
    """Per-N frequencies and medians, with every per-run record kept for re-derivation."""

    summary: List[Dict[str, Any]] = field(default_factory=list)
    runs: List[Dict[str, Any]] = field(default_factory=list)
    output: Optional[ExperimentOutput] = None

    def row(self, n_samples: int) -> Dict[str, Any]:
        for row in self.summary:
            if row["N"] == n_samples:
                return row
        raise KeyError(n_samples)

    def coverage(self, n_samples: int) -> float:
        return self.row(n_samples)["coverage"]

    def implication(self, n_samples: int) -> float:
        return self.row(n_samples)["implication"]

    def hausdorff_median(self, n_samples: int) -> float:
        return self.row(n_samples)["hausdorff_median"]


def summarize_runs(runs: List[Dict[str, Any]], seed: int) -> List[Dict[str, Any]]:
    frame = pd.DataFrame(runs)
    summary = []
    for n, group in frame.groupby("N", sort=True):
        trials = int(len(group))
        covered = int(group["covered"].sum())
        implied = int(group["implied"].sum())
        coverage_low, coverage_high = binomial_interval(covered, trials)
        implication_low, implication_high = binomial_interval(implied, trials)
        summary.append(
            {
                "seed": seed,
                "N": int(n),
                "runs": trials,
                "coverage": covered / trials,
                "coverage_low": coverage_low,
                "coverage_high": coverage_high,
                "implication": implied / trials,
                "implication_low": implication_low,
                "implication_high": implication_high,
                "hausdorff_median": float(np.median(group["hausdorff"])),
                "diameter_median": float(np.median(group["diameter"])),
            }
        )
    return summary


def run_guarantee_lab(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> GuaranteeReport:
    """Credible-region coverage, chance-constraint implication and set distance per sample size."""
    output = _start(config, ExperimentKind.GUARANTEE_LAB)
    runs = run_repeats(config, backend)
    summary = summarize_runs(runs, config.seed)
    for row in summary:
        logger.info(
            f"N={row['N']}: coverage {row['coverage']:.3f}, implication {row['implication']:.3f}, "
            f"Hausdorff median {row['hausdorff_median']:.4g}"
        )
    output.add("guarantee_runs", runs)
    output.add("guarantee_summary", summary)
    _finish(output, config)
    return GuaranteeReport(summary, runs, output)
