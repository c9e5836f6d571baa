"""Out-of-sample metrics: deviation from the true return percentile and empirical order statistics."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from src.distributions.families import RandomSource
from src.errors import DivisionDomainError, DomainError, InputError

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 1_000_000
DEFAULT_SHARDS = 8

ScenarioSampler = Callable[[int, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class DeviationMetrics:
    d: float
    D: float


def deviation_metrics(r_in: float, r_star: float) -> DeviationMetrics:
    """d = r* - r_in and D = (r* - r_in) / r*.

    Raises:
        DivisionDomainError: r* = 0; the error still carries d.
    """
    d = float(r_star) - float(r_in)
    if r_star == 0.0:
        raise DivisionDomainError(f"Relative deviation is undefined for r* = 0 (d = {d:.6g})", deviation=d)
    return DeviationMetrics(d, d / float(r_star))


def lower_order_statistic(values, level: float) -> float:
    """The ⌈level·n⌉-th smallest value (1-based), the empirical lower level-quantile."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise InputError("Order statistic of an empty sample")
    if not 0.0 < level <= 1.0:
        raise DomainError(f"level must lie in (0, 1], got {level}")
    rank = max(int(math.ceil(level * values.size - 1e-12)), 1)
    return float(np.partition(values, rank - 1)[rank - 1])


def estimate_return_percentile(
    weights,
    sampler: ScenarioSampler,
    eps: float,
    source: RandomSource,
    n_draws: int = DEFAULT_DRAWS,
    shards: int = DEFAULT_SHARDS,
    threads: int = 1,
) -> float:
    """Monte Carlo ε-percentile r*_ε of the portfolio return ξᵀx under the generating model.

    Draws are split into ``shards`` blocks, each on its own substream of ``source``; blocks
    are concatenated in shard order, so the estimate does not depend on ``threads``.
    """
    weights = np.asarray(weights, dtype=float)
    if shards < 1 or n_draws < shards:
        raise InputError(f"Need at least one draw per shard, got {n_draws} draws over {shards} shards")
    sizes = [n_draws // shards + (1 if k < n_draws % shards else 0) for k in range(shards)]

    def shard_returns(k: int) -> np.ndarray:
        scenarios = np.asarray(sampler(sizes[k], source.generator(k)), dtype=float)
        return scenarios @ weights

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            blocks: List[np.ndarray] = list(executor.map(shard_returns, range(shards)))
    else:
        blocks = [shard_returns(k) for k in range(shards)]
    estimate = lower_order_statistic(np.concatenate(blocks), eps)
    logger.debug(f"Return percentile at eps={eps} from {n_draws} draws: {estimate:.6g}")
    return estimate


def out_of_sample_return(weights, scenarios, level: float = 0.1) -> float:
    """v_out: the lower level-order statistic of the realized returns on fresh scenarios."""
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    return lower_order_statistic(scenarios @ np.asarray(weights, dtype=float), level)


def cumulative_return(weights, scenarios, compounded: bool = False) -> float:
    """Sum (or compounded product) of realized period returns."""
    realized = np.atleast_2d(np.asarray(scenarios, dtype=float)) @ np.asarray(weights, dtype=float)
    if compounded:
        return float(np.prod(1.0 + realized) - 1.0)
    return float(realized.sum())
