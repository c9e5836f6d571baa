"""Waiting time of the n-th customer in a single-server FIFO queue that starts empty."""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from src.distributions import risk
from src.distributions.families import ParametricFamily, RandomLike, as_generator
from src.errors import InputError

logger = logging.getLogger(__name__)


def _check_pair(services, interarrivals) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(services, dtype=float)
    t = np.asarray(interarrivals, dtype=float)
    if x.shape != t.shape:
        raise InputError(f"Service times {x.shape} and interarrival times {t.shape} must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise InputError("Service and interarrival times must be finite")
    return x, t


def simulate_waiting_time(services, interarrivals) -> float:
    """W_n = max(0, max_j (Σ_{l=j}^{n-1} x_l - Σ_{l=j+1}^{n} t_l)).

    Args:
        services: x_1..x_{n-1}, the service times of the customers ahead.
        interarrivals: t_2..t_n, the gaps between consecutive arrivals.
    """
    x, t = _check_pair(services, interarrivals)
    if x.ndim != 1:
        raise InputError("simulate_waiting_time takes one customer sequence; use simulate_queue for batches")
    if x.size == 0:
        return 0.0
    suffix = np.cumsum((x - t)[::-1])
    return float(max(0.0, suffix.max()))


def lindley_recursion(services, interarrivals) -> float:
    """W_1 = 0, W_{k+1} = max(0, W_k + x_k - t_{k+1})."""
    x, t = _check_pair(services, interarrivals)
    waiting = 0.0
    for service, gap in zip(x.ravel(), t.ravel()):
        waiting = max(0.0, waiting + service - gap)
    return waiting


def simulate_queue(
    service: ParametricFamily,
    interarrival: ParametricFamily,
    n_customers: int,
    n_runs: int,
    rng: RandomLike,
) -> np.ndarray:
    """W_n for ``n_runs`` independent queues, each with ``n_customers`` customers."""
    if n_customers < 1 or n_runs < 1:
        raise InputError(f"Need n_customers >= 1 and n_runs >= 1, got {n_customers} and {n_runs}")
    if n_customers == 1:
        return np.zeros(n_runs)
    generator = as_generator(rng)
    width = n_customers - 1
    x = risk.sample(service, n_runs * width, generator).reshape(n_runs, width)
    t = risk.sample(interarrival, n_runs * width, generator).reshape(n_runs, width)
    suffix = np.cumsum((x - t)[:, ::-1], axis=1)
    return np.maximum(suffix.max(axis=1), 0.0)
