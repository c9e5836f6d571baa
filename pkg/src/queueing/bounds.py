"""Upper bounds on the ε̄-quantile of the n-th customer's waiting time."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.bayes.credible import marginal_credible_interval
from src.distributions import risk
from src.distributions.families import FamilyKind, ParametricFamily
from src.errors import ConfigError, DomainError, InputError, InstabilityError

logger = logging.getLogger(__name__)


class BoundMethod(Enum):
    BAYES_BOX = "bayes_box"
    KINGMAN = "kingman"

    @classmethod
    def from_name(cls, name: str) -> "BoundMethod":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ConfigError(f"Unknown queue bound '{name}'")


@dataclass(frozen=True)
class QueueModel:
    """Exponential service times with mean ``service_mean`` and Poisson interarrival times with mean ``interarrival_mean``."""

    service_mean: float
    interarrival_mean: float
    n_customers: int
    eps_bar: float

    def __post_init__(self):
        if not (self.service_mean > 0.0 and self.interarrival_mean > 0.0):
            raise DomainError(f"Queue means must be positive, got {self.service_mean} and {self.interarrival_mean}")
        if self.n_customers < 2:
            raise DomainError(f"The waiting-time bound needs n >= 2 customers, got {self.n_customers}")
        if not 0.0 < self.eps_bar < 1.0:
            raise DomainError(f"eps_bar must lie in (0, 1), got {self.eps_bar}")

    def service_family(self) -> ParametricFamily:
        return ParametricFamily.exponential(self.service_mean)

    def interarrival_family(self) -> ParametricFamily:
        return ParametricFamily.poisson(self.interarrival_mean)

    def levels(self) -> Tuple[float, float]:
        """Per-term risk levels 1 - (1 - ε̄/n)^{1/2} and 1 - (1 - ε̄/(n-1))^{1/2}."""
        n = self.n_customers
        return 1.0 - math.sqrt(1.0 - self.eps_bar / n), 1.0 - math.sqrt(1.0 - self.eps_bar / (n - 1))


@dataclass(frozen=True)
class QueueBoundReport:
    value: float
    method: BoundMethod
    n_samples: int
    raw_value: float
    service_interval: Optional[Tuple[float, float]] = None
    interarrival_interval: Optional[Tuple[float, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "method": self.method.value,
            "value": self.value,
            "raw_value": self.raw_value,
            "n_samples": self.n_samples,
        }
        if self.service_interval is not None:
            data["service_lower"], data["service_upper"] = self.service_interval
        if self.interarrival_interval is not None:
            data["interarrival_lower"], data["interarrival_upper"] = self.interarrival_interval
        return data


def bayes_waiting_bound(model: QueueModel, service_samples, interarrival_samples, alpha: float) -> QueueBoundReport:
    """max(0, (n - 1)(VaR(x; θ_r,1) - lower VaR(t; θ_l,2))) from per-marginal credible intervals.

    Each marginal gets α′ = 1 - (1 - α)^{1/2}; the upper service endpoint and the lower
    interarrival endpoint are the worst case over the credible box.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    alpha_marginal = 1.0 - math.sqrt(1.0 - alpha)
    service = marginal_credible_interval(FamilyKind.EXPONENTIAL, service_samples, alpha_marginal)
    interarrival = marginal_credible_interval(FamilyKind.POISSON, interarrival_samples, alpha_marginal)
    service_level, interarrival_level = model.levels()

    service_upper = float(service.upper[0])
    interarrival_lower = float(interarrival.lower[0])
    service_term = risk.var(ParametricFamily.exponential(service_upper), service_level)
    interarrival_term = risk.lower_var(ParametricFamily.poisson(interarrival_lower), interarrival_level)
    raw = (model.n_customers - 1) * (service_term - interarrival_term)
    return QueueBoundReport(
        value=max(0.0, raw),
        method=BoundMethod.BAYES_BOX,
        n_samples=min(service.n_samples, interarrival.n_samples),
        raw_value=raw,
        service_interval=(float(service.lower[0]), service_upper),
        interarrival_interval=(interarrival_lower, float(interarrival.upper[0])),
    )


def kingman_bound(
    service_mean: float,
    service_variance: float,
    interarrival_mean: float,
    interarrival_variance: float,
    eps_bar: float,
    n_samples: int = 0,
) -> QueueBoundReport:
    """μ_x(σ²_t μ_x² + σ²_x μ_t²) / (2 ε̄ μ_t² (μ_t - μ_x)).

    Raises:
        InstabilityError: μ_t <= μ_x, the queue is not stable.
    """
    if not 0.0 < eps_bar < 1.0:
        raise DomainError(f"eps_bar must lie in (0, 1), got {eps_bar}")
    if interarrival_mean <= service_mean:
        raise InstabilityError(
            f"Mean interarrival time {interarrival_mean:.6g} does not exceed mean service time {service_mean:.6g}"
        )
    if service_variance < 0.0 or interarrival_variance < 0.0:
        raise DomainError("Variances must be nonnegative")
    numerator = service_mean * (interarrival_variance * service_mean**2 + service_variance * interarrival_mean**2)
    denominator = 2.0 * eps_bar * interarrival_mean**2 * (interarrival_mean - service_mean)
    value = numerator / denominator
    return QueueBoundReport(value=value, method=BoundMethod.KINGMAN, n_samples=n_samples, raw_value=value)


def kingman_from_samples(service_samples, interarrival_samples, eps_bar: float) -> QueueBoundReport:
    x = np.asarray(service_samples, dtype=float).ravel()
    t = np.asarray(interarrival_samples, dtype=float).ravel()
    if x.size < 2 or t.size < 2:
        raise InputError("Sample variances need at least 2 samples of each kind")
    return kingman_bound(
        float(x.mean()), float(x.var(ddof=1)), float(t.mean()), float(t.var(ddof=1)), eps_bar, min(x.size, t.size)
    )
