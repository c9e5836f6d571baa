"""Log-posteriors of the scalar families under flat (or symmetric Beta) priors."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from src.distributions.families import POSITIVE_PARAMETERS, UNIT_INTERVAL_PARAMETERS, FamilyKind
from src.errors import BoundaryModeError, DataError, DomainError, InputError

logger = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FamilyLogPosterior:
    """A log-posterior over the free parameters of a family, ready for laplace_fit."""

    kind: FamilyKind
    free_names: Tuple[str, ...]
    known: Dict[str, float]
    initial: np.ndarray
    bounds: List[Tuple[Optional[float], Optional[float]]]
    function: Callable[[np.ndarray], float] = field(repr=False)
    n_samples: int = 0

    def full_parameters(self, free_values) -> Tuple[float, ...]:
        values = dict(self.known)
        values.update(zip(self.free_names, (float(v) for v in free_values)))
        return tuple(values[name] for name in self.kind.parameter_names)


def parameter_bounds(name: str) -> Tuple[Optional[float], Optional[float]]:
    if name in POSITIVE_PARAMETERS:
        return POSITIVE_FLOOR, None
    if name in UNIT_INTERVAL_PARAMETERS:
        return POSITIVE_FLOOR, 1.0 - POSITIVE_FLOOR
    return None, None


def _clean_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InputError(f"At least 2 samples are needed for a posterior fit, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InputError("Samples contain non-finite values")
    return x


def family_log_posterior(
    kind: FamilyKind,
    samples,
    known: Optional[Mapping[str, float]] = None,
    prior_concentration: float = 1.0,
) -> FamilyLogPosterior:
    """Build the log-posterior of ``kind`` given i.i.d. samples.

    Continuous families use a flat prior. Two-point assets use the Bernoulli likelihood of
    the up/down label with a symmetric Beta(c, c) prior, c = ``prior_concentration``.
    """
    if kind is FamilyKind.FINITE_DISCRETE:
        raise DomainError("Finite-discrete families use the conjugate Dirichlet posterior")
    x = _clean_samples(samples)
    n = x.size
    known = {name: float(value) for name, value in (known or {}).items()}
    unknown = set(known) - set(kind.parameter_names)
    if unknown:
        raise InputError(f"{kind.value} has no parameters {sorted(unknown)}")
    free_names = tuple(name for name in kind.parameter_names if name not in known)
    if not free_names:
        raise InputError(f"All parameters of {kind.value} are fixed; nothing to infer")

    if kind is FamilyKind.NORMAL:
        sample_mean = float(x.mean())
        scatter = float(((x - sample_mean) ** 2).sum())

        def full(theta):
            values = dict(known)
            values.update(zip(free_names, theta))
            return values["mu"], values["sigma"]

        def log_posterior(theta):
            mu, sigma = full(theta)
            if sigma <= 0.0:
                return -np.inf
            return -n * math.log(sigma) - (scatter + n * (sample_mean - mu) ** 2) / (2.0 * sigma**2)

        guesses = {"mu": sample_mean, "sigma": math.sqrt(scatter / n) if "mu" not in known
                   else math.sqrt(float(((x - known["mu"]) ** 2).mean()))}
        if "sigma" in free_names and guesses["sigma"] <= 0.0:
            raise BoundaryModeError("Normal samples have zero spread; the sigma mode is on the boundary")

    elif kind is FamilyKind.EXPONENTIAL:
        if np.any(x < 0.0):
            raise DataError("Exponential samples must be nonnegative")
        total = float(x.sum())

        def log_posterior(theta):
            m = theta[0]
            return -np.inf if m <= 0.0 else -n * math.log(m) - total / m

        guesses = {"mean": total / n}
        if total <= 0.0:
            raise BoundaryModeError("Exponential samples are all zero; the mean mode is on the boundary")

    elif kind is FamilyKind.POISSON:
        if np.any(x < 0.0):
            raise DataError("Poisson samples must be nonnegative counts")
        total = float(x.sum())

        def log_posterior(theta):
            lam = theta[0]
            return -np.inf if lam <= 0.0 else total * math.log(lam) - n * lam

        guesses = {"mean": total / n}
        if total <= 0.0:
            raise BoundaryModeError("Poisson samples are all zero; the mean mode is on the boundary")

    elif kind is FamilyKind.GAMMA:
        if np.any(x <= 0.0):
            raise DataError("Gamma samples must be strictly positive")
        total = float(x.sum())
        log_total = float(np.log(x).sum())

        def full(theta):
            values = dict(known)
            values.update(zip(free_names, theta))
            return values["shape"], values["scale"]

        def log_posterior(theta):
            a, s = full(theta)
            if a <= 0.0 or s <= 0.0:
                return -np.inf
            return (a - 1.0) * log_total - total / s - n * a * math.log(s) - n * float(gammaln(a))

        sample_mean = total / n
        variance = float(x.var())
        if variance <= 0.0:
            raise BoundaryModeError("Gamma samples have zero spread")
        guesses = {"shape": sample_mean**2 / variance, "scale": variance / sample_mean}
        if "shape" in known:
            guesses["scale"] = sample_mean / known["shape"]
        if "scale" in known:
            guesses["shape"] = sample_mean / known["scale"]

    else:  # two-point asset
        ups = float(np.count_nonzero(x > 0.0))
        up_weight = ups + prior_concentration - 1.0
        down_weight = n - ups + prior_concentration - 1.0

        def log_posterior(theta):
            p = theta[0]
            if not 0.0 < p < 1.0:
                return -np.inf
            return up_weight * math.log(p) + down_weight * math.log1p(-p)

        if up_weight <= 0.0 or down_weight <= 0.0:
            raise BoundaryModeError(
                f"Two-point asset posterior has no interior mode ({int(ups)} up moves in {n} samples, "
                f"prior concentration {prior_concentration})"
            )
        guesses = {"theta": up_weight / (up_weight + down_weight)}

    initial = np.array([guesses[name] for name in free_names], dtype=float)
    bounds = [parameter_bounds(name) for name in free_names]
    return FamilyLogPosterior(kind, free_names, known, initial, bounds, log_posterior, n)
