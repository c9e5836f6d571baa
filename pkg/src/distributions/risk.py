"""Quantiles, VaR/CVaR (upper and lower tail) and sampling for parametric families.

``eps`` is always the tail mass: ``var(fam, eps)`` is the (1 - eps)-quantile and
``lower_var(fam, eps)`` its mirror image on the left tail, ``-VaR_eps(-xi)``.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy import special
from scipy.stats import poisson

from src.distributions.families import FamilyKind, ParametricFamily, RandomLike, as_generator, two_point_values
from src.errors import DomainError, InputError

logger = logging.getLogger(__name__)

POISSON_TAIL_CUTOFF = 1e-16
# Absolute slack per atom when a cumulative sum of probabilities is compared with a level;
# covers cumsum rounding only, so levels off an atom by more than that are not snapped.
CUMSUM_ROUNDING = 4.0 * np.finfo(float).eps
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check_level(value: float, name: str, allow_one: bool = False) -> float:
    value = float(value)
    upper_ok = value < 1.0 or (allow_one and value == 1.0)
    if not (math.isfinite(value) and value > 0.0 and upper_ok):
        interval = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"{name} must lie in {interval}, got {value}")
    return value


@lru_cache(maxsize=256)
def _poisson_table(mean: float) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    k_max = int(poisson.isf(POISSON_TAIL_CUTOFF, mean)) + 1
    values = np.arange(k_max + 1, dtype=float)
    return tuple(values), tuple(poisson.pmf(values, mean))


def discrete_table(fam: ParametricFamily) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted distinct support values with their probabilities; zero-mass points dropped."""
    if fam.kind is FamilyKind.FINITE_DISCRETE:
        if fam.dimension != 1:
            raise DomainError("Scalar risk of a multivariate finite-discrete family needs project() first")
        values = fam.support_matrix()[:, 0]
        probs = np.asarray(fam.theta, dtype=float)
    elif fam.kind is FamilyKind.TWO_POINT_ASSET:
        theta = fam.theta[0]
        up, down = two_point_values(theta)
        values = np.array([down, up])
        probs = np.array([1.0 - theta, theta])
    elif fam.kind is FamilyKind.POISSON:
        values, probs = (np.asarray(a) for a in _poisson_table(fam.theta[0]))
    else:
        raise DomainError(f"{fam.kind.value} is not a discrete family")
    keep = probs > 0.0
    distinct, inverse = np.unique(values[keep], return_inverse=True)
    merged = np.bincount(inverse, weights=probs[keep], minlength=len(distinct))
    return distinct, merged


def mean(fam: ParametricFamily) -> Union[float, np.ndarray]:
    if fam.kind is FamilyKind.FINITE_DISCRETE:
        result = np.asarray(fam.theta) @ fam.support_matrix()
        return float(result[0]) if fam.dimension == 1 else result
    params = fam.theta
    if fam.kind is FamilyKind.TWO_POINT_ASSET:
        values, probs = discrete_table(fam)
        return float(values @ probs)
    if fam.kind is FamilyKind.GAMMA:
        return params[0] * params[1]
    # normal mu, exponential mean, poisson mean
    return params[0]


def cdf(fam: ParametricFamily, x: float) -> float:
    if fam.kind.is_discrete:
        values, probs = discrete_table(fam)
        return float(probs[values <= x].sum())
    if fam.kind is FamilyKind.NORMAL:
        mu, sigma = fam.theta
        return float(special.ndtr((x - mu) / sigma))
    if x <= 0.0:
        return 0.0
    if fam.kind is FamilyKind.EXPONENTIAL:
        return float(-math.expm1(-x / fam.theta[0]))
    shape, scale = fam.theta
    return float(special.gammainc(shape, x / scale))


def quantiles(fam: ParametricFamily, p: np.ndarray) -> np.ndarray:
    """Vectorized generalized inverse: smallest t with CDF(t) >= p, for p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if fam.kind.is_discrete:
        values, probs = discrete_table(fam)
        cumulative = np.cumsum(probs)
        index = np.searchsorted(cumulative, p, side="left")
        previous = np.maximum(index - 1, 0)
        on_atom = (index > 0) & np.isclose(cumulative[previous], p, rtol=0.0, atol=CUMSUM_ROUNDING * len(probs))
        index = np.where(on_atom, previous, index)
        return values[np.minimum(index, len(values) - 1)]
    if fam.kind is FamilyKind.NORMAL:
        mu, sigma = fam.theta
        return mu + sigma * special.ndtri(p)
    if fam.kind is FamilyKind.EXPONENTIAL:
        return -fam.theta[0] * np.log1p(-p)
    shape, scale = fam.theta
    return scale * special.gammaincinv(shape, p)


def quantile(fam: ParametricFamily, p: float) -> float:
    p = _check_level(p, "Probability p")
    return float(quantiles(fam, np.array([p]))[0])


def var(fam: ParametricFamily, eps: float) -> float:
    """Upper-tail VaR: the (1 - eps)-quantile."""
    eps = _check_level(eps, "Tail probability eps")
    if fam.kind is FamilyKind.GAMMA:
        shape, scale = fam.theta
        return float(scale * special.gammainccinv(shape, eps))
    if fam.kind is FamilyKind.NORMAL:
        mu, sigma = fam.theta
        return float(mu - sigma * special.ndtri(eps))
    if fam.kind is FamilyKind.EXPONENTIAL:
        return float(-fam.theta[0] * math.log(eps))
    return quantile(fam, 1.0 - eps)


def lower_var(fam: ParametricFamily, eps: float) -> float:
    """Left-tail VaR -VaR_eps(-xi): the largest s with P(xi < s) <= eps."""
    eps = _check_level(eps, "Tail probability eps")
    if not fam.kind.is_discrete:
        return quantile(fam, eps)
    values, probs = discrete_table(fam)
    mass_below = np.cumsum(probs) - probs
    index = int(np.searchsorted(mass_below, eps, side="right")) - 1
    if index + 1 < len(values) and np.isclose(mass_below[index + 1], eps, rtol=0.0, atol=CUMSUM_ROUNDING * len(probs)):
        index += 1
    return float(values[max(index, 0)])


def _tail_mean(values: np.ndarray, probs: np.ndarray, eps: float) -> float:
    """Mean of the first ``eps`` mass of (values, probs) taken in the given order."""
    taken_before = np.cumsum(probs) - probs
    weights = np.clip(np.minimum(probs, eps - taken_before), 0.0, None)
    return float(weights @ values / eps)


def gamma_cvar(a: float, s: float, eps: float) -> float:
    """Upper-tail CVaR of Gamma(shape a, scale s): (s·a/eps)·Ḡ_{a+1,s}(VaR_eps)."""
    if not (a > 0.0 and s > 0.0):
        raise DomainError(f"Gamma parameters must be positive, got shape={a}, scale={s}")
    eps = _check_level(eps, "Tail probability eps", allow_one=True)
    if eps == 1.0:
        return a * s
    threshold = special.gammainccinv(a, eps)
    return float(s * a / eps * special.gammaincc(a + 1.0, threshold))


def cvar(fam: ParametricFamily, eps: float) -> float:
    eps = _check_level(eps, "Tail probability eps", allow_one=True)
    if eps == 1.0:
        return float(mean(fam))
    if fam.kind.is_discrete:
        values, probs = discrete_table(fam)
        return _tail_mean(values[::-1], probs[::-1], eps)
    if fam.kind is FamilyKind.NORMAL:
        mu, sigma = fam.theta
        z = -special.ndtri(eps)
        return float(mu + sigma * _INV_SQRT_2PI * math.exp(-0.5 * z * z) / eps)
    if fam.kind is FamilyKind.EXPONENTIAL:
        return float(fam.theta[0] * (1.0 - math.log(eps)))
    return gamma_cvar(fam.theta[0], fam.theta[1], eps)


def lower_cvar(fam: ParametricFamily, eps: float) -> float:
    """Left-tail CVaR -CVaR_eps(-xi): the mean of the lowest eps probability mass."""
    eps = _check_level(eps, "Tail probability eps", allow_one=True)
    if eps == 1.0:
        return float(mean(fam))
    if fam.kind.is_discrete:
        values, probs = discrete_table(fam)
        return _tail_mean(values, probs, eps)
    if fam.kind is FamilyKind.NORMAL:
        mu, sigma = fam.theta
        z = -special.ndtri(eps)
        return float(mu - sigma * _INV_SQRT_2PI * math.exp(-0.5 * z * z) / eps)
    if fam.kind is FamilyKind.EXPONENTIAL:
        return float(fam.theta[0] * (eps + (1.0 - eps) * math.log1p(-eps)) / eps)
    shape, scale = fam.theta
    threshold = special.gammaincinv(shape, eps)
    return float(scale * shape / eps * special.gammainc(shape + 1.0, threshold))


def sample(fam: ParametricFamily, n: int, rng: RandomLike) -> np.ndarray:
    """n i.i.d. draws; shape (n,) for scalar families and (n, d) for multivariate support."""
    if int(n) != n or n < 1:
        raise InputError(f"Sample count must be a positive integer, got {n}")
    n = int(n)
    generator = as_generator(rng)
    kind = fam.kind
    if kind is FamilyKind.FINITE_DISCRETE:
        probs = np.asarray(fam.theta, dtype=float)
        index = generator.choice(len(probs), size=n, p=probs / probs.sum())
        support = fam.support_matrix()
        return support[index, 0] if fam.dimension == 1 else support[index]
    if kind is FamilyKind.TWO_POINT_ASSET:
        theta = fam.theta[0]
        up, down = two_point_values(theta)
        return np.where(generator.random(n) < theta, up, down)
    if kind is FamilyKind.NORMAL:
        return generator.normal(fam.theta[0], fam.theta[1], n)
    if kind is FamilyKind.EXPONENTIAL:
        return generator.exponential(fam.theta[0], n)
    if kind is FamilyKind.POISSON:
        return generator.poisson(fam.theta[0], n).astype(float)
    return generator.gamma(fam.theta[0], fam.theta[1], n)
