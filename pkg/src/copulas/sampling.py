"""Gaussian-copula data generation with arbitrary parametric marginals."""
from __future__ import annotations

import logging
from typing import Sequence, Union

import numpy as np
from scipy import special

from src.copulas.copula import CopulaKind, CopulaSpec, correlation_factor, validate_correlation
from src.distributions.families import ParametricFamily, RandomLike, as_generator
from src.distributions.risk import quantiles
from src.errors import DomainError, InputError

logger = logging.getLogger(__name__)

# ndtr saturates at exactly 0/1 far in the tails; quantiles need the open interval.
_UNIFORM_FLOOR = 1e-300

CorrelationLike = Union[CopulaSpec, np.ndarray, Sequence[Sequence[float]]]


def _correlation(R: CorrelationLike) -> np.ndarray:
    if isinstance(R, CopulaSpec):
        if R.kind is not CopulaKind.GAUSSIAN:
            raise DomainError(f"Gaussian-copula sampling needs a Gaussian copula, got {R.kind.value}")
        return R.correlation
    return validate_correlation(R)


def gaussian_copula_uniforms(R: CorrelationLike, n: int, rng: RandomLike) -> np.ndarray:
    """n rows of (Φ(z_1), ..., Φ(z_d)) with z ~ N(0, R)."""
    if int(n) != n or n < 1:
        raise InputError(f"Sample count must be a positive integer, got {n}")
    r = _correlation(R)
    z = as_generator(rng).standard_normal((int(n), r.shape[0])) @ correlation_factor(r).T
    return special.ndtr(z)


def sample_gaussian_copula(
    R: CorrelationLike,
    marginals: Sequence[ParametricFamily],
    n: int,
    rng: RandomLike,
) -> np.ndarray:
    """Draw an (n, d) matrix with Gaussian-copula dependence and the given marginals.

    Args:
        R: Correlation matrix (or a Gaussian CopulaSpec).
        marginals: One scalar family per column.
        n: Number of rows.
        rng: RandomSource or numpy Generator.
    """
    r = _correlation(R)
    if len(marginals) != r.shape[0]:
        raise InputError(f"{len(marginals)} marginals for a {r.shape[0]}x{r.shape[0]} correlation matrix")
    uniforms = np.clip(gaussian_copula_uniforms(r, n, rng), _UNIFORM_FLOOR, 1.0 - 1e-16)
    columns = [quantiles(family, uniforms[:, j]) for j, family in enumerate(marginals)]
    return np.column_stack(columns)
