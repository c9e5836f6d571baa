"""Copulas used as lower bounds on dependence, their diagonal sections and the tail bound."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc

from src.errors import DecompositionError, DomainError, InputError, UnattainableLevelError

logger = logging.getLogger(__name__)

BISECTION_STEPS = 60
QMC_LOG2_POINTS = 16
CORRELATION_TOLERANCE = 1e-10


class CopulaKind(Enum):
    INDEPENDENCE = "independence"
    UPPER_FRECHET = "upper_frechet"
    LOWER_BOUND = "lower_bound"
    GAUSSIAN = "gaussian"
    BLOCK_PRODUCT = "block_product"

    @classmethod
    def from_name(cls, name: str) -> "CopulaKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DomainError(f"Unknown copula '{name}'")


def validate_correlation(matrix) -> np.ndarray:
    """Check symmetry, unit diagonal and positive semidefiniteness of a correlation matrix."""
    r = np.atleast_2d(np.asarray(matrix, dtype=float))
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DecompositionError(f"Correlation matrix must be square, got shape {r.shape}")
    if not np.allclose(r, r.T, atol=CORRELATION_TOLERANCE, rtol=0.0):
        raise DecompositionError("Correlation matrix is not symmetric")
    if not np.allclose(np.diag(r), 1.0, atol=CORRELATION_TOLERANCE, rtol=0.0):
        raise DecompositionError("Correlation matrix must have a unit diagonal")
    smallest = np.linalg.eigvalsh(r).min()
    if smallest < -CORRELATION_TOLERANCE:
        raise DecompositionError(f"Correlation matrix is not positive semidefinite (eigenvalue {smallest:.3e})")
    return 0.5 * (r + r.T)


@dataclass(frozen=True, eq=False)
class CopulaSpec:
    kind: CopulaKind
    dimension: int
    correlation: Optional[np.ndarray] = None
    blocks: Tuple[Tuple[Tuple[int, ...], "CopulaSpec"], ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError(f"Copula dimension must be >= 1, got {self.dimension}")
        if self.kind is CopulaKind.GAUSSIAN:
            r = validate_correlation(self.correlation)
            if r.shape[0] != self.dimension:
                raise DomainError(f"Correlation matrix of size {r.shape[0]} for a {self.dimension}-copula")
            object.__setattr__(self, "correlation", r)
        if self.kind is CopulaKind.BLOCK_PRODUCT:
            members = sorted(i for indices, _ in self.blocks for i in indices)
            if members != list(range(self.dimension)):
                raise DomainError("Block index sets must partition 0..d-1")
            for indices, member in self.blocks:
                if member.dimension != len(indices):
                    raise DomainError(f"Block {indices} has a copula of dimension {member.dimension}")

    @classmethod
    def independence(cls, d: int) -> "CopulaSpec":
        return cls(CopulaKind.INDEPENDENCE, d)

    @classmethod
    def upper_frechet(cls, d: int) -> "CopulaSpec":
        return cls(CopulaKind.UPPER_FRECHET, d)

    @classmethod
    def lower_bound(cls, d: int) -> "CopulaSpec":
        return cls(CopulaKind.LOWER_BOUND, d)

    @classmethod
    def gaussian(cls, correlation) -> "CopulaSpec":
        r = np.atleast_2d(np.asarray(correlation, dtype=float))
        return cls(CopulaKind.GAUSSIAN, r.shape[0], r)

    @classmethod
    def block_product(cls, blocks: Sequence[Tuple[Sequence[int], "CopulaSpec"]]) -> "CopulaSpec":
        normalized = tuple((tuple(int(i) for i in indices), member) for indices, member in blocks)
        dimension = sum(len(indices) for indices, _ in normalized)
        return cls(CopulaKind.BLOCK_PRODUCT, dimension, None, normalized)

    def block_of(self, coordinate: int) -> Tuple[int, ...]:
        for indices, _ in self.blocks:
            if coordinate in indices:
                return indices
        raise DomainError(f"Coordinate {coordinate} belongs to no block")


def _check_point(c: CopulaSpec, u) -> np.ndarray:
    point = np.atleast_1d(np.asarray(u, dtype=float))
    if point.shape != (c.dimension,):
        raise InputError(f"Point of shape {point.shape} for a {c.dimension}-dimensional copula")
    if np.any(point < 0.0) or np.any(point > 1.0) or not np.all(np.isfinite(point)):
        raise InputError(f"Copula argument must lie in [0,1]^d, got {point.tolist()}")
    return point


def lower_frechet_value(u: np.ndarray) -> float:
    return max(float(np.sum(u)) - u.size + 1.0, 0.0)


def _bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """Φ₂(h, k; ρ) = Φ(h)Φ(k) + ∫₀^ρ φ₂(h, k; r) dr."""
    if rho >= 1.0 - 1e-15:
        return float(special.ndtr(min(h, k)))
    if rho <= -1.0 + 1e-15:
        return max(float(special.ndtr(h) + special.ndtr(k)) - 1.0, 0.0)

    def density(r: float) -> float:
        one_minus = 1.0 - r * r
        return math.exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * one_minus)) / (
            2.0 * math.pi * math.sqrt(one_minus)
        )

    integral, _ = integrate.quad(density, 0.0, rho, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(special.ndtr(h) * special.ndtr(k) + integral)


@lru_cache(maxsize=16)
def _qmc_normals(dimension: int) -> np.ndarray:
    points = qmc.Sobol(dimension, scramble=True, seed=0).random_base2(QMC_LOG2_POINTS)
    return special.ndtri(np.clip(points, 1e-16, 1.0 - 1e-16))


def correlation_factor(r: np.ndarray) -> np.ndarray:
    """L with L Lᵀ = R from the eigendecomposition (works for singular R)."""
    eigenvalues, eigenvectors = np.linalg.eigh(r)
    eigenvalues = np.where(eigenvalues > CORRELATION_TOLERANCE * eigenvalues.max(), eigenvalues, 0.0)
    return eigenvectors * np.sqrt(eigenvalues)


def _gaussian_cdf(r: np.ndarray, u: np.ndarray) -> float:
    if np.any(u <= 0.0):
        return 0.0
    active = u < 1.0
    if not np.any(active):
        return 1.0
    u = u[active]
    r = r[np.ix_(active, active)]
    if u.size == 1:
        return float(u[0])
    z = special.ndtri(u)
    if u.size == 2:
        value = _bivariate_normal_cdf(float(z[0]), float(z[1]), float(r[0, 1]))
    else:
        samples = _qmc_normals(u.size) @ correlation_factor(r).T
        value = float(np.mean(np.all(samples <= z, axis=1)))
    # The Fréchet bounds hold exactly; clipping removes quadrature round-off.
    return min(max(value, lower_frechet_value(u)), float(u.min()))


def evaluate(c: CopulaSpec, u) -> float:
    point = _check_point(c, u)
    if c.kind is CopulaKind.INDEPENDENCE:
        return float(np.prod(point))
    if c.kind is CopulaKind.UPPER_FRECHET:
        return float(point.min())
    if c.kind is CopulaKind.LOWER_BOUND:
        return lower_frechet_value(point)
    if c.kind is CopulaKind.GAUSSIAN:
        return _gaussian_cdf(c.correlation, point)
    return float(np.prod([evaluate(member, point[list(indices)]) for indices, member in c.blocks]))


def diagonal(c: CopulaSpec, u: float) -> float:
    """δ_C(u) = C(u, ..., u)."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise InputError(f"Diagonal argument must lie in [0, 1], got {u}")
    d = c.dimension
    if c.kind is CopulaKind.INDEPENDENCE:
        return u**d
    if c.kind is CopulaKind.UPPER_FRECHET:
        return u
    if c.kind is CopulaKind.LOWER_BOUND:
        return max(d * u - d + 1.0, 0.0)
    if c.kind is CopulaKind.BLOCK_PRODUCT:
        return float(np.prod([diagonal(member, u) for _, member in c.blocks]))
    return evaluate(c, np.full(d, u))


def diagonal_inverse(c: CopulaSpec, y: float) -> float:
    """Smallest u with δ_C(u) >= y, by bisection on [0, 1]."""
    y = float(y)
    if not 0.0 <= y <= 1.0:
        raise DomainError(f"Diagonal level must lie in [0, 1], got {y}")
    if y > diagonal(c, 1.0):
        raise UnattainableLevelError(f"Level {y} exceeds δ(1) = {diagonal(c, 1.0)}")
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if diagonal(c, mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


def tail_bound(S, c_l: CopulaSpec, u) -> float:
    """max(W(u), max_{a∈S} {C_l(a) - Σ(a_i - u_i)_+}) over a finite grid S."""
    point = _check_point(c_l, u)
    grid = np.atleast_2d(np.asarray(S, dtype=float))
    if grid.shape[0] == 0:
        raise InputError("Tail-bound grid must be nonempty")
    penalties = np.clip(grid - point, 0.0, None).sum(axis=1)
    values = [evaluate(c_l, a) - penalty for a, penalty in zip(grid, penalties)]
    return max(lower_frechet_value(point), max(values))
