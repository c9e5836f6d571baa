"""Parametric distribution families and reproducible random streams."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from src.errors import DomainError

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12


class FamilyKind(Enum):
    FINITE_DISCRETE = "finite_discrete"
    TWO_POINT_ASSET = "two_point_asset"
    NORMAL = "normal"
    EXPONENTIAL = "exponential"
    POISSON = "poisson"
    GAMMA = "gamma"

    @classmethod
    def from_name(cls, name: str) -> "FamilyKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            known = ", ".join(kind.value for kind in cls)
            raise DomainError(f"Unknown distribution family '{name}'. Known families: {known}")

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return _PARAMETER_NAMES[self]

    @property
    def is_discrete(self) -> bool:
        return self in (FamilyKind.FINITE_DISCRETE, FamilyKind.TWO_POINT_ASSET, FamilyKind.POISSON)


_PARAMETER_NAMES: Dict[FamilyKind, Tuple[str, ...]] = {
    FamilyKind.FINITE_DISCRETE: (),
    FamilyKind.TWO_POINT_ASSET: ("theta",),
    FamilyKind.NORMAL: ("mu", "sigma"),
    FamilyKind.EXPONENTIAL: ("mean",),
    FamilyKind.POISSON: ("mean",),
    FamilyKind.GAMMA: ("shape", "scale"),
}

# Parameters that must be strictly positive; "theta" of a two-point asset lives in (0, 1).
POSITIVE_PARAMETERS = frozenset({"sigma", "mean", "shape", "scale"})
UNIT_INTERVAL_PARAMETERS = frozenset({"theta"})


def two_point_values(theta: float) -> Tuple[float, float]:
    """Return (up, down) values of the standardized two-point asset with up-probability theta."""
    spread = math.sqrt((1.0 - theta) * theta)
    return spread / theta, -spread / (1.0 - theta)


def asset_theta(index: int, dimension: int) -> float:
    """Up-probability of asset ``index`` (1-based) in the d-asset benchmark model."""
    if not 1 <= index <= dimension:
        raise DomainError(f"Asset index {index} outside 1..{dimension}")
    return 0.5 * (1.0 + index / (dimension + 1.0))


@dataclass(frozen=True)
class ParametricFamily:
    """A distribution family tag together with its parameter vector.

    ``theta`` holds the scalar parameters in the order of ``kind.parameter_names``; for a
    finite-discrete family it holds the probabilities of the ``support`` points.
    """

    kind: FamilyKind
    theta: Tuple[float, ...]
    support: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        if any(not math.isfinite(value) for value in self.theta):
            raise DomainError(f"Non-finite parameter in {self.kind.value}: {self.theta}")
        if self.kind is FamilyKind.FINITE_DISCRETE:
            self._validate_discrete()
            return
        names = self.kind.parameter_names
        if len(self.theta) != len(names):
            raise DomainError(f"{self.kind.value} expects parameters {names}, got {self.theta}")
        for name, value in zip(names, self.theta):
            if name in POSITIVE_PARAMETERS and value <= 0.0:
                raise DomainError(f"{self.kind.value} parameter {name} must be positive, got {value}")
            if name in UNIT_INTERVAL_PARAMETERS and not 0.0 < value < 1.0:
                raise DomainError(f"{self.kind.value} parameter {name} must lie in (0, 1), got {value}")

    def _validate_discrete(self):
        if not self.support or len(self.support) != len(self.theta):
            raise DomainError("Finite-discrete family needs one probability per support point")
        dimensions = {len(point) for point in self.support}
        if len(dimensions) != 1 or 0 in dimensions:
            raise DomainError("Finite-discrete support points must share a positive dimension")
        if min(self.theta) < -SIMPLEX_TOLERANCE:
            raise DomainError(f"Negative probability in finite-discrete family: {self.theta}")
        if abs(math.fsum(self.theta) - 1.0) > SIMPLEX_TOLERANCE:
            raise DomainError(f"Probabilities must sum to 1, got {math.fsum(self.theta)!r}")

    # Constructors

    @classmethod
    def normal(cls, mu: float, sigma: float) -> "ParametricFamily":
        return cls(FamilyKind.NORMAL, (float(mu), float(sigma)))

    @classmethod
    def exponential(cls, mean: float) -> "ParametricFamily":
        return cls(FamilyKind.EXPONENTIAL, (float(mean),))

    @classmethod
    def poisson(cls, mean: float) -> "ParametricFamily":
        return cls(FamilyKind.POISSON, (float(mean),))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "ParametricFamily":
        return cls(FamilyKind.GAMMA, (float(shape), float(scale)))

    @classmethod
    def two_point_asset(cls, theta: float) -> "ParametricFamily":
        return cls(FamilyKind.TWO_POINT_ASSET, (float(theta),))

    @classmethod
    def finite_discrete(
        cls,
        support: Sequence[Union[float, Sequence[float]]],
        probabilities: Sequence[float],
        normalize: bool = False,
    ) -> "ParametricFamily":
        points = tuple(
            tuple(float(c) for c in np.atleast_1d(np.asarray(point, dtype=float)))
            for point in support
        )
        probs = np.asarray(probabilities, dtype=float)
        if normalize:
            probs = np.clip(probs, 0.0, None)
            probs = probs / probs.sum()
        return cls(FamilyKind.FINITE_DISCRETE, tuple(float(p) for p in probs), points)

    # Accessors

    @property
    def dimension(self) -> int:
        if self.kind is FamilyKind.FINITE_DISCRETE:
            return len(self.support[0])
        return 1

    def parameters(self) -> Dict[str, float]:
        return dict(zip(self.kind.parameter_names, self.theta))

    def support_matrix(self) -> np.ndarray:
        """Support points as an (n, d) array (finite-discrete only)."""
        if self.kind is not FamilyKind.FINITE_DISCRETE:
            raise DomainError(f"{self.kind.value} has no finite support matrix")
        return np.asarray(self.support, dtype=float)

    def with_parameters(self, values: Sequence[float]) -> "ParametricFamily":
        """Same family and support with a new parameter vector."""
        values = tuple(float(v) for v in values)
        if self.kind is FamilyKind.FINITE_DISCRETE:
            return ParametricFamily.finite_discrete(self.support, values, normalize=True)
        return ParametricFamily(self.kind, values, self.support)

    def as_discrete(self) -> "ParametricFamily":
        """Two-point assets as an explicit finite-discrete family."""
        if self.kind is FamilyKind.FINITE_DISCRETE:
            return self
        if self.kind is not FamilyKind.TWO_POINT_ASSET:
            raise DomainError(f"{self.kind.value} has no finite-discrete form")
        theta = self.theta[0]
        up, down = two_point_values(theta)
        return ParametricFamily.finite_discrete((down, up), (1.0 - theta, theta))

    def project(self, direction: Sequence[float]) -> "ParametricFamily":
        """Distribution of vᵀξ for a finite-discrete family over R^d."""
        v = np.asarray(direction, dtype=float)
        support = self.support_matrix()
        if v.shape != (support.shape[1],):
            raise DomainError(f"Direction of shape {v.shape} does not match dimension {support.shape[1]}")
        return ParametricFamily.finite_discrete(support @ v, self.theta)


RandomLike = Union["RandomSource", np.random.Generator]


@dataclass(frozen=True)
class RandomSource:
    """A (seed, stream) pair; identical pairs reproduce identical draws bit-for-bit."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise DomainError(f"Seed and stream must be nonnegative, got ({self.seed}, {self.stream})")

    def generator(self, *substreams: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *substreams))
        return np.random.Generator(np.random.PCG64(sequence))

    def substream(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)


def as_generator(rng: RandomLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()
