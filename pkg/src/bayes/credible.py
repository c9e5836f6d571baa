"""Credible regions Θ(S^N, α): ellipsoids, boxes, per-marginal intervals and α-splitting."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from src.bayes.laplace import laplace_fit
from src.bayes.likelihoods import family_log_posterior, parameter_bounds
from src.bayes.posterior import DirichletPosterior, PosteriorSummary, dirichlet_mode_info
from src.distributions.families import FamilyKind, ParametricFamily
from src.errors import DegenerateLevelError, DomainError, InputError

logger = logging.getLogger(__name__)

MEMBERSHIP_TOLERANCE = 1e-12


class SplitRule(Enum):
    INDEPENDENT_PRODUCT = "independent_product"
    BONFERRONI = "bonferroni"
    BLOCK_PRODUCT = "block_product"

    @classmethod
    def from_name(cls, name: str) -> "SplitRule":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DomainError(f"Unknown alpha split rule '{name}'")


class RegionShape(Enum):
    ELLIPSOID = "ellipsoid"
    BOX = "box"
    PRODUCT = "product"


def two_sided_z(alpha: float) -> float:
    """z_{1-α/2}; zero at α = 1."""
    return float(-special.ndtri(0.5 * alpha))


def split_alpha(
    alpha: float,
    d: int,
    rule: SplitRule,
    n_blocks: int = 1,
    block_size: Optional[int] = None,
) -> float:
    """Per-marginal level for a product of ``d`` marginal regions with joint level ``alpha``.

    Args:
        alpha: Joint credibility level in (0, 1].
        d: Number of marginals.
        rule: IndependentProduct 1-(1-α)^{1/d}; Bonferroni α/d; BlockProduct
            (1-(1-α)^{1/K})/d_k for a marginal in a block of size d_k among K blocks.
        n_blocks: K, only for BlockProduct.
        block_size: d_k, only for BlockProduct.
    """
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if d < 1:
        raise DomainError(f"Marginal count must be >= 1, got {d}")
    if rule is SplitRule.INDEPENDENT_PRODUCT:
        return -math.expm1(math.log1p(-alpha) / d) if alpha < 1.0 else 1.0
    if rule is SplitRule.BONFERRONI:
        return alpha / d
    if n_blocks < 1 or block_size is None or block_size < 1:
        raise DomainError("BlockProduct splitting needs n_blocks >= 1 and block_size >= 1")
    block_level = -math.expm1(math.log1p(-alpha) / n_blocks) if alpha < 1.0 else 1.0
    return block_level / block_size


class CredibleRegion(ABC):
    """A (1-α) region for a parameter vector."""

    alpha: float

    @property
    @abstractmethod
    def shape(self) -> RegionShape:
        ...

    @abstractmethod
    def contains(self, theta, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        ...

    @abstractmethod
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def diameter(self) -> float:
        ...


@dataclass(frozen=True, eq=False)
class EllipsoidRegion(CredibleRegion):
    """{θ : ‖I(θ̂)^{1/2}(θ - θ̂)‖₂ <= radius}."""

    center: np.ndarray
    info: np.ndarray
    radius: float
    alpha: float
    on_simplex: bool = False
    sqrt_info: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        info = np.asarray(self.info, dtype=float)
        eigenvalues, eigenvectors = np.linalg.eigh(info)
        if eigenvalues.min() <= 0.0:
            raise DomainError("Ellipsoid matrix must be positive definite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "info", info)
        object.__setattr__(self, "sqrt_info", (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T)

    @property
    def shape(self) -> RegionShape:
        return RegionShape.ELLIPSOID

    def inverse_sqrt_info(self) -> np.ndarray:
        eigenvalues, eigenvectors = np.linalg.eigh(self.info)
        return (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T

    def half_widths(self) -> np.ndarray:
        return self.radius * np.sqrt(np.diag(np.linalg.inv(self.info)))

    def contains(self, theta, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        offset = np.asarray(theta, dtype=float) - self.center
        if self.on_simplex and abs(offset.sum()) > 1e-9:
            return False
        return bool(np.linalg.norm(self.sqrt_info @ offset) <= self.radius + tolerance)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        widths = self.half_widths()
        return self.center - widths, self.center + widths

    def diameter(self) -> float:
        return float(2.0 * self.radius / math.sqrt(np.linalg.eigvalsh(self.info).min()))


@dataclass(frozen=True, eq=False)
class BoxRegion(CredibleRegion):
    """Per-coordinate intervals; ``on_simplex`` adds the side condition Σθ = 1."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    center: np.ndarray
    on_simplex: bool = False

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise DomainError("Box intervals must be nonempty and of matching shape")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def shape(self) -> RegionShape:
        return RegionShape.BOX

    def contains(self, theta, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        theta = np.asarray(theta, dtype=float)
        if self.on_simplex and abs(theta.sum() - 1.0) > 1e-9:
            return False
        return bool(np.all(theta >= self.lower - tolerance) and np.all(theta <= self.upper + tolerance))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True, eq=False)
class MarginalInterval(CredibleRegion):
    """Credible intervals for the free scalar parameters of one marginal family."""

    kind: FamilyKind
    free_names: Tuple[str, ...]
    known: Dict[str, float]
    mode: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    n_samples: int = 0

    @property
    def shape(self) -> RegionShape:
        return RegionShape.BOX

    def contains(self, theta, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return bool(np.all(theta >= self.lower - tolerance) and np.all(theta <= self.upper + tolerance))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def family_at(self, free_values: Sequence[float]) -> ParametricFamily:
        values = dict(self.known)
        values.update(zip(self.free_names, (float(v) for v in free_values)))
        return ParametricFamily(self.kind, tuple(values[name] for name in self.kind.parameter_names))

    def mode_family(self) -> ParametricFamily:
        return self.family_at(self.mode)

    @classmethod
    def point(cls, family: ParametricFamily) -> "MarginalInterval":
        """Degenerate interval at known parameters (the true-θ^c reference set)."""
        values = np.asarray(family.theta, dtype=float)
        return cls(family.kind, family.kind.parameter_names, {}, values, values.copy(), values.copy(), 1.0)


@dataclass(frozen=True, eq=False)
class ProductRegion(CredibleRegion):
    components: Tuple[CredibleRegion, ...]
    alpha: float
    split_rule: SplitRule

    @property
    def shape(self) -> RegionShape:
        return RegionShape.PRODUCT

    def contains(self, theta, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        if len(theta) != len(self.components):
            raise InputError("Product membership needs one parameter vector per component")
        return all(region.contains(part, tolerance) for region, part in zip(self.components, theta))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        boxes = [region.bounding_box() for region in self.components]
        return np.concatenate([lo for lo, _ in boxes]), np.concatenate([hi for _, hi in boxes])

    def diameter(self) -> float:
        return float(math.sqrt(sum(region.diameter() ** 2 for region in self.components)))


def credible_ellipsoid(summary: PosteriorSummary, alpha: float) -> EllipsoidRegion:
    if alpha == 0.0:
        raise DegenerateLevelError("alpha = 0 gives an infinite credible radius; use alpha > 0")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    return EllipsoidRegion(
        summary.mode,
        summary.info,
        two_sided_z(alpha),
        alpha,
        on_simplex=summary.family is FamilyKind.FINITE_DISCRETE,
    )


def credible_box_dirichlet(post: DirichletPosterior, alpha: float) -> BoxRegion:
    """Box θ̂_j ± z_{1-α′/2}·θ̂_j/√(τ_j - 1) with α′ = 1 - (1-α)^{1/n}, clipped to [0, 1]."""
    summary = dirichlet_mode_info(post)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    per_coordinate = split_alpha(alpha, post.size, SplitRule.INDEPENDENT_PRODUCT)
    z = two_sided_z(per_coordinate)
    mode = summary.mode
    half_widths = z * mode / np.sqrt(post.concentration - 1.0)
    lower = np.clip(mode - half_widths, 0.0, 1.0)
    upper = np.clip(mode + half_widths, 0.0, 1.0)
    return BoxRegion(lower, upper, alpha, mode, on_simplex=True)


def marginal_credible_interval(
    family: Union[FamilyKind, str],
    samples,
    alpha_marginal: float,
    known: Optional[Mapping[str, float]] = None,
    prior_concentration: float = 1.0,
) -> MarginalInterval:
    """θ̂ ∓ z_{1-α′/2}·I(θ̂)^{-1/2} per free parameter, clipped to the parameter domain.

    With several free parameters each interval is the projection of the marginal Laplace
    ellipsoid, at the level α′ split over the free parameters by the independent-product rule.
    """
    kind = FamilyKind.from_name(family) if isinstance(family, str) else family
    if not 0.0 < alpha_marginal <= 1.0:
        raise DomainError(f"Marginal alpha must lie in (0, 1], got {alpha_marginal}")
    posterior = family_log_posterior(kind, samples, known, prior_concentration)
    summary = laplace_fit(
        posterior.function,
        posterior.initial,
        posterior.bounds,
        family=kind,
        n_samples=posterior.n_samples,
    )
    level = split_alpha(alpha_marginal, len(posterior.free_names), SplitRule.INDEPENDENT_PRODUCT)
    half_widths = two_sided_z(level) * np.sqrt(np.diag(summary.covariance()))
    lower = summary.mode - half_widths
    upper = summary.mode + half_widths
    for k, name in enumerate(posterior.free_names):
        lo, hi = parameter_bounds(name)
        if lo is not None and lower[k] < lo:
            lower[k] = lo
            logger.warning(f"{kind.value} credible interval for {name} clipped at {lo}")
        if hi is not None and upper[k] > hi:
            upper[k] = hi
            logger.warning(f"{kind.value} credible interval for {name} clipped at {hi}")
    return MarginalInterval(
        kind,
        posterior.free_names,
        posterior.known,
        summary.mode,
        lower,
        upper,
        alpha_marginal,
        posterior.n_samples,
    )
