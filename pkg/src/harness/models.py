"""Generating models with a known true parameter, used by the experiments and the guarantee lab."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Sequence, Union

import numpy as np

from src.bayes.credible import (
    BoxRegion,
    EllipsoidRegion,
    MarginalInterval,
    credible_box_dirichlet,
    credible_ellipsoid,
    marginal_credible_interval,
)
from src.bayes.posterior import DirichletPosterior, dirichlet_mode_info, posterior_dirichlet
from src.copulas.sampling import sample_gaussian_copula
from src.distributions import risk
from src.distributions.families import FamilyKind, ParametricFamily, RandomLike, as_generator, asset_theta
from src.errors import ConfigError, InputError
from src.uncertainty_sets.discrete import DiscreteMixturePolytope, build_discrete, point_region

logger = logging.getLogger(__name__)

DEFAULT_ASSETS = 20
DEFAULT_ASSET_PRIOR = 2.0


@dataclass(frozen=True)
class AssetModel:
    """Independent standardized two-point assets with θ_i = (1 + i/(d + 1))/2."""

    dimension: int = DEFAULT_ASSETS
    prior_concentration: float = DEFAULT_ASSET_PRIOR

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"Asset model needs at least one asset, got {self.dimension}")
        if self.prior_concentration < 1.0:
            raise ConfigError(f"Prior concentration must be >= 1, got {self.prior_concentration}")

    @property
    def thetas(self) -> np.ndarray:
        return np.array([asset_theta(i, self.dimension) for i in range(1, self.dimension + 1)])

    def families(self) -> List[ParametricFamily]:
        return [ParametricFamily.two_point_asset(theta) for theta in self.thetas]

    def sample(self, n: int, rng: RandomLike) -> np.ndarray:
        generator = as_generator(rng)
        return np.column_stack([risk.sample(family, n, generator) for family in self.families()])

    def true_marginals(self) -> List[MarginalInterval]:
        return [MarginalInterval.point(family) for family in self.families()]

    def marginal_intervals(self, samples: np.ndarray, alpha_marginal: Union[float, Sequence[float]]) -> List[MarginalInterval]:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.dimension:
            raise InputError(f"Expected {self.dimension} asset columns, got {samples.shape[1]}")
        levels = np.broadcast_to(np.asarray(alpha_marginal, dtype=float), (self.dimension,))
        return [
            marginal_credible_interval(
                FamilyKind.TWO_POINT_ASSET, samples[:, i], float(levels[i]), prior_concentration=self.prior_concentration
            )
            for i in range(self.dimension)
        ]


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite support in R^d with true probabilities θ^c and a Dirichlet prior."""

    support: np.ndarray
    probabilities: np.ndarray
    prior: Optional[np.ndarray] = None

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support.reshape(-1, 1)
        probabilities = np.asarray(self.probabilities, dtype=float)
        if probabilities.shape != (support.shape[0],):
            raise ConfigError(f"{probabilities.size} probabilities for {support.shape[0]} support points")
        if np.any(probabilities <= 0.0) or abs(probabilities.sum() - 1.0) > 1e-9:
            raise ConfigError("True probabilities must be positive and sum to 1")
        prior = np.ones(support.shape[0]) if self.prior is None else np.asarray(self.prior, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probabilities)
        object.__setattr__(self, "prior", prior)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def dimension(self) -> int:
        return self.support.shape[1]

    def sample_labels(self, n: int, rng: RandomLike) -> np.ndarray:
        return as_generator(rng).choice(self.size, size=int(n), p=self.probabilities)

    def posterior(self, labels: Sequence[int]) -> DirichletPosterior:
        return posterior_dirichlet(self.prior, labels)

    def region(self, labels: Sequence[int], alpha: float, shape: str = "box") -> Union[BoxRegion, EllipsoidRegion]:
        post = self.posterior(labels)
        if shape == "box":
            return credible_box_dirichlet(post, alpha)
        if shape == "ellipsoid":
            return credible_ellipsoid(dirichlet_mode_info(post), alpha)
        raise ConfigError(f"Unknown region shape '{shape}', expected 'box' or 'ellipsoid'")

    def true_set(self, eps: float) -> DiscreteMixturePolytope:
        return build_discrete(point_region(self.probabilities), self.support, eps)

    def return_distribution(self, weights) -> ParametricFamily:
        """Exact law of ξᵀx under θ^c."""
        values = self.support @ np.asarray(weights, dtype=float)
        return ParametricFamily.finite_discrete(values, self.probabilities)


@dataclass(frozen=True, eq=False)
class NormalCopulaModel:
    """Normal marginals joined by a Gaussian copula (the backtest's reference model)."""

    mu: np.ndarray
    sigma: np.ndarray
    correlation: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if mu.shape != sigma.shape or np.any(sigma <= 0.0):
            raise InputError("Normal marginals need matching mu/sigma vectors with sigma > 0")
        correlation = np.eye(mu.size) if self.correlation is None else np.asarray(self.correlation, dtype=float)
        if correlation.shape != (mu.size, mu.size):
            raise InputError(f"Correlation of shape {correlation.shape} for {mu.size} assets")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "correlation", correlation)

    def families(self) -> List[ParametricFamily]:
        return [ParametricFamily.normal(m, s) for m, s in zip(self.mu, self.sigma)]

    def sample(self, n: int, rng: RandomLike) -> np.ndarray:
        return sample_gaussian_copula(self.correlation, self.families(), n, rng)


def discrete_model_from_config(model: Mapping[str, Any]) -> DiscreteModel:
    try:
        return DiscreteModel(model["support"], model["probabilities"], model.get("prior"))
    except KeyError as e:
        raise ConfigError(f"Discrete model needs '{e.args[0]}'")


def asset_model_from_config(model: Mapping[str, Any]) -> AssetModel:
    return AssetModel(int(model.get("dimension", DEFAULT_ASSETS)), float(model.get("prior_concentration", DEFAULT_ASSET_PRIOR)))


def model_kind(model: Mapping[str, Any], default: str = "two_point_assets") -> str:
    kind = str(model.get("kind", default))
    if kind not in ("two_point_assets", "discrete"):
        raise ConfigError(f"Unknown generating model '{kind}', expected 'two_point_assets' or 'discrete'")
    return kind
