"""Posterior summaries and the conjugate Dirichlet model for finite-support distributions."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from src.distributions.families import FamilyKind
from src.errors import BoundaryModeError, DomainError, InputError

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Posterior mode and observed information of a Laplace (Gaussian) approximation."""

    mode: np.ndarray
    info: np.ndarray
    family: Optional[FamilyKind] = None
    n_samples: int = 0

    def __post_init__(self):
        mode = np.atleast_1d(np.asarray(self.mode, dtype=float))
        info = np.atleast_2d(np.asarray(self.info, dtype=float))
        if info.shape != (mode.size, mode.size):
            raise InputError(f"Information matrix of shape {info.shape} does not match mode of size {mode.size}")
        if not np.allclose(info, info.T, atol=SYMMETRY_TOLERANCE, rtol=0.0):
            raise InputError("Observed information must be symmetric")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "info", 0.5 * (info + info.T))

    @property
    def dimension(self) -> int:
        return self.mode.size

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.info)


@dataclass(frozen=True, eq=False)
class DirichletPosterior:
    """Dir(τ) over the support probabilities; ``n_observations`` counts the labels behind τ, not the prior."""

    concentration: np.ndarray
    n_observations: int = 0

    def __post_init__(self):
        tau = np.asarray(self.concentration, dtype=float)
        if tau.ndim != 1 or tau.size == 0 or np.any(tau <= 0.0) or not np.all(np.isfinite(tau)):
            raise DomainError(f"Dirichlet concentration must be a positive vector, got {self.concentration}")
        if self.n_observations < 0:
            raise DomainError(f"Observation count must be nonnegative, got {self.n_observations}")
        object.__setattr__(self, "concentration", tau)

    @property
    def size(self) -> int:
        return self.concentration.size


def posterior_dirichlet(prior: Sequence[float], labels: Sequence[int]) -> DirichletPosterior:
    """Conjugate update τ = τ′ + counts; labels are zero-based support indices."""
    tau_prior = DirichletPosterior(np.asarray(prior, dtype=float)).concentration
    labels = np.asarray(labels)
    if labels.size == 0:
        return DirichletPosterior(tau_prior.copy())
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise InputError("Dirichlet labels must be integers")
        labels = labels.astype(int)
    out_of_range = (labels < 0) | (labels >= tau_prior.size)
    if np.any(out_of_range):
        bad = labels[out_of_range][0]
        raise InputError(f"Label {bad} outside 0..{tau_prior.size - 1}")
    counts = np.bincount(labels, minlength=tau_prior.size)
    return DirichletPosterior(tau_prior + counts, int(labels.size))


def dirichlet_mode_info(post: DirichletPosterior) -> PosteriorSummary:
    tau = post.concentration
    if np.any(tau <= 1.0):
        raise BoundaryModeError(
            f"Dirichlet posterior has no interior mode: concentration {tau.tolist()} has entries <= 1"
        )
    mode = (tau - 1.0) / (tau.sum() - tau.size)
    info = np.diag((tau - 1.0) / mode**2)
    return PosteriorSummary(mode, info, FamilyKind.FINITE_DISCRETE, post.n_observations)


def dirichlet_log_posterior(post: DirichletPosterior) -> Callable[[np.ndarray], float]:
    """Dirichlet log-density with the simplex constraint carried by its Lagrange multiplier.

    The unconstrained maximizer is the Dirichlet mode and the Hessian there is
    -diag((τ_j - 1)/θ̂_j²), so Laplace fitting this function reproduces dirichlet_mode_info.
    """
    tau = post.concentration
    multiplier = tau.sum() - tau.size

    def log_posterior(theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0.0):
            return -np.inf
        return float((tau - 1.0) @ np.log(theta) - multiplier * (theta.sum() - 1.0))

    return log_posterior
