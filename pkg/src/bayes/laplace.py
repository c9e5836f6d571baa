"""Laplace approximation: posterior mode search and observed information."""
from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from src.bayes.posterior import PosteriorSummary
from src.distributions.families import FamilyKind
from src.errors import BoundaryModeError, ConvergenceError, DomainError

logger = logging.getLogger(__name__)

LogPosteriorFn = Callable[[np.ndarray], float]
Bounds = Sequence[Tuple[Optional[float], Optional[float]]]

MAX_ITERATIONS = 500
GRADIENT_TOLERANCE = 1e-8
NEWTON_STEPS = 50
BACKTRACK_HALVINGS = 40


def _steps(theta: np.ndarray) -> np.ndarray:
    return np.maximum(1e-5, 1e-5 * np.abs(theta))


def finite_difference_gradient(f: LogPosteriorFn, theta: np.ndarray) -> np.ndarray:
    h = _steps(theta)
    grad = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h[k]
        grad[k] = (f(theta + e) - f(theta - e)) / (2.0 * h[k])
    return grad


def finite_difference_hessian(f: LogPosteriorFn, theta: np.ndarray) -> np.ndarray:
    """Central second differences, step max(1e-5, 1e-5·|θ_k|), symmetrized."""
    h = _steps(theta)
    size = theta.size
    center = f(theta)
    hessian = np.empty((size, size))
    for k in range(size):
        ek = np.zeros(size)
        ek[k] = h[k]
        hessian[k, k] = (f(theta + ek) - 2.0 * center + f(theta - ek)) / h[k] ** 2
        for l in range(k + 1, size):
            el = np.zeros(size)
            el[l] = h[l]
            hessian[k, l] = (
                f(theta + ek + el) - f(theta + ek - el) - f(theta - ek + el) + f(theta - ek - el)
            ) / (4.0 * h[k] * h[l])
            hessian[l, k] = hessian[k, l]
    return 0.5 * (hessian + hessian.T)


def _inside(theta: np.ndarray, bounds: Optional[Bounds]) -> bool:
    if bounds is None:
        return True
    for value, (lo, hi) in zip(theta, bounds):
        if (lo is not None and value < lo) or (hi is not None and value > hi):
            return False
    return True


def _gradient_small(grad: np.ndarray, value: float, tolerance: float) -> bool:
    # Finite-difference noise grows with |f|, so the tolerance is relative above |f| = 1.
    return np.linalg.norm(grad) <= tolerance * max(1.0, abs(value))


def _newton_polish(
    f: LogPosteriorFn, theta: np.ndarray, bounds: Optional[Bounds], tolerance: float
) -> np.ndarray:
    for _ in range(NEWTON_STEPS):
        value = f(theta)
        grad = finite_difference_gradient(f, theta)
        if _gradient_small(grad, value, tolerance):
            return theta
        hessian = finite_difference_hessian(f, theta)
        try:
            step = np.linalg.solve(hessian, -grad)
        except np.linalg.LinAlgError:
            step = grad
        if grad @ step <= 0.0:
            step = grad / max(1.0, np.max(np.abs(np.diag(hessian))))
        for _ in range(BACKTRACK_HALVINGS):
            candidate = theta + step
            if _inside(candidate, bounds) and f(candidate) >= value:
                break
            step = 0.5 * step
        else:
            if _gradient_small(grad, value, 1e3 * tolerance):
                return theta
            raise ConvergenceError(
                f"Mode search stalled at {theta.tolist()} with gradient norm {np.linalg.norm(grad):.3e}",
                best_bound=value,
            )
        theta = candidate
    value = f(theta)
    grad = finite_difference_gradient(f, theta)
    if _gradient_small(grad, value, 1e3 * tolerance):
        return theta
    raise ConvergenceError(
        f"Mode search did not reach gradient tolerance; last gradient norm {np.linalg.norm(grad):.3e}",
        best_bound=value,
    )


def laplace_fit(
    log_posterior: LogPosteriorFn,
    theta_init: Sequence[float],
    bounds: Optional[Bounds] = None,
    family: Optional[FamilyKind] = None,
    n_samples: int = 0,
    max_iterations: int = MAX_ITERATIONS,
    gradient_tolerance: float = GRADIENT_TOLERANCE,
) -> PosteriorSummary:
    """Maximize the log-posterior and return its mode with the observed information.

    Args:
        log_posterior: Scalar log-posterior over the parameter vector (may return -inf
            outside the parameter space).
        theta_init: Starting point where the log-posterior is finite.
        bounds: Optional (lo, hi) box per coordinate, ``None`` for an open side.
        family: Family tag recorded in the summary.
        n_samples: Sample count recorded in the summary.

    Returns:
        PosteriorSummary with the mode and I(θ̂) = -Hessian.
    """
    theta0 = np.atleast_1d(np.asarray(theta_init, dtype=float))
    if not np.isfinite(log_posterior(theta0)):
        raise DomainError(f"Log-posterior is not finite at the initial point {theta0.tolist()}")

    def negative(theta: np.ndarray) -> float:
        value = log_posterior(theta)
        return -value if np.isfinite(value) else np.inf

    def negative_gradient(theta: np.ndarray) -> np.ndarray:
        return -finite_difference_gradient(log_posterior, theta)

    result = minimize(
        negative,
        theta0,
        jac=negative_gradient,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iterations, "gtol": gradient_tolerance},
    )
    start = result.x if np.isfinite(result.fun) else theta0
    mode = _newton_polish(log_posterior, np.asarray(start, dtype=float), bounds, gradient_tolerance)

    info = -finite_difference_hessian(log_posterior, mode)
    if not np.all(np.isfinite(info)):
        raise BoundaryModeError(f"Observed information is not finite at {mode.tolist()}; mode is on the boundary")
    eigenvalues = np.linalg.eigvalsh(info)
    if eigenvalues.min() <= 0.0:
        raise BoundaryModeError(
            f"Observed information is not positive definite at {mode.tolist()} "
            f"(smallest eigenvalue {eigenvalues.min():.3e})"
        )
    logger.debug(f"Laplace fit converged at {mode.tolist()} after {result.nit} quasi-Newton iterations")
    return PosteriorSummary(mode, info, family, n_samples)
