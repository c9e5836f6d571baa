"""Finite-support uncertainty sets: the CVaR polytope family over a credible region of Δ_n.

Ξ = {Σ_j q_j r_j : q ∈ Δ_n, ε·q <= θ for some θ in the region}. Box regions reduce every
query to one LP over (q, θ); ellipsoid regions use the conic dual of the inner maximization
over θ, which returns a certified upper bound on the support function.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from src.bayes.credible import BoxRegion, EllipsoidRegion
from src.errors import ConvergenceError, DomainError, EmptySetError, InfeasibleRegionError, InputError
from src.linprog.simplex import Direction, LinearProgram, LpStatus, Sense, solve_lp
from src.uncertainty_sets.base import (
    MEMBERSHIP_TOLERANCE,
    ClipBox,
    SetKind,
    UncertaintySet,
    check_direction,
    intersect_clips,
    normalize_clip,
)

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9
DUAL_GAP_TOLERANCE = 1e-6
MAX_CUTS = 200
CUT_RADIUS_TOLERANCE = 1e-6

SimplexRegion = Union[BoxRegion, EllipsoidRegion]


def point_region(theta: Sequence[float]) -> BoxRegion:
    """Degenerate box region {θ} on the simplex (the true-parameter or α→1 set)."""
    theta = np.asarray(theta, dtype=float)
    return BoxRegion(theta, theta.copy(), 1.0, theta.copy(), on_simplex=True)


def greedy_weights(scores: np.ndarray, theta: np.ndarray, eps: float) -> np.ndarray:
    """q ∈ Δ_n maximizing Σ q_j scores_j subject to q <= θ/ε (highest scores first)."""
    caps = np.clip(theta, 0.0, None) / eps
    weights = np.zeros_like(scores)
    remaining = 1.0
    for j in np.argsort(-scores, kind="stable"):
        if remaining <= 0.0:
            break
        weights[j] = min(caps[j], remaining)
        remaining -= weights[j]
    return weights


def _jsonable(values: np.ndarray) -> List[Optional[float]]:
    return [float(x) if math.isfinite(x) else None for x in np.asarray(values, dtype=float).ravel()]


@dataclass(frozen=True, eq=False)
class DiscreteMixturePolytope(UncertaintySet):
    support_points: np.ndarray
    region: SimplexRegion
    eps: float
    clip: Optional[ClipBox] = None

    @property
    def kind(self) -> SetKind:
        return SetKind.DISCRETE_POLYTOPE

    @property
    def dimension(self) -> int:
        return self.support_points.shape[1]

    @property
    def n_points(self) -> int:
        return self.support_points.shape[0]

    # Support function

    def support(self, v: np.ndarray) -> float:
        return self.support_point(v)[0]

    def support_point(self, v: np.ndarray) -> Tuple[float, np.ndarray]:
        v = check_direction(v, self.dimension)
        scores = self.support_points @ v
        if isinstance(self.region, BoxRegion):
            return self._box_region_lp(scores)
        if self.clip is None:
            return self._ellipsoid_dual(scores)
        return self._ellipsoid_cutting_plane(scores)

    def _structure_rows(self, extra_theta_rows: Sequence[Tuple[np.ndarray, float]] = ()):
        """Rows over (q, θ): Σq = 1, Σθ = 1, εq - θ <= 0, clip rows on Rᵀq, extra rows on θ."""
        n = self.n_points
        rows: List[np.ndarray] = []
        senses: List[Sense] = []
        rhs: List[float] = []
        rows.append(np.concatenate([np.ones(n), np.zeros(n)]))
        senses.append(Sense.EQ)
        rhs.append(1.0)
        rows.append(np.concatenate([np.zeros(n), np.ones(n)]))
        senses.append(Sense.EQ)
        rhs.append(1.0)
        for j in range(n):
            row = np.zeros(2 * n)
            row[j] = self.eps
            row[n + j] = -1.0
            rows.append(row)
            senses.append(Sense.LE)
            rhs.append(0.0)
        if self.clip is not None:
            lo, hi = self.clip
            for k in range(self.dimension):
                row = np.concatenate([self.support_points[:, k], np.zeros(n)])
                if math.isfinite(lo[k]):
                    rows.append(row)
                    senses.append(Sense.GE)
                    rhs.append(float(lo[k]))
                if math.isfinite(hi[k]):
                    rows.append(row)
                    senses.append(Sense.LE)
                    rhs.append(float(hi[k]))
        for normal, bound in extra_theta_rows:
            rows.append(np.concatenate([np.zeros(n), normal]))
            senses.append(Sense.LE)
            rhs.append(float(bound))
        return np.vstack(rows), tuple(senses), np.asarray(rhs)

    def theta_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.region.bounding_box()
        return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)

    def _solve_structure(self, scores: np.ndarray, extra_theta_rows=()):
        n = self.n_points
        A, senses, b = self._structure_rows(extra_theta_rows)
        theta_lo, theta_hi = self.theta_bounds()
        program = LinearProgram(
            np.concatenate([scores, np.zeros(n)]),
            A,
            senses,
            b,
            np.concatenate([np.zeros(n), theta_lo]),
            np.concatenate([np.full(n, np.inf), theta_hi]),
            Direction.MAX,
        )
        solution = solve_lp(program)
        if solution.status is LpStatus.INFEASIBLE:
            if self.clip is not None:
                raise EmptySetError("Clipped discrete uncertainty set is empty")
            raise InfeasibleRegionError("Credible region does not intersect the probability simplex")
        if solution.status is LpStatus.UNBOUNDED:
            raise DomainError("Discrete support LP reported unbounded; the polytope must be bounded")
        return solution

    def _box_region_lp(self, scores: np.ndarray) -> Tuple[float, np.ndarray]:
        solution = self._solve_structure(scores)
        q = solution.x[: self.n_points]
        return solution.value, q @ self.support_points

    def _ellipsoid_dual(self, scores: np.ndarray) -> Tuple[float, np.ndarray]:
        region: EllipsoidRegion = self.region
        bound, theta = ellipsoid_dual_bound(scores, region.center, region.inverse_sqrt_info(), region.radius, self.eps)
        theta = feasible_ellipsoid_point(region, theta)
        q = greedy_weights(scores, theta, self.eps)
        inner = float(q @ scores)
        if bound - inner > DUAL_GAP_TOLERANCE * max(1.0, abs(bound)):
            logger.debug(f"Ellipsoid dual gap {bound - inner:.3e} between certified bound and recovered member")
        return max(bound, inner), q @ self.support_points

    def _ellipsoid_cutting_plane(self, scores: np.ndarray) -> Tuple[float, np.ndarray]:
        """Outer polyhedral approximation of the ellipsoid by tangent cuts (used with a clip box)."""
        region: EllipsoidRegion = self.region
        n = self.n_points
        cuts: List[Tuple[np.ndarray, float]] = []
        B = region.inverse_sqrt_info()
        value = np.inf
        for _ in range(MAX_CUTS):
            solution = self._solve_structure(scores, cuts)
            value = solution.value
            q, theta = solution.x[:n], solution.x[n:]
            offset = theta - region.center
            if np.linalg.norm(region.sqrt_info @ offset) <= region.radius * (1.0 + CUT_RADIUS_TOLERANCE):
                return value, q @ self.support_points
            normal = region.info @ offset
            cuts.append((normal, float(normal @ region.center + region.radius * np.linalg.norm(B @ normal))))
        raise ConvergenceError(f"Ellipsoid cutting plane did not converge in {MAX_CUTS} cuts", best_bound=value)

    # Membership

    def contains(self, xi, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        xi = check_direction(xi, self.dimension)
        if self.clip is not None:
            lo, hi = self.clip
            if np.any(xi < lo - tolerance) or np.any(xi > hi + tolerance):
                return False
        n = self.n_points
        A, senses, b = self._structure_rows()
        target_rows = np.hstack([self.support_points.T, np.zeros((self.dimension, n))])
        slack = tolerance * (1.0 + np.abs(xi))
        A = np.vstack([A, target_rows, target_rows])
        senses = senses + (Sense.LE,) * self.dimension + (Sense.GE,) * self.dimension
        b = np.concatenate([b, xi + slack, xi - slack])
        theta_lo, theta_hi = self.theta_bounds()
        program = LinearProgram(
            np.zeros(2 * n),
            A,
            senses,
            b,
            np.concatenate([np.zeros(n), theta_lo]),
            np.concatenate([np.full(n, np.inf), theta_hi]),
        )
        feasible = solve_lp(program)
        if feasible.status is not LpStatus.OPTIMAL:
            return False
        if isinstance(self.region, BoxRegion):
            return True
        return self._ellipsoid_membership(xi, feasible.x, tolerance)

    def _ellipsoid_membership(self, xi: np.ndarray, start: np.ndarray, tolerance: float) -> bool:
        """Minimize the region norm of θ over the (q, θ) pairs that represent ξ."""
        region: EllipsoidRegion = self.region
        n = self.n_points
        R = self.support_points

        def objective(z):
            offset = z[n:] - region.center
            return float(offset @ region.info @ offset)

        def gradient(z):
            grad = np.zeros(2 * n)
            grad[n:] = 2.0 * region.info @ (z[n:] - region.center)
            return grad

        constraints = [
            {"type": "eq", "fun": lambda z: np.concatenate([R.T @ z[:n] - xi, [z[:n].sum() - 1.0, z[n:].sum() - 1.0]])},
            {"type": "ineq", "fun": lambda z: z[n:] - self.eps * z[:n]},
        ]
        result = minimize(
            objective,
            start,
            jac=gradient,
            method="SLSQP",
            bounds=[(0.0, None)] * (2 * n),
            constraints=constraints,
            options={"maxiter": 500, "ftol": 1e-12},
        )
        violation = np.abs(R.T @ result.x[:n] - xi).max()
        radius = region.radius + max(tolerance, 1e-7)
        return bool(violation <= 1e-6 * (1.0 + np.abs(xi).max()) and result.fun <= radius**2)

    def clipped(self, clip: ClipBox) -> "DiscreteMixturePolytope":
        return DiscreteMixturePolytope(self.support_points, self.region, self.eps, intersect_clips(self.clip, clip))

    def to_dict(self) -> Dict[str, Any]:
        if isinstance(self.region, BoxRegion):
            region = {"shape": "box", "lower": _jsonable(self.region.lower), "upper": _jsonable(self.region.upper)}
        else:
            region = {
                "shape": "ellipsoid",
                "center": _jsonable(self.region.center),
                "info": self.region.info.tolist(),
                "radius": float(self.region.radius),
            }
        data: Dict[str, Any] = {
            "kind": self.kind.value,
            "eps": self.eps,
            "support_points": self.support_points.tolist(),
            "region": region,
            "alpha": float(self.region.alpha),
        }
        if self.clip is not None:
            data["clip"] = {"lower": _jsonable(self.clip[0]), "upper": _jsonable(self.clip[1])}
        return data


def ellipsoid_dual_bound(
    scores: np.ndarray,
    center: np.ndarray,
    B: np.ndarray,
    radius: float,
    eps: float,
) -> Tuple[float, np.ndarray]:
    """Certified upper bound on max_{θ ∈ E ∩ Δ_n} max_{q ∈ Δ_n, εq <= θ} qᵀscores.

    E = {θ̂ + Bζ : ‖ζ‖ <= z}. The bound is min over (β, w >= (scores - β)_+, γ, η >= 0) of
    β + (θ̂ᵀw + (1 - eᵀθ̂)γ + θ̂ᵀη + z‖B(w - γe + η)‖)/ε. Every feasible point of that
    program bounds the support value from above, so the optimizer output is repaired to
    feasibility before the objective is reported.

    Returns:
        (bound, θ) with θ the maximizer of the inner problem implied by the dual point.
    """
    n = scores.size
    ones = np.ones(n)
    gap = 1.0 - float(center.sum())
    linear = np.concatenate([[1.0], center / eps, [gap / eps], center / eps, [radius / eps]])

    def unpack(x):
        return x[0], x[1 : n + 1], x[n + 1], x[n + 2 : 2 * n + 2], x[2 * n + 2]

    def residual(x):
        _, w, gamma, eta, _ = unpack(x)
        return B @ (w - gamma * ones + eta)

    def cone(x):
        r = residual(x)
        return x[-1] ** 2 - r @ r

    def cone_jacobian(x):
        r = residual(x)
        direction = B.T @ r
        return np.concatenate([[0.0], -2.0 * direction, [2.0 * direction.sum()], -2.0 * direction, [2.0 * x[-1]]])

    hinge_jacobian = np.hstack([np.ones((n, 1)), np.eye(n), np.zeros((n, n + 2))])

    def evaluate(x) -> float:
        beta, w, gamma, eta, _ = unpack(x)
        w = np.maximum(w, np.maximum(scores - beta, 0.0))
        eta = np.maximum(eta, 0.0)
        s = np.linalg.norm(B @ (w - gamma * ones + eta))
        return float(beta + (center @ w + gap * gamma + center @ eta + radius * s) / eps)

    beta0 = float(center @ scores)
    w0 = np.maximum(scores - beta0, 0.0)
    x0 = np.concatenate([[beta0], w0, [0.0], np.zeros(n), [np.linalg.norm(B @ w0) + 1e-3]])
    bounds = [(None, None)] + [(0.0, None)] * n + [(None, None)] + [(0.0, None)] * n + [(0.0, None)]
    constraints = [
        {"type": "ineq", "fun": cone, "jac": cone_jacobian},
        {"type": "ineq", "fun": lambda x: x[1 : n + 1] + x[0] - scores, "jac": lambda x: hinge_jacobian},
    ]

    best_x, best_value = x0, min(evaluate(x0), float(scores.max()))
    start = x0
    for attempt in range(2):
        result = minimize(
            lambda x: float(linear @ x),
            start,
            jac=lambda x: linear,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": 1000, "ftol": 1e-13},
        )
        candidate = evaluate(result.x)
        if candidate < best_value:
            best_x, best_value = result.x, candidate
        if result.success:
            break
        logger.debug(f"Ellipsoid dual attempt {attempt + 1} ended with '{result.message}'")
        start = best_x

    r = residual(best_x)
    norm = np.linalg.norm(r)
    zeta = radius * r / norm if norm > 0.0 else np.zeros(n)
    theta = center + B @ zeta
    if not np.isfinite(best_value):
        raise ConvergenceError("Ellipsoid dual produced a non-finite bound", best_bound=float(scores.max()))
    return best_value, theta


def feasible_ellipsoid_point(region: EllipsoidRegion, theta: np.ndarray) -> np.ndarray:
    """Pull θ back along the segment to θ̂ until it lies in the ellipsoid and on the simplex."""
    center = region.center
    delta = np.asarray(theta, dtype=float) - center
    delta = delta - delta.mean()
    norm = np.linalg.norm(region.sqrt_info @ delta)
    step = 1.0
    if norm > region.radius:
        step = region.radius / norm
    negative = delta < 0.0
    if np.any(negative):
        step = min(step, float(np.min(center[negative] / -delta[negative])))
    return np.clip(center + step * delta, 0.0, None)


def build_discrete(
    region: SimplexRegion,
    support,
    eps: float,
    clip: Optional[ClipBox] = None,
) -> DiscreteMixturePolytope:
    """Build Ξ(S^N, ε, α) for a finite-support model from a credible region over Δ_n.

    Args:
        region: Box or ellipsoid region carrying the simplex side condition.
        support: n support points, shape (n,) or (n, d).
        eps: Risk level in (0, 1].
        clip: Optional closed box Ξ₀ known to contain the support.
    """
    points = np.asarray(support, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[0] < 1:
        raise InputError(f"Support must be an (n, d) array, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InputError("Support points must be finite")
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    if not region.on_simplex:
        raise InputError("Discrete uncertainty sets need a credible region over the probability simplex")
    if region.center.size != points.shape[0]:
        raise InputError(f"Region over {region.center.size} probabilities for {points.shape[0]} support points")

    if isinstance(region, BoxRegion):
        if region.lower.sum() > 1.0 + SIMPLEX_TOLERANCE or region.upper.sum() < 1.0 - SIMPLEX_TOLERANCE:
            raise InfeasibleRegionError(
                f"Credible box misses the simplex: Σlower={region.lower.sum():.6f}, Σupper={region.upper.sum():.6f}"
            )
    elif abs(region.center.sum() - 1.0) > SIMPLEX_TOLERANCE or region.center.min() < -SIMPLEX_TOLERANCE:
        raise InfeasibleRegionError("Ellipsoid center is not a probability vector")

    polytope = DiscreteMixturePolytope(points, region, float(eps))
    if clip is not None:
        polytope = polytope.clipped(normalize_clip(clip[0], clip[1], points.shape[1]))
        if isinstance(region, BoxRegion):
            # Raises EmptySetError when the clip box misses the polytope.
            polytope.support_point(np.zeros(points.shape[1]))
    logger.debug(f"Built discrete polytope: n={points.shape[0]}, d={points.shape[1]}, eps={eps}")
    return polytope


def support_discrete(polytope: DiscreteMixturePolytope, v) -> float:
    return polytope.support(v)
