"""Robust portfolio selection: max_x min_{ξ∈Ξ} ξᵀx over the long-only simplex."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Union

import numpy as np

from src.bayes.credible import BoxRegion
from src.errors import ConvergenceError, InputError, SolverError
from src.linprog.simplex import Direction, LinearProgram, LpStatus, Sense, solve_lp
from src.uncertainty_sets.base import UncertaintySet
from src.uncertainty_sets.box import CoordinateBox
from src.uncertainty_sets.discrete import DiscreteMixturePolytope

logger = logging.getLogger(__name__)

CERTIFICATE_TOLERANCE = 1e-7
CUTTING_PLANE_TOLERANCE = 1e-6
MAX_CUTTING_PLANE_ROUNDS = 200


@dataclass(frozen=True, eq=False)
class PortfolioProblem:
    uncertainty_set: UncertaintySet

    def __post_init__(self):
        if self.uncertainty_set.dimension < 1:
            raise InputError("Portfolio needs at least one asset")


@dataclass(frozen=True, eq=False)
class PortfolioSolution:
    weights: np.ndarray
    v_in: float
    scenario: np.ndarray
    method: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "v_in": self.v_in,
            "scenario": self.scenario.tolist(),
            "method": self.method,
        }


def solve_portfolio(problem: Union[PortfolioProblem, UncertaintySet]) -> PortfolioSolution:
    """Maximize the worst-case return over Ξ.

    Coordinate boxes put all weight on the asset with the largest lower endpoint (ties go to the
    lowest index). Box-region polytopes solve one LP that joins the simplex over x with the dual
    of the inner minimization. Ellipsoid-region polytopes run a cutting-plane loop.
    """
    uncertainty_set = problem.uncertainty_set if isinstance(problem, PortfolioProblem) else problem
    if isinstance(uncertainty_set, CoordinateBox):
        return _solve_box(uncertainty_set)
    if isinstance(uncertainty_set, DiscreteMixturePolytope):
        if isinstance(uncertainty_set.region, BoxRegion):
            return _solve_polytope_lp(uncertainty_set)
        return _solve_cutting_plane(uncertainty_set)
    raise InputError(f"No portfolio solver for {type(uncertainty_set).__name__}")


def _solve_box(box: CoordinateBox) -> PortfolioSolution:
    best = int(np.argmax(box.lower))
    weights = np.zeros(box.dimension)
    weights[best] = 1.0
    return PortfolioSolution(weights, float(box.lower[best]), box.lower.copy(), "box_argmax")


def _solve_polytope_lp(polytope: DiscreteMixturePolytope) -> PortfolioSolution:
    """max μ + ν + lᵀσ - uᵀρ (+ loᵀκ - hiᵀχ) over x ∈ Δ_d and the inner dual variables.

    Rows: μ - επ_j + r_jᵀ(κ - χ) - r_jᵀx <= 0 and ν + π_j + σ_j - ρ_j = 0 for every support
    point j, plus eᵀx = 1.
    """
    R = polytope.support_points
    n, d = R.shape
    theta_lo, theta_hi = polytope.theta_bounds()
    clip_lo, clip_hi = polytope.clip if polytope.clip is not None else (np.full(d, -np.inf), np.full(d, np.inf))
    lower_clip = [k for k in range(d) if math.isfinite(clip_lo[k])]
    upper_clip = [k for k in range(d) if math.isfinite(clip_hi[k])]

    # Column layout: x | μ | ν | π | σ | ρ | κ | χ
    x_cols = np.arange(d)
    mu, nu = d, d + 1
    pi = d + 2 + np.arange(n)
    sigma = pi + n
    rho = sigma + n
    offset = d + 2 + 3 * n
    kappa = offset + np.arange(len(lower_clip))
    chi = offset + len(lower_clip) + np.arange(len(upper_clip))
    width = offset + len(lower_clip) + len(upper_clip)

    c = np.zeros(width)
    c[mu] = 1.0
    c[nu] = 1.0
    c[sigma] = theta_lo
    c[rho] = -theta_hi
    c[kappa] = clip_lo[lower_clip]
    c[chi] = -clip_hi[upper_clip]

    rows: List[np.ndarray] = []
    senses: List[Sense] = []
    for j in range(n):
        row = np.zeros(width)
        row[mu] = 1.0
        row[pi[j]] = -polytope.eps
        row[kappa] = R[j, lower_clip]
        row[chi] = -R[j, upper_clip]
        row[x_cols] = -R[j]
        rows.append(row)
        senses.append(Sense.LE)
    for j in range(n):
        row = np.zeros(width)
        row[nu] = 1.0
        row[pi[j]] = 1.0
        row[sigma[j]] = 1.0
        row[rho[j]] = -1.0
        rows.append(row)
        senses.append(Sense.EQ)
    budget = np.zeros(width)
    budget[x_cols] = 1.0
    rows.append(budget)
    senses.append(Sense.EQ)
    b = np.zeros(len(rows))
    b[-1] = 1.0

    lower = np.zeros(width)
    lower[mu] = -np.inf
    lower[nu] = -np.inf
    program = LinearProgram(c, np.vstack(rows), tuple(senses), b, lower, np.full(width, np.inf), Direction.MAX)
    solution = solve_lp(program)
    if solution.status is not LpStatus.OPTIMAL:
        raise SolverError(f"Robust portfolio LP ended with status {solution.status.value}")

    weights = np.clip(solution.x[x_cols], 0.0, None)
    weights /= weights.sum()
    support_value, scenario = polytope.support_point(-weights)
    v_in = float(solution.value)
    if abs(-support_value - v_in) > CERTIFICATE_TOLERANCE * max(1.0, abs(v_in)):
        raise SolverError(f"Saddle certificate failed: LP value {v_in:.10g}, inner minimum {-support_value:.10g}")
    return PortfolioSolution(weights, v_in, scenario, "polytope_lp")


def _solve_cutting_plane(polytope: DiscreteMixturePolytope) -> PortfolioSolution:
    """Kelley loop: master LP over scenarios found so far, separation by the support oracle."""
    d = polytope.dimension
    weights = np.full(d, 1.0 / d)
    support_value, scenario = polytope.support_point(-weights)
    scenarios = [scenario]
    best = PortfolioSolution(weights, -support_value, scenario, "cutting_plane")
    upper_bound = math.inf
    for round_index in range(MAX_CUTTING_PLANE_ROUNDS):
        # Columns: x | t; maximize t subject to t <= ξ_kᵀx.
        A = np.array([np.concatenate([-s, [1.0]]) for s in scenarios] + [np.concatenate([np.ones(d), [0.0]])])
        senses = (Sense.LE,) * len(scenarios) + (Sense.EQ,)
        b = np.concatenate([np.zeros(len(scenarios)), [1.0]])
        lower = np.concatenate([np.zeros(d), [-np.inf]])
        c = np.concatenate([np.zeros(d), [1.0]])
        master = solve_lp(LinearProgram(c, A, senses, b, lower, np.full(d + 1, np.inf), Direction.MAX))
        if master.status is not LpStatus.OPTIMAL:
            raise SolverError(f"Cutting-plane master LP ended with status {master.status.value}")
        weights = np.clip(master.x[:d], 0.0, None)
        weights /= weights.sum()
        upper_bound = min(upper_bound, master.value)
        support_value, scenario = polytope.support_point(-weights)
        worst = -support_value
        if worst > best.v_in:
            best = PortfolioSolution(weights, worst, scenario, "cutting_plane")
        if upper_bound - best.v_in <= CUTTING_PLANE_TOLERANCE * max(1.0, abs(upper_bound)):
            logger.debug(f"Cutting plane converged after {round_index + 1} rounds, v_in={best.v_in:.8g}")
            return best
        scenarios.append(scenario)
    raise ConvergenceError(
        f"Cutting plane stopped after {MAX_CUTTING_PLANE_ROUNDS} rounds with gap {upper_bound - best.v_in:.3e}",
        best_bound=best.v_in,
    )
