"""Risk-budget allocation across joint chance constraints.

A joint constraint max_j g_j(ξ, x) <= 0 at total level ε̄ is enforced by J individual sets
Ξ(S^N, ε_j, α) with Σ ε_j = ε̄. The best split minimizes the largest worst-case constraint value;
the problem is nonconvex in ε, so the search is a coordinate exchange started from the uniform split.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.errors import ContractViolationError, DomainError, InputError
from src.uncertainty_sets.base import UncertaintySet
from src.uncertainty_sets.geometry import support_function

logger = logging.getLogger(__name__)

MAX_SWEEPS = 200
IMPROVEMENT_TOLERANCE = 1e-8
FLOOR_FRACTION = 1e-6
MONOTONICITY_GRID = 5
MONOTONICITY_TOLERANCE = 1e-7

SetBuilder = Callable[[float], UncertaintySet]
WorstCase = Callable[[UncertaintySet, np.ndarray], float]


@dataclass(frozen=True)
class JointConstraint:
    """One g_j: ``build_set`` maps ε_j to Ξ_j and ``worst_case`` returns max_{ξ∈Ξ_j} g_j(ξ, x)."""

    build_set: SetBuilder
    worst_case: WorstCase
    name: str = ""

    def value(self, eps: float, x: np.ndarray) -> float:
        return float(self.worst_case(self.build_set(eps), x))


@dataclass(frozen=True)
class JointConstraintSpec:
    constraints: Tuple[JointConstraint, ...]
    eps_bar: float

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.constraints:
            raise InputError("A joint chance constraint needs at least one member")
        if not 0.0 < self.eps_bar < 1.0:
            raise DomainError(f"eps_bar must lie in (0, 1), got {self.eps_bar}")

    @property
    def size(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class EpsilonAllocation:
    eps: np.ndarray
    objective: float
    uniform_objective: float
    sweeps: int = 0
    values: Optional[np.ndarray] = None


def linear_constraint(coefficients: Callable[[np.ndarray], np.ndarray], offset: float = 0.0) -> WorstCase:
    """Worst case of g(ξ, x) = a(x)ᵀξ - b over Ξ, that is δ*(a(x) | Ξ) - b."""

    def worst_case(uncertainty_set: UncertaintySet, x: np.ndarray) -> float:
        return support_function(uncertainty_set, coefficients(np.asarray(x, dtype=float))) - offset

    return worst_case


class _Evaluator:
    """Caches g_j values per (j, ε_j); building a set is the expensive part."""

    def __init__(self, spec: JointConstraintSpec, x: np.ndarray):
        self.spec = spec
        self.x = x
        self.cache: Dict[Tuple[int, float], float] = {}

    def __call__(self, j: int, eps: float) -> float:
        key = (j, float(eps))
        if key not in self.cache:
            self.cache[key] = self.spec.constraints[j].value(float(eps), self.x)
        return self.cache[key]

    def values(self, eps: np.ndarray) -> np.ndarray:
        return np.array([self(j, e) for j, e in enumerate(eps)])


def _check_monotone(evaluator: _Evaluator, floor: float) -> None:
    spec = evaluator.spec
    grid = np.linspace(floor, spec.eps_bar, MONOTONICITY_GRID)
    for j, constraint in enumerate(spec.constraints):
        values = np.array([evaluator(j, e) for e in grid])
        rises = np.diff(values) > MONOTONICITY_TOLERANCE * (1.0 + np.abs(values[:-1]))
        if np.any(rises):
            label = constraint.name or f"#{j + 1}"
            raise ContractViolationError(
                f"Constraint {label} grows with its risk level: values {np.round(values, 8).tolist()} on {grid.tolist()}"
            )


def allocate_epsilons(spec: JointConstraintSpec, x) -> EpsilonAllocation:
    """Split ε̄ across the constraints to minimize max_j max_{ξ∈Ξ_j} g_j(ξ, x).

    Each sweep moves budget from a slack constraint to the tightest one by a bounded
    golden-section search on the transferred amount, keeping every ε_j >= ε̄·1e-6.

    Raises:
        ContractViolationError: some worst-case value increases with its ε_j.
    """
    x = np.asarray(x, dtype=float)
    J = spec.size
    eps_bar = spec.eps_bar
    evaluator = _Evaluator(spec, x)
    if J == 1:
        value = evaluator(0, eps_bar)
        return EpsilonAllocation(np.array([eps_bar]), value, value, 0, np.array([value]))

    floor = eps_bar * FLOOR_FRACTION
    _check_monotone(evaluator, floor)

    eps = np.full(J, eps_bar / J)
    values = evaluator.values(eps)
    uniform_objective = float(values.max())
    objective = uniform_objective

    sweeps = 0
    for sweeps in range(1, MAX_SWEEPS + 1):
        tight = int(np.argmax(values))
        best_move = None
        for slack in np.argsort(values, kind="stable"):
            slack = int(slack)
            if slack == tight or eps[slack] <= floor:
                continue
            others = np.delete(values, [tight, slack])
            rest = float(others.max()) if others.size else -np.inf
            room = float(eps[slack] - floor)

            def after_transfer(delta: float, slack=slack, rest=rest) -> float:
                return max(evaluator(tight, eps[tight] + delta), evaluator(slack, eps[slack] - delta), rest)

            result = minimize_scalar(after_transfer, bounds=(0.0, room), method="bounded", options={"xatol": eps_bar * 1e-9})
            candidates = [(float(result.fun), float(result.x)), (after_transfer(room), room)]
            moved_value, delta = min(candidates, key=lambda pair: pair[0])
            if objective - moved_value >= IMPROVEMENT_TOLERANCE and (best_move is None or moved_value < best_move[0]):
                best_move = (moved_value, slack, delta)
        if best_move is None:
            break
        _, slack, delta = best_move
        eps[tight] += delta
        eps[slack] -= delta
        values = evaluator.values(eps)
        objective = float(values.max())
    logger.debug(f"Allocated eps {np.round(eps, 6).tolist()} after {sweeps} sweeps: {objective:.8g} vs uniform {uniform_objective:.8g}")
    return EpsilonAllocation(eps, objective, uniform_objective, sweeps, values)


def allocate_epsilons_grid(spec: JointConstraintSpec, x, resolution: int = 100) -> EpsilonAllocation:
    """Exhaustive search over a regular grid of the scaled simplex (J <= 3)."""
    x = np.asarray(x, dtype=float)
    J = spec.size
    if J > 3:
        raise InputError(f"Grid allocation supports at most 3 constraints, got {J}")
    evaluator = _Evaluator(spec, x)
    floor = spec.eps_bar * FLOOR_FRACTION
    uniform = np.full(J, spec.eps_bar / J)
    uniform_values = evaluator.values(uniform)
    best_eps, best_values = uniform, uniform_values
    for counts in itertools.product(range(resolution + 1), repeat=J - 1):
        if sum(counts) > resolution:
            continue
        shares = np.array(list(counts) + [resolution - sum(counts)], dtype=float) / resolution
        eps = np.maximum(shares * spec.eps_bar, floor)
        eps *= spec.eps_bar / eps.sum()
        values = evaluator.values(eps)
        if values.max() < best_values.max():
            best_eps, best_values = eps, values
    return EpsilonAllocation(best_eps, float(best_values.max()), float(uniform_values.max()), 0, best_values)

