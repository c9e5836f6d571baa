"""Coordinate boxes: per-coordinate worst-case VaR/CVaR over marginal credible intervals."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.bayes.credible import MarginalInterval
from src.copulas.regimes import DependenceRegime, RegimeTag
from src.distributions import risk
from src.distributions.families import FamilyKind, ParametricFamily
from src.errors import DomainError, EmptySetError, InputError
from src.uncertainty_sets.base import (
    MEMBERSHIP_TOLERANCE,
    ClipBox,
    SetKind,
    Tail,
    UncertaintySet,
    check_direction,
    intersect_clips,
    normalize_clip,
)

logger = logging.getLogger(__name__)

GRID_POINTS = 101
JUMP_OFFSET = 1e-9

RiskFunctional = Callable[[ParametricFamily, float], float]


@dataclass(frozen=True, eq=False)
class CoordinateBox(UncertaintySet):
    """Π_i [lower_i, upper_i], tagged with the regime and the per-coordinate risk levels."""

    lower: np.ndarray
    upper: np.ndarray
    regime: RegimeTag
    levels: np.ndarray
    tail: Tail = Tail.UPPER
    uses_cvar: bool = False
    clip: Optional[ClipBox] = None

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InputError(f"Box endpoints disagree: {lower.shape} vs {upper.shape}")
        if np.any(lower > upper):
            raise EmptySetError(f"Box has an empty coordinate: {lower.tolist()} / {upper.tolist()}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "levels", np.broadcast_to(np.asarray(self.levels, dtype=float), lower.shape).copy())

    @property
    def kind(self) -> SetKind:
        return SetKind.COORDINATE_BOX

    @property
    def dimension(self) -> int:
        return self.lower.size

    def support(self, v: np.ndarray) -> float:
        v = check_direction(v, self.dimension)
        return float(np.maximum(v * self.lower, v * self.upper).sum())

    def support_point(self, v: np.ndarray) -> Tuple[float, np.ndarray]:
        v = check_direction(v, self.dimension)
        point = np.where(v > 0.0, self.upper, self.lower)
        return float(v @ point), point

    def contains(self, xi, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        xi = check_direction(xi, self.dimension)
        return bool(np.all(xi >= self.lower - tolerance) and np.all(xi <= self.upper + tolerance))

    def clipped(self, clip: ClipBox) -> "CoordinateBox":
        lo = np.maximum(self.lower, clip[0])
        hi = np.minimum(self.upper, clip[1])
        if np.any(lo > hi):
            raise EmptySetError("Clip box does not intersect the coordinate box")
        return CoordinateBox(
            lo, hi, self.regime, self.levels, self.tail, self.uses_cvar, intersect_clips(self.clip, clip)
        )

    def rows(self) -> List[Dict[str, Any]]:
        """Interval endpoints per coordinate (1-based), for CSV export."""
        return [
            {"coordinate": i + 1, "lower": float(lo), "upper": float(hi), "level": float(level)}
            for i, (lo, hi, level) in enumerate(zip(self.lower, self.upper, self.levels))
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "regime": self.regime.value,
            "tail": self.tail.value,
            "functional": "cvar" if self.uses_cvar else "var",
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "levels": self.levels.tolist(),
        }


def risk_functional(uses_cvar: bool, tail: Tail) -> RiskFunctional:
    if tail is Tail.UPPER:
        return risk.cvar if uses_cvar else risk.var
    return risk.lower_cvar if uses_cvar else risk.lower_var


def _axis(marginal: MarginalInterval, k: int, level: float) -> np.ndarray:
    lo, hi = float(marginal.lower[k]), float(marginal.upper[k])
    points = [np.linspace(lo, hi, GRID_POINTS)]
    if marginal.kind is FamilyKind.TWO_POINT_ASSET:
        # The risk of a two-point asset jumps where θ crosses the level (upper tail) or 1 - level (lower tail).
        critical = []
        for jump in (level, 1.0 - level):
            critical.extend([jump - JUMP_OFFSET, jump, jump + JUMP_OFFSET])
        points.append(np.array([c for c in critical if lo <= c <= hi]))
    return np.unique(np.concatenate(points))


def risk_range(marginal: MarginalInterval, functional: RiskFunctional, level: float) -> Tuple[float, float]:
    """(min, max) of functional(P_θ, level) over the marginal's credible box.

    Dense grid over each free parameter, then a bounded scalar refinement along each axis
    around the best grid cell.
    """

    def value(point: Sequence[float]) -> float:
        return functional(marginal.family_at(point), level)

    if np.all(marginal.lower == marginal.upper):
        v = value(marginal.lower)
        return v, v

    axes = [_axis(marginal, k, level) for k in range(len(marginal.free_names))]
    grid = [np.array(point) for point in itertools.product(*axes)]
    values = np.array([value(point) for point in grid])
    low_value, high_value = float(values.min()), float(values.max())

    for sign, index in ((1.0, int(values.argmin())), (-1.0, int(values.argmax()))):
        best = grid[index].copy()
        for k, axis in enumerate(axes):
            if axis.size < 2:
                continue
            position = int(np.searchsorted(axis, best[k]))
            left = axis[max(position - 1, 0)]
            right = axis[min(position + 1, axis.size - 1)]
            if right <= left:
                continue

            def along(t: float, k=k, best=best) -> float:
                point = best.copy()
                point[k] = t
                return sign * value(point)

            result = minimize_scalar(along, bounds=(left, right), method="bounded", options={"xatol": 1e-10})
            refined = sign * float(result.fun)
            low_value = min(low_value, refined)
            high_value = max(high_value, refined)
    return low_value, high_value


def build_coordinate_box(
    regime: DependenceRegime,
    marginals: Sequence[MarginalInterval],
    eps: float,
    tail: Tail = Tail.UPPER,
    levels: Optional[Sequence[float]] = None,
    clip: Optional[ClipBox] = None,
) -> CoordinateBox:
    """Build Ξ = Π_i [min_θ ρ_i(θ), max_θ ρ_i(θ)] for the regime's risk functional ρ.

    Args:
        regime: Dependence regime; fixes the functional (VaR or CVaR) and the default level ε*.
        marginals: One credible interval per coordinate, built with the regime's α-split.
        eps: Joint risk level ε in (0, 1).
        tail: UPPER guards VaR_ε(ξ_i); LOWER guards the left tail (return maximization).
        levels: Explicit per-coordinate levels overriding the regime default.
        clip: Optional support box Ξ₀ (lower, upper).
    """
    d = len(marginals)
    if d == 0:
        raise InputError("A coordinate box needs at least one marginal")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if levels is None:
        per_coordinate = np.full(d, regime.per_coordinate_level(eps, d))
    else:
        if regime.tag is RegimeTag.TAIL_POSITIVE:
            regime.per_coordinate_level(eps, d)
        per_coordinate = np.asarray(levels, dtype=float)
        if per_coordinate.shape != (d,):
            raise InputError(f"Expected {d} per-coordinate levels, got shape {per_coordinate.shape}")
        if np.any(per_coordinate <= 0.0) or np.any(per_coordinate >= 1.0):
            raise DomainError(f"Per-coordinate levels must lie in (0, 1), got {per_coordinate.tolist()}")

    functional = risk_functional(regime.uses_cvar, tail)
    lower = np.empty(d)
    upper = np.empty(d)
    for i, (marginal, level) in enumerate(zip(marginals, per_coordinate)):
        lower[i], upper[i] = risk_range(marginal, functional, float(level))

    box = CoordinateBox(lower, upper, regime.tag, per_coordinate, tail, regime.uses_cvar)
    if clip is not None:
        box = box.clipped(normalize_clip(clip[0], clip[1], d))
    logger.debug(
        f"Built {regime.tag.value} box ({tail.value} tail) in d={d} at level "
        f"{per_coordinate.min():.6g}..{per_coordinate.max():.6g}"
    )
    return box


def box_from_intervals(intervals: Sequence[Tuple[float, float]], regime: RegimeTag = RegimeTag.NO_ASSUMPTION) -> CoordinateBox:
    """Coordinate box from explicit endpoint pairs (fixtures, CLI input)."""
    pairs = np.asarray(intervals, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or not np.all(np.isfinite(pairs)):
        raise InputError("Intervals must be finite (lower, upper) pairs")
    return CoordinateBox(pairs[:, 0], pairs[:, 1], regime, np.full(pairs.shape[0], math.nan))
