"""Support-function queries, support clipping and set distances."""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from src.distributions.families import RandomLike, as_generator
from src.errors import InputError
from src.uncertainty_sets.base import UncertaintySet, check_direction, normalize_clip
from src.uncertainty_sets.box import CoordinateBox

logger = logging.getLogger(__name__)

HAUSDORFF_RANDOM_DIRECTIONS = 64


def support_function(uncertainty_set: UncertaintySet, v) -> float:
    """δ*(v | Ξ) = sup_{ξ ∈ Ξ} vᵀξ."""
    direction = check_direction(v, uncertainty_set.dimension)
    if not np.any(direction):
        return 0.0
    return uncertainty_set.support(direction)


def support_point(uncertainty_set: UncertaintySet, v) -> Tuple[float, np.ndarray]:
    direction = check_direction(v, uncertainty_set.dimension)
    return uncertainty_set.support_point(direction)


def clip_to_support(uncertainty_set: UncertaintySet, lower, upper) -> UncertaintySet:
    """Ξ ∩ Ξ₀ for an axis-aligned box Ξ₀ = [lower, upper] (None or ±inf for open sides).

    Raises:
        EmptySetError: the intersection is empty.
    """
    clip = normalize_clip(lower, upper, uncertainty_set.dimension)
    result = uncertainty_set.clipped(clip)
    if not isinstance(result, CoordinateBox):
        # Probes feasibility of the clipped polytope.
        result.support_point(np.zeros(result.dimension))
    return result


def unit_directions(dimension: int, n_random: int, rng: RandomLike) -> np.ndarray:
    """The ±axes followed by ``n_random`` uniformly random unit vectors."""
    axes = np.vstack([np.eye(dimension), -np.eye(dimension)])
    if n_random <= 0:
        return axes
    draws = as_generator(rng).standard_normal((n_random, dimension))
    draws /= np.linalg.norm(draws, axis=1, keepdims=True)
    return np.vstack([axes, draws])


def hausdorff_distance(
    first: UncertaintySet,
    second: UncertaintySet,
    directions: Optional[Sequence[Sequence[float]]] = None,
    rng: Optional[RandomLike] = None,
) -> float:
    """Hausdorff distance between two sets.

    Coordinate boxes use the exact closed form. Other sets use max_u |δ*(u|A) - δ*(u|B)|
    over unit directions u, which equals the distance when the directions are dense.
    """
    if first.dimension != second.dimension:
        raise InputError(f"Sets of dimension {first.dimension} and {second.dimension} cannot be compared")
    if isinstance(first, CoordinateBox) and isinstance(second, CoordinateBox) and directions is None:
        return box_hausdorff(first, second)
    if directions is None:
        directions = unit_directions(
            first.dimension, HAUSDORFF_RANDOM_DIRECTIONS, rng if rng is not None else np.random.default_rng(0)
        )
    gaps = [abs(support_function(first, u) - support_function(second, u)) for u in np.asarray(directions, dtype=float)]
    return float(max(gaps))


def box_hausdorff(first: CoordinateBox, second: CoordinateBox) -> float:
    """Exact Hausdorff distance between two axis-aligned boxes."""
    d_lower = second.lower - first.lower
    d_upper = second.upper - first.upper
    second_outside_first = np.maximum(np.maximum(-d_lower, d_upper), 0.0)
    first_outside_second = np.maximum(np.maximum(d_lower, -d_upper), 0.0)
    return float(max(np.linalg.norm(second_outside_first), np.linalg.norm(first_outside_second)))
