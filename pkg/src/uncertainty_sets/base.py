"""Common interface of the uncertainty sets built from credible regions."""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import EmptySetError, InputError

logger = logging.getLogger(__name__)

MEMBERSHIP_TOLERANCE = 1e-9


class Tail(Enum):
    """Which tail of each coordinate the set guards: UPPER bounds VaR_ε(ξ_i), LOWER bounds -VaR_ε(-ξ_i)."""

    UPPER = "upper"
    LOWER = "lower"

    @classmethod
    def from_name(cls, name: str) -> "Tail":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InputError(f"Unknown tail '{name}', expected 'upper' or 'lower'")


class SetKind(Enum):
    DISCRETE_POLYTOPE = "discrete_polytope"
    COORDINATE_BOX = "coordinate_box"


ClipBox = Tuple[np.ndarray, np.ndarray]


def check_direction(v, dimension: int) -> np.ndarray:
    direction = np.atleast_1d(np.asarray(v, dtype=float))
    if direction.shape != (dimension,):
        raise InputError(f"Direction of shape {direction.shape} for a {dimension}-dimensional set")
    if not np.all(np.isfinite(direction)):
        raise InputError("Direction must have finite components")
    return direction


def normalize_clip(lower, upper, dimension: int) -> ClipBox:
    """Clip box Ξ₀ as two float arrays, ±inf for open sides."""
    lo = np.full(dimension, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (dimension,)).copy()
    hi = np.full(dimension, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (dimension,)).copy()
    if np.any(lo > hi):
        raise EmptySetError(f"Clip box is empty: lower {lo.tolist()} exceeds upper {hi.tolist()}")
    return lo, hi


def intersect_clips(first: Optional[ClipBox], second: ClipBox) -> ClipBox:
    if first is None:
        return second
    lo = np.maximum(first[0], second[0])
    hi = np.minimum(first[1], second[1])
    if np.any(lo > hi):
        raise EmptySetError("Clip boxes do not intersect")
    return lo, hi


class UncertaintySet(ABC):
    """A nonempty compact convex set of realizations with a computable support function."""

    clip: Optional[ClipBox]

    @property
    @abstractmethod
    def kind(self) -> SetKind:
        ...

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def support(self, v: np.ndarray) -> float:
        """δ*(v | Ξ) for a validated direction."""

    @abstractmethod
    def support_point(self, v: np.ndarray) -> Tuple[float, np.ndarray]:
        """A member ξ* attaining (or, for ellipsoid regions, approximating from inside) δ*(v | Ξ)."""

    @abstractmethod
    def contains(self, xi, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        ...

    @abstractmethod
    def clipped(self, clip: ClipBox) -> "UncertaintySet":
        ...

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        ...
