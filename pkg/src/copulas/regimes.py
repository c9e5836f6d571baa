"""Dependence regimes: which per-coordinate risk level and α-split a box builder uses."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from src.bayes.credible import SplitRule, split_alpha
from src.copulas.copula import CopulaKind, CopulaSpec, diagonal_inverse
from src.errors import ConfigError, DomainError, HypothesisViolationError

logger = logging.getLogger(__name__)


class RegimeTag(Enum):
    INDEPENDENT = "independent"
    TAIL_POSITIVE = "tail_positive"
    CENTRAL_DOMAIN = "central_domain"
    NO_ASSUMPTION = "no_assumption"

    @classmethod
    def from_name(cls, name: str) -> "RegimeTag":
        try:
            return cls(name.strip().lower())
        except ValueError:
            known = ", ".join(tag.value for tag in cls)
            raise ConfigError(f"Unknown dependence regime '{name}'. Known regimes: {known}")


@dataclass(frozen=True, eq=False)
class DependenceRegime:
    """Dependence assumption behind a coordinate box.

    ``lower_copula`` and ``beta`` describe positive tail dependence C_Ξ >= C_l on [β, 1]^d.
    """

    tag: RegimeTag
    lower_copula: Optional[CopulaSpec] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.tag is RegimeTag.TAIL_POSITIVE:
            if self.lower_copula is None or self.beta is None:
                raise ConfigError("Tail-positive regime needs a lower-bound copula and beta")
            if not 0.0 <= self.beta <= 1.0:
                raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")

    @classmethod
    def independent(cls) -> "DependenceRegime":
        return cls(RegimeTag.INDEPENDENT)

    @classmethod
    def tail_positive(cls, lower_copula: CopulaSpec, beta: float) -> "DependenceRegime":
        return cls(RegimeTag.TAIL_POSITIVE, lower_copula, float(beta))

    @classmethod
    def central_domain(cls) -> "DependenceRegime":
        return cls(RegimeTag.CENTRAL_DOMAIN)

    @classmethod
    def no_assumption(cls) -> "DependenceRegime":
        return cls(RegimeTag.NO_ASSUMPTION)

    @property
    def uses_cvar(self) -> bool:
        return self.tag is RegimeTag.NO_ASSUMPTION

    def _has_blocks(self) -> bool:
        return self.lower_copula is not None and self.lower_copula.kind is CopulaKind.BLOCK_PRODUCT

    def split_rule(self) -> SplitRule:
        if self.tag is RegimeTag.INDEPENDENT:
            return SplitRule.INDEPENDENT_PRODUCT
        if self.tag is RegimeTag.TAIL_POSITIVE and self._has_blocks():
            return SplitRule.BLOCK_PRODUCT
        return SplitRule.BONFERRONI

    def marginal_alpha(self, alpha: float, d: int, coordinate: int = 0) -> float:
        """Credibility level of the marginal interval for ``coordinate`` (0-based)."""
        rule = self.split_rule()
        if rule is SplitRule.BLOCK_PRODUCT:
            block = self.lower_copula.block_of(coordinate)
            return split_alpha(alpha, d, rule, len(self.lower_copula.blocks), len(block))
        return split_alpha(alpha, d, rule)

    def per_coordinate_level(self, eps: float, d: int) -> float:
        """Risk level ε* applied to each coordinate of a d-dimensional box."""
        if not 0.0 < eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
        if self.tag is RegimeTag.INDEPENDENT:
            return split_alpha(eps, d, SplitRule.INDEPENDENT_PRODUCT)
        if self.tag is RegimeTag.NO_ASSUMPTION:
            return eps
        if self.tag is RegimeTag.CENTRAL_DOMAIN:
            return 1.0 - diagonal_inverse(CopulaSpec.lower_bound(d), 1.0 - eps)
        if self.lower_copula.dimension != d:
            raise ConfigError(f"Lower-bound copula has dimension {self.lower_copula.dimension}, expected {d}")
        if self.beta > 1.0 - eps:
            raise HypothesisViolationError(
                f"Tail dependence holds on [beta, 1]^d with beta={self.beta} > 1 - eps = {1.0 - eps}"
            )
        return 1.0 - diagonal_inverse(self.lower_copula, 1.0 - eps)
