"""Dense two-phase revised simplex.

The problem is brought into standard form min c'y, A'y = b' >= 0, y >= 0 (bounds shifted,
free variables split, slacks and surpluses appended) and solved with an explicit basis
inverse kept current by eta updates and refactorized with an LU factorization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from src.errors import InputError, SolverError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-10
FEASIBILITY_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-8
REFACTOR_INTERVAL = 50


class Sense(Enum):
    LE = "<="
    EQ = "="
    GE = ">="

    @classmethod
    def from_symbol(cls, symbol: Union[str, "Sense"]) -> "Sense":
        if isinstance(symbol, Sense):
            return symbol
        aliases = {"<=": cls.LE, "le": cls.LE, "=": cls.EQ, "==": cls.EQ, "eq": cls.EQ, ">=": cls.GE, "ge": cls.GE}
        try:
            return aliases[symbol.strip().lower()]
        except KeyError:
            raise InputError(f"Unknown constraint sense '{symbol}'")


class Direction(Enum):
    MIN = "min"
    MAX = "max"


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Optimize cᵀx subject to A x (senses) b and lower <= x <= upper.

    Bounds default to x >= 0; use ``-np.inf``/``np.inf`` for open sides.
    """

    c: np.ndarray
    A: np.ndarray
    senses: Tuple[Sense, ...]
    b: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    direction: Direction = Direction.MIN

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)) if np.size(self.b) else np.zeros(0)
        senses = tuple(Sense.from_symbol(s) for s in self.senses)
        if A.shape[0] != b.size or len(senses) != b.size:
            raise InputError(f"Constraint data disagree: A {A.shape}, b {b.shape}, {len(senses)} senses")
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lower.shape != (n,) or upper.shape != (n,):
            raise InputError(f"Bounds must have shape ({n},)")
        if np.any(lower > upper):
            raise InputError("Every variable needs lower <= upper")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InputError("Objective and constraint data must be finite")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise InputError("Bounds cannot exclude every real value")
        direction = self.direction if isinstance(self.direction, Direction) else Direction(self.direction)
        for name, value in (("c", c), ("A", A), ("senses", senses), ("b", b), ("lower", lower),
                            ("upper", upper), ("direction", direction)):
            object.__setattr__(self, name, value)

    @property
    def n_variables(self) -> int:
        return self.c.size

    @property
    def n_constraints(self) -> int:
        return self.b.size


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    value: Optional[float] = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _StandardForm:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    offset: np.ndarray
    transform: np.ndarray
    row_sign: np.ndarray
    n_original_rows: int
    slack_of_row: List[Optional[int]] = field(default_factory=list)


def _standard_form(p: LinearProgram) -> _StandardForm:
    n = p.n_variables
    columns: List[np.ndarray] = []
    offset = np.zeros(n)
    bound_rows: List[Tuple[int, float]] = []
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        unit = np.zeros(n)
        if np.isfinite(lo):
            offset[j] = lo
            unit[j] = 1.0
            columns.append(unit)
            if np.isfinite(hi):
                bound_rows.append((len(columns) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            unit[j] = -1.0
            columns.append(unit)
        else:
            unit[j] = 1.0
            columns.append(unit)
            columns.append(-unit)
    transform = np.column_stack(columns) if columns else np.zeros((n, 0))
    n_structural = transform.shape[1]

    m = p.n_constraints
    rows = p.A @ transform
    rhs = p.b - p.A @ offset
    senses = list(p.senses)
    for column, width in bound_rows:
        row = np.zeros(n_structural)
        row[column] = 1.0
        rows = np.vstack([rows, row])
        rhs = np.append(rhs, width)
        senses.append(Sense.LE)

    total_rows = len(senses)
    n_slacks = sum(1 for s in senses if s is not Sense.EQ)
    A = np.zeros((total_rows, n_structural + n_slacks))
    A[:, :n_structural] = rows
    slack_of_row: List[Optional[int]] = []
    next_slack = n_structural
    for i, sense in enumerate(senses):
        if sense is Sense.EQ:
            slack_of_row.append(None)
            continue
        A[i, next_slack] = 1.0 if sense is Sense.LE else -1.0
        slack_of_row.append(next_slack)
        next_slack += 1

    row_sign = np.where(rhs < 0.0, -1.0, 1.0)
    A *= row_sign[:, None]
    rhs = rhs * row_sign

    sign = 1.0 if p.direction is Direction.MIN else -1.0
    c = np.zeros(A.shape[1])
    c[:n_structural] = sign * (transform.T @ p.c)
    return _StandardForm(A, rhs, c, offset, transform, row_sign, m, slack_of_row)


class _RevisedSimplex:
    """Basis bookkeeping shared by both phases."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: List[int]):
        self.A = A
        self.b = b
        self.basis = basis
        self.rows = list(range(A.shape[0]))
        self.iterations = 0
        self._since_refactor = 0
        self.refactor()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def refactor(self):
        if self.m == 0:
            self.B_inv = np.zeros((0, 0))
        else:
            self.B_inv = lu_solve(lu_factor(self.A[:, self.basis]), np.eye(self.m))
        self._since_refactor = 0

    def values(self) -> np.ndarray:
        return self.B_inv @ self.b

    def pivot(self, row: int, entering: int, column: np.ndarray):
        pivot = column[row]
        self.B_inv[row, :] /= pivot
        others = np.arange(self.m) != row
        self.B_inv[others, :] -= np.outer(column[others], self.B_inv[row, :])
        self.basis[row] = entering
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_INTERVAL:
            self.refactor()

    def run(self, cost: np.ndarray, eligible: np.ndarray, max_iterations: int) -> LpStatus:
        """Minimize cost over the current basis; returns OPTIMAL or UNBOUNDED."""
        n = self.A.shape[1]
        degenerate_limit = 10 * (self.m + n)
        degenerate_run = 0
        bland = False
        for _ in range(max_iterations):
            x_basic = np.clip(self.values(), 0.0, None)
            y = cost[self.basis] @ self.B_inv
            reduced = cost - y @ self.A
            reduced[self.basis] = 0.0
            candidates = np.flatnonzero(eligible & (reduced < -OPTIMALITY_TOLERANCE))
            if candidates.size == 0:
                return LpStatus.OPTIMAL
            entering = int(candidates[0]) if bland else int(candidates[np.argmin(reduced[candidates])])

            column = self.B_inv @ self.A[:, entering]
            rows = np.flatnonzero(column > PIVOT_TOLERANCE)
            if rows.size == 0:
                return LpStatus.UNBOUNDED
            ratios = x_basic[rows] / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12]
            if bland:
                row = int(min(tied, key=lambda i: self.basis[i]))
            else:
                row = int(tied[np.argmax(column[tied])])

            if best <= 1e-12:
                degenerate_run += 1
                if not bland and degenerate_run > degenerate_limit:
                    logger.debug(f"Switching to Bland's rule after {degenerate_run} degenerate pivots")
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(row, entering, column)
        raise SolverError(f"Simplex did not terminate within {max_iterations} pivots")

    def drop_row(self, row: int):
        keep = np.arange(self.m) != row
        self.A = self.A[keep]
        self.b = self.b[keep]
        del self.basis[row]
        del self.rows[row]
        self.refactor()


def _check_residuals(p: LinearProgram, x: np.ndarray):
    scale = 1.0 + np.abs(p.b) + np.abs(p.A).max(axis=1, initial=0.0) * max(1.0, np.abs(x).max(initial=0.0))
    activity = p.A @ x
    for i, sense in enumerate(p.senses):
        gap = activity[i] - p.b[i]
        violation = max(gap, 0.0) if sense is Sense.LE else (max(-gap, 0.0) if sense is Sense.GE else abs(gap))
        if violation > RESIDUAL_TOLERANCE * scale[i]:
            raise SolverError(f"Row {i} violated by {violation:.3e} after simplex termination")
    bound_scale = RESIDUAL_TOLERANCE * (1.0 + np.abs(x))
    if np.any(x < p.lower - bound_scale) or np.any(x > p.upper + bound_scale):
        raise SolverError("Variable bounds violated after simplex termination")


def _check_certificate(p: LinearProgram, x: np.ndarray, duals: np.ndarray):
    """Dual sign conditions, complementary slackness and the duality gap, in the minimization form."""
    sign = 1.0 if p.direction is Direction.MIN else -1.0
    c = sign * p.c
    y = sign * duals
    primal = float(c @ x)
    tolerance = RESIDUAL_TOLERANCE * (1.0 + abs(primal))

    # Rows: y <= 0 on <= rows, y >= 0 on >= rows, and y_i (A_i x - b_i) = 0.
    slack = p.A @ x - p.b
    le_rows = np.array([s is Sense.LE for s in p.senses], dtype=bool)
    ge_rows = np.array([s is Sense.GE for s in p.senses], dtype=bool)
    wrong_sign = np.where(le_rows, np.maximum(y, 0.0), 0.0) + np.where(ge_rows, np.maximum(-y, 0.0), 0.0)
    products = [np.abs(y * slack), wrong_sign]

    # Variables: the positive part of the reduced cost prices the lower bound, the negative part the upper.
    reduced = c - p.A.T @ y
    at_lower = np.maximum(reduced, 0.0)
    at_upper = np.maximum(-reduced, 0.0)
    finite_lower = np.isfinite(p.lower)
    finite_upper = np.isfinite(p.upper)
    products.append(np.where(finite_lower, at_lower * np.abs(x - np.where(finite_lower, p.lower, 0.0)), at_lower))
    products.append(np.where(finite_upper, at_upper * np.abs(np.where(finite_upper, p.upper, 0.0) - x), at_upper))
    complementarity = max((float(v.max(initial=0.0)) for v in products), default=0.0)
    if complementarity > tolerance:
        raise SolverError(f"Complementary slackness violated by {complementarity:.3e} after simplex termination")

    dual = float(
        p.b @ y
        + np.where(finite_lower, np.where(finite_lower, p.lower, 0.0) * at_lower, 0.0).sum()
        - np.where(finite_upper, np.where(finite_upper, p.upper, 0.0) * at_upper, 0.0).sum()
    )
    gap = abs(primal - dual)
    if gap > tolerance:
        raise SolverError(f"Duality gap {gap:.3e} exceeds {tolerance:.3e} after simplex termination")


def solve_lp(p: LinearProgram, max_iterations: Optional[int] = None) -> LpSolution:
    """Solve a dense LP.

    Returns:
        LpSolution with status, primal x, row duals (shadow prices ∂value/∂b_i in the
        problem's own direction) and the objective value.
    """
    form = _standard_form(p)
    m, n = form.A.shape
    budget = max_iterations or 50 * (m + n) + 1000

    # Phase 1: a slack with coefficient +1 can start in the basis, other rows get artificials.
    basis: List[int] = []
    artificial_columns: List[np.ndarray] = []
    for i in range(m):
        slack = form.slack_of_row[i]
        if slack is not None and form.A[i, slack] > 0.0:
            basis.append(slack)
        else:
            unit = np.zeros(m)
            unit[i] = 1.0
            artificial_columns.append(unit)
            basis.append(n + len(artificial_columns) - 1)
    n_artificial = len(artificial_columns)
    A_full = np.hstack([form.A, np.column_stack(artificial_columns)]) if n_artificial else form.A.copy()
    is_artificial = np.zeros(n + n_artificial, dtype=bool)
    is_artificial[n:] = True

    simplex = _RevisedSimplex(A_full, form.b.copy(), basis)
    if n_artificial:
        phase_one_cost = is_artificial.astype(float)
        simplex.run(phase_one_cost, np.ones(n + n_artificial, dtype=bool), budget)
        infeasibility = float(phase_one_cost[simplex.basis] @ simplex.values())
        if infeasibility > FEASIBILITY_TOLERANCE * max(1.0, np.abs(form.b).max(initial=0.0)):
            logger.debug(f"Phase 1 ended with infeasibility {infeasibility:.3e}")
            return LpSolution(LpStatus.INFEASIBLE, iterations=simplex.iterations)
        _drive_out_artificials(simplex, is_artificial)

    cost = np.concatenate([form.c, np.zeros(n_artificial)])
    status = simplex.run(cost, ~is_artificial, budget)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, iterations=simplex.iterations)

    y_std = np.zeros(n + n_artificial)
    y_std[simplex.basis] = np.clip(simplex.values(), 0.0, None)
    x = form.offset + form.transform @ y_std[: form.transform.shape[1]]
    _check_residuals(p, x)

    row_prices = np.zeros(m)
    row_prices[simplex.rows] = cost[simplex.basis] @ simplex.B_inv
    sign = 1.0 if p.direction is Direction.MIN else -1.0
    duals = sign * (form.row_sign * row_prices)[: form.n_original_rows]
    value = float(p.c @ x)
    _check_certificate(p, x, duals)
    logger.debug(f"LP solved: value={value:.10g} after {simplex.iterations} pivots")
    return LpSolution(LpStatus.OPTIMAL, x, duals, value, simplex.iterations)


def _drive_out_artificials(simplex: _RevisedSimplex, is_artificial: np.ndarray):
    """Pivot zero-level artificials out of the basis; rows where that is impossible are redundant."""
    row = 0
    while row < simplex.m:
        if not is_artificial[simplex.basis[row]]:
            row += 1
            continue
        tableau_row = simplex.B_inv[row, :] @ simplex.A
        options = np.flatnonzero(~is_artificial & (np.abs(tableau_row) > PIVOT_TOLERANCE))
        options = [j for j in options if j not in simplex.basis]
        if options:
            entering = int(options[0])
            simplex.pivot(row, entering, simplex.B_inv @ simplex.A[:, entering])
            row += 1
        else:
            logger.debug(f"Removing redundant constraint row {simplex.rows[row]}")
            simplex.drop_row(row)


def linear_program(
    c: Sequence[float],
    A: Sequence[Sequence[float]],
    senses: Sequence[Union[str, Sense]],
    b: Sequence[float],
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None,
    maximize: bool = False,
) -> LinearProgram:
    """Convenience constructor taking scipy-style ``(lo, hi)`` bounds with ``None`` for open sides."""
    n = len(c)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    if bounds is not None:
        lower = np.array([-np.inf if lo is None else lo for lo, _ in bounds], dtype=float)
        upper = np.array([np.inf if hi is None else hi for _, hi in bounds], dtype=float)
    return LinearProgram(
        np.asarray(c, dtype=float),
        np.asarray(A, dtype=float),
        tuple(senses),
        np.asarray(b, dtype=float),
        lower,
        upper,
        Direction.MAX if maximize else Direction.MIN,
    )
