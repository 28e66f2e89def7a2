"""
Linear-program contract: optimal primal plus exact duals.

Wraps ``scipy.optimize.linprog`` (HiGHS). Duals follow scipy's convention:
each marginal is the derivative of the optimal objective with respect to the
constraint's right-hand side, so ``<=`` rows have non-positive marginals.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from app.utils.errors import InfeasibleDispatchError, SolverError

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class LinearProgram:
    """min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  bounds."""
    c: np.ndarray
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: Optional[Sequence[tuple[Optional[float], Optional[float]]]] = None


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    objective: float
    eq_duals: np.ndarray
    ub_duals: np.ndarray
    degenerate: bool


def _marginals(block, size: int) -> np.ndarray:
    if block is None or size == 0:
        return np.zeros(size)
    return np.asarray(block.marginals, dtype=float)


def is_degenerate(lp: LinearProgram, x: np.ndarray, tol: float = DEGENERACY_TOL) -> bool:
    """
    Primal degeneracy test: more active constraints than variables.

    A degenerate vertex admits several optimal bases, so the duals reported
    for it need not be unique.
    """
    active = 0 if lp.a_eq is None else lp.a_eq.shape[0]
    if lp.a_ub is not None and lp.a_ub.shape[0]:
        slack = lp.b_ub - lp.a_ub @ x
        active += int(np.sum(np.abs(slack) <= tol * (1.0 + np.abs(lp.b_ub))))
    for value, (low, high) in zip(x, lp.bounds or [(0.0, None)] * len(x)):
        if low is not None and abs(value - low) <= tol * (1.0 + abs(low)):
            active += 1
        elif high is not None and abs(value - high) <= tol * (1.0 + abs(high)):
            active += 1
    return active > len(x)


def solve_lp(lp: LinearProgram, method: str = "highs", label: str = "lp") -> LpResult:
    """
    Solve ``lp`` and return primal values with constraint duals.

    Raises:
        InfeasibleDispatchError: the constraints cannot be met
        SolverError: unbounded problem or solver failure
    """
    result = linprog(
        c=lp.c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq,
        b_eq=lp.b_eq,
        bounds=lp.bounds if lp.bounds is not None else (0, None),
        method=method,
    )
    if result.status == 2:
        raise InfeasibleDispatchError(f"{label} infeasible: {result.message}")
    if result.status == 3:
        raise SolverError(f"{label} unbounded: {result.message}")
    if not result.success:
        raise SolverError(f"{label} failed (status {result.status}): {result.message}")

    n_eq = 0 if lp.a_eq is None else lp.a_eq.shape[0]
    n_ub = 0 if lp.a_ub is None else lp.a_ub.shape[0]
    x = np.asarray(result.x, dtype=float)
    return LpResult(
        x=x,
        objective=float(result.fun),
        eq_duals=_marginals(getattr(result, "eqlin", None), n_eq),
        ub_duals=_marginals(getattr(result, "ineqlin", None), n_ub),
        degenerate=is_degenerate(lp, x),
    )
