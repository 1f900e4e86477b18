"""Local nonsmooth Lagrange-Newton driver."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .kkt import (
    FB,
    OperatorKind,
    pack,
    recover_multipliers,
    residual_and_jacobian,
    s_stationarity_blocks,
    unpack,
)
from .model import (
    DEFAULT_DELTA,
    PrimalDualPoint,
    SolveReport,
    SpoProblem,
    Status,
    eval_spo_objective,
    l0_norm,
)
from .ncp import NcpKind

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when an LU pivot falls below the relative tolerance."""


@dataclass(frozen=True)
class NewtonOptions:
    kind: OperatorKind = OperatorKind.FULL
    max_iter: int = 100
    eps: float = 1e-6
    delta: float = DEFAULT_DELTA
    step_safety: float = 100.0
    ncp: NcpKind = FB
    pivot_tol: float = 0.0
    step_norm: str = "primal"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.eps < 0 or self.delta < 0:
            raise ValueError("eps and delta must be nonnegative")
        if not self.step_safety > 0:
            raise ValueError("step_safety must be positive")
        if self.pivot_tol < 0:
            raise ValueError("pivot_tol must be nonnegative")
        if self.step_norm not in ("full", "primal"):
            raise ValueError("step_norm must be 'full' or 'primal'")


def default_init(problem: SpoProblem, x0) -> PrimalDualPoint:
    """``(x0, e, 0, 0, 0)``: every component starts out marked as zero."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.n,):
        raise ValueError(f"x0 must have shape ({problem.n},)")
    n, m, p = problem.n, problem.m, problem.p
    return PrimalDualPoint(x0.copy(), np.ones(n), np.zeros(m), np.zeros(p), np.zeros(n))


def linear_solve(matrix, rhs, pivot_tol: float = PIVOT_TOL) -> NDArray:
    """Dense LU solve with partial pivoting.

    Raises ``SingularSystemError`` when a pivot is smaller than
    ``pivot_tol * max|entry|`` (with ``pivot_tol = 0``: an exactly zero
    pivot) or when the solution is not finite.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("linear_solve needs a square matrix")
    if A.shape[0] == 0:
        return np.zeros(0)
    scale = np.abs(A).max()
    if not np.isfinite(scale):
        raise SingularSystemError("matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() <= pivot_tol * scale:
        raise SingularSystemError("matrix is numerically singular")
    sol = scipy.linalg.lu_solve((lu, piv), np.asarray(rhs, dtype=float), check_finite=False)
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("solution is not finite")
    return sol


def _step_norm(problem: SpoProblem, d: NDArray, kind: OperatorKind, which: str) -> float:
    if which == "full":
        return float(np.linalg.norm(d))
    k = problem.n if kind is OperatorKind.REDUCED else 2 * problem.n
    return float(np.linalg.norm(d[:k]))


def solve(
    problem: SpoProblem,
    x0,
    options: NewtonOptions | None = None,
    init: PrimalDualPoint | None = None,
    callback: Callable[[int, PrimalDualPoint], None] | None = None,
) -> SolveReport:
    """Run the nonsmooth Newton iteration ``z+ = z - H^{-1} T(z)`` from ``x0``.

    Terminates on the S-stationarity residual, never on ``||T(z)||``.  The
    step safeguard bounds the primal part ``(x, y)`` of the Newton step
    (``x`` alone for the reduced operator).  Pass ``init`` to start from a
    point other than :func:`default_init`.  ``callback(k, point)`` sees
    every iterate, the start included.
    """
    opts = options or NewtonOptions()
    kind = opts.kind
    point = init.copy() if init is not None else default_init(problem, x0)
    point.sigma = None
    if kind is OperatorKind.REDUCED:
        point.y = 1.0 - point.gamma * point.x / problem.rho
    if kind is OperatorKind.COMPLEMENTARY and not problem.nonneg:
        raise ValueError("the complementary operator needs x >= 0; split the variables first")
    point.check(problem)

    def stationarity(pt, ev=None):
        return float(np.linalg.norm(
            s_stationarity_blocks(problem, pt.x, pt.lam, pt.mu, opts.delta, opts.ncp, ev)))

    if callback is not None:
        callback(0, point.copy())
    history = [stationarity(point)]
    status = Status.MAX_ITERATIONS
    iterations = 0
    if history[0] <= opts.eps:
        status = Status.CONVERGED
    else:
        v = pack(point, kind)
        for _ in range(opts.max_iter):
            r, H, _ = residual_and_jacobian(problem, point, kind, opts.ncp)
            try:
                d = linear_solve(H, -r, opts.pivot_tol)
            except SingularSystemError:
                status = Status.LINEAR_SOLVE_FAILURE
                break
            if _step_norm(problem, d, kind, opts.step_norm) > opts.step_safety:
                status = Status.STEP_BLOWUP
                break
            v = v + d
            point = unpack(problem, v, kind)
            iterations += 1
            if callback is not None:
                callback(iterations, point.copy())
            history.append(stationarity(point))
            if history[-1] <= opts.eps:
                status = Status.CONVERGED
                break
    logger.debug("newton %s: %s after %d iterations, res=%.3e",
                 kind.value, status.value, iterations, history[-1])
    return SolveReport(
        status=status,
        iterations=iterations,
        residual_history=history,
        final_point=point,
        objective=eval_spo_objective(problem, point.x, opts.delta),
        l0_count=l0_norm(point.x, opts.delta),
        multipliers=recover_multipliers(problem, point.x, point.lam, point.mu, opts.delta),
    )
