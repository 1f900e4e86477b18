"""l1-surrogate pre-processing that produces the Newton starting point.

Two convex solvers live here: FISTA with backtracking and adaptive restart
for ``smooth(x) + w*||x||_1``, and a dense primal-dual interior-point method
for linearly constrained convex QPs.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .apps import LogisticInstance, PortfolioInstance, QuadraticInstance, SensingInstance, logistic_oracles
from .kkt import SplitOrigin
from .model import SpoProblem

logger = logging.getLogger(__name__)


class PresolveError(ValueError):
    """The problem family has no l1 pre-processing; supply x0 yourself."""


class QpInfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class QpSpec:
    """``min 0.5 x'Qx + c'x`` s.t. ``A_eq x = b_eq``, ``A_in x <= b_in``, optionally ``x >= 0``."""

    Q: NDArray
    c: NDArray
    A_eq: NDArray | None = None
    b_eq: NDArray | None = None
    A_in: NDArray | None = None
    b_in: NDArray | None = None
    nonneg: bool = False

    def __post_init__(self):
        n = np.asarray(self.c).size
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (n, n):
            raise ValueError("Q and c have inconsistent sizes")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-10 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        for A, b in (("A_eq", "b_eq"), ("A_in", "b_in")):
            Av = np.zeros((0, n)) if getattr(self, A) is None else np.asarray(getattr(self, A), dtype=float).reshape(-1, n)
            bv = np.zeros(0) if getattr(self, b) is None else np.asarray(getattr(self, b), dtype=float).ravel()
            if Av.shape[0] != bv.size:
                raise ValueError(f"{A} and {b} have inconsistent sizes")
            object.__setattr__(self, A, Av)
            object.__setattr__(self, b, bv)

    @property
    def n(self) -> int:
        return self.c.size


class QpResult(NamedTuple):
    """Primal solution and multipliers.

    Sign convention: ``Qx + c - A_eq' eq_multipliers + A_in' in_multipliers
    - bound_multipliers = 0`` with ``in_multipliers, bound_multipliers >= 0``.
    """

    x: NDArray
    eq_multipliers: NDArray
    in_multipliers: NDArray
    bound_multipliers: NDArray
    iterations: int


@dataclass(frozen=True)
class CompositeSpec:
    """``smooth(x) + l1_weight * ||x||_1`` with ``smooth_oracle: x -> (value, gradient)``."""

    smooth_oracle: Callable[[NDArray], tuple[float, NDArray]]
    l1_weight: float
    lipschitz_hint: float | None = field(default=None)

    def __post_init__(self):
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")


def soft_threshold(v, t: float) -> NDArray:
    """Prox of ``t*||.||_1``: ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fista(spec: CompositeSpec, x_init, max_iter: int = 5000, tol: float = 1e-8) -> NDArray:
    """Accelerated proximal gradient with backtracking and function-value restart.

    Stops once the gradient mapping ``L*(x+ - z)`` has norm at most ``tol``.
    A step that would raise the objective is discarded and the momentum
    restarted, so the returned iterate is never worse than ``x_init``.
    """
    w = spec.l1_weight
    oracle = spec.smooth_oracle
    L = spec.lipschitz_hint if spec.lipschitz_hint else 1.0
    x = np.asarray(x_init, dtype=float).copy()
    fx, _ = oracle(x)
    F = fx + w * np.abs(x).sum()
    z, t = x.copy(), 1.0
    for it in range(max_iter):
        fz, gz = oracle(z)
        while True:
            x_new = soft_threshold(z - gz / L, w / L)
            diff = x_new - z
            f_new, _ = oracle(x_new)
            if f_new <= fz + gz @ diff + 0.5 * L * (diff @ diff) + 1e-12 * abs(fz):
                break
            L *= 2.0
        F_new = f_new + w * np.abs(x_new).sum()
        grad_map = L * np.linalg.norm(diff)
        if F_new > F and t > 1.0:
            z, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, F, t = x_new, min(F, F_new), t_new
        if grad_map <= tol:
            logger.debug("fista converged after %d iterations", it + 1)
            break
    return x


def qp_solve(spec: QpSpec, max_iter: int = 200, tol: float = 1e-9) -> QpResult:
    """Infeasible-start primal-dual path-following method (fixed centering 0.1).

    Inequalities (including ``x >= 0`` when requested) get slacks ``s > 0``;
    steps keep ``s`` and the duals positive with fraction-to-boundary 0.995.
    Raises :class:`QpInfeasibleError` when primal feasibility is not reached.
    """
    n = spec.n
    Q, c, A, b = spec.Q, spec.c, spec.A_eq, spec.b_eq
    G, hv = spec.A_in, spec.b_in
    m_in = G.shape[0]
    if spec.nonneg:
        G = np.vstack([G, -np.eye(n)])
        hv = np.concatenate([hv, np.zeros(n)])
    k, p = G.shape[0], A.shape[0]

    x = np.zeros(n)
    if p:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
    if spec.nonneg:
        x = np.maximum(x, 1.0 / max(n, 1))
    s = np.maximum(hv - G @ x, 1.0)
    zd = np.ones(k)
    y = np.zeros(p)
    sigma, tau = 0.1, 0.995
    scale = 1.0 + max(np.abs(c).max(initial=0.0), np.abs(b).max(initial=0.0), np.abs(hv).max(initial=0.0))

    for it in range(1, max_iter + 1):
        r_d = Q @ x + c - A.T @ y + G.T @ zd
        r_p = A @ x - b
        r_g = G @ x + s - hv
        mu = (s @ zd) / k if k else 0.0
        kkt = max(np.abs(r_d).max(initial=0.0), np.abs(r_p).max(initial=0.0),
                  np.abs(r_g).max(initial=0.0), np.abs(s * zd).max(initial=0.0))
        if kkt <= tol:
            break
        # runaway duals or vanishing slacks signal an infeasible problem
        if max(np.abs(x).max(initial=0.0), zd.max(initial=0.0)) > 1e12 * scale or np.any(s <= 0.0):
            break
        r_c = s * zd - sigma * mu
        W = zd / s
        K = np.zeros((n + p, n + p))
        K[:n, :n] = Q + (G.T * W) @ G
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = np.concatenate([-r_d - G.T @ ((-r_c + zd * r_g) / s), -r_p])
        try:
            with warnings.catch_warnings():
                # late interior-point systems are ill-conditioned by design
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                sol = scipy.linalg.solve(K, rhs, assume_a="sym", check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            break
        dx, dy = sol[:n], -sol[n:]
        ds = -r_g - G @ dx
        dz = (-r_c - zd * ds) / s
        alpha = 1.0
        for v, dv in ((s, ds), (zd, dz)):
            neg = dv < 0
            if np.any(neg):
                alpha = min(alpha, tau * float(np.min(-v[neg] / dv[neg])))
        x, y, s, zd = x + alpha * dx, y + alpha * dy, s + alpha * ds, zd + alpha * dz
    else:
        it = max_iter

    r_p = A @ x - b
    r_g = np.maximum(G @ x - hv, 0.0)
    infeas = max(np.abs(r_p).max(initial=0.0), r_g.max(initial=0.0))
    if not np.isfinite(infeas) or not np.all(np.isfinite(x)) or infeas > max(tol, 1e-8) * scale:
        raise QpInfeasibleError(f"primal infeasibility {infeas:.3e} after {it} iterations")
    return QpResult(x, y, zd[:m_in], zd[m_in:] if spec.nonneg else np.zeros(0), it)


# --------------------------------------------------------------------------- dispatch

def _split_qp(Q, c, rho, A_in, b_in, A_eq, b_eq) -> QpSpec:
    Qs = np.block([[Q, -Q], [-Q, Q]])
    cs = np.concatenate([c + rho, -c + rho])
    return QpSpec(Qs, cs, np.hstack([A_eq, -A_eq]), b_eq, np.hstack([A_in, -A_in]), b_in, nonneg=True)


def sensing_composite(inst: SensingInstance, rho: float) -> CompositeSpec:
    A, b = inst.A, inst.b

    def smooth(x):
        r = A @ x - b
        return 0.5 * float(r @ r), A.T @ r

    L = float(np.linalg.norm(A, 2) ** 2) if A.size else 1.0
    return CompositeSpec(smooth, rho, L)


def logistic_composite(inst: LogisticInstance, rho: float) -> CompositeSpec:
    oracle = logistic_oracles(inst)

    def smooth(w):
        v, g, _ = oracle(w)
        return v, g

    L = 0.25 * float(np.linalg.norm(inst.X, 2) ** 2) if inst.X.size else 1.0
    return CompositeSpec(smooth, rho, L)


def presolve_l1(problem: SpoProblem) -> NDArray:
    """Solve the l1-surrogate ``min f + rho*||x||_1`` over the feasible set.

    For the portfolio family ``||x||_1 = e'x = 1`` on the feasible set, so the
    plain Markowitz QP is solved instead.  Sensing instances go through the
    split QP so that ``Cx = d`` holds at the returned point.
    """
    src = problem.source
    rho = problem.rho
    if isinstance(src, SplitOrigin):
        return src.lift(presolve_l1(src.parent))
    if isinstance(src, PortfolioInstance):
        n = src.n
        spec = QpSpec(src.Q, np.zeros(n), np.ones((1, n)), np.ones(1),
                      -src.alpha[None, :], np.array([-src.beta]), nonneg=True)
        return qp_solve(spec).x
    if isinstance(src, SensingInstance):
        # split QP keeps Cx = d; FISTA on the unconstrained surrogate may return 0
        A = src.A
        u = qp_solve(_split_qp(A.T @ A, -(A.T @ src.b), rho, np.zeros((0, src.n)), np.zeros(0),
                               src.C, src.d)).x
        return u[:src.n] - u[src.n:]
    if isinstance(src, LogisticInstance):
        return fista(logistic_composite(src, rho), np.zeros(src.n))
    if isinstance(src, QuadraticInstance):
        n = src.n
        if src.nonneg:
            spec = QpSpec(src.Q, src.c + rho, src.A_eq, src.b_eq, src.A_in, src.b_in, nonneg=True)
            return qp_solve(spec).x
        u = qp_solve(_split_qp(src.Q, src.c, rho, src.A_in, src.b_in, src.A_eq, src.b_eq)).x
        return u[:n] - u[n:]
    raise PresolveError("no l1 pre-processing for this problem; supply x0 explicitly")
