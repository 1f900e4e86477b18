"""Constraint qualifications, second-order checks, BD-regularity and a
brute-force oracle over support patterns.

These are verification instruments for small instances; none of them is
used inside the Newton driver.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .kkt import FB, OperatorKind, _check, _jacobian_from_values, _residual_from_values
from .model import (
    DEFAULT_ACTIVE_TOL,
    DEFAULT_DELTA,
    PrimalDualPoint,
    SpoProblem,
    eval_spo_objective,
    lagrangian_from_values,
    support_mask,
)
from .kkt import s_stationarity_residual
from .ncp import DEFAULT_DEGENERATE_TOL, BsubRow, NcpKind, constraint_bsub, ncp_bsub

RANK_RTOL = 1e-10
BD_SIGMA_TOL = 1e-10
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class CqReport:
    holds: bool
    gradient_matrix_rank: int
    needed_rank: int
    smallest_singular_value: float


def _rank_report(rows: NDArray) -> CqReport:
    k = rows.shape[0]
    if k == 0:
        return CqReport(True, 0, 0, float("inf"))
    sv = np.linalg.svd(rows, compute_uv=False)
    cutoff = RANK_RTOL * sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > cutoff)) if sv[0] > 0 else 0
    smallest = float(sv[k - 1]) if k <= sv.size else 0.0
    return CqReport(rank == k, rank, k, smallest)


def _active_g(problem: SpoProblem, g: NDArray, active_tol: float) -> NDArray:
    return g >= -active_tol


def sp_licq_rows(problem: SpoProblem, x, delta: float = DEFAULT_DELTA,
                 active_tol: float = DEFAULT_ACTIVE_TOL) -> NDArray:
    """Rows ``grad g_i`` (active), ``grad h_i`` and ``e_i`` (``i`` in ``I_0``).

    For problems with structural ``x >= 0`` the active bounds ``-e_i`` are
    included as inequality gradients.
    """
    x = np.asarray(x, dtype=float)
    ev = problem.evaluate(x)
    n = problem.n
    zero = ~support_mask(x, delta)
    rows = [ev.jac_g[_active_g(problem, ev.g, active_tol)], ev.jac_h]
    if problem.nonneg:
        rows.append(-np.eye(n)[x <= active_tol])
    rows.append(np.eye(n)[zero])
    return np.vstack(rows)


def check_sp_licq(problem: SpoProblem, x, delta: float = DEFAULT_DELTA,
                  active_tol: float = DEFAULT_ACTIVE_TOL) -> CqReport:
    """SP-LICQ: the active constraint gradients and the unit vectors on the
    zero set are linearly independent (SVD rank, cutoff ``1e-10*sigma_max``)."""
    return _rank_report(sp_licq_rows(problem, x, delta, active_tol))


def check_licq_equivalence(problem: SpoProblem, point: PrimalDualPoint, delta: float = DEFAULT_DELTA,
                           active_tol: float = DEFAULT_ACTIVE_TOL) -> tuple[bool, bool, bool]:
    """``(sp_licq, licq_sq, licq_lin)`` at ``point``.

    Standard LICQ is evaluated in the ``(x, y)`` space for both smooth
    reformulations; the linear-penalty one adds the active bounds ``y <= e``.
    Raises ``ValueError`` when some index has ``x_i = y_i = 0``.
    """
    x, y = np.asarray(point.x, dtype=float), np.asarray(point.y, dtype=float)
    n = problem.n
    zero_x = ~support_mask(x, delta)
    zero_y = ~support_mask(y, delta)
    if np.any(zero_x & zero_y):
        raise ValueError("bi-active set is nonempty")
    sp = check_sp_licq(problem, x, delta, active_tol).holds

    ev = problem.evaluate(x)
    Z = np.zeros
    g_rows = ev.jac_g[_active_g(problem, ev.g, active_tol)]
    blocks = [np.hstack([g_rows, Z((g_rows.shape[0], n))]),
              np.hstack([ev.jac_h, Z((problem.p, n))])]
    if problem.nonneg:
        b = -np.eye(n)[x <= active_tol]
        blocks.append(np.hstack([b, Z(b.shape)]))
    blocks.append(np.hstack([np.diag(y), np.diag(x)]))
    sq_rows = np.vstack(blocks)
    lin_extra = np.hstack([Z((n, n)), np.eye(n)])[np.abs(y - 1.0) <= active_tol]
    sq = _rank_report(sq_rows).holds
    lin = _rank_report(np.vstack([sq_rows, lin_extra])).holds
    return sp, sq, lin


def _critical_rows(problem: SpoProblem, x, lam, delta: float, active_tol: float):
    """Equality rows of the critical subspace and the weakly active rows."""
    ev = problem.evaluate(x)
    lam = np.asarray(lam, dtype=float)
    active = _active_g(problem, ev.g, active_tol)
    strong = active & (lam > active_tol)
    weak = active & ~strong
    zero = ~support_mask(x, delta)
    eq = np.vstack([ev.jac_g[strong], ev.jac_h, np.eye(problem.n)[zero]])
    return ev, eq, ev.jac_g[weak]


def _null_basis(rows: NDArray, n: int) -> NDArray:
    if rows.shape[0] == 0:
        return np.eye(n)
    return scipy.linalg.null_space(rows, rcond=RANK_RTOL)


def check_strong_sp_sosc(problem: SpoProblem, x, lam, mu, delta: float = DEFAULT_DELTA,
                         active_tol: float = DEFAULT_ACTIVE_TOL) -> tuple[bool, float]:
    """Positive definiteness of the Lagrangian Hessian on the critical subspace.

    Returns ``(holds, min_eig)``; ``min_eig`` is ``+inf`` when the subspace is
    trivial.
    """
    x = np.asarray(x, dtype=float)
    ev, eq, _ = _critical_rows(problem, x, lam, delta, active_tol)
    _, _, hess = lagrangian_from_values(ev, lam, mu)
    B = _null_basis(eq, problem.n)
    if B.shape[1] == 0:
        return True, float("inf")
    min_eig = float(np.linalg.eigvalsh(B.T @ hess @ B)[0])
    return min_eig > 0.0, min_eig


def check_second_order_necessary(problem: SpoProblem, x, lam, mu, delta: float = DEFAULT_DELTA,
                                 n_samples: int = 1000, seed: int = 0,
                                 active_tol: float = DEFAULT_ACTIVE_TOL) -> bool:
    """Sampled test of ``d'Hd >= 0`` on the critical cone.

    Directions are random vectors projected onto the equality part of the cone
    (each tried with both signs) and kept when the weakly active inequality
    rows are satisfied.  ``False`` as soon as one kept direction has
    ``d'Hd < -1e-10*||d||^2``.
    """
    x = np.asarray(x, dtype=float)
    ev, eq, weak = _critical_rows(problem, x, lam, delta, active_tol)
    _, _, hess = lagrangian_from_values(ev, lam, mu)
    B = _null_basis(eq, problem.n)
    if B.shape[1] == 0:
        return True
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        d = B @ rng.standard_normal(B.shape[1])
        for cand in (d, -d):
            nd = cand @ cand
            if nd == 0 or np.any(weak @ cand > 1e-12 * np.sqrt(nd)):
                continue
            if cand @ hess @ cand < -1e-10 * nd:
                return False
            break
    return True


# --------------------------------------------------------------------------- BD-regularity

@dataclass(frozen=True)
class BdReport:
    regular: bool
    min_sigma: float
    elements: int
    partial: bool

    def __iter__(self):
        # allows ``regular, min_sigma = check_bd_regularity(...)``
        return iter((self.regular, self.min_sigma))


def _pair_choices(kind: NcpKind) -> list[tuple[float, float]]:
    if kind is NcpKind.MINIMUM:
        return [(1.0, 0.0), (0.0, 1.0)]
    # e-direction limit, then the limits along the two axes
    return [(-_INV_SQRT2 - 1.0, -_INV_SQRT2 - 1.0), (0.0, -1.0), (-1.0, 0.0)]


def check_bd_regularity(problem: SpoProblem, point: PrimalDualPoint,
                        kind: OperatorKind = OperatorKind.FULL, ncp: NcpKind = FB,
                        enumerate_cap: int = 512, tol: float = 1e-8,
                        zero_tol: float = 1e-6) -> BdReport:
    """Smallest singular value over enumerated B-subdifferential elements.

    Every NCP row whose two arguments both vanish (within ``tol``) is
    branched over the limit selections of the chosen NCP function; all other
    rows are differentiable.  For Fischer-Burmeister the constraint rows also
    try the limit along ``(x - t*e, lam - t)``.  Stops after
    ``enumerate_cap`` elements and flags the result as partial.
    """
    _check(problem, point, kind)
    ev = problem.evaluate(point.x)
    r = _residual_from_values(problem, ev, point, kind, ncp)
    if np.linalg.norm(r) > zero_tol:
        raise ValueError(f"point is not a zero of the operator (residual {np.linalg.norm(r):.2e})")

    g_rows0 = constraint_bsub(ncp, ev.g, ev.jac_g, point.lam, DEFAULT_DEGENERATE_TOL)
    deg_g = np.flatnonzero((np.abs(ev.g) <= tol) & (np.abs(point.lam) <= tol))
    choices = _pair_choices(ncp)
    g_options = []
    for j in deg_g:
        opts = []
        for da, db in choices:
            opts.append((-da * ev.jac_g[j], db))
        if ncp is NcpKind.FISCHER_BURMEISTER:
            # constraint-specific e-direction limit replaces the plain one
            opts[0] = (g_rows0[0][j].copy(), float(g_rows0[1][j]))
        g_options.append(opts)

    xy0 = None
    deg_xy = np.zeros(0, dtype=int)
    if kind is OperatorKind.COMPLEMENTARY:
        xy0 = ncp_bsub(ncp, point.x, point.y, DEFAULT_DEGENERATE_TOL)
        deg_xy = np.flatnonzero((np.abs(point.x) <= tol) & (np.abs(point.y) <= tol))

    branches = [range(len(o)) for o in g_options] + [range(len(choices))] * deg_xy.size
    min_sigma = float("inf")
    count = 0
    partial = False
    for combo in itertools.product(*branches):
        if count >= enumerate_cap:
            partial = True
            break
        row_x, d_lam = g_rows0[0].copy(), g_rows0[1].copy()
        for k, j in enumerate(deg_g):
            row_x[j], d_lam[j] = g_options[k][combo[k]]
        xy = xy0
        if deg_xy.size:
            d_a, d_b = xy0.d_a.copy(), xy0.d_b.copy()
            for k, i in enumerate(deg_xy):
                d_a[i], d_b[i] = choices[combo[len(deg_g) + k]]
            xy = BsubRow(d_a, d_b)
        H = _jacobian_from_values(problem, ev, point, kind, ncp, g_rows=(row_x, d_lam), xy_row=xy)
        sigma = float(np.linalg.svd(H, compute_uv=False)[-1]) if H.size else float("inf")
        min_sigma = min(min_sigma, sigma)
        count += 1
    return BdReport(min_sigma > BD_SIGMA_TOL, min_sigma, count, partial)


# --------------------------------------------------------------------------- brute-force oracle

LOCAL_MIN = "local_min"
S_STATIONARY_ONLY = "s_stationary_only"


@dataclass
class OraclePoint:
    x: NDArray
    lam: NDArray
    mu: NDArray
    classification: str
    objective: float

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "lambda": self.lam.tolist(), "mu": self.mu.tolist(),
                "classification": self.classification, "objective": self.objective}

    @classmethod
    def from_dict(cls, d: dict) -> "OraclePoint":
        return cls(np.asarray(d["x"], dtype=float), np.asarray(d["lambda"], dtype=float),
                   np.asarray(d["mu"], dtype=float), d["classification"], float(d["objective"]))


@dataclass
class OracleResult:
    stationary_points: list[OraclePoint]
    global_min: NDArray | None
    global_value: float
    failures: list[tuple[int, ...]] = field(default_factory=list)

    def local_min_supports(self) -> set[tuple[int, ...]]:
        return {tuple(np.flatnonzero(p.x != 0)) for p in self.stationary_points
                if p.classification == LOCAL_MIN}

    def to_json(self) -> str:
        return json.dumps({
            "stationary_points": [p.to_dict() for p in self.stationary_points],
            "global_min": None if self.global_min is None else self.global_min.tolist(),
            "global_value": self.global_value,
            "failures": [list(f) for f in self.failures],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OracleResult":
        d = json.loads(text)
        gm = d["global_min"]
        return cls([OraclePoint.from_dict(p) for p in d["stationary_points"]],
                   None if gm is None else np.asarray(gm, dtype=float),
                   float(d["global_value"]), [tuple(f) for f in d["failures"]])


def _restricted_kkt(problem: SpoProblem, S: NDArray, A: NDArray, x_start: NDArray,
                    max_iter: int = 60, tol: float = 1e-12):
    """Lagrange-Newton on ``grad_S L = 0, g_A = 0, h = 0`` with ``x_i = 0`` off ``S``."""
    n, p = problem.n, problem.p
    k, a = S.size, A.size
    x = np.zeros(n)
    x[S] = x_start[S]
    lam_a = np.zeros(a)
    mu = np.zeros(p)
    for _ in range(max_iter):
        ev = problem.evaluate(x)
        lam = np.zeros(problem.m)
        lam[A] = lam_a
        _, grad_l, hess_l = lagrangian_from_values(ev, lam, mu)
        JgA = ev.jac_g[A][:, S]
        Jh = ev.jac_h[:, S]
        F = np.concatenate([grad_l[S], ev.g[A], ev.h])
        if not np.all(np.isfinite(F)):
            return None
        if np.linalg.norm(F) <= tol * (1.0 + np.abs(x).max(initial=0.0)):
            return x, lam, mu
        K = np.zeros((k + a + p, k + a + p))
        K[:k, :k] = hess_l[np.ix_(S, S)]
        K[:k, k:k + a] = JgA.T
        K[:k, k + a:] = Jh.T
        K[k:k + a, :k] = JgA
        K[k + a:, :k] = Jh
        step = np.linalg.lstsq(K, -F, rcond=None)[0]
        x[S] += step[:k]
        lam_a += step[k:k + a]
        mu += step[k + a:]
    ev = problem.evaluate(x)
    lam = np.zeros(problem.m)
    lam[A] = lam_a
    _, grad_l, _ = lagrangian_from_values(ev, lam, mu)
    F = np.concatenate([grad_l[S], ev.g[A], ev.h])
    if np.linalg.norm(F) <= 1e-10:
        return x, lam, mu
    return None


def _restricted_local_min(problem: SpoProblem, x, lam, mu, active_tol: float) -> bool:
    """Second-order test for ``min f`` over ``X`` with ``x_i = 0`` off the support.

    Exact for quadratic objectives over polyhedra; for general ``f`` a
    semidefinite reduced Hessian is accepted.
    """
    strong_holds, min_eig = check_strong_sp_sosc(problem, x, lam, mu, 0.0, active_tol)
    if strong_holds:
        return True
    _, _, weak = _critical_rows(problem, x, lam, 0.0, active_tol)
    if weak.shape[0] == 0:
        return min_eig >= -1e-10
    return check_second_order_necessary(problem, x, lam, mu, 0.0, n_samples=2000,
                                        active_tol=active_tol)


def brute_force_oracle(problem: SpoProblem, delta: float = 0.0, n_starts: int = 4, seed: int = 0,
                       feas_tol: float = 1e-10) -> OracleResult:
    """Enumerate supports and active sets; collect S-stationary points.

    Each point is classified ``local_min`` when it locally minimizes ``f``
    over the feasible set restricted to its own support (this is equivalent to
    local minimality of the penalized problem and does not depend on ``rho``).
    ``delta`` is accepted for interface symmetry; supports are exact.
    """
    n, m = problem.n, problem.m
    if n > 12:
        raise ValueError("brute-force oracle is limited to n <= 12")
    rng = np.random.default_rng(seed)
    starts = [np.zeros(n)] + [rng.standard_normal(n) for _ in range(n_starts - 1)]
    found: list[OraclePoint] = []
    failures: list[tuple[int, ...]] = []

    for size in range(n + 1):
        for S in itertools.combinations(range(n), size):
            S_arr = np.array(S, dtype=int)
            any_ok = False
            for asize in range(m + 1):
                for A in itertools.combinations(range(m), asize):
                    A_arr = np.array(A, dtype=int)
                    for x_start in starts:
                        sol = _restricted_kkt(problem, S_arr, A_arr, x_start)
                        if sol is None:
                            continue
                        x, lam, mu = sol
                        x[np.abs(x) <= 1e-14] = 0.0
                        if np.any(problem.g(x) > feas_tol) or np.any(lam < -feas_tol):
                            continue
                        if problem.nonneg and np.any(x < -feas_tol):
                            continue
                        if problem.nonneg:
                            x = np.maximum(x, 0.0)
                        lam = np.maximum(lam, 0.0)
                        if s_stationarity_residual(problem, x, lam, mu, 0.0) > 1e-9:
                            continue
                        any_ok = True
                        if any(np.allclose(q.x, x, atol=1e-8) for q in found):
                            continue
                        cls = LOCAL_MIN if _restricted_local_min(problem, x, lam, mu, 1e-8) \
                            else S_STATIONARY_ONLY
                        found.append(OraclePoint(x, lam, mu, cls, eval_spo_objective(problem, x, 0.0)))
            if not any_ok:
                failures.append(S)

    mins = [q for q in found if q.classification == LOCAL_MIN]
    if mins:
        best = min(mins, key=lambda q: q.objective)
        return OracleResult(found, best.x.copy(), best.objective, failures)
    return OracleResult(found, None, float("inf"), failures)
