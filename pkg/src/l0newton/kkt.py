"""Nonsmooth KKT operators of the squared-penalty reformulation.

Three operators are provided.  ``FULL`` acts on ``z = (x, y, lam, mu, gamma)``
with blocks

    grad_x L + gamma*y,  rho*(y - e) + gamma*x,  phi(-g, lam),  h,  x*y

``REDUCED`` eliminates ``y = e - gamma*x/rho`` and acts on
``w = (x, lam, mu, gamma)``.  ``COMPLEMENTARY`` replaces ``x*y`` by
``phi(x, y)`` and therefore needs the structural constraint ``x >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .model import (
    DEFAULT_DELTA,
    OracleValues,
    PrimalDualPoint,
    SpoProblem,
    lagrangian_from_values,
    support_mask,
)
from .ncp import DEFAULT_DEGENERATE_TOL, BsubRow, NcpKind, constraint_bsub, ncp_bsub, phi

FB = NcpKind.FISCHER_BURMEISTER


class OperatorKind(Enum):
    FULL = "full"
    REDUCED = "red"
    COMPLEMENTARY = "comp"


@dataclass(frozen=True)
class KktResidual:
    vector: NDArray
    layout: dict[str, slice]

    def block(self, name: str) -> NDArray:
        return self.vector[self.layout[name]]

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


@dataclass(frozen=True)
class MultiplierSet:
    y_star: NDArray
    gamma_star: NDArray
    sigma_star: NDArray


def layout(problem: SpoProblem, kind: OperatorKind) -> dict[str, slice]:
    """Block offsets of the residual (and of the matching variable vector)."""
    n, m, p = problem.n, problem.m, problem.p
    if kind is OperatorKind.REDUCED:
        names, sizes = ("stat_x", "ineq", "eq", "compl"), (n, m, p, n)
    else:
        names, sizes = ("stat_x", "stat_y", "ineq", "eq", "compl"), (n, n, m, p, n)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return {k: slice(int(a), int(b)) for k, a, b in zip(names, offsets[:-1], offsets[1:])}


def system_size(problem: SpoProblem, kind: OperatorKind) -> int:
    extra = problem.n if kind is OperatorKind.REDUCED else 2 * problem.n
    return problem.n + extra + problem.m + problem.p


def pack(point: PrimalDualPoint, kind: OperatorKind) -> NDArray:
    if kind is OperatorKind.REDUCED:
        return np.concatenate([point.x, point.lam, point.mu, point.gamma])
    return np.concatenate([point.x, point.y, point.lam, point.mu, point.gamma])


def unpack(problem: SpoProblem, v: NDArray, kind: OperatorKind) -> PrimalDualPoint:
    n, m, p = problem.n, problem.m, problem.p
    x = v[:n]
    if kind is OperatorKind.REDUCED:
        lam, mu, gamma = v[n:n + m], v[n + m:n + m + p], v[n + m + p:]
        y = 1.0 - gamma * x / problem.rho
    else:
        y = v[n:2 * n]
        lam, mu, gamma = v[2 * n:2 * n + m], v[2 * n + m:2 * n + m + p], v[2 * n + m + p:]
    return PrimalDualPoint(x.copy(), y.copy(), lam.copy(), mu.copy(), gamma.copy())


def _check(problem: SpoProblem, point: PrimalDualPoint, kind: OperatorKind) -> None:
    point.check(problem)
    if kind is OperatorKind.COMPLEMENTARY and not problem.nonneg:
        raise ValueError(
            "the complementary operator needs x >= 0; split the variables first"
        )


def _residual_from_values(problem, ev: OracleValues, point, kind, ncp) -> NDArray:
    rho = problem.rho
    x, lam, mu, gamma = point.x, point.lam, point.mu, point.gamma
    _, grad_l, _ = lagrangian_from_values(ev, lam, mu)
    phi_g = phi(ncp, -ev.g, lam)
    if kind is OperatorKind.REDUCED:
        y = 1.0 - gamma * x / rho
        return np.concatenate([grad_l + gamma * y, phi_g, ev.h, x * y])
    y = point.y
    compl = phi(ncp, x, y) if kind is OperatorKind.COMPLEMENTARY else x * y
    return np.concatenate([grad_l + gamma * y, rho * (y - 1.0) + gamma * x, phi_g, ev.h, compl])


def residual(
    problem: SpoProblem,
    point: PrimalDualPoint,
    kind: OperatorKind = OperatorKind.FULL,
    ncp: NcpKind = FB,
) -> KktResidual:
    _check(problem, point, kind)
    vec = _residual_from_values(problem, problem.evaluate(point.x), point, kind, ncp)
    return KktResidual(vec, layout(problem, kind))


def _assemble(problem, ev: OracleValues, point, kind, g_rows, xy_row: BsubRow | None) -> NDArray:
    n, m, p, rho = problem.n, problem.m, problem.p, problem.rho
    x, lam, mu, gamma = point.x, point.lam, point.mu, point.gamma
    _, _, hess_l = lagrangian_from_values(ev, lam, mu)
    row_x, d_lam = g_rows
    N = system_size(problem, kind)
    H = np.zeros((N, N))
    idx = np.arange(n)

    if kind is OperatorKind.REDUCED:
        # w = (x, lam, mu, gamma)
        cl, cm, cg = n, n + m, n + m + p
        diag_mix = 1.0 - 2.0 * gamma * x / rho
        H[:n, :n] = hess_l
        H[idx, idx] -= gamma ** 2 / rho
        H[:n, cl:cm] = ev.jac_g.T
        H[:n, cm:cg] = ev.jac_h.T
        H[idx, cg + idx] = diag_mix
        H[n:n + m, :n] = row_x
        H[n + np.arange(m), n + np.arange(m)] = d_lam
        H[n + m:n + m + p, :n] = ev.jac_h
        r5 = n + m + p
        H[r5 + idx, idx] = diag_mix
        H[r5 + idx, cg + idx] = -x ** 2 / rho
        return H

    # z = (x, y, lam, mu, gamma)
    cy, cl, cm, cg = n, 2 * n, 2 * n + m, 2 * n + m + p
    y = point.y
    H[:n, :n] = hess_l
    H[idx, cy + idx] = gamma
    H[:n, cl:cm] = ev.jac_g.T
    H[:n, cm:cg] = ev.jac_h.T
    H[idx, cg + idx] = y
    H[n + idx, idx] = gamma
    H[n + idx, cy + idx] = rho
    H[n + idx, cg + idx] = x
    H[cl:cm, :n] = row_x
    H[cl + np.arange(m), cl + np.arange(m)] = d_lam
    H[cm:cg, :n] = ev.jac_h
    r5 = 2 * n + m + p
    if kind is OperatorKind.COMPLEMENTARY:
        H[r5 + idx, idx] = xy_row.d_a
        H[r5 + idx, cy + idx] = xy_row.d_b
    else:
        H[r5 + idx, idx] = y
        H[r5 + idx, cy + idx] = x
    return H


def jacobian(
    problem: SpoProblem,
    point: PrimalDualPoint,
    kind: OperatorKind = OperatorKind.FULL,
    ncp: NcpKind = FB,
    *,
    degenerate_tol: float = DEFAULT_DEGENERATE_TOL,
    g_rows: tuple[NDArray, NDArray] | None = None,
    xy_row: BsubRow | None = None,
) -> NDArray:
    """One element of the B-subdifferential of the chosen operator.

    ``g_rows`` / ``xy_row`` override the default selections for the
    ``phi(-g, lam)`` and ``phi(x, y)`` rows; used when enumerating elements.
    """
    _check(problem, point, kind)
    ev = problem.evaluate(point.x)
    return _jacobian_from_values(problem, ev, point, kind, ncp, degenerate_tol, g_rows, xy_row)


def _jacobian_from_values(problem, ev, point, kind, ncp, degenerate_tol=DEFAULT_DEGENERATE_TOL,
                          g_rows=None, xy_row=None) -> NDArray:
    if g_rows is None:
        g_rows = constraint_bsub(ncp, ev.g, ev.jac_g, point.lam, degenerate_tol)
    if kind is OperatorKind.COMPLEMENTARY and xy_row is None:
        xy_row = ncp_bsub(ncp, point.x, point.y, degenerate_tol)
    return _assemble(problem, ev, point, kind, g_rows, xy_row)


def residual_and_jacobian(problem, point, kind, ncp=FB, degenerate_tol=DEFAULT_DEGENERATE_TOL):
    """Residual vector and Jacobian sharing a single oracle evaluation."""
    ev = problem.evaluate(point.x)
    r = _residual_from_values(problem, ev, point, kind, ncp)
    H = _jacobian_from_values(problem, ev, point, kind, ncp, degenerate_tol)
    return r, H, ev


def recover_multipliers(problem: SpoProblem, x, lam, mu, delta: float = DEFAULT_DELTA) -> MultiplierSet:
    """The unique ``(y, gamma, sigma)`` completing ``(x, lam, mu)`` to a KKT point."""
    x = np.asarray(x, dtype=float)
    ev = problem.evaluate(x)
    _, grad_l, _ = lagrangian_from_values(ev, lam, mu)
    supp = support_mask(x, delta)
    rho = problem.rho
    y = np.where(supp, 0.0, 1.0)
    gamma = np.where(supp, rho / np.where(supp, x, 1.0), -grad_l)
    sigma = np.where(supp, 0.0, rho)
    return MultiplierSet(y, gamma, sigma)


def complete_point(problem: SpoProblem, x, lam, mu, delta: float = DEFAULT_DELTA,
                   with_sigma: bool = False) -> PrimalDualPoint:
    ms = recover_multipliers(problem, x, lam, mu, delta)
    return PrimalDualPoint(x, ms.y_star, lam, mu, ms.gamma_star, ms.sigma_star if with_sigma else None)


def s_stationarity_blocks(problem: SpoProblem, x, lam, mu, delta=DEFAULT_DELTA, ncp=FB,
                          ev: OracleValues | None = None) -> NDArray:
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if ev is None:
        ev = problem.evaluate(x)
    _, grad_l, _ = lagrangian_from_values(ev, lam, mu)
    supp = support_mask(x, delta)
    blocks = [grad_l[supp], phi(ncp, -ev.g, lam), ev.h]
    if problem.nonneg:
        blocks.append(np.maximum(0.0, -x[supp]))
    return np.concatenate(blocks)


def s_stationarity_residual(problem: SpoProblem, x, lam, mu, delta: float = DEFAULT_DELTA,
                            ncp: NcpKind = FB) -> float:
    """Norm of the S-stationarity conditions: gradient on the support, Phi_g, h
    (and the sign violation on the support when ``x >= 0`` is structural)."""
    return float(np.linalg.norm(s_stationarity_blocks(problem, x, lam, mu, delta, ncp)))


def residual_spolin(problem: SpoProblem, point: PrimalDualPoint, ncp: NcpKind = FB) -> NDArray:
    """KKT residual of the linear-penalty reformulation (needs ``point.sigma``).

    Rows: ``grad_x L + gamma*y``, ``-rho*e + gamma*x + sigma``, ``phi(-g, lam)``,
    ``h``, ``x*y``, ``phi(e - y, sigma)``.
    """
    if point.sigma is None:
        raise ValueError("residual_spolin needs sigma")
    point.check(problem)
    ev = problem.evaluate(point.x)
    _, grad_l, _ = lagrangian_from_values(ev, point.lam, point.mu)
    x, y, gamma, sigma = point.x, point.y, point.gamma, point.sigma
    return np.concatenate([
        grad_l + gamma * y,
        -problem.rho + gamma * x + sigma,
        phi(ncp, -ev.g, point.lam),
        ev.h,
        x * y,
        phi(ncp, 1.0 - y, sigma),
    ])


@dataclass(frozen=True)
class SplitOrigin:
    """Marks a problem lifted to ``(x_plus, x_minus) >= 0``."""

    parent: SpoProblem

    def recover(self, u) -> NDArray:
        u = np.asarray(u, dtype=float)
        n = self.parent.n
        return u[:n] - u[n:]

    def lift(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([np.maximum(x, 0.0), np.maximum(-x, 0.0)])


def _lift_vec(a: NDArray) -> NDArray:
    return np.concatenate([a, -a], axis=-1)


def _lift_hess(H: NDArray) -> NDArray:
    top = np.concatenate([H, -H], axis=-1)
    return np.concatenate([top, -top], axis=-2)


def split_variables(problem: SpoProblem) -> SpoProblem:
    """Lift to ``u = (x_plus, x_minus) >= 0`` with ``x = x_plus - x_minus``."""
    if problem.nonneg:
        raise ValueError("problem already carries x >= 0")
    n = problem.n

    def down(u):
        return u[:n] - u[n:]

    def f_lift(u):
        v, gr, H = problem.f_oracle(down(u))
        return v, _lift_vec(np.asarray(gr, dtype=float)), _lift_hess(np.asarray(H, dtype=float))

    def lift_constraint(oracle):
        if oracle is None:
            return None

        def c(u):
            v, J, Hs = oracle(down(u))
            J = np.asarray(J, dtype=float).reshape(-1, n)
            Hs = np.asarray(Hs, dtype=float).reshape(-1, n, n)
            return v, _lift_vec(J), _lift_hess(Hs)

        return c

    return SpoProblem(
        n=2 * n,
        rho=problem.rho,
        f_oracle=f_lift,
        m=problem.m,
        p=problem.p,
        g_oracle=lift_constraint(problem.g_oracle),
        h_oracle=lift_constraint(problem.h_oracle),
        nonneg=True,
        source=SplitOrigin(problem),
    )
