"""Shared problem builders for the test suite."""

import numpy as np
import pytest

from l0newton.apps import QuadraticInstance, build_spo
from l0newton.model import SpoProblem

A_SHIFT = np.array([2.0, 3.0])


def shifted_quadratic(a=A_SHIFT, rho=1.0) -> SpoProblem:
    """``f = 0.5*||x - a||^2`` with no constraints (constant kept)."""
    a = np.asarray(a, dtype=float)

    def f(x):
        d = x - a
        return 0.5 * float(d @ d), d, np.eye(a.size)

    return SpoProblem(n=a.size, rho=rho, f_oracle=f)


def quad_problem(Q, c, rho=1.0, **kw) -> SpoProblem:
    return build_spo(QuadraticInstance(np.asarray(Q, float), np.asarray(c, float), rho=rho, **kw))


def nonlinear_problem(n, m, p, seed, rho=1.0, nonneg=False) -> SpoProblem:
    """Smooth non-quadratic f, quadratic inequalities and nonlinear equalities."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    Q = B.T @ B / n + 0.5 * np.eye(n)
    c = rng.standard_normal(n)
    w = rng.standard_normal(n)
    P = [np.diag(rng.uniform(0.5, 1.5, n)) for _ in range(m)]
    q = rng.standard_normal((m, n))
    r = rng.uniform(1.0, 2.0, m)
    E = rng.standard_normal((p, n))

    def f(x):
        t = w @ x
        v = 0.5 * x @ Q @ x + c @ x + np.log1p(np.exp(t)) + 0.25 * np.sum(x ** 4)
        s = 1.0 / (1.0 + np.exp(-t))
        g = Q @ x + c + s * w + x ** 3
        H = Q + s * (1 - s) * np.outer(w, w) + np.diag(3 * x ** 2)
        return float(v), g, H

    def g(x):
        vals = np.array([0.5 * x @ P[i] @ x + q[i] @ x - r[i] for i in range(m)])
        J = np.array([P[i] @ x + q[i] for i in range(m)]).reshape(m, n)
        return vals, J, np.array(P).reshape(m, n, n)

    def h(x):
        vals = E @ x + np.sin(x).sum() - 0.1
        J = E + np.cos(x)[None, :]
        Hs = np.array([np.diag(-np.sin(x)) for _ in range(p)]).reshape(p, n, n)
        return vals, J, Hs

    return SpoProblem(n=n, rho=rho, f_oracle=f, m=m, p=p,
                      g_oracle=g if m else None, h_oracle=h if p else None, nonneg=nonneg)


def quadratic_regular_instance(seed, n=6):
    """Strongly convex quadratic, one equality, with a known S-stationary solution."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    Q = B.T @ B / n + np.eye(n)
    supp = np.sort(rng.permutation(n)[: n // 2])
    x_star = np.zeros(n)
    x_star[supp] = rng.uniform(0.5, 1.5, supp.size) * rng.choice([-1, 1], supp.size)
    E = rng.standard_normal((1, n))
    mu = rng.standard_normal(1)
    # choose c so that grad L vanishes on the support
    c = -(Q @ x_star) - E.T @ mu
    c[~np.isin(np.arange(n), supp)] += rng.standard_normal(n - supp.size)
    pb = quad_problem(Q, c, rho=1.0, A_eq=E, b_eq=E @ x_star)
    return pb, x_star, mu


ROUNDOFF_FLOOR = 1e-12


def full_residual_sequence(problem, x_star, mu, seed, max_iter=12):
    """``||T(z_k)||`` of the Full operator from a 1e-2 perturbation of the known zero.

    The sequence stops at the first value below ``ROUNDOFF_FLOOR``; past that
    point the ratios only measure rounding.
    """
    from l0newton.kkt import OperatorKind, complete_point, residual
    from l0newton.newton import NewtonOptions, solve

    rng = np.random.default_rng(seed + 50)
    z = complete_point(problem, x_star, np.zeros(problem.m), mu, 0.0)
    for name in ("x", "y", "gamma", "mu"):
        v = getattr(z, name)
        setattr(z, name, v + 1e-2 * rng.standard_normal(v.size))
    seq = []
    cb = lambda k, p: seq.append(float(np.linalg.norm(residual(problem, p, OperatorKind.FULL).vector)))
    solve(problem, z.x, NewtonOptions(kind=OperatorKind.FULL, eps=0.0, max_iter=max_iter), init=z, callback=cb)
    for k, r in enumerate(seq):
        if r <= ROUNDOFF_FLOOR:
            return seq[: k + 1]
    return seq


def central_jacobian(fun, v, h=1e-6):
    v = np.asarray(v, dtype=float)
    cols = []
    for k in range(v.size):
        e = np.zeros(v.size)
        e[k] = h
        cols.append((fun(v + e) - fun(v - e)) / (2 * h))
    return np.array(cols).T


@pytest.fixture
def shifted():
    return shifted_quadratic()
