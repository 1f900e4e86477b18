"""Problem representation, oracle evaluation, index sets and merit quantities."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

import numpy as np
from numpy.typing import NDArray

DEFAULT_DELTA = 1e-4
DEFAULT_ACTIVE_TOL = 1e-8

ScalarOracle = Callable[[NDArray], tuple[float, NDArray, NDArray]]
VectorOracle = Callable[[NDArray], tuple[NDArray, NDArray, NDArray]]


def _symmetrize(H: NDArray) -> NDArray:
    return 0.5 * (H + np.swapaxes(H, -1, -2))


@dataclass(frozen=True)
class OracleValues:
    """All first- and second-order oracle data of a problem at one point."""

    x: NDArray
    f: float
    grad_f: NDArray
    hess_f: NDArray
    g: NDArray
    jac_g: NDArray
    hess_g: NDArray
    h: NDArray
    jac_h: NDArray
    hess_h: NDArray


@dataclass(frozen=True)
class SpoProblem:
    """The l0-penalized program ``min f(x) + rho*||x||_0`` s.t. ``g(x) <= 0, h(x) = 0``.

    ``f_oracle`` maps x to ``(value, gradient, Hessian)``; ``g_oracle`` and
    ``h_oracle`` map x to ``(values, Jacobian, stacked Hessians)`` with shapes
    ``(k,)``, ``(k, n)`` and ``(k, n, n)``.  When ``nonneg`` is set the
    structural constraint ``x >= 0`` is implied but is *not* part of ``g``.
    ``source`` optionally keeps the application instance the problem was
    built from, so that pre-processing can recognize its family.
    """

    n: int
    rho: float
    f_oracle: ScalarOracle
    m: int = 0
    p: int = 0
    g_oracle: VectorOracle | None = None
    h_oracle: VectorOracle | None = None
    nonneg: bool = False
    source: Any = field(default=None, compare=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.n < 0 or self.m < 0 or self.p < 0:
            raise ValueError("dimensions must be nonnegative")
        if self.m > 0 and self.g_oracle is None:
            raise ValueError("m > 0 requires g_oracle")
        if self.p > 0 and self.h_oracle is None:
            raise ValueError("p > 0 requires h_oracle")

    def with_rho(self, rho: float) -> "SpoProblem":
        return replace(self, rho=rho)

    def _check_x(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected x of shape ({self.n},), got {x.shape}")
        return x

    def _constraint(self, oracle, k, x):
        n = self.n
        if k == 0:
            return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n))
        val, jac, hess = oracle(x)
        val = np.asarray(val, dtype=float).reshape(k)
        jac = np.asarray(jac, dtype=float).reshape(k, n)
        hess = _symmetrize(np.asarray(hess, dtype=float).reshape(k, n, n))
        return val, jac, hess

    def evaluate(self, x) -> OracleValues:
        """Evaluate every oracle at ``x``; Hessians are symmetrized."""
        x = self._check_x(x)
        fv, gf, hf = self.f_oracle(x)
        gf = np.asarray(gf, dtype=float).reshape(self.n)
        hf = _symmetrize(np.asarray(hf, dtype=float).reshape(self.n, self.n))
        g, jg, hg = self._constraint(self.g_oracle, self.m, x)
        h, jh, hh = self._constraint(self.h_oracle, self.p, x)
        return OracleValues(x, float(fv), gf, hf, g, jg, hg, h, jh, hh)

    def f(self, x) -> float:
        return float(self.f_oracle(self._check_x(x))[0])

    def g(self, x) -> NDArray:
        return self._constraint(self.g_oracle, self.m, self._check_x(x))[0]

    def h(self, x) -> NDArray:
        return self._constraint(self.h_oracle, self.p, self._check_x(x))[0]


@dataclass
class PrimalDualPoint:
    """Primal-dual point ``z = (x, y, lambda, mu, gamma)`` with optional ``sigma``."""

    x: NDArray
    y: NDArray
    lam: NDArray
    mu: NDArray
    gamma: NDArray
    sigma: NDArray | None = None

    def __post_init__(self):
        for name in ("x", "y", "lam", "mu", "gamma"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float).ravel()

    def check(self, problem: SpoProblem) -> None:
        n, m, p = problem.n, problem.m, problem.p
        shapes = {"x": n, "y": n, "lam": m, "mu": p, "gamma": n}
        for name, size in shapes.items():
            if getattr(self, name).shape != (size,):
                raise ValueError(
                    f"point.{name} has shape {getattr(self, name).shape}, expected ({size},)"
                )
        if self.sigma is not None and self.sigma.shape != (n,):
            raise ValueError(f"point.sigma has shape {self.sigma.shape}, expected ({n},)")

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(
            self.x.copy(), self.y.copy(), self.lam.copy(), self.mu.copy(),
            self.gamma.copy(), None if self.sigma is None else self.sigma.copy(),
        )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in ("x", "y", "lam", "mu", "gamma")}
        if self.sigma is not None:
            d["sigma"] = self.sigma.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PrimalDualPoint":
        x = np.asarray(d["x"], dtype=float)
        n = x.size
        return cls(
            x,
            d.get("y", np.ones(n)),
            d.get("lam", d.get("lambda", [])),
            d.get("mu", []),
            d.get("gamma", np.zeros(n)),
            d.get("sigma"),
        )


@dataclass(frozen=True)
class IndexSets:
    """Numerical index sets at a point (0-based integer arrays)."""

    i0: NDArray
    ig: NDArray
    i_xy: NDArray
    i_glambda: NDArray


class Status(Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    STEP_BLOWUP = "StepBlowup"
    LINEAR_SOLVE_FAILURE = "LinearSolveFailure"


@dataclass
class SolveReport:
    status: Status
    iterations: int
    residual_history: list[float]
    final_point: PrimalDualPoint
    objective: float
    l0_count: int
    multipliers: Any = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    def to_dict(self) -> dict:
        d = {
            "status": self.status.value,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "final_point": self.final_point.to_dict(),
            "objective": self.objective,
            "l0_count": self.l0_count,
        }
        if self.multipliers is not None:
            d["multipliers"] = {
                "y_star": self.multipliers.y_star.tolist(),
                "gamma_star": self.multipliers.gamma_star.tolist(),
                "sigma_star": self.multipliers.sigma_star.tolist(),
            }
        return d


def support_mask(x, delta: float = DEFAULT_DELTA) -> NDArray:
    """Boolean mask of the numerical support; ``delta = 0`` means exact nonzeros."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    ax = np.abs(np.asarray(x, dtype=float))
    return ax >= delta if delta > 0 else ax > 0


def l0_norm(x, delta: float = 0.0) -> int:
    """Number of components with ``|x_i| >= delta`` (exact nonzeros for ``delta = 0``)."""
    return int(np.count_nonzero(support_mask(x, delta)))


def eval_spo_objective(problem: SpoProblem, x, delta: float = DEFAULT_DELTA) -> float:
    """``F_rho(x) = f(x) + rho * ||x||_0`` with the numerical zero threshold ``delta``."""
    return problem.f(x) + problem.rho * l0_norm(x, delta)


def lagrangian_from_values(ev: OracleValues, lam, mu) -> tuple[float, NDArray, NDArray]:
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    value = ev.f + lam @ ev.g + mu @ ev.h
    grad = ev.grad_f + ev.jac_g.T @ lam + ev.jac_h.T @ mu
    hess = ev.hess_f + np.tensordot(lam, ev.hess_g, axes=1) + np.tensordot(mu, ev.hess_h, axes=1)
    return float(value), grad, hess


def lagrangian_sp(problem: SpoProblem, x, lam, mu) -> tuple[float, NDArray, NDArray]:
    """Value, gradient and Hessian in x of ``f + lam^T g + mu^T h`` (no l0 term)."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if lam.shape != (problem.m,) or mu.shape != (problem.p,):
        raise ValueError("multiplier dimensions do not match the problem")
    return lagrangian_from_values(problem.evaluate(x), lam, mu)


def index_sets(
    problem: SpoProblem,
    point: PrimalDualPoint,
    delta: float = DEFAULT_DELTA,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> IndexSets:
    if delta < 0 or active_tol < 0:
        raise ValueError("tolerances must be nonnegative")
    zero_x = ~support_mask(point.x, delta)
    zero_y = ~support_mask(point.y, delta)
    g = problem.g(point.x)
    active = np.abs(g) <= active_tol
    return IndexSets(
        i0=np.flatnonzero(zero_x),
        ig=np.flatnonzero(active),
        i_xy=np.flatnonzero(zero_x & zero_y),
        i_glambda=np.flatnonzero(active & (np.abs(point.lam) <= active_tol)),
    )
