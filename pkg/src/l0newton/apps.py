"""Application families: portfolio selection, compressive sensing, logistic regression.

Instances are plain dataclasses holding dense arrays.  ``build_spo`` turns any
of them into an :class:`~l0newton.model.SpoProblem`; ``instance_to_dict`` /
``instance_from_dict`` implement the JSON schema

    {"kind": "quadratic" | "portfolio" | "sensing" | "logistic",
     "rho": float, "seed": int | null, <dense row-major matrices>}
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, fields
from typing import IO, Iterable

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from .model import SpoProblem


@dataclass(frozen=True)
class PortfolioInstance:
    Q: NDArray
    alpha: NDArray
    beta: float
    rho: float = 1.0
    seed: int | None = None
    kind = "portfolio"

    @property
    def n(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class SensingInstance:
    A: NDArray
    b: NDArray
    C: NDArray
    d: NDArray
    xbar: NDArray
    s: int
    rho: float = 1.0
    seed: int | None = None
    kind = "sensing"

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class LogisticInstance:
    X: NDArray
    y: NDArray
    rho: float = 1.0
    seed: int | None = None
    kind = "logistic"

    def __post_init__(self):
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class QuadraticInstance:
    """``f = 0.5 x'Qx + c'x`` with ``A_in x <= b_in``, ``A_eq x = b_eq``."""

    Q: NDArray
    c: NDArray
    A_in: NDArray = field(default_factory=lambda: np.zeros((0, 0)))
    b_in: NDArray = field(default_factory=lambda: np.zeros(0))
    A_eq: NDArray = field(default_factory=lambda: np.zeros((0, 0)))
    b_eq: NDArray = field(default_factory=lambda: np.zeros(0))
    nonneg: bool = False
    rho: float = 1.0
    seed: int | None = None
    kind = "quadratic"

    def __post_init__(self):
        n = self.c.size
        object.__setattr__(self, "A_in", np.asarray(self.A_in, dtype=float).reshape(-1, n))
        object.__setattr__(self, "A_eq", np.asarray(self.A_eq, dtype=float).reshape(-1, n))

    @property
    def n(self) -> int:
        return self.c.size


Instance = PortfolioInstance | SensingInstance | LogisticInstance | QuadraticInstance
_KINDS = {cls.kind: cls for cls in (PortfolioInstance, SensingInstance, LogisticInstance, QuadraticInstance)}


# --------------------------------------------------------------------------- generators

def gen_portfolio(n: int, seed: int, rho: float = 1.0) -> PortfolioInstance:
    """Random Markowitz instance; ``x = e/n`` is always feasible."""
    if n < 2:
        raise ValueError("portfolio needs n >= 2")
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    Q = B.T @ B / n + 1e-4 * np.eye(n)
    Q = 0.5 * (Q + Q.T)
    alpha = rng.uniform(0.5, 1.5, n)
    beta = 0.9 * float(alpha.mean())
    return PortfolioInstance(Q, alpha, beta, rho, seed)


def gen_sensing(n: int, m: int, p: int, s: int, seed: int, rho: float = 1.0) -> SensingInstance:
    """Gaussian sensing matrix with an s-sparse ground truth.

    All ``m + p`` rows of ``SA`` are drawn iid ``N(0, 1/(m+p))``; a random
    permutation of the rows decides which ``m`` form ``A`` and which ``p``
    form the noise-free constraints ``C x = d``.
    """
    if not 0 <= s <= n:
        raise ValueError("need 0 <= s <= n")
    if m < 0 or p < 0 or m + p < 1:
        raise ValueError("need m, p >= 0 and m + p >= 1")
    rng = np.random.default_rng(seed)
    SA = rng.standard_normal((m + p, n)) / np.sqrt(m + p)
    xbar = np.zeros(n)
    support = rng.permutation(n)[:s]
    xbar[support] = rng.standard_normal(s)
    # A zero draw would break ||xbar||_0 = s; redraw it (probability ~0).
    while np.count_nonzero(xbar) < s:
        zero = support[xbar[support] == 0]
        xbar[zero] = rng.standard_normal(zero.size)
    Sb = SA @ xbar
    J = rng.permutation(m + p)
    J1, J2 = J[:m], J[m:]
    return SensingInstance(SA[J1], Sb[J1], SA[J2], Sb[J2], xbar, s, rho, seed)


def gen_logistic(n: int, m: int, seed: int, rho: float = 1.0, s: int | None = None,
                 noise: float = 0.1) -> LogisticInstance:
    """Synthetic classification data from a sparse linear model.

    Features are uniform on ``[-1, 1]``; labels are ``sign(X w)`` for an
    ``s``-sparse ``w`` (default ``n // 5``), each flipped with probability
    ``noise``.
    """
    rng = np.random.default_rng(seed)
    s = max(1, n // 5) if s is None else s
    X = rng.uniform(-1.0, 1.0, (m, n))
    w = np.zeros(n)
    w[rng.permutation(n)[:s]] = rng.standard_normal(s) * 3.0
    y = np.where(X @ w >= 0, 1.0, -1.0)
    flip = rng.random(m) < noise
    y[flip] = -y[flip]
    return LogisticInstance(X, y, rho, seed)


# --------------------------------------------------------------------------- oracles

def logistic_oracles(inst: LogisticInstance):
    """``(value, gradient, Hessian)`` of ``sum_i log(1 + exp(-y_i w'x_i))``."""
    X, y = inst.X, inst.y

    def oracle(w):
        t = y * (X @ w)
        value = float(np.logaddexp(0.0, -t).sum())
        s_neg = expit(-t)
        grad = X.T @ (-y * s_neg)
        weights = s_neg * (1.0 - s_neg)
        hess = (X.T * weights) @ X
        return value, grad, hess

    return oracle


def _linear(A: NDArray, b: NDArray):
    k, n = A.shape
    zero_h = np.zeros((k, n, n))

    def oracle(x):
        return A @ x - b, A, zero_h

    return oracle


def _quadratic(Q: NDArray, c: NDArray):
    def oracle(x):
        Qx = Q @ x
        return float(0.5 * x @ Qx + c @ x), Qx + c, Q

    return oracle


def build_spo(instance: Instance, rho: float | None = None) -> SpoProblem:
    rho = instance.rho if rho is None else rho
    if isinstance(instance, PortfolioInstance):
        n = instance.n
        Q = instance.Q
        return SpoProblem(
            n=n, rho=rho, f_oracle=_quadratic(Q, np.zeros(n)),
            m=1, g_oracle=_linear(-instance.alpha[None, :], np.array([-instance.beta])),
            p=1, h_oracle=_linear(np.ones((1, n)), np.ones(1)),
            nonneg=True, source=instance,
        )
    if isinstance(instance, SensingInstance):
        A, b = instance.A, instance.b
        AtA, Atb, btb = A.T @ A, A.T @ b, float(b @ b)

        def f(x):
            AtAx = AtA @ x
            return 0.5 * float(x @ AtAx) - float(Atb @ x) + 0.5 * btb, AtAx - Atb, AtA

        p = instance.C.shape[0]
        return SpoProblem(
            n=instance.n, rho=rho, f_oracle=f,
            p=p, h_oracle=_linear(instance.C, instance.d) if p else None,
            source=instance,
        )
    if isinstance(instance, LogisticInstance):
        return SpoProblem(n=instance.n, rho=rho, f_oracle=logistic_oracles(instance), source=instance)
    if isinstance(instance, QuadraticInstance):
        m, p = instance.A_in.shape[0], instance.A_eq.shape[0]
        return SpoProblem(
            n=instance.n, rho=rho, f_oracle=_quadratic(instance.Q, instance.c),
            m=m, g_oracle=_linear(instance.A_in, instance.b_in) if m else None,
            p=p, h_oracle=_linear(instance.A_eq, instance.b_eq) if p else None,
            nonneg=instance.nonneg, source=instance,
        )
    raise TypeError(f"unknown instance type {type(instance).__name__}")


# --------------------------------------------------------------------------- LIBSVM

class LibsvmParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _label(token: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise LibsvmParseError(lineno, f"bad label {token!r}") from None
    if v in (0.0, -1.0):
        return -1.0
    if v == 1.0:
        return 1.0
    raise LibsvmParseError(lineno, f"label {token!r} is not binary")


def parse_libsvm(stream: IO[str] | str, scale_to_unit: bool = False, rho: float = 1.0) -> LogisticInstance:
    """Read ``<label> <idx>:<val> ...`` lines (1-based, ascending indices)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels: list[float] = []
    rows: list[tuple[list[int], list[float]]] = []
    width = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_label(tokens[0], lineno))
        idx: list[int] = []
        vals: list[float] = []
        for tok in tokens[1:]:
            k, sep, v = tok.partition(":")
            try:
                j, value = int(k), float(v)
            except ValueError:
                raise LibsvmParseError(lineno, f"malformed feature {tok!r}") from None
            if not sep or j < 1:
                raise LibsvmParseError(lineno, f"malformed feature {tok!r}")
            if idx and j <= idx[-1]:
                raise LibsvmParseError(lineno, "feature indices must be strictly ascending")
            idx.append(j)
            vals.append(value)
        width = max(width, idx[-1] if idx else 0)
        rows.append((idx, vals))
    X = np.zeros((len(rows), width))
    for i, (idx, vals) in enumerate(rows):
        X[i, np.asarray(idx, dtype=int) - 1] = vals
    if scale_to_unit:
        colmax = np.abs(X).max(axis=0) if X.size else np.zeros(width)
        nz = colmax > 0
        X[:, nz] /= colmax[nz]
    return LogisticInstance(X, np.asarray(labels, dtype=float), rho)


def dump_libsvm(inst: LogisticInstance) -> str:
    lines = []
    for xi, yi in zip(inst.X, inst.y):
        feats = " ".join(f"{j + 1}:{float(xi[j])!r}" for j in np.flatnonzero(xi))
        lines.append(f"{'+1' if yi > 0 else '-1'} {feats}".rstrip())
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- serialization

def instance_to_dict(instance: Instance) -> dict:
    d: dict = {"kind": instance.kind}
    for f in fields(instance):
        v = getattr(instance, f.name)
        d[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
    return d


def instance_from_dict(d: dict) -> Instance:
    try:
        cls = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown instance kind {d.get('kind')!r}") from None
    kwargs = {}
    for f in fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        kwargs[f.name] = np.asarray(v, dtype=float) if isinstance(v, list) else v
    return cls(**kwargs)


def canonical_json(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), sort_keys=True, separators=(",", ":"))


def instance_id(instance: Instance) -> str:
    return hashlib.sha256(canonical_json(instance).encode()).hexdigest()[:16]


def save_instance(instance: Instance, path) -> str:
    with open(path, "w") as fh:
        fh.write(canonical_json(instance))
        fh.write("\n")
    return instance_id(instance)


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def instance_to_csv(instance: Instance) -> dict[str, str]:
    """One CSV text per array field, for external tools."""
    out = {}
    for f in fields(instance):
        v = getattr(instance, f.name)
        if isinstance(v, np.ndarray):
            buf = io.StringIO()
            np.savetxt(buf, np.atleast_2d(v) if v.ndim < 2 else v, delimiter=",", fmt="%.17g")
            out[f.name] = buf.getvalue()
    return out


def iter_family(family: str, params: dict, seeds: Iterable[int], rho: float = 1.0):
    for seed in seeds:
        yield generate(family, params, seed, rho)


def generate(family: str, params: dict, seed: int, rho: float = 1.0) -> Instance:
    if family == "portfolio":
        return gen_portfolio(int(params.get("n", 10)), seed, rho)
    if family == "sensing":
        return gen_sensing(int(params.get("n", 64)), int(params.get("m", 32)),
                           int(params.get("p", 4)), int(params.get("s", 8)), seed, rho)
    if family == "logistic":
        return gen_logistic(int(params.get("n", 50)), int(params.get("m", 200)), seed, rho,
                            s=int(params["s"]) if "s" in params else None,
                            noise=float(params.get("noise", 0.1)))
    raise ValueError(f"unknown family {family!r}")
