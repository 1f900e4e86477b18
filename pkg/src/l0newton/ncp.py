"""NCP functions and the B-subdifferential elements used by the Newton methods.

All functions broadcast over numpy arrays, so one call handles a whole block
of complementarity rows.
"""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

DEFAULT_DEGENERATE_TOL = 1e-12
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


class NcpKind(Enum):
    FISCHER_BURMEISTER = "fb"
    MINIMUM = "min"


class BsubRow(NamedTuple):
    """Partial derivatives of ``phi(a, b)`` with respect to ``a`` and ``b``."""

    d_a: NDArray
    d_b: NDArray


def phi(kind: NcpKind, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind is NcpKind.MINIMUM:
        return np.minimum(a, b)
    return np.hypot(a, b) - a - b


def phi_fb_bsub(a, b, degenerate_tol: float = DEFAULT_DEGENERATE_TOL) -> BsubRow:
    """Gradient of Fischer-Burmeister; at the kink, the limit along ``-t*(1, 1)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.hypot(a, b)
    degenerate = r <= degenerate_tol
    safe = np.where(degenerate, 1.0, r)
    d_a = np.where(degenerate, -_INV_SQRT2, a / safe) - 1.0
    d_b = np.where(degenerate, -_INV_SQRT2, b / safe) - 1.0
    return BsubRow(d_a, d_b)


def phi_min_bsub(a, b) -> BsubRow:
    """Gradient of ``min(a, b)``; ties select the first argument."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    first = a <= b
    return BsubRow(first.astype(float), (~first).astype(float))


def phi_fb_bsub_constraint(g_val, g_grad, lambda_j, degenerate_tol: float = DEFAULT_DEGENERATE_TOL):
    """B-subdifferential element of ``phi_FB(-g_j(x), lambda_j)``.

    Returns ``(row_x, d_lambda)``: the derivative with respect to x (already
    multiplied through the chain rule by ``grad g_j``) and with respect to
    ``lambda_j``.  Degenerate pairs use the limit along ``(x - t*e, lambda - t)``.
    Accepts a single constraint (``g_grad`` of shape ``(n,)``) or a stack
    (``g_val`` of shape ``(m,)``, ``g_grad`` of shape ``(m, n)``).
    """
    g_val = np.asarray(g_val, dtype=float)
    g_grad = np.asarray(g_grad, dtype=float)
    lam = np.asarray(lambda_j, dtype=float)
    r = np.hypot(g_val, lam)
    degenerate = r <= degenerate_tol
    safe = np.where(degenerate, 1.0, r)
    c = g_grad.sum(axis=-1)  # grad g_j^T e
    rc = np.sqrt(c * c + 1.0)
    scale = np.where(degenerate, -c / rc + 1.0, g_val / safe + 1.0)
    d_lambda = np.where(degenerate, -1.0 / rc, lam / safe) - 1.0
    return scale[..., None] * g_grad, d_lambda


def ncp_bsub(kind: NcpKind, a, b, degenerate_tol: float = DEFAULT_DEGENERATE_TOL) -> BsubRow:
    if kind is NcpKind.MINIMUM:
        return phi_min_bsub(a, b)
    return phi_fb_bsub(a, b, degenerate_tol)


def constraint_bsub(kind: NcpKind, g_val, g_grad, lam, degenerate_tol: float = DEFAULT_DEGENERATE_TOL):
    """``(row_x, d_lambda)`` for the rows ``phi(-g_j(x), lambda_j)`` of either NCP kind."""
    if kind is NcpKind.FISCHER_BURMEISTER:
        return phi_fb_bsub_constraint(g_val, g_grad, lam, degenerate_tol)
    d = phi_min_bsub(-np.asarray(g_val, dtype=float), lam)
    return -d.d_a[..., None] * np.asarray(g_grad, dtype=float), d.d_b
