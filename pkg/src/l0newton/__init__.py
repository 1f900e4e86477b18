"""Lagrange-Newton methods for l0-penalized nonlinear programs.

The problem ``min f(x) + rho*||x||_0`` over ``g(x) <= 0, h(x) = 0`` is
reformulated with an auxiliary variable ``y`` and solved by a local
nonsmooth Newton method on its KKT system.
"""

from .kkt import OperatorKind, residual, jacobian, split_variables
from .model import PrimalDualPoint, SolveReport, SpoProblem, Status, l0_norm, eval_spo_objective
from .ncp import NcpKind
from .newton import NewtonOptions, solve

__all__ = [
    "NcpKind",
    "NewtonOptions",
    "OperatorKind",
    "PrimalDualPoint",
    "SolveReport",
    "SpoProblem",
    "Status",
    "eval_spo_objective",
    "jacobian",
    "l0_norm",
    "residual",
    "solve",
    "split_variables",
]

__version__ = "0.1.0"
