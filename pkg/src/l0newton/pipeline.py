"""Presolve followed by a Newton solve, recorded as one benchmark row."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .apps import Instance, build_spo, instance_id
from .kkt import OperatorKind, SplitOrigin, split_variables
from .model import SolveReport, SpoProblem, eval_spo_objective, l0_norm
from .newton import NewtonOptions, solve
from .presolve import presolve_l1

REPORT_SCHEMA = "v1"
CSV_COLUMNS = ("instance_id", "family", "n", "m", "p", "rho", "op", "status", "iters",
               "f0_obj", "final_obj", "l0_before", "l0_after", "wall_ms")


def default_options(family: str, kind: OperatorKind = OperatorKind.FULL, **overrides) -> NewtonOptions:
    """Newton options per family.

    The step safeguard is switched off for portfolio runs, where the first
    steps of every operator routinely exceed 100 before converging.
    """
    opts = NewtonOptions(kind=kind)
    if family == "portfolio":
        opts = replace(opts, step_safety=float("inf"))
    return replace(opts, **overrides) if overrides else opts


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    family: str
    n: int
    m: int
    p: int
    rho: float
    op: str
    status: str
    iters: int
    f0_obj: float
    final_obj: float
    l0_before: int
    l0_after: int
    wall_ms: float

    @property
    def converged(self) -> bool:
        return self.status == "Converged"

    def to_row(self) -> dict:
        return asdict(self)

    @classmethod
    def from_row(cls, row: dict) -> "RunRecord":
        casts = {f.name: f.type for f in fields(cls)}
        out = {}
        for k in CSV_COLUMNS:
            v = row[k]
            t = casts[k]
            out[k] = int(v) if t == "int" else float(v) if t == "float" else str(v)
        return cls(**out)


@dataclass
class PipelineResult:
    record: RunRecord
    report: SolveReport
    problem: SpoProblem
    solved_problem: SpoProblem
    x0: np.ndarray
    x_final: np.ndarray

    @property
    def split(self) -> bool:
        return isinstance(self.solved_problem.source, SplitOrigin)

    def to_json_dict(self) -> dict:
        r = self.record
        return {
            "schema": REPORT_SCHEMA,
            **r.to_row(),
            "split": self.split,
            "x0": self.x0.tolist(),
            "x_final": self.x_final.tolist(),
            "residual_history": list(self.report.residual_history),
            "final_point": self.report.final_point.to_dict(),
        }


def run_pipeline(instance: Instance, kind: OperatorKind, rho: float | None = None,
                 options: NewtonOptions | None = None, x0=None) -> PipelineResult:
    """``presolve_l1`` then :func:`~l0newton.newton.solve`.

    For the complementary operator on a problem without ``x >= 0`` the
    variables are split first and the start point lifted.  Objectives and
    ``l0`` counts are always reported in the original variables.
    """
    t0 = time.perf_counter()
    problem = build_spo(instance, rho)
    opts = options or default_options(instance.kind, kind)
    if opts.kind is not kind:
        opts = replace(opts, kind=kind)
    x0 = presolve_l1(problem) if x0 is None else np.asarray(x0, dtype=float)
    target, start = problem, x0
    if kind is OperatorKind.COMPLEMENTARY and not problem.nonneg:
        target = split_variables(problem)
        start = target.source.lift(x0)
    report = solve(target, start, opts)
    x_final = report.final_point.x
    if target is not problem:
        x_final = target.source.recover(x_final)
    wall_ms = (time.perf_counter() - t0) * 1e3
    record = RunRecord(
        instance_id=instance_id(instance),
        family=instance.kind,
        n=problem.n,
        m=problem.m,
        p=problem.p,
        rho=problem.rho,
        op=kind.value,
        status=report.status.value,
        iters=report.iterations,
        f0_obj=eval_spo_objective(problem, x0, opts.delta),
        final_obj=eval_spo_objective(problem, x_final, opts.delta),
        l0_before=l0_norm(x0, opts.delta),
        l0_after=l0_norm(x_final, opts.delta),
        wall_ms=round(wall_ms, 3),
    )
    return PipelineResult(record, report, problem, target, x0, x_final)
