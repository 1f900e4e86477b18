"""Command-line interface: ``solve``, ``bench``, ``check`` and ``gen``.

Exit codes: 0 success (``solve``: converged), 2 solve did not converge,
64 usage error, 65 bad input data, 66 missing or unreadable file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .apps import generate, instance_id, load_instance, save_instance
from .kkt import OperatorKind, s_stationarity_residual, split_variables
from .model import PrimalDualPoint
from .apps import build_spo
from .pipeline import CSV_COLUMNS, RunRecord, default_options, run_pipeline
from .presolve import PresolveError, QpInfeasibleError

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATAERR = 65
EXIT_NOINPUT = 66

OPS = {k.value: k for k in OperatorKind}
OP_ORDER = [k.value for k in OperatorKind]

_HELP_RHO = ("penalty weight rho, applied as given and never rescaled; global minima of the "
             "squared-penalty reformulation with weight rho are global minima of "
             "f + (rho/2)*||x||_0, while local minima do not depend on rho")

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- argument helpers

def parse_params(tokens) -> dict:
    """``["n=64,m=32", "s=8"]`` -> ``{"n": "64", "m": "32", "s": "8"}``."""
    out = {}
    for tok in tokens:
        for part in str(tok).replace(",", " ").split():
            if "=" not in part:
                raise UsageError(f"expected key=value, got {part!r}")
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _numeric_params(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        try:
            out[k] = float(v) if any(c in v for c in ".eE") else int(v)
        except ValueError:
            raise UsageError(f"parameter {k} is not numeric: {v!r}") from None
    return out


def resolve_problem(spec_tokens, rho: float | None):
    """An instance from a JSON file or from ``family:NAME key=value,...``."""
    text = " ".join(spec_tokens).strip()
    body = text[len("family:"):] if text.startswith("family:") else None
    if body is None:
        path = Path(text)
        if not path.exists():
            if ":" in text and not os.sep in text.split(":", 1)[0]:
                body = text
            else:
                raise FileNotFoundError(text)
    if body is None:
        try:
            inst = load_instance(path)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"cannot read instance {path}: {exc}") from exc
        return inst
    name, _, rest = body.replace(":", " ", 1).partition(" ")
    params = _numeric_params(parse_params([rest]))
    seed = int(params.pop("seed", 0))
    try:
        return generate(name, params, seed, 1.0 if rho is None else rho)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"not a list of numbers: {text!r}") from None


def _ops(text: str) -> list[OperatorKind]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if t not in OPS:
            raise UsageError(f"unknown operator {t!r}")
        out.append(OPS[t])
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    inst = resolve_problem(args.problem, args.rho)
    kind = OPS[args.op]
    opts = default_options(inst.kind, kind, max_iter=args.max_iter, eps=args.eps, delta=args.delta)
    try:
        res = run_pipeline(inst, kind, args.rho, opts)
    except (PresolveError, QpInfeasibleError) as exc:
        raise DataError(str(exc)) from exc
    rec = res.record
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"{rec.instance_id}_{rec.op}"
    _write_json(out / f"{name}.json", res.to_json_dict())
    note = " (variables split)" if res.split else ""
    print(f"{rec.instance_id} {rec.family} op={rec.op}{note} status={rec.status} iters={rec.iters} "
          f"F0={rec.f0_obj:.6g} F={rec.final_obj:.6g} l0 {rec.l0_before}->{rec.l0_after}")
    return EXIT_OK if rec.converged else EXIT_NOT_CONVERGED


# --------------------------------------------------------------------------- bench

def _bench_task(task):
    family, params, seed, rho, op = task
    inst = generate(family, params, seed, rho)
    try:
        return run_pipeline(inst, OPS[op], rho).record
    except Exception as exc:  # recorded, never aborts the sweep
        logger.warning("run %s seed=%d rho=%g op=%s failed: %s", family, seed, rho, op, exc)
        return RunRecord(instance_id(inst), family, inst.n, 0, 0, rho, op, "Error", 0,
                         float("nan"), float("nan"), 0, 0, 0.0)


def sort_records(records):
    return sorted(records, key=lambda r: (r.rho, r.instance_id, OP_ORDER.index(r.op)))


def aggregate(records) -> list[dict]:
    """Mean objective over successful runs per ``(rho, op)``; failures counted separately."""
    rows = []
    for rho in sorted({r.rho for r in records}):
        for op in OP_ORDER:
            sel = [r for r in records if r.rho == rho and r.op == op]
            if not sel:
                continue
            ok = [r for r in sel if r.converged]
            rows.append({
                "rho": rho,
                "op": op,
                "runs": len(sel),
                "successes": len(ok),
                "failures": len(sel) - len(ok),
                "failure_rate": (len(sel) - len(ok)) / len(sel),
                "mean_f0_obj": float(np.mean([r.f0_obj for r in sel])),
                "mean_final_obj": float(np.mean([r.final_obj for r in ok])) if ok else float("nan"),
                "mean_iters": float(np.mean([r.iters for r in ok])) if ok else float("nan"),
            })
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def render_svg(agg_rows: list[dict], title: str = "mean target value vs rho") -> str:
    """Line chart of mean final objective per operator plus the presolve mean."""
    W, H, L, R, T, B = 640, 400, 70, 120, 40, 50
    rhos = sorted({r["rho"] for r in agg_rows})
    series: dict[str, list[tuple[float, float]]] = {}
    pre: dict[float, float] = {}
    for r in agg_rows:
        pre.setdefault(r["rho"], r["mean_f0_obj"])
        if np.isfinite(r["mean_final_obj"]):
            series.setdefault(r["op"], []).append((r["rho"], r["mean_final_obj"]))
    series = {"presolve": sorted(pre.items()), **series}
    ys = [v for pts in series.values() for _, v in pts if np.isfinite(v)]
    if not rhos or not ys:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">'
                f'<text x="10" y="20">no data</text></svg>\n')
    x0, x1 = min(rhos), max(rhos)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return L + (v - x0) / (x1 - x0) * (W - L - R)

    def py(v):
        return H - B - (v - y0) / (y1 - y0) * (H - T - B)

    colors = {"presolve": "#777777", "full": "#1f77b4", "red": "#d62728", "comp": "#2ca02c"}
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for v in rhos:
        out.append(f'<text x="{px(v):.1f}" y="{H - B + 16}" text-anchor="middle" font-size="10">{v:g}</text>')
    for k in range(5):
        v = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{L - 6}" y="{py(v) + 3:.1f}" text-anchor="end" font-size="10">{v:.3g}</text>')
    out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">rho</text>')
    for i, (name, pts) in enumerate(series.items()):
        c = colors.get(name, "#000000")
        path = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
        dash = ' stroke-dasharray="4 3"' if name == "presolve" else ""
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2"{dash} points="{path}"/>')
        for a, b in pts:
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{c}"/>')
        ly = T + 16 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 30}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 34}" y="{ly + 4}" font-size="11">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def run_bench(family: str, params: dict, rhos, runs: int, seed_base: int, ops, jobs: int = 1):
    tasks = [(family, params, seed_base + i, rho, op.value)
             for rho in rhos for i in range(runs) for op in ops]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_bench_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        records = [_bench_task(t) for t in tasks]
    return sort_records(records)


def cmd_bench(args) -> int:
    params = _numeric_params(parse_params(args.params))
    rhos = _float_list(args.rho_list)
    ops = _ops(args.ops)
    if args.runs < 1 or args.jobs < 1:
        raise UsageError("--runs and --jobs must be positive")
    try:
        generate(args.family, params, args.seed_base, rhos[0] if rhos else 1.0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    records = run_bench(args.family, params, rhos, args.runs, args.seed_base, ops, args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "runs.csv", [r.to_row() for r in records], CSV_COLUMNS)
    agg = aggregate(records)
    write_csv(out / "aggregate.csv", agg, list(agg[0].keys()) if agg else ["rho", "op"])
    (out / "chart.svg").write_text(render_svg(agg, f"{args.family}: mean target value vs rho"))
    for row in agg:
        print(f"rho={row['rho']:g} op={row['op']} ok={row['successes']}/{row['runs']} "
              f"F0={row['mean_f0_obj']:.6g} F={row['mean_final_obj']:.6g} iters={row['mean_iters']:.3g}")
    return EXIT_OK


# --------------------------------------------------------------------------- check

def _load_point(path: Path):
    """A :class:`PrimalDualPoint` plus the split flag, from a point or report file."""
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        d = json.loads(path.read_text())
        split = bool(d.get("split", False))
        pt = PrimalDualPoint.from_dict(d.get("final_point", d))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot read point {path}: {exc}") from exc
    return pt, split


def cmd_check(args) -> int:
    inst = resolve_problem(args.problem, args.rho)
    problem = build_spo(inst, args.rho)
    point, split = _load_point(Path(args.point))
    if split or (point.x.size == 2 * problem.n and problem.n and not problem.nonneg):
        problem = split_variables(problem)
    try:
        point.check(problem)
    except ValueError as exc:
        raise DataError(f"point does not match the problem: {exc}") from exc
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = set(checks) - {"licq", "sosc", "bd", "sstat"}
    if unknown:
        raise UsageError(f"unknown checks: {sorted(unknown)}")
    out: dict = {"schema": "v1", "n": problem.n}
    if "sstat" in checks:
        out["sstat_residual"] = s_stationarity_residual(problem, point.x, point.lam, point.mu, args.delta)
    if "licq" in checks:
        rep = analysis.check_sp_licq(problem, point.x, args.delta)
        out["sp_licq"] = {"holds": rep.holds, "gradient_matrix_rank": rep.gradient_matrix_rank,
                          "needed_rank": rep.needed_rank,
                          "smallest_singular_value": rep.smallest_singular_value}
    if "sosc" in checks:
        holds, eig = analysis.check_strong_sp_sosc(problem, point.x, point.lam, point.mu, args.delta)
        out["strong_sp_sosc"] = {"holds": holds, "min_eig": eig}
    if "bd" in checks:
        kind = OPS[args.op]
        try:
            rep = analysis.check_bd_regularity(problem, point, kind)
            out["bd_regularity"] = {"op": kind.value, "regular": rep.regular, "min_sigma": rep.min_sigma,
                                    "elements": rep.elements, "partial": rep.partial}
        except ValueError as exc:
            out["bd_regularity"] = {"op": kind.value, "error": str(exc)}
    print(json.dumps(out, indent=2, sort_keys=True, default=float))
    return EXIT_OK


# --------------------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    params = _numeric_params(parse_params(args.params))
    seed = int(params.pop("seed", args.seed))
    try:
        inst = generate(args.family, params, seed, args.rho)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else Path(f"{args.family}_{seed}.json")
    if out.parent and not out.parent.exists():
        raise FileNotFoundError(str(out.parent))
    print(save_instance(inst, out))
    return EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="l0newton", description="Lagrange-Newton methods for l0-penalized problems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="presolve and run one Newton solve")
    s.add_argument("--problem", nargs="+", required=True,
                   help="instance JSON file, or family:NAME key=value,... (seed=... allowed)")
    s.add_argument("--rho", type=float, default=None, help=_HELP_RHO)
    s.add_argument("--op", choices=OP_ORDER, default="full")
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--delta", type=float, default=1e-4)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="sweep a family over rho values and operators")
    b.add_argument("--family", required=True, choices=["portfolio", "sensing", "logistic"])
    b.add_argument("--params", nargs="*", default=[], help="key=value,... generator parameters")
    b.add_argument("--rho-list", default="1", help="comma-separated rho values; " + _HELP_RHO)
    b.add_argument("--runs", type=int, default=20)
    b.add_argument("--seed-base", type=int, default=0)
    b.add_argument("--ops", default="full,red,comp")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default="bench_out")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check", help="stationarity and regularity checks at a point")
    c.add_argument("--problem", nargs="+", required=True)
    c.add_argument("--point", required=True, help="point JSON or a solve report")
    c.add_argument("--checks", default="licq,sosc,bd,sstat")
    c.add_argument("--rho", type=float, default=None, help=_HELP_RHO)
    c.add_argument("--op", choices=OP_ORDER, default="full", help="operator for the bd check")
    c.add_argument("--delta", type=float, default=1e-4)
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gen", help="write a generated instance to JSON")
    g.add_argument("family", choices=["portfolio", "sensing", "logistic"])
    g.add_argument("params", nargs="*", help="key=value generator parameters, seed=... allowed")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"l0newton: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"l0newton: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"l0newton: cannot access {exc}", file=sys.stderr)
        return EXIT_NOINPUT


if __name__ == "__main__":
    sys.exit(main())
