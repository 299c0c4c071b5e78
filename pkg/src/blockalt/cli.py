"""Command-line entry point.

    blockalt solve   PROBLEM [--method bai|ga|pso] [--n N] [--seed S] ...
    blockalt compare PROBLEM [--n-values 1,2,4,...] [--seed S] ...
    blockalt sample  PROBLEM [--sampler hybrid|grid|lhs|monte_carlo] ...
    blockalt control [SCENARIO] [--controller osap|lqr|both] --out DIR

Exit codes: 0 success, 1 usage or parse error, 2 infeasible or ill-posed input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bai import SolverConfig
from .baselines import MetaConfig, ga_solve, pso_solve
from .expr import ExprError, ParseError, parse, parse_constraint
from .multistart import AllStartsFailed, run as multistart_run
from .problem import Problem, ProblemError
from .sampling import METHODS, SamplerConfig, SamplingError, StartSet, sample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2

DEFAULT_SWEEP = tuple(2**k for k in range(10))  # 1 .. 512


class FormatError(ValueError):
    """Malformed problem or scenario file."""

    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


class UsageError(Exception):
    pass


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _key_lines(text: str):
    """Yield ``(lineno, key, value)``; ``bounds`` rows come as key ``None``."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        key, sep, value = line.partition(":")
        if sep and key.strip().replace("_", "").isalnum() and not key.strip()[0].isdigit():
            yield no, key.strip().lower(), value.strip()
        else:
            yield no, None, line


def parse_problem_text(text: str, path: str = "") -> Problem:
    """Parse the flat problem format (see docs/problem_format.md)."""
    name = ""
    n = None
    bounds: list = []
    cost = None
    constraints: list = []
    in_bounds = False
    cons_lines: list = []
    cost_line = None
    for no, key, value in _key_lines(text):
        if key is None:
            if not in_bounds:
                raise FormatError(f"unexpected line {value!r}", no, path)
            parts = value.split()
            if len(parts) != 2:
                raise FormatError("bounds rows must be 'lo hi'", no, path)
            try:
                bounds.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(f"bad bound value in {value!r}", no, path) from None
            continue
        in_bounds = False
        if key == "name":
            name = value
        elif key == "n":
            if n is not None:
                raise FormatError("duplicate key 'n'", no, path)
            try:
                n = int(value)
            except ValueError:
                raise FormatError(f"n must be an integer, got {value!r}", no, path) from None
            if n < 1:
                raise FormatError("n must be at least 1", no, path)
        elif key == "bounds":
            if bounds:
                raise FormatError("duplicate key 'bounds'", no, path)
            in_bounds = True
            if value:
                raise FormatError("bounds rows go on the following lines", no, path)
        elif key == "cost":
            if cost is not None:
                raise FormatError("duplicate key 'cost'", no, path)
            cost, cost_line = value, no
        elif key == "constraint":
            constraints.append(value)
            cons_lines.append(no)
        else:
            raise FormatError(f"unknown key {key!r}", no, path)
    if n is None:
        raise FormatError("missing key 'n'", None, path)
    if cost is None:
        raise FormatError("missing key 'cost'", None, path)
    if len(bounds) != n:
        raise FormatError(f"expected {n} bounds rows, found {len(bounds)}", None, path)
    try:
        cost_expr = parse(cost, n)
    except ParseError as exc:
        raise FormatError(f"cost: {exc}", cost_line, path) from None
    cons_exprs = []
    for src, no in zip(constraints, cons_lines):
        try:
            cons_exprs.append(parse_constraint(src, n))
        except ParseError as exc:
            raise FormatError(f"constraint: {exc}", no, path) from None
    try:
        return Problem(
            bounds=tuple(bounds),
            cost=cost_expr,
            constraints=tuple(cons_exprs),
            name=name,
            constraint_sources=tuple(constraints),
        )
    except ProblemError as exc:
        raise FormatError(str(exc), None, path) from None


def load_problem(path) -> Problem:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    prob = parse_problem_text(text, str(path))
    if not prob.name:
        prob = replace(prob, name=p.stem)
    return prob


SCENARIO_KEYS = {
    "controller": str,
    "duration": float,
    "t_amb": float,
    "r": float,
    "seed": int,
    "noise_std": float,
    "theta": float,
    "norm": str,
    "n_starts": int,
}


def parse_scenario_text(text: str, path: str = "") -> dict:
    """Parse a scenario file into keyword arguments for :class:`Scenario`.

    ``controller`` may also be ``both``; the caller expands it.
    """
    out: dict = {}
    for no, key, value in _key_lines(text):
        if key is None:
            raise FormatError(f"unexpected line {value!r}", no, path)
        if key not in SCENARIO_KEYS:
            raise FormatError(f"unknown key {key!r}", no, path)
        if key in out:
            raise FormatError(f"duplicate key {key!r}", no, path)
        try:
            v = SCENARIO_KEYS[key](value)
        except ValueError:
            raise FormatError(f"bad value for {key}: {value!r}", no, path) from None
        if isinstance(v, float) and not math.isfinite(v):
            raise FormatError(f"{key} must be finite", no, path)
        out["T_amb" if key == "t_amb" else key] = v
    return out


def load_scenario(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario_text(text, str(path))


def _clean(obj):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False)


def _emit(data: dict, out: Optional[str], summary: list) -> None:
    text = dumps(data) + "\n"
    if out:
        Path(out).write_text(text)
        for line in summary:
            print(line)
    else:
        sys.stdout.write(text)
        for line in summary:
            print(line, file=sys.stderr)


def _workers(args) -> int:
    if args.workers is not None:
        w = args.workers
    else:
        env = os.environ.get("BLOCKALT_WORKERS", "1")
        try:
            w = int(env)
        except ValueError:
            raise UsageError(f"BLOCKALT_WORKERS must be an integer, got {env!r}") from None
    if w < 1:
        raise UsageError("workers must be at least 1")
    return w


def _solver_config(args) -> SolverConfig:
    kw = {}
    if args.x_tol is not None:
        kw["x_tol"] = args.x_tol
    if args.cost_tol is not None:
        kw["cost_tol"] = args.cost_tol
    if args.max_iters is not None:
        kw["max_iterations"] = args.max_iters
    for k, v in kw.items():
        if not v > 0:
            raise UsageError(f"--{k.replace('_', '-')} must be positive")
    return SolverConfig(**kw)


def _starts(p: Problem, n: int, seed: int, method: str) -> StartSet:
    try:
        return sample(p, SamplerConfig(n_points=n, method=method, seed=seed))
    except SamplingError as exc:
        raise SamplingError(f"no feasible start found: {exc}") from None


def cmd_solve(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    p = load_problem(args.problem)
    cfg = _solver_config(args)
    workers = _workers(args)
    starts = _starts(p, args.n, args.seed, args.sampler)
    if args.method == "bai":
        rep = multistart_run(p, starts.points, cfg, workers)
    else:
        meta = MetaConfig(seed=args.seed)
        if args.max_iters is not None:
            meta = replace(meta, max_iterations=args.max_iters)
        rep = (ga_solve if args.method == "ga" else pso_solve)(p, starts.points, meta)
    if not rep.best_feasible:
        print("error: no feasible point found by " + args.method, file=sys.stderr)
        return EXIT_INFEASIBLE
    data = rep.to_json()
    data["problem"] = p.name
    data["seed"] = args.seed
    data["sampler"] = args.sampler
    summary = [
        "best point: " + " ".join(repr(v) for v in rep.best_point),
        f"best cost: {rep.best_cost!r}",
    ]
    _emit(data, args.out, summary)
    return EXIT_OK


def _parse_n_values(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--n-values must be comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise UsageError("--n-values entries must be at least 1")
    return vals


def compare_methods(
    p: Problem,
    n_values=DEFAULT_SWEEP,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    workers: int = 1,
    reference: Optional[tuple] = None,
    reference_n: int = 256,
    cost_tol: float = 1e-4,
    point_tol: float = 1e-3,
    methods=("bai", "pso", "ga"),
    sampler: str = "hybrid",
) -> dict:
    """Run every method on the same start set for each ``N``.

    A run succeeds when its best feasible point is within ``cost_tol`` of the
    reference cost and ``point_tol`` of the reference point per coordinate.
    The reference defaults to multistart bai with ``reference_n`` starts.
    """
    if reference is None:
        ref_starts = sample(p, SamplerConfig(reference_n, sampler, seed))
        ref = multistart_run(p, ref_starts.points, cfg, workers)
        reference = (ref.best_point, ref.best_cost)
        ref_n = reference_n
    else:
        ref_n = None
    ref_x = np.asarray(reference[0], dtype=float)
    ref_c = float(reference[1])
    rows = []
    for N in n_values:
        starts = sample(p, SamplerConfig(N, sampler, seed)).points
        for m in methods:
            t0 = time.perf_counter()
            if m == "bai":
                rep = multistart_run(p, starts, cfg, workers)
            elif m == "ga":
                rep = ga_solve(p, starts, MetaConfig(seed=seed))
            else:
                rep = pso_solve(p, starts, MetaConfig(seed=seed))
            wall = time.perf_counter() - t0
            if rep.best_feasible:
                perr = float(np.max(np.abs(np.asarray(rep.best_point) - ref_x)))
                cerr = abs(rep.best_cost - ref_c)
                ok = perr <= point_tol and cerr <= cost_tol
            else:
                perr = cerr = math.inf
                ok = False
            rows.append(
                {
                    "n": N,
                    "method": m,
                    "success": ok,
                    "best_cost": rep.best_cost if rep.best_feasible else None,
                    "best_point": list(rep.best_point) if rep.best_feasible else None,
                    "cost_error": cerr,
                    "point_error": perr,
                    "wall_time": wall,
                }
            )
    success = {m: [r["success"] for r in rows if r["method"] == m] for m in methods}
    timing = {m: [r["wall_time"] for r in rows if r["method"] == m] for m in methods}
    first = {}
    for m in methods:
        hits = [N for N, s in zip(n_values, success[m]) if s]
        first[m] = hits[0] if hits else None
    return {
        "schema_version": 1,
        "problem": p.name,
        "seed": seed,
        "sampler": sampler,
        "n_values": list(n_values),
        "tolerances": {"cost": cost_tol, "point": point_tol},
        "reference": {"point": list(ref_x), "cost": ref_c, "n": ref_n},
        "rows": rows,
        "series": {"success": success, "wall_time": timing},
        "first_success_n": first,
    }


def cmd_compare(args) -> int:
    n_values = _parse_n_values(args.n_values) if args.n_values else DEFAULT_SWEEP
    p = load_problem(args.problem)
    cfg = _solver_config(args)
    workers = _workers(args)
    if args.reference_n < 1:
        raise UsageError("--reference-n must be at least 1")
    try:
        data = compare_methods(
            p, n_values, args.seed, cfg, workers,
            reference_n=args.reference_n, sampler=args.sampler,
        )
    except SamplingError as exc:
        raise SamplingError(f"no feasible start found: {exc}") from None
    summary = [
        f"{m}: first success at N = {n}" if n else f"{m}: no success in sweep"
        for m, n in data["first_success_n"].items()
    ]
    _emit(data, args.out, summary)
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    p = load_problem(args.problem)
    ss = sample(p, SamplerConfig(args.n, args.sampler, args.seed))
    data = ss.to_json()
    data["problem"] = p.name
    _emit(data, args.out, [f"{len(ss)} points ({args.sampler})"])
    return EXIT_OK


def cmd_control(args) -> int:
    from .control import Scenario, run_closed_loop

    kw = load_scenario(args.scenario) if args.scenario else {}
    if args.controller is not None:
        kw["controller"] = args.controller
    if args.duration is not None:
        kw["duration"] = args.duration
    if args.seed is not None:
        kw["seed"] = args.seed
    which = kw.pop("controller", "both")
    if which == "both":
        controllers = ("osap", "lqr")
    elif which in ("osap", "lqr"):
        controllers = (which,)
    else:
        raise UsageError(f"unknown controller {which!r} (expected osap, lqr or both)")
    try:
        scenarios = [Scenario(controller=c, **kw) for c in controllers]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        tele = run_closed_loop(sc)
        stem = out / f"telemetry_{sc.controller}"
        Path(f"{stem}.json").write_text(dumps(tele.to_json()) + "\n")
        Path(f"{stem}.csv").write_text(tele.to_csv())
        flagged = sum(tele.fallback)
        last = f", final y = {tele.y[-1]:.3f}" if len(tele) else ""
        print(f"{sc.controller}: {len(tele)} ticks, {flagged} flagged{last} -> {stem}.json")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sp, problem=True):
    if problem:
        sp.add_argument("problem", help="problem file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="output file (default: JSON to stdout)")
    sp.add_argument("--sampler", choices=METHODS, default="hybrid")


def _add_tols(sp):
    sp.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: $BLOCKALT_WORKERS or 1)")
    sp.add_argument("--x-tol", type=float, default=None)
    sp.add_argument("--cost-tol", type=float, default=None)
    sp.add_argument("--max-iters", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="blockalt", description="Block-alternating constrained optimization.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("solve", help="solve a problem file")
    _add_common(sp)
    _add_tols(sp)
    sp.add_argument("--method", choices=("bai", "ga", "pso"), default="bai")
    sp.add_argument("--n", type=int, default=32, help="number of starting points")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("compare", help="sweep start counts for bai, PSO and GA")
    _add_common(sp)
    _add_tols(sp)
    sp.add_argument("--n-values", help="comma-separated start counts (default 1,2,4,...,512)")
    sp.add_argument("--reference-n", type=int, default=256,
                    help="starts for the reference bai run")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sample", help="emit a start set")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=32)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("control", help="run the closed-loop thermal demo")
    sp.add_argument("scenario", nargs="?", help="scenario file (default scenario if omitted)")
    sp.add_argument("--controller", help="osap, lqr or both")
    sp.add_argument("--duration", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default=".", help="output directory")
    sp.set_defaults(func=cmd_control)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SamplingError, AllStartsFailed, ProblemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
