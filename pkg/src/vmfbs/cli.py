"""Command-line experiment harness.

Subcommands: ``solve`` (run one configuration, write a trace CSV),
``compare`` (run several stepsize rules on the same problem, tabulate
cost counters), ``validate-metrics`` (finite-horizon partial sums of a
metric schedule), ``rate`` (solve plus k*(F_k - F*) decade tails).

Experiment files are JSON with three blocks (problem, solver, output).
Validation is strict: unknown keys are rejected and every message names
the offending field path. Matrices and vectors are inline arrays,
whitespace-delimited numeric files ({"path": ...}), or generated
({"random": {...}}); generation is deterministic from the block's seed,
and --seed N overrides the i-th random block's seed with N+i.

Exit codes: 0 clean, 2 spec or usage error, 3 search failure.
CSV floats carry 17 significant digits so re-parsing is lossless.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .diagnostics import estimate_rate
from .linesearch import RULES, LineSearchConfig
from .metrics import MetricSchedule, bb_schedule, constant_schedule, table_schedule
from .problems import (
    CompositeProblem,
    ConfigurationError,
    UsageError,
    Unsupported,
    as_vector,
)
from .prox import (
    BoxIndicator,
    L1Norm,
    SeparableProx,
    Tv1dNorm,
    ZeroTerm,
    abs_piece,
    interval_piece,
    zero_piece,
)
from .smooth import KLDivergence, PNormResidual
from .solver import SolverConfig, solve

__all__ = ["main", "load_spec", "build_problem", "build_solver_config"]

_SMOOTH_TYPES = ("quadratic", "pnorm", "kl")
_REG_TYPES = ("l1", "box", "tv1d", "zero", "separable")
_METRIC_TYPES = ("constant", "table", "bb")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _check_keys(block: dict, path: str, required=(), optional=()):
    if not isinstance(block, dict):
        raise UsageError(f"{path}: expected an object, got {type(block).__name__}")
    unknown = sorted(set(block) - set(required) - set(optional))
    if unknown:
        raise UsageError(f"{path}: unknown key(s) {unknown}")
    missing = [k for k in required if k not in block]
    if missing:
        raise UsageError(f"{path}: missing required key(s) {missing}")


def _number(block, key, path, default=None, kind=float):
    if key not in block:
        if default is None:
            raise UsageError(f"{path}.{key}: required")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"{path}.{key}: expected a number, got {v!r}")
    return kind(v)


def _bool(block, key, path, default):
    v = block.get(key, default)
    if not isinstance(v, bool):
        raise UsageError(f"{path}.{key}: expected true/false, got {v!r}")
    return v


def _bound(v, path, side: str) -> float:
    # null stands for the missing bound (JSON has no infinity literal)
    if v is None:
        return -np.inf if side == "lo" else np.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"{path}: expected a number or null, got {v!r}")
    return float(v)


class _RandomCounter:
    def __init__(self, override):
        self.override = override
        self.count = 0

    def rng(self, block_seed, path) -> np.random.Generator:
        i = self.count
        self.count += 1
        if self.override is not None:
            return np.random.default_rng(self.override + i)
        if block_seed is None:
            raise UsageError(f"{path}.seed: required (or pass --seed)")
        return np.random.default_rng(block_seed)


def _load_numeric(node, path, counter: _RandomCounter, *, ndim: int) -> np.ndarray:
    """Inline array, {"path": file}, or {"random": {...}} -> ndarray."""
    if isinstance(node, list):
        try:
            arr = np.array(node, dtype=float)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}: not numeric ({exc})") from None
        if arr.ndim != ndim:
            raise UsageError(f"{path}: expected a {ndim}-d array, got shape {arr.shape}")
        return arr
    if isinstance(node, dict) and "path" in node:
        _check_keys(node, path, required=("path",))
        try:
            arr = np.loadtxt(node["path"], dtype=float, ndmin=ndim)
        except OSError as exc:
            raise UsageError(f"{path}: {exc}") from None
        except ValueError as exc:
            raise UsageError(f"{path}: {node['path']} is not numeric ({exc})") from None
        if arr.ndim != ndim:
            raise UsageError(f"{path}: {node['path']} has shape {arr.shape}, expected {ndim}-d")
        return arr
    if isinstance(node, dict) and "random" in node:
        _check_keys(node, path, required=("random",))
        spec = node["random"]
        rpath = f"{path}.random"
        if ndim == 2:
            _check_keys(spec, rpath, required=("rows", "cols"), optional=("seed", "kind"))
            rows = _number(spec, "rows", rpath, kind=int)
            cols = _number(spec, "cols", rpath, kind=int)
            shape = (rows, cols)
        else:
            _check_keys(spec, rpath, required=("size",), optional=("seed", "kind"))
            shape = (_number(spec, "size", rpath, kind=int),)
        if any(s < 1 for s in shape):
            raise UsageError(f"{rpath}: dimensions must be positive, got {shape}")
        kind = spec.get("kind", "gaussian")
        if kind not in ("gaussian", "nonnegative", "positive"):
            raise UsageError(f"{rpath}.kind: expected gaussian|nonnegative|positive, got {kind!r}")
        rng = counter.rng(spec.get("seed"), rpath)
        arr = rng.standard_normal(shape)
        if kind == "nonnegative":
            arr = np.abs(arr)
        elif kind == "positive":
            arr = np.abs(arr) + 0.1
        return arr
    raise UsageError(f"{path}: expected an inline array, {{\"path\": ...}} or {{\"random\": ...}}")


def load_spec(path, seed_override=None) -> dict:
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read spec: {exc}") from None
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    _check_keys(spec, "spec", required=("problem",), optional=("solver", "output"))
    spec.setdefault("solver", {})
    spec.setdefault("output", {})
    _check_keys(
        spec["problem"],
        "problem",
        required=("smooth", "regularizer"),
        optional=("x0", "domain_regime"),
    )
    _check_keys(
        spec["solver"],
        "solver",
        optional=(
            "rule", "delta", "theta", "gamma_max", "lam_max", "sigma", "beta",
            "max_backtracks", "fixed_gamma", "fixed_lam", "warm_start",
            "lam_schedule", "gamma_schedule", "metrics", "max_iterations",
            "tol_fixed_point", "tol_objective_stall", "stall_window", "record_states",
        ),
    )
    _check_keys(spec["output"], "output", optional=("trace", "checks", "f_star"))
    spec["_counter"] = _RandomCounter(seed_override)
    return spec


def build_problem(spec: dict):
    block = spec["problem"]
    counter = spec["_counter"]

    smooth = block["smooth"]
    spath = "problem.smooth"
    if not isinstance(smooth, dict) or "type" not in smooth:
        raise UsageError(f"{spath}: needs a 'type' key")
    stype = smooth["type"]
    if stype not in _SMOOTH_TYPES:
        raise UsageError(f"{spath}.type: expected one of {list(_SMOOTH_TYPES)}, got {stype!r}")
    extra = ("p",) if stype == "pnorm" else ()
    _check_keys(smooth, spath, required=("type", "matrix", "b"), optional=extra)
    a = _load_numeric(smooth["matrix"], f"{spath}.matrix", counter, ndim=2)
    b = _load_numeric(smooth["b"], f"{spath}.b", counter, ndim=1)
    if stype == "quadratic":
        f = PNormResidual(a, b, p=2.0)
    elif stype == "pnorm":
        f = PNormResidual(a, b, p=_number(smooth, "p", spath))
    else:
        f = KLDivergence(a, b)
    n = a.shape[1]

    reg = block["regularizer"]
    rpath = "problem.regularizer"
    if not isinstance(reg, dict) or "type" not in reg:
        raise UsageError(f"{rpath}: needs a 'type' key")
    rtype = reg["type"]
    if rtype not in _REG_TYPES:
        raise UsageError(f"{rpath}.type: expected one of {list(_REG_TYPES)}, got {rtype!r}")
    if rtype == "l1":
        _check_keys(reg, rpath, required=("type", "weight"))
        g = L1Norm(_number(reg, "weight", rpath))
    elif rtype == "box":
        _check_keys(reg, rpath, required=("type",), optional=("lo", "hi"))
        lo = reg.get("lo")
        hi = reg.get("hi")
        lo = (
            np.array([_bound(v, f"{rpath}.lo[{i}]", "lo") for i, v in enumerate(lo)])
            if isinstance(lo, list)
            else _bound(lo, f"{rpath}.lo", "lo")
        )
        hi = (
            np.array([_bound(v, f"{rpath}.hi[{i}]", "hi") for i, v in enumerate(hi)])
            if isinstance(hi, list)
            else _bound(hi, f"{rpath}.hi", "hi")
        )
        g = BoxIndicator(lo, hi)
    elif rtype == "tv1d":
        _check_keys(reg, rpath, required=("type", "weight"))
        g = Tv1dNorm(_number(reg, "weight", rpath))
    elif rtype == "zero":
        _check_keys(reg, rpath, required=("type",))
        g = ZeroTerm()
    else:
        _check_keys(reg, rpath, required=("type", "pieces"))
        pieces_spec = reg["pieces"]
        if not isinstance(pieces_spec, list) or len(pieces_spec) != n:
            raise UsageError(
                f"{rpath}.pieces: expected a list of length {n} (one per coordinate)"
            )
        pieces = []
        for i, p in enumerate(pieces_spec):
            ppath = f"{rpath}.pieces[{i}]"
            if not isinstance(p, dict) or "kind" not in p:
                raise UsageError(f"{ppath}: needs a 'kind' key")
            kind = p["kind"]
            if kind == "abs":
                _check_keys(p, ppath, required=("kind", "weight"))
                pieces.append(abs_piece(_number(p, "weight", ppath)))
            elif kind == "interval":
                _check_keys(p, ppath, required=("kind",), optional=("lo", "hi"))
                pieces.append(
                    interval_piece(_bound(p.get("lo"), f"{ppath}.lo", "lo"),
                                   _bound(p.get("hi"), f"{ppath}.hi", "hi"))
                )
            elif kind == "zero":
                _check_keys(p, ppath, required=("kind",))
                pieces.append(zero_piece())
            else:
                raise UsageError(f"{ppath}.kind: expected abs|interval|zero, got {kind!r}")
        g = SeparableProx(pieces)

    regime = block.get("domain_regime", "standard")
    problem = CompositeProblem(f=f, g=g, dimension=n, domain_regime=regime)

    if "x0" in block:
        x0 = as_vector(
            _load_numeric(block["x0"], "problem.x0", counter, ndim=1), n
        )
    else:
        x0 = np.zeros(n)
    return problem, x0


def _build_metrics(solver_block: dict, n: int) -> MetricSchedule | None:
    if "metrics" not in solver_block:
        return None
    m = solver_block["metrics"]
    mpath = "solver.metrics"
    if not isinstance(m, dict) or "type" not in m:
        raise UsageError(f"{mpath}: needs a 'type' key")
    mtype = m["type"]
    if mtype not in _METRIC_TYPES:
        raise UsageError(f"{mpath}.type: expected one of {list(_METRIC_TYPES)}, got {mtype!r}")
    budgets = ("growth_budget", "spread_budget")
    if mtype == "constant":
        _check_keys(m, mpath, required=("type", "weights"), optional=budgets)
        w = np.array(m["weights"], dtype=float)
        if w.ndim != 1:
            raise UsageError(f"{mpath}.weights: expected a flat array")
        return constant_schedule(w)
    if mtype == "table":
        _check_keys(
            m, mpath, required=("type", "weights", "nu", "mu", "regime"),
            optional=("extend",) + budgets,
        )
        rows = m["weights"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise UsageError(f"{mpath}.weights: expected a list of weight rows")
        return table_schedule(
            [np.array(r, dtype=float) for r in rows],
            nu=_number(m, "nu", mpath),
            mu=_number(m, "mu", mpath),
            regime=m["regime"],
            extend=m.get("extend", "hold"),
        )
    _check_keys(m, mpath, required=("type", "nu", "mu"), optional=("eta0",) + budgets)
    return bb_schedule(
        n,
        nu=_number(m, "nu", mpath),
        mu=_number(m, "mu", mpath),
        eta0=_number(m, "eta0", mpath, default=1.0),
    )


def build_solver_config(spec: dict, n: int) -> SolverConfig:
    s = spec["solver"]
    out = spec["output"]
    path = "solver"
    rule = s.get("rule", "ls1")
    if rule not in RULES:
        raise UsageError(f"{path}.rule: expected one of {list(RULES)}, got {rule!r}")
    ls_kwargs = dict(
        rule=rule,
        delta=_number(s, "delta", path, default=0.5),
        theta=_number(s, "theta", path, default=0.5),
        gamma_max=_number(s, "gamma_max", path, default=1.0),
        lam_max=_number(s, "lam_max", path, default=1.0),
        sigma=_number(s, "sigma", path, default=1.0),
        beta=_number(s, "beta", path, default=0.5),
        max_backtracks=_number(s, "max_backtracks", path, default=60, kind=int),
        warm_start=_bool(s, "warm_start", path, False),
    )
    if "fixed_gamma" in s:
        ls_kwargs["fixed_gamma"] = _number(s, "fixed_gamma", path)
    if "fixed_lam" in s:
        ls_kwargs["fixed_lam"] = _number(s, "fixed_lam", path)
    try:
        ls = LineSearchConfig(**ls_kwargs)
    except (UsageError, ConfigurationError) as exc:
        raise UsageError(f"{path}: {exc}") from None

    kwargs = dict(
        linesearch=ls,
        metrics=_build_metrics(s, n),
        max_iterations=_number(s, "max_iterations", path, default=1000, kind=int),
        tol_fixed_point=_number(s, "tol_fixed_point", path, default=0.0),
        tol_objective_stall=_number(s, "tol_objective_stall", path, default=0.0),
        stall_window=_number(s, "stall_window", path, default=50, kind=int),
        record_checks=_bool(out, "checks", "output", True),
        record_states=_bool(s, "record_states", path, False),
    )
    if "lam_schedule" in s:
        kwargs["lam_schedule"] = _number(s, "lam_schedule", path)
    if "gamma_schedule" in s:
        kwargs["gamma_schedule"] = _number(s, "gamma_schedule", path)
    try:
        return SolverConfig(**kwargs)
    except ConfigurationError as exc:
        raise UsageError(f"{path}: {exc}") from None


_TRACE_HEADER = "k,F,gamma,lambda,backtracks,step_norm,check_max_residual"


def _write_trace_csv(path, trace):
    with open(path, "w") as fh:
        fh.write(_TRACE_HEADER + "\n")
        cols = (
            trace.k, trace.F, trace.gamma, trace.lam,
            trace.backtracks, trace.step_norm, trace.check_max_residual,
        )
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _out_path(args, spec, default_suffix: str) -> str:
    if getattr(args, "out", None):
        return args.out
    configured = spec["output"].get("trace")
    if configured:
        return configured
    stem = args.spec
    if stem.endswith(".json"):
        stem = stem[: -len(".json")]
    return stem + default_suffix


def cmd_solve(args) -> int:
    spec = load_spec(args.spec, seed_override=args.seed)
    problem, x0 = build_problem(spec)
    config = build_solver_config(spec, problem.dimension)
    result = solve(problem, x0, config)
    out = _out_path(args, spec, "_trace.csv")
    _write_trace_csv(out, result.trace)
    print(
        f"{result.termination} after {len(result.trace)} iterations, "
        f"F = {result.F_final:.17g}; trace -> {out}"
    )
    if result.termination == "search_failure":
        print(f"search failure detail: {result.failure}", file=sys.stderr)
        return 3
    return 0


_COMPARE_HEADER = (
    "rule,termination,iterations,f_evals,grad_evals,prox_evals,min_gamma,min_lambda,F_final"
)


def cmd_compare(args) -> int:
    spec = load_spec(args.spec, seed_override=args.seed)
    problem, x0 = build_problem(spec)
    base = build_solver_config(spec, problem.dimension)
    if args.rules:
        rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    else:
        rules = ["ls1", "ls2", "ls3", "ls4", "tseng-yun"]
    for r in rules:
        if r not in RULES:
            raise UsageError(f"--rules: expected names from {list(RULES)}, got {r!r}")

    lines = [_COMPARE_HEADER]
    for rule in rules:
        try:
            ls = dataclasses.replace(base.linesearch, rule=rule)
            config = dataclasses.replace(base, linesearch=ls)
            result = solve(problem, x0, config)
            trace = result.trace
            lines.append(",".join([
                rule,
                result.termination,
                str(len(trace)),
                str(result.f_evals),
                str(result.grad_evals),
                str(result.prox_evals),
                _fmt(float(np.min(trace.gamma)) if len(trace) else np.nan),
                _fmt(float(np.min(trace.lam)) if len(trace) else np.nan),
                _fmt(result.F_final),
            ]))
        except (UsageError, ConfigurationError, Unsupported) as exc:
            lines.append(",".join([rule, f"error: {exc}".replace(",", ";"),
                                   "0", "0", "0", "0", "nan", "nan", "nan"]))
    table = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0


def cmd_validate_metrics(args) -> int:
    spec = load_spec(args.spec, seed_override=args.seed)
    problem, _ = build_problem(spec)
    schedule = _build_metrics(spec["solver"], problem.dimension)
    if schedule is None:
        schedule = constant_schedule(np.ones(problem.dimension))
    horizon = args.horizon if args.horizon is not None else 200
    if horizon < 1:
        raise UsageError(f"--horizon must be >= 1, got {horizon}")
    mblock = spec["solver"].get("metrics", {})
    from .metrics import validate_growth, validate_spread

    g_budget = mblock.get("growth_budget")
    s_budget = mblock.get("spread_budget")
    print(validate_growth(schedule, horizon, g_budget))
    print(validate_spread(schedule, horizon, s_budget))
    return 0


def cmd_rate(args) -> int:
    if not args.fstar:
        raise UsageError("rate needs --fstar PATH (a text file holding the reference value)")
    try:
        with open(args.fstar) as fh:
            f_star = float(fh.read().strip())
    except OSError as exc:
        raise UsageError(f"cannot read --fstar: {exc}") from None
    except ValueError:
        raise UsageError(f"--fstar file does not hold a single number") from None
    spec = load_spec(args.spec, seed_override=args.seed)
    problem, x0 = build_problem(spec)
    config = build_solver_config(spec, problem.dimension)
    result = solve(problem, x0, config)
    est = estimate_rate(result, f_star)
    out = _out_path(args, spec, "_rate.csv")
    with open(out, "w") as fh:
        fh.write("k,F,r\n")
        for k, F, r in zip(result.trace.k, result.trace.F, est.r):
            fh.write(f"{int(k)},{_fmt(F)},{_fmt(r)}\n")
    for K in sorted(est.tails):
        print(f"sup_{{k>={K}}} k*(F_k - F*) = {est.tails[K]:.17g}")
    print(f"rate table -> {out}")
    return 3 if result.termination == "search_failure" else 0


def _add_common(p, *, out=False, rules=False, horizon=False, fstar=False):
    p.add_argument("--spec", required=True, help="experiment JSON path")
    p.add_argument("--seed", type=int, default=None,
                   help="override seeds of generated problem data")
    if out:
        p.add_argument("--out", default=None, help="output CSV path")
    if rules:
        p.add_argument("--rules", default=None, help="comma-separated rule names")
    if horizon:
        p.add_argument("--horizon", type=int, default=None,
                       help="schedule steps to examine (default 200)")
    if fstar:
        p.add_argument("--fstar", default=None,
                       help="text file holding the reference optimal value")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmfbs",
        description="forward-backward solver experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one configuration and write its trace")
    _add_common(p, out=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="run several stepsize rules, tabulate costs")
    _add_common(p, out=True, rules=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate-metrics", help="partial sums of the metric schedule")
    _add_common(p, horizon=True)
    p.set_defaults(func=cmd_validate_metrics)

    p = sub.add_parser("rate", help="solve and report k*(F_k - F*) decade tails")
    _add_common(p, out=True, fstar=True)
    p.set_defaults(func=cmd_rate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, Unsupported) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
