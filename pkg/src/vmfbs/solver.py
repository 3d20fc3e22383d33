"""The variable-metric forward-backward outer loop.

Per iteration k: emit the metric W_k, run the configured stepsize rule
(preceded by the domain search in the general regime), update
x_{k+1} = x_k + lam_k (y_k - x_k), record the trace row, and evaluate
the stopping rules. Execution is fully deterministic.

Two operating regimes:

- backtracking rules (ls1/ls2/ls3/ls4/tseng-yun) need no Lipschitz
  constant; the a-priori sequence (lam_k for ls1/ls3, gamma_k for the
  others) comes from a user schedule, except in the general domain
  regime where the per-iteration domain search produces gamma_k for the
  lam-backtracking rules and the backtracking start for ls1/ls3.
- fixed-step mode runs no acceptance test and instead requires a known
  global L with sup_k gamma lam / nu_k strictly below 2/L, validated
  up front by :func:`fixed_step_validate`.

The recorded per-iteration residuals (descent inequality, sufficient
decrease) are signed; nonpositive means the inequality holds. For the
checkers' use, fixed-step runs carry the effective delta
L * sup(gamma lam / nu) / 2 under which the sufficient-decrease chain
holds, and Tseng-Yun runs carry 1 - (1-beta) sigma.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .diagnostics import CheckReport
from .linesearch import (
    EvalCounts,
    LineSearchConfig,
    StepOutcome,
    domain_search,
    fb_step,
    ls1_search,
    ls2_search,
    ls3_search,
    ls4_search,
    tseng_yun_search,
)
from .metrics import MetricSchedule, StepSnapshot, constant_schedule, metric_norm_sq
from .problems import (
    CompositeProblem,
    ConfigurationError,
    SearchFailure,
    UsageError,
    as_vector,
)

__all__ = [
    "TERMINATIONS",
    "SolverConfig",
    "IterateTrace",
    "Trace",
    "States",
    "SolveResult",
    "FixedStepReport",
    "fixed_step_validate",
    "stopping_check",
    "solve",
]

TERMINATIONS = ("fixed_point", "max_iter", "objective_stall", "search_failure")


class IterateTrace(NamedTuple):
    """One iteration record.

    ``F`` is F(x_k) before the update. ``mapping_norm`` is
    ||y_k - x_k||_k / gamma_k (the prox-gradient mapping norm) and
    ``fp_scaled`` is ||y_k - x_k||_k / (1 + ||x_k||), the quantity the
    fixed-point stopping rule thresholds. The two check residuals are
    signed (<= 0 means the inequality holds); ``check_max_residual`` is
    their maximum divided by 1 + |F(x_k)|, NaN when checks are off.
    ``domain_gamma`` is the gamma accepted by the domain search, NaN in
    the standard regime.
    """

    k: int
    F: float
    gamma: float
    lam: float
    backtracks: int
    step_norm: float
    mapping_norm: float
    fp_scaled: float
    descent_residual: float
    decrease_residual: float
    check_max_residual: float
    domain_gamma: float
    f_evals: int
    grad_evals: int
    prox_evals: int


_INT_COLUMNS = {"k", "backtracks", "f_evals", "grad_evals", "prox_evals"}


class Trace(Sequence):
    """Per-iteration records, stored columnar, viewed as IterateTrace rows.

    ``trace[i]`` materializes row i; ``trace.F``, ``trace.gamma`` etc.
    expose whole columns as arrays (cheap even for million-row runs).
    """

    def __init__(self, columns: dict):
        self._columns = {
            name: np.asarray(vals, dtype=int if name in _INT_COLUMNS else float)
            for name, vals in columns.items()
        }
        lengths = {len(c) for c in self._columns.values()}
        if len(lengths) > 1:
            raise UsageError("trace columns have inconsistent lengths")
        self._n = lengths.pop() if lengths else 0

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self._n))]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        cols = self._columns
        return IterateTrace(*(
            int(cols[name][i]) if name in _INT_COLUMNS else float(cols[name][i])
            for name in IterateTrace._fields
        ))

    def column(self, name: str) -> np.ndarray:
        return self._columns[name]

    def __getattr__(self, name: str):
        columns = object.__getattribute__(self, "_columns")
        if name in columns:
            return columns[name]
        raise AttributeError(name)


@dataclass
class States:
    """Full iterate history for diagnostic-grade runs.

    xs is (T+1) x n (x_0 through x_T), ys is T x n (the unrelaxed prox
    points), weights is (T+1) x n (the metric of each iteration plus the
    one that would have been emitted next, so transition k uses rows k
    and k+1).
    """

    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray


@dataclass
class SolverConfig:
    """Loop configuration around a LineSearchConfig.

    ``lam_schedule`` feeds ls1/ls3 (values in (0,1]); ``gamma_schedule``
    feeds ls2/ls4/tseng-yun (positive values), defaulting to the
    constant gamma_max. Either may be a constant or a callable of k.
    ``tol_fixed_point`` = 0 stops only at exact fixed points;
    ``tol_objective_stall`` = 0 disables the stall rule.
    ``record_states`` keeps full iterate history (memory: three arrays
    of (max_iterations+1) x n floats).
    """

    linesearch: LineSearchConfig = field(default_factory=LineSearchConfig)
    metrics: MetricSchedule | None = None
    lam_schedule: float | Callable[[int], float] = 1.0
    gamma_schedule: float | Callable[[int], float] | None = None
    max_iterations: int = 1000
    tol_fixed_point: float = 0.0
    tol_objective_stall: float = 0.0
    stall_window: int = 50
    record_checks: bool = True
    record_states: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.tol_fixed_point < 0:
            raise ConfigurationError("tol_fixed_point must be nonnegative")
        if self.tol_objective_stall < 0:
            raise ConfigurationError("tol_objective_stall must be nonnegative")
        if self.stall_window < 1:
            raise ConfigurationError(f"stall_window must be >= 1, got {self.stall_window}")


@dataclass
class SolveResult:
    x_final: np.ndarray
    F_final: float
    termination: str
    trace: Trace
    verification: dict
    states: States | None = None
    failure: dict | None = None
    delta_effective: float = np.nan
    f_evals: int = 0
    grad_evals: int = 0
    prox_evals: int = 0


@dataclass
class FixedStepReport:
    passed: bool
    margin: float
    sup_ratio: float
    bound: float
    lipschitz: float


def _as_schedule(value, name: str) -> Callable[[int], float]:
    if callable(value):
        return value
    v = float(value)
    return lambda k: v


def _min_nu(schedule: MetricSchedule | None, horizon: int) -> float:
    if schedule is None:
        return 1.0
    if schedule.kind == "constant":
        return schedule.metric_at(0).nu_k
    if schedule.kind == "table":
        steps = min(horizon, schedule.table_length)
        return min(schedule.metric_at(k).nu_k for k in range(steps))
    # stateful or custom schedules: fall back to the declared global bound,
    # which is conservative (nu_k >= nu makes the true sup ratio smaller)
    return schedule.global_nu


def fixed_step_validate(problem: CompositeProblem, config: SolverConfig) -> FixedStepReport:
    """Check sup_k gamma lam / nu_k < 2/L strictly over the horizon."""
    ls = config.linesearch
    if ls.rule != "fixed":
        raise UsageError("fixed_step_validate applies to fixed-step configurations")
    L = problem.f.lipschitz_bound
    if L is None:
        raise ConfigurationError(
            "fixed-step mode needs a smooth term with a known global gradient "
            "Lipschitz constant; use a backtracking rule instead"
        )
    L = float(L)
    nu = _min_nu(config.metrics, config.max_iterations)
    sup_ratio = ls.fixed_gamma * ls.fixed_lam / nu
    bound = np.inf if L == 0.0 else 2.0 / L
    margin = bound - sup_ratio
    return FixedStepReport(
        passed=bool(margin > 0),
        margin=float(margin),
        sup_ratio=float(sup_ratio),
        bound=float(bound),
        lipschitz=L,
    )


def stopping_check(rows: Sequence[IterateTrace], config: SolverConfig) -> str | None:
    """Termination reason from the trailing records, or None to continue.

    Fixed point when the last row's scaled residual is within
    tol_fixed_point; objective stall when the F decrease across the
    trailing stall window is below tol_objective_stall.
    """
    if len(rows) < 1:
        raise UsageError("stopping_check needs at least one recorded iterate")
    last = rows[-1]
    if last.fp_scaled <= config.tol_fixed_point:
        return "fixed_point"
    w = config.stall_window
    if config.tol_objective_stall > 0 and len(rows) > w:
        if rows[-(w + 1)].F - rows[-1].F < config.tol_objective_stall:
            return "objective_stall"
    return None


def _delta_effective(ls: LineSearchConfig, fixed_report: FixedStepReport | None) -> float:
    if ls.rule == "fixed":
        return fixed_report.lipschitz * fixed_report.sup_ratio / 2.0
    if ls.rule == "tseng-yun":
        return 1.0 - (1.0 - ls.beta) * ls.sigma
    return ls.delta


def solve(problem: CompositeProblem, x0, config: SolverConfig | None = None) -> SolveResult:
    """Run VM-FBS from x0 under the given configuration.

    Raises :class:`UsageError` for an infeasible start and
    :class:`ConfigurationError` for unusable configurations; an
    exhausted backtracking budget does not raise but terminates with
    ``termination="search_failure"`` and the offending iteration in
    ``result.failure``.
    """
    if config is None:
        config = SolverConfig()
    ls = config.linesearch
    rule = ls.rule
    x = as_vector(x0, problem.dimension)
    n = x.size
    schedule = config.metrics if config.metrics is not None else constant_schedule(np.ones(n))
    general = problem.domain_regime == "general"

    if not problem.g.in_domain(x):
        raise UsageError("x0 lies outside dom g")
    if general:
        if not problem.f.in_interior_domain(x):
            raise UsageError("x0 must lie in the interior of dom f in the general regime")
        if problem.f.lower_bound is None or problem.g.lower_bound is None:
            raise ConfigurationError(
                "the general regime needs declared lower bounds on both f and g"
            )
        if rule == "fixed":
            raise ConfigurationError(
                "fixed-step mode requires the standard domain regime; the step bound "
                "has no meaning without a global L on dom g"
            )

    fx = problem.f.value(x)
    total_f, total_grad, total_prox = 1, 0, 0
    if not np.isfinite(fx):
        raise UsageError(
            "f(x0) is not finite although x0 is in dom g; "
            "the problem's domain regime looks misdeclared"
        )
    gx = problem.g.value(x)
    if not np.isfinite(gx):
        raise UsageError("g(x0) is not finite")

    fixed_report = None
    if rule == "fixed":
        fixed_report = fixed_step_validate(problem, config)
        if not fixed_report.passed:
            raise ConfigurationError(
                f"fixed-step parameters violate the strict step bound: "
                f"sup gamma*lam/nu = {fixed_report.sup_ratio:.17g} >= "
                f"{fixed_report.bound:.17g} = 2/L"
            )
    delta_eff = _delta_effective(ls, fixed_report)

    lam_at = _as_schedule(config.lam_schedule, "lam_schedule")
    gamma_at = _as_schedule(
        ls.gamma_max if config.gamma_schedule is None else config.gamma_schedule,
        "gamma_schedule",
    )

    cols = {name: [] for name in IterateTrace._fields}
    tail: deque = deque(maxlen=config.stall_window + 1)
    record_states = config.record_states
    xs = [x.copy()] if record_states else None
    ys = [] if record_states else None
    w_rows = [] if record_states else None

    x_prev = None
    grad_prev = None
    w_prev = None
    warm_gamma = None
    warm_lam = None
    termination = "max_iter"
    failure = None

    for k in range(config.max_iterations):
        grad = problem.f.gradient(x)
        nf_k, ngrad_k, nprox_k = 0, 1, 0
        snapshot = None
        if k > 0:
            snapshot = StepSnapshot(dx=x - x_prev, dgrad=grad - grad_prev, prev_weights=w_prev)
        metric = schedule.metric_at(k, snapshot)
        if record_states:
            w_rows.append(metric.weights)

        dom_gamma = np.nan
        try:
            if general:
                dres = domain_search(problem, metric, x, config=ls, grad=grad)
                dom_gamma = dres.gamma
                nf_k += dres.evals.f
                ngrad_k += dres.evals.grad
                nprox_k += dres.evals.prox

            if rule in ("ls1", "ls3"):
                lam_k = float(lam_at(k))
                if not (0 < lam_k <= 1):
                    raise ConfigurationError(f"lam_schedule({k}) = {lam_k} outside (0,1]")
                if general:
                    gamma_start = dom_gamma
                elif ls.warm_start and warm_gamma is not None:
                    gamma_start = min(ls.gamma_max, warm_gamma / ls.theta)
                else:
                    gamma_start = None
                search = ls1_search if rule == "ls1" else ls3_search
                outcome = search(
                    problem,
                    metric,
                    x,
                    lam_k,
                    config=ls,
                    fx=fx,
                    grad=grad,
                    tol_fp=config.tol_fixed_point,
                    gamma_start=gamma_start,
                )
            elif rule in ("ls2", "ls4", "tseng-yun"):
                if general:
                    gamma_k = dom_gamma
                else:
                    gamma_k = float(gamma_at(k))
                    if not (gamma_k > 0 and np.isfinite(gamma_k)):
                        raise ConfigurationError(
                            f"gamma_schedule({k}) = {gamma_k} must be positive and finite"
                        )
                lam_start = None
                if ls.warm_start and warm_lam is not None:
                    lam_start = min(ls.lam_max, warm_lam / ls.theta)
                if rule == "ls2":
                    outcome = ls2_search(
                        problem, metric, x, gamma_k,
                        config=ls, fx=fx, grad=grad,
                        tol_fp=config.tol_fixed_point, lam_start=lam_start,
                    )
                else:
                    search = ls4_search if rule == "ls4" else tseng_yun_search
                    outcome = search(
                        problem, metric, x, gamma_k,
                        config=ls, fx=fx, gx=gx, grad=grad,
                        tol_fp=config.tol_fixed_point, lam_start=lam_start,
                    )
            else:  # fixed
                y, x_next = fb_step(problem, metric, x, ls.fixed_gamma, ls.fixed_lam, grad=grad)
                outcome = StepOutcome(
                    gamma=ls.fixed_gamma,
                    lam=ls.fixed_lam,
                    y=y,
                    x_next=x_next,
                    backtracks=0,
                    accepted_condition="fixed",
                    norm_sq_yx=metric_norm_sq(metric, y - x),
                    evals=EvalCounts(0, 0, 1),
                )
        except SearchFailure as exc:
            termination = "search_failure"
            failure = {"iteration": k, "message": str(exc)}
            failure.update(exc.diagnostics)
            break

        nf_k += outcome.evals.f
        ngrad_k += outcome.evals.grad
        nprox_k += outcome.evals.prox

        x_next = outcome.x_next
        f_next = outcome.f_next
        if f_next is None:
            f_next = problem.f.value(x_next)
            nf_k += 1
        g_next = outcome.g_next
        if g_next is None:
            g_next = problem.g.value(x_next)
        F_here = fx + gx
        F_next = f_next + g_next

        ns = outcome.norm_sq_yx
        root_ns = float(np.sqrt(ns))
        step_norm = float(np.linalg.norm(x_next - x))
        fp_scaled = root_ns / (1.0 + float(np.linalg.norm(x)))

        if config.record_checks:
            ell = outcome.ell
            if ell is None:
                # verification-only evaluation, kept out of the counters
                gy = problem.g.value(outcome.y)
                ell = gy - gx + float((outcome.y - x) @ grad)
            descent_res = ell + ns / outcome.gamma
            decrease_res = (1.0 - delta_eff) * outcome.lam**2 * ns - outcome.gamma * (
                F_here - F_next
            )
            check_max = max(descent_res, decrease_res) / (1.0 + abs(F_here))
        else:
            descent_res = decrease_res = check_max = np.nan

        row = IterateTrace(
            k=k,
            F=F_here,
            gamma=outcome.gamma,
            lam=outcome.lam,
            backtracks=outcome.backtracks,
            step_norm=step_norm,
            mapping_norm=root_ns / outcome.gamma,
            fp_scaled=fp_scaled,
            descent_residual=descent_res,
            decrease_residual=decrease_res,
            check_max_residual=check_max,
            domain_gamma=dom_gamma,
            f_evals=nf_k,
            grad_evals=ngrad_k,
            prox_evals=nprox_k,
        )
        for name, value in zip(IterateTrace._fields, row):
            cols[name].append(value)
        tail.append(row)
        total_f += nf_k
        total_grad += ngrad_k
        total_prox += nprox_k
        if record_states:
            xs.append(x_next.copy())
            ys.append(outcome.y.copy())

        x_prev = x
        grad_prev = grad
        w_prev = metric.weights
        x = x_next
        fx = f_next
        gx = g_next
        warm_gamma = outcome.gamma
        warm_lam = outcome.lam

        reason = stopping_check(tail, config)
        if reason is not None:
            termination = reason
            break

    states = None
    if record_states:
        if len(w_rows) == len(xs) - 1:
            # align: emit the metric of the next (never-run) iteration so
            # transition k can use weight rows k and k+1
            snapshot = None
            if x_prev is not None:
                grad_final = problem.f.gradient(x)  # verification-only
                snapshot = StepSnapshot(
                    dx=x - x_prev, dgrad=grad_final - grad_prev, prev_weights=w_prev
                )
            w_rows.append(schedule.metric_at(len(w_rows), snapshot).weights)
        states = States(
            xs=np.array(xs), ys=np.array(ys).reshape(len(ys), n), weights=np.array(w_rows)
        )

    trace = Trace(cols)
    verification = {}
    if config.record_checks and len(trace) > 0:
        scales = 1.0 + np.abs(trace.F)
        verification["descent"] = CheckReport(
            name="descent",
            residuals=trace.descent_residual,
            scales=scales,
            tolerance=1e-10,
        )
        verification["sufficient_decrease"] = CheckReport(
            name="sufficient_decrease",
            residuals=trace.decrease_residual,
            scales=scales,
            tolerance=1e-10,
        )

    return SolveResult(
        x_final=x,
        F_final=fx + gx,
        termination=termination,
        trace=trace,
        verification=verification,
        states=states,
        failure=failure,
        delta_effective=delta_eff,
        f_evals=total_f,
        grad_evals=total_grad,
        prox_evals=total_prox,
    )
