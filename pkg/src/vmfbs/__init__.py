"""Variable-metric forward-backward splitting with inexact line searches.

Minimizes f + g for smooth f and prox-friendly g under a per-iteration
diagonal metric, with four backtracking stepsize rules, a
sufficient-decrease rule, and a validated fixed-step mode. Diagnostics
re-verify the inequalities each run is supposed to satisfy.
"""

from .diagnostics import (
    CheckReport,
    RateEstimate,
    TraceFrame,
    check_descent_inequality,
    check_quasi_fejer,
    check_stepsize_floor,
    estimate_rate,
    read_trace_csv,
)
from .linesearch import (
    RULES,
    DomainSearchOutcome,
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
from .metrics import (
    DiagonalMetric,
    GrowthReport,
    MetricSchedule,
    SpreadReport,
    StepSnapshot,
    bb_schedule,
    constant_schedule,
    growth_from_weights,
    identity_metric,
    metric_gradient,
    metric_norm,
    metric_norm_sq,
    metric_prox,
    table_schedule,
    validate_growth,
    validate_spread,
)
from .problems import (
    CompositeProblem,
    ConfigurationError,
    DomainError,
    ProxTerm,
    SearchFailure,
    SmoothTerm,
    Unsupported,
    UsageError,
    as_vector,
    eval_gradient,
    eval_objective,
)
from .prox import (
    BoxIndicator,
    L1Norm,
    ScalarPiece,
    SeparableProx,
    Tv1dNorm,
    ZeroTerm,
    abs_piece,
    interval_piece,
    project_box,
    prox_optimality_residual,
    prox_tv1d,
    soft_threshold,
    zero_piece,
)
from .smooth import (
    KLDivergence,
    LinearMap,
    PNormResidual,
    kl_grad,
    kl_value,
    pnorm_grad,
    pnorm_value,
    quadratic_lipschitz,
)
from .solver import (
    TERMINATIONS,
    FixedStepReport,
    IterateTrace,
    SolveResult,
    SolverConfig,
    States,
    Trace,
    fixed_step_validate,
    solve,
    stopping_check,
)

__all__ = [
    "BoxIndicator",
    "CheckReport",
    "CompositeProblem",
    "ConfigurationError",
    "DiagonalMetric",
    "DomainError",
    "DomainSearchOutcome",
    "EvalCounts",
    "FixedStepReport",
    "GrowthReport",
    "IterateTrace",
    "KLDivergence",
    "L1Norm",
    "LineSearchConfig",
    "LinearMap",
    "MetricSchedule",
    "PNormResidual",
    "ProxTerm",
    "RULES",
    "RateEstimate",
    "ScalarPiece",
    "SearchFailure",
    "SeparableProx",
    "SmoothTerm",
    "SolveResult",
    "SolverConfig",
    "SpreadReport",
    "States",
    "StepOutcome",
    "StepSnapshot",
    "TERMINATIONS",
    "Trace",
    "TraceFrame",
    "Tv1dNorm",
    "Unsupported",
    "UsageError",
    "ZeroTerm",
    "abs_piece",
    "as_vector",
    "bb_schedule",
    "check_descent_inequality",
    "check_quasi_fejer",
    "check_stepsize_floor",
    "constant_schedule",
    "domain_search",
    "estimate_rate",
    "eval_gradient",
    "eval_objective",
    "fb_step",
    "fixed_step_validate",
    "growth_from_weights",
    "identity_metric",
    "interval_piece",
    "kl_grad",
    "kl_value",
    "ls1_search",
    "ls2_search",
    "ls3_search",
    "ls4_search",
    "metric_gradient",
    "metric_norm",
    "metric_norm_sq",
    "metric_prox",
    "pnorm_grad",
    "pnorm_value",
    "project_box",
    "prox_optimality_residual",
    "prox_tv1d",
    "quadratic_lipschitz",
    "read_trace_csv",
    "soft_threshold",
    "solve",
    "stopping_check",
    "table_schedule",
    "tseng_yun_search",
    "validate_growth",
    "validate_spread",
    "zero_piece",
]
