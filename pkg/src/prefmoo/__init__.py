"""Preference-guided multi-objective optimization with cone orders and linear objective constraints."""

from .bench import RunOutcome, SuiteReport, run_suite, uniform_preference_rays
from .cone import (
    TRADE_OFF_RAYS,
    Cone,
    ConeError,
    contains,
    controlled_ascent_cone,
    dominates,
    extreme_rays,
    ray_to_equality,
    rays_to_halfspaces,
    two_points_to_equality,
)
from .metrics import (
    hypervolume,
    nondominated_filter,
    pf_distance_synthetic,
    relative_loss_profile,
    synthetic_front,
)
from .problem import (
    DimensionError,
    Preference,
    Problem,
    check_jacobian,
    constant_problem,
    eval_constraints,
    finite_sum_problem,
    quadratic_problem,
    synthetic_concave,
)
from .solvers import (
    ConfigError,
    IterateRecord,
    RunReport,
    SolverAbort,
    SolverConfig,
    initial_point,
    pareto_stationarity,
    run,
    run_linear_scalarization,
    run_meta,
    run_single_loop,
    run_stochastic,
)
from .subproblem import (
    DomainError,
    Multipliers,
    NumericalError,
    SubproblemContext,
    SubproblemResult,
    kkt_residual,
    phi_gradient,
    phi_gradient_estimate,
    phi_value,
    project_multipliers,
    project_weighted_simplex,
    solve_pgd,
    solve_subproblem,
)

__version__ = "0.1.0"
