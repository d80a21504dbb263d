"""KL-regularized stochastic optimal control on finite-horizon tabular problems."""

from .desirability import (
    ComponentSet,
    Composition,
    Desirability,
    compose,
    from_desirability,
    linear_backward,
    path_integral_estimate,
    policy_from_desirability,
    to_desirability,
)
from .iterate import IterationTrace, NonDescentError, em_solve, mm_solve
from .model import (
    ControlProblem,
    Policy,
    ProblemValidationError,
    SupportViolationError,
    Trajectory,
    TransitionKernel,
    cumulative_cost,
    state_marginals,
    trajectory_kl,
    trajectory_log_prob,
    validate_problem,
)
from .oracle import (
    EnumerationCapError,
    TrajectoryTable,
    brute_force_policy_search,
    conditional_policy,
    enumerate_trajectories,
    exact_posterior,
    exact_risk_objective,
    tilt_table,
)
from .problem_io import (
    ProblemFormatError,
    bundled_problem_path,
    dump_problem,
    load_bundled_problem,
    load_problem,
)
from .risk import RiskParam, dual_certificate, entropic_risk, tilted_distribution
from .solvers import (
    Formulation,
    Solution,
    central_policy_value,
    evaluate_objective,
    initial_value,
    regularized_policy_value,
    solve_central,
    solve_formulation,
)

__all__ = [
    "ComponentSet",
    "Composition",
    "ControlProblem",
    "Desirability",
    "EnumerationCapError",
    "Formulation",
    "IterationTrace",
    "NonDescentError",
    "Policy",
    "ProblemFormatError",
    "ProblemValidationError",
    "RiskParam",
    "Solution",
    "SupportViolationError",
    "Trajectory",
    "TrajectoryTable",
    "TransitionKernel",
    "brute_force_policy_search",
    "bundled_problem_path",
    "central_policy_value",
    "compose",
    "conditional_policy",
    "cumulative_cost",
    "dual_certificate",
    "dump_problem",
    "em_solve",
    "entropic_risk",
    "enumerate_trajectories",
    "evaluate_objective",
    "exact_posterior",
    "exact_risk_objective",
    "from_desirability",
    "initial_value",
    "linear_backward",
    "load_bundled_problem",
    "load_problem",
    "mm_solve",
    "path_integral_estimate",
    "policy_from_desirability",
    "regularized_policy_value",
    "solve_central",
    "solve_formulation",
    "state_marginals",
    "tilt_table",
    "tilted_distribution",
    "to_desirability",
    "trajectory_kl",
    "trajectory_log_prob",
    "validate_problem",
]

__version__ = "0.1.0"
