"""Iterative schemes built on the soft-policy solvers.

``mm_solve`` drives the classical objectives down by repeatedly solving the
soft-policy surrogate with the baseline pinned to the previous iterate
(majorize, then minimize).  ``em_solve`` runs expectation-maximization on the
optimality-likelihood reading of the risk-seeking objective; its iterates
coincide with the synchronized MM fixed-point iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import oracle
from .model import ControlProblem, Policy
from .solvers import (
    Formulation,
    Solution,
    expected_cost_under,
    initial_value,
    rsoc_value,
    solve_formulation,
)

DESCENT_SLACK = 1e-9
MASS_FLOOR = 1e-300


class NonDescentError(RuntimeError):
    """The true objective increased beyond numerical slack; carries the trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of an MM or EM run."""

    surrogate_objective: List[float] = field(default_factory=list)
    true_objective: List[float] = field(default_factory=list)
    policy_delta: List[float] = field(default_factory=list)
    value_delta: List[float] = field(default_factory=list)
    policy_iterates: List[np.ndarray] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def _floor_support(table: np.ndarray) -> np.ndarray:
    """Treat denormal-scale masses as exact zeros and renormalize rows."""
    out = np.where(table < MASS_FLOOR, 0.0, table)
    sums = out.sum(axis=-1, keepdims=True)
    if (sums == 0).any():
        raise AssertionError("policy row lost all support; cannot happen for finite weights")
    return out / sums


def mm_solve(
    problem: ControlProblem,
    target: str,
    lambda_p: float,
    tol: float,
    max_iters: int,
    init_policy: Optional[Policy] = None,
):
    """Majorize-minimize loop for target 'soc' or 'rsoc'.

    Each step solves the soft-policy problem with baseline equal to the
    current iterate and the given policy weight; for 'rsoc' the transition
    weight is the problem's lambda_s.  Returns (final Solution, trace).
    """
    if target not in ("soc", "rsoc"):
        raise ValueError(f"unknown target {target!r}")
    if not lambda_p > 0:
        raise ValueError("lambda_p must be > 0")
    if not tol >= 0:
        raise ValueError("tol must be >= 0")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    form = Formulation.SP_SOC if target == "soc" else Formulation.SP_RSOC

    def true_objective(policy: Policy) -> float:
        if target == "soc":
            return expected_cost_under(problem, policy)
        return rsoc_value(problem, policy, problem.lambda_s)

    pi_k = init_policy if init_policy is not None else problem.baseline_policy
    trace = IterationTrace()
    trace.policy_iterates.append(pi_k.table)
    j_prev = true_objective(pi_k)
    v_prev = None
    solution = None
    for _ in range(max_iters):
        sub = problem.replace(baseline_policy=pi_k, lambda_p=lambda_p)
        solution = solve_formulation(sub, form)
        pi_next = Policy(_floor_support(solution.pi_star.table))
        j_next = true_objective(pi_next)
        delta_pi = float(np.max(np.abs(pi_next.table - pi_k.table)))
        delta_v = (
            float(np.max(np.abs(solution.V - v_prev))) if v_prev is not None else np.inf
        )
        trace.surrogate_objective.append(initial_value(problem, solution))
        trace.true_objective.append(j_next)
        trace.policy_delta.append(delta_pi)
        trace.value_delta.append(delta_v)
        trace.policy_iterates.append(pi_next.table)
        trace.iterations += 1
        if j_next > j_prev + DESCENT_SLACK:
            raise NonDescentError(
                f"objective increased from {j_prev!r} to {j_next!r}", trace
            )
        pi_k, j_prev, v_prev = pi_next, j_next, solution.V
        if delta_pi <= tol:
            trace.converged = True
            break
    solution = Solution(
        solution.formulation, solution.V, solution.Q, pi_k, solution.tau_star
    )
    return solution, trace


def _m_step(posterior: oracle.TrajectoryTable, current: Policy) -> Policy:
    """Posterior conditional action frequencies; zero-mass rows keep current."""
    problem = posterior.problem
    T, S, A = problem.horizon, problem.num_states, problem.num_actions
    joint = np.zeros((T, S, A))
    for t in range(T):
        np.add.at(
            joint[t], (posterior.states[:, t], posterior.actions[:, t]), posterior.probs
        )
    marginal = joint.sum(axis=-1)
    table = current.table.copy()
    reach = marginal > 0
    table[reach] = joint[reach] / marginal[reach][:, None]
    return Policy(table)


def _complete_data_loglik(posterior: oracle.TrajectoryTable, policy: Policy, lam: float) -> float:
    """E_q[log p(trajectory, optimality)] under the new policy, up to the
    normalizing constant of the optimality likelihood."""
    problem = posterior.problem
    with np.errstate(divide="ignore"):
        log_p0 = np.log(problem.initial_distribution[posterior.states[:, 0]])
    total = log_p0 - lam * posterior.costs
    for t in range(problem.horizon):
        x, u = posterior.states[:, t], posterior.actions[:, t]
        y = posterior.states[:, t + 1]
        with np.errstate(divide="ignore"):
            total = total + np.log(policy.table[t][x, u])
            total = total + np.log(problem.baseline_kernels.table[t][x, u, y])
    return float(posterior.probs @ total)


def em_solve(
    problem: ControlProblem,
    lam: float,
    tol: float,
    max_iters: int,
    init_policy: Optional[Policy] = None,
):
    """Expectation-maximization for the optimality-likelihood objective.

    E-step: exact trajectory posterior under the current policy.  M-step:
    conditional action frequencies of that posterior.  The recorded true
    objective is the exponential-utility value, which is non-increasing.
    Returns (Policy, trace); converged is False if max_iters ran out.
    """
    if not lam > 0:
        raise ValueError("the likelihood reading requires lambda > 0")
    pi_k = init_policy if init_policy is not None else problem.baseline_policy
    trace = IterationTrace()
    trace.policy_iterates.append(pi_k.table)
    j_prev = rsoc_value(problem, pi_k, lam)
    for _ in range(max_iters):
        posterior = oracle.exact_posterior(problem, pi_k, lam)
        pi_next = _m_step(posterior, pi_k)
        j_next = rsoc_value(problem, pi_next, lam)
        delta_pi = float(np.max(np.abs(pi_next.table - pi_k.table)))
        trace.surrogate_objective.append(_complete_data_loglik(posterior, pi_next, lam))
        trace.true_objective.append(j_next)
        trace.policy_delta.append(delta_pi)
        trace.value_delta.append(abs(j_next - j_prev))
        trace.policy_iterates.append(pi_next.table)
        trace.iterations += 1
        if j_next > j_prev + DESCENT_SLACK:
            raise NonDescentError(
                f"objective increased from {j_prev!r} to {j_next!r}", trace
            )
        pi_k, j_prev = pi_next, j_next
        if delta_pi <= tol:
            trace.converged = True
            break
    return pi_k, trace
