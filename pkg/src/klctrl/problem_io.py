"""Problem file loading and dumping.

A problem file is a JSON document with the model tables, optional KL weights
and optional compositional components.  Per-stage tables may be given once
with ``"time_homogeneous": true`` and are expanded to the horizon length.
Unknown keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Optional, Tuple

import numpy as np

from .desirability import ComponentSet
from .model import ControlProblem, Policy, TransitionKernel

REQUIRED_KEYS = {
    "horizon",
    "num_states",
    "num_actions",
    "initial_distribution",
    "transitions",
    "stage_costs",
    "terminal_cost",
}
OPTIONAL_KEYS = {
    "time_homogeneous",
    "baseline_policy",
    "lambda_p",
    "lambda_s",
    "components",
}


class ProblemFormatError(ValueError):
    """The document does not conform to the problem-file schema."""


def _expand(name, value, homogeneous_shape, full_shape, time_homogeneous):
    arr = np.asarray(value, dtype=float)
    if arr.shape == full_shape:
        return arr
    if arr.shape == homogeneous_shape:
        if not time_homogeneous:
            raise ProblemFormatError(
                f"{name} is stage-free but \"time_homogeneous\" is not set"
            )
        return np.broadcast_to(arr, full_shape).copy()
    raise ProblemFormatError(
        f"{name} has shape {arr.shape}; expected {full_shape} or {homogeneous_shape}"
    )


def parse_problem(doc: dict) -> Tuple[ControlProblem, Optional[ComponentSet]]:
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem file must be a JSON object")
    unknown = set(doc) - REQUIRED_KEYS - OPTIONAL_KEYS
    if unknown:
        raise ProblemFormatError(f"unknown keys: {sorted(unknown)}")
    missing = REQUIRED_KEYS - set(doc)
    if missing:
        raise ProblemFormatError(f"missing keys: {sorted(missing)}")
    try:
        T = int(doc["horizon"])
        S = int(doc["num_states"])
        A = int(doc["num_actions"])
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"bad integer field: {exc}") from exc
    homogeneous = bool(doc.get("time_homogeneous", False))
    try:
        transitions = _expand(
            "transitions", doc["transitions"], (S, A, S), (T, S, A, S), homogeneous
        )
        stage_costs = _expand(
            "stage_costs", doc["stage_costs"], (S, A), (T, S, A), homogeneous
        )
        policy_doc = doc.get("baseline_policy")
        if policy_doc is None:
            baseline_policy = np.full((T, S, A), 1.0 / A)
        else:
            baseline_policy = _expand(
                "baseline_policy", policy_doc, (S, A), (T, S, A), homogeneous
            )
        initial = np.asarray(doc["initial_distribution"], dtype=float)
        terminal = np.asarray(doc["terminal_cost"], dtype=float)
        if initial.shape != (S,):
            raise ProblemFormatError("initial_distribution must have one entry per state")
        if terminal.shape != (S,):
            raise ProblemFormatError("terminal_cost must have one entry per state")
        problem = ControlProblem(
            horizon=T,
            num_states=S,
            num_actions=A,
            initial_distribution=initial,
            baseline_kernels=TransitionKernel(transitions),
            baseline_policy=Policy(baseline_policy),
            stage_costs=stage_costs,
            terminal_cost=terminal,
            lambda_p=None if doc.get("lambda_p") is None else float(doc["lambda_p"]),
            lambda_s=None if doc.get("lambda_s") is None else float(doc["lambda_s"]),
        )
    except ProblemFormatError:
        raise
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from exc
    components = None
    if "components" in doc:
        entries = doc["components"]
        if not isinstance(entries, list) or not entries:
            raise ProblemFormatError("components must be a nonempty list")
        costs, gammas = [], []
        for i, entry in enumerate(entries):
            if set(entry) != {"terminal_cost", "gamma"}:
                raise ProblemFormatError(
                    f"components[{i}] must have exactly terminal_cost and gamma"
                )
            tc = np.asarray(entry["terminal_cost"], dtype=float)
            if tc.shape != (S,):
                raise ProblemFormatError(
                    f"components[{i}].terminal_cost must have one entry per state"
                )
            costs.append(tc)
            gammas.append(float(entry["gamma"]))
        components = ComponentSet(np.stack(costs), np.asarray(gammas))
    return problem, components


def load_problem(path) -> Tuple[ControlProblem, Optional[ComponentSet]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"invalid JSON: {exc}") from exc
    return parse_problem(doc)


def problem_to_dict(
    problem: ControlProblem, components: Optional[ComponentSet] = None
) -> dict:
    doc = {
        "horizon": problem.horizon,
        "num_states": problem.num_states,
        "num_actions": problem.num_actions,
        "initial_distribution": problem.initial_distribution.tolist(),
        "transitions": problem.baseline_kernels.table.tolist(),
        "stage_costs": problem.stage_costs.tolist(),
        "terminal_cost": problem.terminal_cost.tolist(),
        "baseline_policy": problem.baseline_policy.table.tolist(),
    }
    if problem.lambda_p is not None:
        doc["lambda_p"] = problem.lambda_p
    if problem.lambda_s is not None:
        doc["lambda_s"] = problem.lambda_s
    if components is not None:
        doc["components"] = [
            {"terminal_cost": tc.tolist(), "gamma": float(g)}
            for tc, g in zip(components.terminal_costs, components.gammas)
        ]
    return doc


def dump_problem(problem: ControlProblem, path, components=None) -> None:
    # json serializes floats with repr, which round-trips exactly.
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem, components), fh, indent=2)
        fh.write("\n")


def bundled_problem_path(name: str):
    """Path to one of the example problems shipped with the package."""
    path = resources.files("klctrl").joinpath("problems", f"{name}.json")
    if not path.is_file():
        raise FileNotFoundError(f"no bundled problem named {name!r}")
    return path


def load_bundled_problem(name: str):
    return load_problem(bundled_problem_path(name))
