"""One entry point over every solution route, with build/solve timing."""

from __future__ import annotations

import os
import time
from typing import Sequence

from .backend import (
    BUNDLED_BACKEND,
    BackendError,
    cross_check,
    extract_strategy,
    fractional_columns,
    solve_in_process,
    solve_with_backend,
    unshifted_objective,
)
from .bnb import solve_branch_and_bound
from .diagram import InfluenceDiagram
from .enumeration import DEFAULT_CAP, solve_by_enumeration
from .evaluate import utility_distribution_of_strategy
from .formulations import (
    ChanceConstraintSpec,
    add_chance_constraint,
    build_cvar_model,
    build_dp_model,
    build_dpr_model,
)
from .results import FEASIBLE, OPTIMAL, TIMEOUT, SolveResult

FORMULATIONS = ("dp", "dpr", "dpr-nocuts", "cvar")
BACKEND_ENV = "ID_MILP_BACKEND"


def build_model(
    d: InfluenceDiagram,
    formulation: str,
    *,
    alpha: float | None = None,
    with_cuts: bool = True,
    equality_cuts: bool = False,
    filter_zero: bool = False,
    chance_specs: Sequence[ChanceConstraintSpec] = (),
    quantum: float | None = None,
    workers: int = 1,
):
    if formulation == "dp":
        model, vm = build_dp_model(d, workers=workers)
    elif formulation in ("dpr", "dpr-nocuts"):
        model, vm = build_dpr_model(
            d,
            with_cuts=with_cuts and formulation == "dpr",
            cuts_as_equalities=equality_cuts,
            filter_zero_segments=filter_zero,
            workers=workers,
        )
    elif formulation == "cvar":
        if alpha is None:
            raise ValueError("the cvar formulation needs --alpha")
        model, vm = build_cvar_model(d, alpha, quantum=quantum, workers=workers)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    for spec in chance_specs:
        add_chance_constraint(model, vm, d, spec)
    return model, vm


def resolve_backend(solver: str) -> str | None:
    """Command for ``backend`` / ``backend:<cmd>`` solver names, else None."""
    if solver == "backend":
        return os.environ.get(BACKEND_ENV) or BUNDLED_BACKEND
    if solver.startswith("backend:"):
        return solver.split(":", 1)[1]
    return None


def solve(
    d: InfluenceDiagram,
    formulation: str = "dpr",
    solver: str = "highs",
    *,
    alpha: float | None = None,
    chance_specs: Sequence[ChanceConstraintSpec] = (),
    time_limit: float | None = None,
    cap: int = DEFAULT_CAP,
    quantum: float | None = None,
    decompose: bool = False,
    workers: int = 1,
    **build_opts,
) -> SolveResult:
    """Solve ``d`` with ``solver`` in {enum, bnb, highs, backend, backend:<cmd>}.

    ``formulation`` selects the MILP for the model-based solvers; for
    ``enum`` and ``bnb`` it only selects the objective (cvar or expected
    utility).
    """
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    if time_limit is not None and time_limit <= 0:
        return SolveResult(TIMEOUT, info={"reason": "time limit reached before building"})

    if solver == "enum":
        objective = "cvar" if formulation == "cvar" else "eu"
        return solve_by_enumeration(
            d, objective, alpha=alpha, chance_specs=chance_specs, cap=cap,
            quantum=quantum, decompose=decompose, workers=workers,
        )
    if solver == "bnb":
        if formulation == "cvar" or chance_specs:
            raise ValueError("branch and bound handles unconstrained expected utility only")
        return solve_branch_and_bound(d, time_limit=time_limit)

    command = resolve_backend(solver)
    if solver != "highs" and command is None:
        raise ValueError(f"unknown solver {solver!r}")

    t0 = time.perf_counter()
    model, vm = build_model(
        d, formulation, alpha=alpha, chance_specs=chance_specs, quantum=quantum,
        workers=workers, **build_opts,
    )
    tau_p = time.perf_counter() - t0
    info = {"variables": model.n_vars, "constraints": model.n_constraints}
    remaining = None if time_limit is None else time_limit - tau_p
    if remaining is not None and remaining <= 0:
        return SolveResult(TIMEOUT, tau_p=tau_p, info=info)

    t1 = time.perf_counter()
    if command is None:
        sol = solve_in_process(model, remaining)
    else:
        sol = solve_with_backend(model, command, remaining)
    tau_s = time.perf_counter() - t1

    if sol.status not in (OPTIMAL, FEASIBLE):
        return SolveResult(sol.status, tau_p=tau_p, tau_s=tau_s, info=info)
    strategy = extract_strategy(sol, vm, model)
    eu, reported, ok = cross_check(d, strategy, sol, vm)
    info["recomputed_eu"] = eu
    if ok is not None:
        info["objective_consistent"] = bool(ok)
    frac = fractional_columns(sol, vm, model)
    if frac:
        info["fractional"] = frac
    objective = sol.objective if formulation == "cvar" else unshifted_objective(sol, vm)
    dist = utility_distribution_of_strategy(d, strategy, quantum if formulation == "cvar" else None)
    return SolveResult(sol.status, objective, strategy, dist, tau_p, tau_s, info)


__all__ = ["solve", "build_model", "resolve_backend", "BackendError", "FORMULATIONS"]
