"""External MILP backends: the file contract, an in-process HiGHS route and
recovery of a decision strategy from a solution.

Backend contract: the command is run with two extra arguments, the path of an
LP file to read and the path of a solution file to write. The solution file
holds ``status <optimal|feasible|infeasible|...>``, then ``objective <float>``,
then one ``name value`` pair per line.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagram import DecisionStrategy, InfluenceDiagram
from .lpformat import write_lp
from .model import BINARY, INTEGER, MilpModel, VariableMap

INTEGRALITY_TOL = 1e-6
BUNDLED_BACKEND = f"{shlex.quote(sys.executable)} -m id_milp.highs_backend"


class BackendError(RuntimeError):
    pass


@dataclass
class BackendSolution:
    status: str
    objective: float | None
    values: dict[str, float] = field(default_factory=dict)

    def vector(self, model: MilpModel) -> np.ndarray:
        return np.array([self.values.get(n, 0.0) for n in model.var_names])


# -- solution files ------------------------------------------------------------------


def format_solution(sol: BackendSolution) -> str:
    lines = [f"status {sol.status}"]
    lines.append(f"objective {'nan' if sol.objective is None else format(sol.objective, '.17g')}")
    lines += [f"{n} {format(v, '.17g')}" for n, v in sol.values.items()]
    return "\n".join(lines) + "\n"


def write_solution(sol: BackendSolution, path) -> None:
    Path(path).write_text(format_solution(sol))


def parse_solution(text: str) -> BackendSolution:
    status, objective, values = None, None, {}
    for k, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise BackendError(f"unparseable solution line {k + 1}: {raw!r}")
        key, val = parts
        if key == "status" and status is None:
            status = val.lower()
            continue
        try:
            num = float(val)
        except ValueError:
            raise BackendError(f"unparseable value on line {k + 1}: {raw!r}") from None
        if key == "objective" and objective is None and not values:
            objective = None if math.isnan(num) else num
        else:
            values[key] = num
    if status is None:
        raise BackendError("solution file has no status line")
    return BackendSolution(status, objective, values)


def read_solution(path) -> BackendSolution:
    return parse_solution(Path(path).read_text())


def check_integrality(sol: BackendSolution, model: MilpModel, tol: float = INTEGRALITY_TOL):
    """Round binaries (and general integers) that are within ``tol`` of an integer."""
    for name, vt in zip(model.var_names, model.vtype):
        if vt not in (BINARY, INTEGER) or name not in sol.values:
            continue
        v = sol.values[name]
        r = round(v)
        if abs(v - r) > tol or (vt == BINARY and r not in (0, 1)):
            raise BackendError(f"non-integral value {v!r} for binary {name}")
        sol.values[name] = float(r)
    return sol


# -- solving -----------------------------------------------------------------------------


def solve_in_process(model: MilpModel, time_limit: float | None = None, mip_rel_gap: float = 1e-9):
    """Solve with HiGHS through :func:`scipy.optimize.milp`."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    c = model.objective_vector()
    if model.sense == "max":
        c = -c
    integrality = np.array([1 if t in (BINARY, INTEGER) else 0 for t in model.vtype])
    cons = []
    if model.n_constraints:
        lo, hi = model.row_bounds()
        cons.append(LinearConstraint(model.matrix(), lo, hi))
    options = {"mip_rel_gap": mip_rel_gap}
    if time_limit is not None:
        options["time_limit"] = max(float(time_limit), 1e-3)
    if model.n_vars == 0:
        return BackendSolution("optimal", 0.0, {})
    res = milp(
        c, constraints=cons, integrality=integrality,
        bounds=Bounds(np.array(model.lb), np.array(model.ub)), options=options,
    )
    if res.x is None:
        status = {2: "infeasible", 3: "unbounded"}.get(res.status, "timeout" if res.status == 1 else "error")
        return BackendSolution(status, None, {})
    status = "optimal" if res.status == 0 else "feasible"
    obj = float(model.objective_vector() @ res.x)
    return check_integrality(BackendSolution(status, obj, dict(zip(model.var_names, res.x.tolist()))), model)


def solve_with_backend(
    model: MilpModel, backend_command: str | list[str], time_limit: float | None = None
) -> BackendSolution:
    """Export ``model``, run the external command on it and read back the solution."""
    cmd = shlex.split(backend_command) if isinstance(backend_command, str) else list(backend_command)
    if not cmd:
        raise BackendError("empty backend command")
    with tempfile.TemporaryDirectory(prefix="id_milp_") as tmp:
        lp = Path(tmp) / "model.lp"
        sol = Path(tmp) / "model.sol"
        write_lp(model, lp)
        timeout = None if time_limit is None else max(time_limit, 0.0) + 30.0
        try:
            proc = subprocess.run(
                cmd + [str(lp), str(sol)], capture_output=True, text=True, timeout=timeout
            )
        except FileNotFoundError as e:
            raise BackendError(f"backend not found: {cmd[0]}") from e
        except subprocess.TimeoutExpired:
            return BackendSolution("timeout", None, {})
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-1:] or [""]
            raise BackendError(f"backend exited with code {proc.returncode}: {tail[0]}")
        if not sol.exists():
            raise BackendError("backend wrote no solution file")
        out = read_solution(sol)
    return check_integrality(out, model)


# -- strategy recovery ------------------------------------------------------------------


def extract_strategy(
    solution: BackendSolution, varmap: VariableMap, model: MilpModel
) -> DecisionStrategy:
    """Read the one-hot z rows; raise unless each has exactly one 1."""
    if solution.status not in ("optimal", "feasible"):
        raise BackendError(f"no strategy in a solution with status {solution.status}")
    rules = {}
    for dn, cols in varmap.z.items():
        rule = []
        for i, row in enumerate(cols):
            vals = np.array([solution.values.get(model.var_names[c], 0.0) for c in row])
            on = np.flatnonzero(np.abs(vals - 1.0) <= INTEGRALITY_TOL)
            off = np.abs(vals) <= INTEGRALITY_TOL
            if on.size != 1 or off.sum() != vals.size - 1:
                raise BackendError(f"invalid strategy: decision {dn} row {i} is not one-hot ({vals.tolist()})")
            rule.append(int(on[0]))
        rules[dn] = rule
    return DecisionStrategy.from_arrays(rules)


def fractional_columns(
    solution: BackendSolution, varmap: VariableMap, model: MilpModel, tol: float = INTEGRALITY_TOL
) -> list[str]:
    """Path or segment variables whose value is not within ``tol`` of 0 or 1."""
    out = []
    for c in varmap.path.tolist():
        name = model.var_names[c]
        v = solution.values.get(name, 0.0)
        if min(abs(v), abs(v - 1.0)) > tol:
            out.append(name)
    return out


def unshifted_objective(solution: BackendSolution, varmap: VariableMap) -> float | None:
    """Objective in original utility units.

    For shifted EU models every strategy activates paths of total probability
    one, so the shifted objective exceeds the expected utility by the shift.
    """
    if solution.objective is None:
        return None
    return solution.objective - varmap.utility_shift


def cross_check(d: InfluenceDiagram, strategy: DecisionStrategy, solution, varmap, tol=1e-6):
    """Recompute the expected utility of ``strategy`` and compare with the model value.

    Returns ``(recomputed, reported, ok)``; ``ok`` is None for CVaR models.
    """
    from .evaluate import expected_utility_of_strategy

    eu = expected_utility_of_strategy(d, strategy)
    if varmap.formulation == "cvar":
        return eu, solution.objective, None
    reported = unshifted_objective(solution, varmap)
    ok = reported is not None and abs(eu - reported) <= tol * max(1.0, abs(eu))
    return eu, reported, ok
