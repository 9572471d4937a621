"""Solver-agnostic MILP representation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import sparse

BINARY = "binary"
CONTINUOUS = "continuous"
INTEGER = "integer"
SENSES = ("<=", "=", ">=")


class ModelTooLarge(RuntimeError):
    def __init__(self, what: str, count: int, cap: int):
        super().__init__(f"model too large: {count} {what} exceeds cap {cap}")
        self.count = count


@dataclass
class Constraint:
    name: str
    index: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float


@dataclass
class MilpModel:
    """Maximization MILP with named columns and rows.

    ``metadata`` carries facts the builders know but a solver does not need,
    e.g. the utility shift applied to the objective.
    """

    var_names: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    vtype: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    sense: str = "max"
    metadata: dict = field(default_factory=dict)
    _col: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def column(self, name: str) -> int:
        return self._col[name]

    def add_var(self, name: str, lb=0.0, ub=1.0, vtype=CONTINUOUS) -> int:
        if name in self._col:
            raise ValueError(f"duplicate variable {name!r}")
        if vtype == BINARY:
            lb, ub = 0.0, 1.0
        self._col[name] = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.vtype.append(vtype)
        return self._col[name]

    def add_vars(self, names: Iterable[str], lb=0.0, ub=1.0, vtype=CONTINUOUS) -> np.ndarray:
        return np.array([self.add_var(n, lb, ub, vtype) for n in names], dtype=np.int64)

    def add_constraint(self, name, index, coef, sense, rhs) -> Constraint:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        index = np.asarray(index, dtype=np.int64)
        coef = np.broadcast_to(np.asarray(coef, dtype=float), index.shape).copy()
        if index.size and (index.min() < 0 or index.max() >= self.n_vars):
            raise ValueError(f"constraint {name!r} references an undeclared variable")
        row = Constraint(name, index, coef, sense, float(rhs))
        self.constraints.append(row)
        return row

    def set_objective(self, index, coef) -> None:
        for i, c in zip(np.asarray(index).tolist(), np.asarray(coef, dtype=float).tolist()):
            self.objective[int(i)] = self.objective.get(int(i), 0.0) + c

    # -- matrix views ------------------------------------------------------------

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, con in enumerate(self.constraints):
            rows.append(np.full(con.index.size, r, dtype=np.int64))
            cols.append(con.index)
            vals.append(con.coef)
        if not rows:
            return sparse.csr_matrix((0, self.n_vars))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_constraints, self.n_vars),
        )

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.n_constraints, -np.inf)
        hi = np.full(self.n_constraints, np.inf)
        for r, con in enumerate(self.constraints):
            if con.sense in ("=", ">="):
                lo[r] = con.rhs
            if con.sense in ("=", "<="):
                hi[r] = con.rhs
        return lo, hi

    def evaluate(self, x) -> float:
        return float(self.objective_vector() @ np.asarray(x, dtype=float))

    def violations(self, x, tol: float = 1e-7) -> list[str]:
        """Names of rows (and bounds) violated by the point ``x``."""
        x = np.asarray(x, dtype=float)
        bad = []
        for con in self.constraints:
            lhs = float(con.coef @ x[con.index]) if con.index.size else 0.0
            if con.sense == "<=" and lhs > con.rhs + tol:
                bad.append(con.name)
            elif con.sense == ">=" and lhs < con.rhs - tol:
                bad.append(con.name)
            elif con.sense == "=" and abs(lhs - con.rhs) > tol:
                bad.append(con.name)
        for i, (lo, hi) in enumerate(zip(self.lb, self.ub)):
            if x[i] < lo - tol or x[i] > hi + tol:
                bad.append(f"bound:{self.var_names[i]}")
        return bad


@dataclass
class VariableMap:
    """Where each semantic slot of a formulation lives among the model columns.

    ``z[d]`` has shape ``(n_info_states, n_alternatives)``; ``path`` holds
    the column of every x (DP) or y (DPR/CVaR) variable, ``path_key`` the
    linear path or segment index it stands for.
    """

    formulation: str
    z: dict[str, np.ndarray]
    path_kind: str  # "x" or "y"
    path: np.ndarray
    path_key: np.ndarray
    lam: np.ndarray | None = None
    lambar: np.ndarray | None = None
    rho: np.ndarray | None = None
    rhobar: np.ndarray | None = None
    eta: int | None = None
    levels: np.ndarray | None = None
    utility_shift: float = 0.0
    alpha: float | None = None
    big_m: float | None = None
    cvar_eps: float | None = None

    def to_json(self, model: MilpModel) -> dict:
        def names(cols):
            return [model.var_names[int(c)] for c in np.asarray(cols).reshape(-1)]

        out = {
            "formulation": self.formulation,
            "z": {
                d: [[model.var_names[int(c)] for c in row] for row in cols] for d, cols in self.z.items()
            },
            self.path_kind: dict(zip(names(self.path), [int(k) for k in self.path_key])),
            "utility_shift": self.utility_shift,
        }
        if self.eta is not None:
            out.update(
                lam=names(self.lam),
                lambar=names(self.lambar),
                rho=names(self.rho),
                rhobar=names(self.rhobar),
                eta=model.var_names[self.eta],
                levels=[float(u) for u in self.levels],
                alpha=self.alpha,
                big_m=self.big_m,
                cvar_eps=self.cvar_eps,
            )
        return out

    def dump(self, model: MilpModel, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(model), fh, indent=1)


_NAME_BAD = re.compile(r"[^A-Za-z0-9_.]")


def safe_name(name: str) -> str:
    """Node name made safe for use inside an LP-format variable name."""
    return _NAME_BAD.sub("_", name)
