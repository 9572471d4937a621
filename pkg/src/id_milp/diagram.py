"""Influence diagram structure, file I/O and validation.

Information states are linearized in mixed-radix order: parents are taken in
the order they appear in the diagram's node list and the last parent varies
fastest. Every table in the package (CPTs, utility tables, decision rules)
uses this single convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

CHANCE = "chance"
DECISION = "decision"
VALUE = "value"
NODE_KINDS = (CHANCE, DECISION, VALUE)

PROB_TOL = 1e-9


class DiagramError(ValueError):
    """Raised when an operation needs a structurally valid diagram."""


class StrategySpaceOverflow(DiagramError):
    def __init__(self, log2_size: float):
        super().__init__(
            f"strategy space exceeds representable count (log2 ~ {log2_size:.2f})"
        )
        self.log2_size = log2_size


@dataclass(frozen=True)
class Node:
    name: str
    kind: str
    states: tuple[str, ...] = ()

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Finding:
    node: str | None
    category: str
    message: str

    def __str__(self) -> str:
        where = self.node if self.node is not None else "<diagram>"
        return f"{where}: {self.category}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)
    # informational items (e.g. fallback rows) that do not make a diagram invalid
    notes: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def categories(self) -> set[str]:
        return {f.category for f in self.findings}

    def add(self, node, category, message):
        self.findings.append(Finding(node, category, message))


class InfluenceDiagram:
    """A limited-memory influence diagram with its numerical tables.

    Args:
        nodes: nodes in declaration order. The declaration order fixes the
            mixed-radix layout of every table.
        arcs: ``(parent, child)`` pairs.
        cpts: chance node name -> array of shape ``(n_info_states, n_states)``.
        utilities: value node name -> array of shape ``(n_info_states,)``.

    Construction never fails on semantic problems so that broken diagrams can
    be reported by :func:`validate_diagram`. Tables are stored read-only.
    """

    def __init__(
        self,
        nodes: Sequence[Node],
        arcs: Iterable[tuple[str, str]],
        cpts: Mapping[str, object] | None = None,
        utilities: Mapping[str, object] | None = None,
    ):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.arcs: tuple[tuple[str, str], ...] = tuple((str(a), str(b)) for a, b in arcs)
        self._by_name = {}
        for n in self.nodes:
            self._by_name.setdefault(n.name, n)
        self._position = {n.name: i for i, n in reversed(list(enumerate(self.nodes)))}
        self.cpts: dict[str, np.ndarray] = {}
        for name, table in (cpts or {}).items():
            self.cpts[name] = _frozen_array(table)
        self.utilities: dict[str, np.ndarray] = {}
        for name, table in (utilities or {}).items():
            self.utilities[name] = _frozen_array(table)
        parents: dict[str, list[str]] = {n.name: [] for n in self.nodes}
        for a, b in self.arcs:
            if b in parents and a in self._position:
                parents[b].append(a)
        self._parents = {
            k: tuple(sorted(set(v), key=self._position.__getitem__)) for k, v in parents.items()
        }

    # -- structural accessors ------------------------------------------------

    def node(self, name: str) -> Node:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def position(self, name: str) -> int:
        return self._position[name]

    def parents(self, name: str) -> tuple[str, ...]:
        """Information set I(n), in declaration order."""
        return self._parents[name]

    def children(self, name: str) -> list[str]:
        return [b for a, b in self.arcs if a == name]

    def kind_nodes(self, kind: str) -> list[str]:
        return [n.name for n in self.nodes if n.kind == kind]

    @property
    def chance_nodes(self) -> list[str]:
        return self.kind_nodes(CHANCE)

    @property
    def decision_nodes(self) -> list[str]:
        return self.kind_nodes(DECISION)

    @property
    def value_nodes(self) -> list[str]:
        return self.kind_nodes(VALUE)

    @property
    def state_nodes(self) -> list[str]:
        """C ∪ D in declaration order (the coordinates of a path)."""
        return [n.name for n in self.nodes if n.kind != VALUE]

    def n_states(self, name: str) -> int:
        return self._by_name[name].n_states

    def sizes(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.n_states(n) for n in names)

    def n_info_states(self, name: str) -> int:
        return math.prod(self.sizes(self.parents(name)))

    def info_index(self, name: str, assignment: Mapping[str, int]) -> int:
        """Mixed-radix index of the information state of ``name``."""
        idx = 0
        for p in self.parents(name):
            idx = idx * self.n_states(p) + int(assignment[p])
        return idx

    def with_tables(self, cpts=None, utilities=None) -> "InfluenceDiagram":
        return InfluenceDiagram(
            self.nodes,
            self.arcs,
            self.cpts if cpts is None else cpts,
            self.utilities if utilities is None else utilities,
        )

    def require_valid(self) -> "InfluenceDiagram":
        report = validate_diagram(self)
        if not report.ok:
            raise DiagramError("; ".join(str(f) for f in report.findings))
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"name": n.name, "kind": n.kind, "states": list(n.states)} for n in self.nodes
            ],
            "arcs": [list(a) for a in self.arcs],
            "cpts": {k: v.tolist() for k, v in self.cpts.items()},
            "utilities": {k: v.tolist() for k, v in self.utilities.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "InfluenceDiagram":
        nodes = [
            Node(str(n["name"]), str(n["kind"]), tuple(str(s) for s in n.get("states", [])))
            for n in data["nodes"]
        ]
        arcs = [(a, b) for a, b in data.get("arcs", [])]
        cpts = {}
        for name, rows in data.get("cpts", {}).items():
            try:
                table = np.asarray(rows, dtype=float)
            except ValueError:
                # ragged rows; keep as object so validation can report the shape
                table = np.asarray(rows, dtype=object)
            if table.dtype != object and table.ndim == 2:
                table = renormalize_rows(table)
            cpts[name] = table
        utils = {}
        for name, vals in data.get("utilities", {}).items():
            try:
                utils[name] = np.asarray(vals, dtype=float)
            except ValueError:
                utils[name] = np.asarray(vals, dtype=object)
        return cls(nodes, arcs, cpts, utils)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InfluenceDiagram):
            return NotImplemented
        if self.nodes != other.nodes or self.arcs != other.arcs:
            return False
        if self.cpts.keys() != other.cpts.keys() or self.utilities.keys() != other.utilities.keys():
            return False
        return all(np.array_equal(self.cpts[k], other.cpts[k]) for k in self.cpts) and all(
            np.array_equal(self.utilities[k], other.utilities[k]) for k in self.utilities
        )

    def __repr__(self) -> str:
        return f"InfluenceDiagram({len(self.nodes)} nodes, {len(self.arcs)} arcs)"


def _frozen_array(table) -> np.ndarray:
    arr = np.array(table, dtype=float) if not isinstance(table, np.ndarray) else table.copy()
    arr.setflags(write=False)
    return arr


def renormalize_rows(table: np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    """Divide rows whose sum is within ``tol`` of 1 by that sum; leave others."""
    table = np.array(table, dtype=float)
    if table.ndim != 2 or table.size == 0:
        return table
    sums = table.sum(axis=1)
    near = np.abs(sums - 1.0) <= tol
    table[near] = table[near] / sums[near, None]
    return table


def load_diagram(path: str | Path) -> InfluenceDiagram:
    with open(path) as fh:
        return InfluenceDiagram.from_dict(json.load(fh))


def save_diagram(d: InfluenceDiagram, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_dict(), fh, indent=1)


# -- validation ----------------------------------------------------------------


def _find_cycle_nodes(names: Sequence[str], arcs: Iterable[tuple[str, str]]) -> list[str]:
    """Nodes left over after Kahn's algorithm (empty iff acyclic)."""
    indeg = {n: 0 for n in names}
    out: dict[str, list[str]] = {n: [] for n in names}
    for a, b in arcs:
        if a in indeg and b in indeg:
            out[a].append(b)
            indeg[b] += 1
    ready = [n for n in names if indeg[n] == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return [n for n in names if indeg[n] > 0]


def validate_diagram(d: InfluenceDiagram) -> ValidationReport:
    """Check structural and numerical invariants; findings are returned, not raised."""
    report = ValidationReport()
    seen: set[str] = set()
    for n in d.nodes:
        if n.name in seen:
            report.add(n.name, "duplicate-name", "node name declared more than once")
        seen.add(n.name)
        if n.kind not in NODE_KINDS:
            report.add(n.name, "kind", f"unknown node kind {n.kind!r}")
            continue
        if n.kind == VALUE and n.states:
            report.add(n.name, "states", "value node must not have states")
        if n.kind != VALUE and not n.states:
            report.add(n.name, "states", f"{n.kind} node needs at least one state")

    arc_seen: set[tuple[str, str]] = set()
    for a, b in d.arcs:
        for end in (a, b):
            if end not in d:
                report.add(end, "unknown-node", f"arc ({a}, {b}) names an undeclared node")
        if (a, b) in arc_seen:
            report.add(b, "duplicate-arc", f"arc ({a}, {b}) listed twice")
        arc_seen.add((a, b))
        if a == b:
            report.add(a, "cycle", "self loop")
        if a in d and d.node(a).kind == VALUE:
            report.add(a, "value-node-outgoing", f"value node has outgoing arc to {b}")

    cyclic = _find_cycle_nodes(d.names, [(a, b) for a, b in d.arcs if a != b])
    if cyclic:
        report.add(cyclic[0], "cycle", "directed cycle through " + ", ".join(cyclic))

    if not report.ok:
        # numerical checks need a sound structure to size the tables
        return report

    for name in d.chance_nodes:
        _check_cpt(d, name, report)
    for name in d.value_nodes:
        _check_utility(d, name, report)
    for name in set(d.cpts) - set(d.chance_nodes):
        report.add(name, "cpt-owner", "CPT given for a node that is not a chance node")
    for name in set(d.utilities) - set(d.value_nodes):
        report.add(name, "utility-owner", "utility table given for a non-value node")
    return report


def _check_cpt(d: InfluenceDiagram, name: str, report: ValidationReport) -> None:
    if name not in d.cpts:
        report.add(name, "cpt-missing", "chance node has no CPT")
        return
    table = d.cpts[name]
    expected = (d.n_info_states(name), d.n_states(name))
    if table.dtype == object or table.shape != expected:
        report.add(name, "cpt-shape", f"expected shape {expected}, got {np.shape(table)}")
        return
    if not np.all(np.isfinite(table)) or table.min() < 0.0 or table.max() > 1.0:
        report.add(name, "cpt-range", "entries must lie in [0, 1]")
    sums = table.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > PROB_TOL:
            report.add(name, "cpt-row-sum", f"row {i} sums to {s:.12g}")


def _check_utility(d: InfluenceDiagram, name: str, report: ValidationReport) -> None:
    if name not in d.utilities:
        report.add(name, "utility-missing", "value node has no utility table")
        return
    table = d.utilities[name]
    expected = (d.n_info_states(name),)
    if table.dtype == object or table.shape != expected:
        report.add(name, "utility-shape", f"expected shape {expected}, got {np.shape(table)}")
        return
    if not np.all(np.isfinite(table)):
        report.add(name, "utility-nonfinite", "utility entries must be finite")


# -- derived structure ---------------------------------------------------------


def topological_order(d: InfluenceDiagram) -> list[str]:
    """Kahn's algorithm; ties go to the earliest declared node."""
    import heapq

    indeg = {n: 0 for n in d.names}
    for a, b in d.arcs:
        indeg[b] += 1
    heap = [d.position(n) for n in d.names if indeg[n] == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        name = d.nodes[heapq.heappop(heap)].name
        order.append(name)
        for child in d.children(name):
            indeg[child] -= 1
            if indeg[child] == 0:
                heapq.heappush(heap, d.position(child))
    if len(order) != len(d.nodes):
        raise DiagramError("diagram contains a directed cycle")
    return order


def observed_chance_nodes(d: InfluenceDiagram) -> list[str]:
    """C_I: chance nodes that are a parent of at least one decision."""
    observed = {p for dn in d.decision_nodes for p in d.parents(dn)}
    return [c for c in d.chance_nodes if c in observed]


def observation_set(d: InfluenceDiagram) -> list[str]:
    """O = D ∪ C_I in declaration order."""
    ci = set(observed_chance_nodes(d))
    return [n.name for n in d.nodes if n.kind == DECISION or n.name in ci]


def strategy_space_log2(d: InfluenceDiagram) -> float:
    return sum(d.n_info_states(dn) * math.log2(d.n_states(dn)) for dn in d.decision_nodes)


def strategy_space_size(d: InfluenceDiagram, max_log2: float = 63.0) -> int:
    """Number of decision strategies, prod_d |S_d| ** |S_I(d)|.

    Raises:
        StrategySpaceOverflow: if the count exceeds ``2**max_log2``.
    """
    log2 = strategy_space_log2(d)
    if log2 > max_log2:
        raise StrategySpaceOverflow(log2)
    return math.prod(d.n_states(dn) ** d.n_info_states(dn) for dn in d.decision_nodes)


@dataclass(frozen=True)
class DecisionStrategy:
    """Chosen alternative index for every information state of every decision."""

    rules: dict[str, tuple[int, ...]]

    @classmethod
    def from_arrays(cls, rules: Mapping[str, Sequence[int]]) -> "DecisionStrategy":
        return cls({k: tuple(int(a) for a in v) for k, v in rules.items()})

    def check(self, d: InfluenceDiagram) -> None:
        """Raise if a decision or information state has no (valid) alternative."""
        for dn in d.decision_nodes:
            rule = self.rules.get(dn)
            if rule is None or len(rule) != d.n_info_states(dn):
                raise DiagramError(f"incomplete strategy for decision {dn!r}")
            if any(not 0 <= a < d.n_states(dn) for a in rule):
                raise DiagramError(f"alternative out of range in strategy for {dn!r}")

    def one_hot(self, d: InfluenceDiagram) -> dict[str, np.ndarray]:
        out = {}
        for dn in d.decision_nodes:
            z = np.zeros((d.n_info_states(dn), d.n_states(dn)), dtype=int)
            z[np.arange(len(self.rules[dn])), list(self.rules[dn])] = 1
            out[dn] = z
        return out

    def to_json(self, d: InfluenceDiagram | None = None) -> dict:
        if d is None:
            return {k: list(v) for k, v in self.rules.items()}
        return {k: [d.node(k).states[a] for a in v] for k, v in self.rules.items()}
