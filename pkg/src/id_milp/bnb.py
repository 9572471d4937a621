"""Depth-first branch and bound over decision rules (expected utility only).

Weights ``w(s) = p(s) * U^>(s)`` live on a dense array over the path axes;
utilities are shifted positive, so zeroing the paths excluded by a fixed rule
can only lower any sum. A search node fixes a prefix of the rules of the
branched decisions and is bounded by letting every path choose its own
alternative for each branched decision whose rule is still open (perfect
information), i.e. a max over that decision's axis.

The last decision in topological order is not branched on when its
information set holds no other decision. Once the branched rules are fixed,
expected utility is additive over that decision's rules, so each rule is
maximized independently. Applying the same per-rule max to the relaxed
weights gives a bound at least as tight as plain perfect information, and at
a leaf it is the exact optimal completion.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .diagram import DecisionStrategy, InfluenceDiagram, topological_order
from .evaluate import utility_distribution_of_strategy
from .paths import EPS_SHIFT, PathSpace
from .results import FEASIBLE, OPTIMAL, TIMEOUT, SolveResult


@dataclass
class SearchStats:
    nodes: int = 0
    leaves: int = 0
    pruned: int = 0
    backtracks: int = 0
    trace: list = field(default_factory=list)


class _Search:
    def __init__(self, d: InfluenceDiagram, eps_shift: float, deadline, trace: bool, collapse: bool):
        space = PathSpace(d)
        p = space.dense_probability()
        u = space.dense_utility()
        self.shift = eps_shift - float(u.min()) if u.size else 0.0
        self.w = p * (u + self.shift)
        order = [n for n in topological_order(d) if n in set(d.decision_nodes)]

        self.last = None
        if collapse and order and not set(d.parents(order[-1])) & set(order):
            self.last = order[-1]
        branched = [dn for dn in order if dn != self.last]
        self.rel_axes = tuple(space.axis[dn] for dn in branched)
        self.rows = [(dn, i) for dn in branched for i in range(d.n_info_states(dn))]
        self.n_alt = {dn: d.n_states(dn) for dn in d.decision_nodes}
        info = {dn: space.index_factor(d.parents(dn)) for dn in d.decision_nodes}
        alt = {dn: space.index_factor([dn]) for dn in d.decision_nodes}
        # keep[dn][i][a]: embedded mask of paths that survive rule (dn, i) -> a
        self.keep = {
            dn: [[(info[dn] != i) | (alt[dn] == a) for a in range(self.n_alt[dn])]
                 for i in range(d.n_info_states(dn))]
            for dn in branched
        }
        if self.last is not None:
            # after the max over branched axes, cell -> (info row of last) * n_alt + alt
            rows_alt = info[self.last] * self.n_alt[self.last] + alt[self.last]
            reduced = [1 if a in self.rel_axes else n for a, n in enumerate(space.shape)]
            # rows_alt does not vary along the branched axes
            self.group = np.broadcast_to(rows_alt, reduced).reshape(-1)
            self.last_shape = (d.n_info_states(self.last), self.n_alt[self.last])
        self.deadline = deadline
        self.stats = SearchStats()
        self.trace = trace
        self.best_value = -np.inf
        self.best_rules = None
        self.best_last = None
        self.interrupted = False

    def relax(self, w: np.ndarray):
        """Bound and, when a decision is collapsed, its best rule on ``w``."""
        r = w.max(axis=self.rel_axes, keepdims=True) if self.rel_axes else w
        if self.last is None:
            return float(r.sum()), None
        per = np.bincount(self.group, weights=r.reshape(-1), minlength=int(np.prod(self.last_shape)))
        per = per.reshape(self.last_shape)
        return float(per.max(axis=1).sum()), per.argmax(axis=1)

    def run(self):
        b, rule = self.relax(self.w)
        self._dfs(self.w, b, rule, 0, [])

    def _dfs(self, w, b, rule, depth, fixed):
        self.stats.nodes += 1
        if self.trace:
            self.stats.trace.append((tuple(fixed), b))
        if depth == len(self.rows):
            self.stats.leaves += 1
            if b > self.best_value:
                self.best_value, self.best_rules, self.best_last = b, list(fixed), rule
            return
        if self.deadline is not None and time.perf_counter() > self.deadline:
            self.interrupted = True
            return
        dn, i = self.rows[depth]
        children = []
        for a in range(self.n_alt[dn]):
            cb, crule = self.relax(w * self.keep[dn][i][a])
            children.append((cb, a, crule))
        children.sort(key=lambda c: (-c[0], c[1]))
        for k, (cb, a, crule) in enumerate(children):
            if cb <= self.best_value:
                self.stats.pruned += len(children) - k
                break
            if k > 0:
                self.stats.backtracks += 1
            # recomputed rather than kept so memory stays at one array per level
            self._dfs(w * self.keep[dn][i][a], cb, crule, depth + 1, fixed + [a])
            if self.interrupted:
                return


def solve_branch_and_bound(
    d: InfluenceDiagram,
    *,
    eps_shift: float = EPS_SHIFT,
    time_limit: float | None = None,
    trace: bool = False,
    collapse_last: bool = True,
) -> SolveResult:
    """Maximize expected utility; ``time_limit`` makes the search anytime.

    ``collapse_last=False`` branches on every rule and bounds with plain
    perfect information.
    """
    t0 = time.perf_counter()
    deadline = t0 + time_limit if time_limit is not None else None
    search = _Search(d, eps_shift, deadline, trace, collapse_last)
    tau_p = time.perf_counter() - t0
    t1 = time.perf_counter()
    search.run()
    tau_s = time.perf_counter() - t1

    st = search.stats
    info = {"nodes": st.nodes, "leaves": st.leaves, "pruned": st.pruned, "backtracks": st.backtracks}
    if search.last is not None:
        info["collapsed_decision"] = search.last
    if trace:
        info["trace"] = st.trace
    if search.best_rules is None:
        status = TIMEOUT if search.interrupted else OPTIMAL
        return SolveResult(status, tau_p=tau_p, tau_s=tau_s, info=info)

    rules = {dn: [0] * d.n_info_states(dn) for dn in d.decision_nodes}
    for (dn, i), a in zip(search.rows, search.best_rules):
        rules[dn][i] = a
    if search.last is not None:
        rules[search.last] = search.best_last.tolist()
    strategy = DecisionStrategy.from_arrays(rules)
    # compatible paths carry total probability one, so the shifted value exceeds EU by the shift
    value = search.best_value - search.shift
    dist = utility_distribution_of_strategy(d, strategy)
    status = FEASIBLE if search.interrupted else OPTIMAL
    return SolveResult(status, value, strategy, dist, tau_p, tau_s, info)
