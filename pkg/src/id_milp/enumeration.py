"""Exhaustive strategy enumeration, the ground-truth oracle.

The oracle deliberately avoids the streaming engine used by the model
builders: it builds its own path table with per-path lookups and aggregates it
to observable segments. Strategies are scored in vectorized batches; a
strategy is a vector of decision-rule digits (one digit per information state
of every decision, decisions in declared order), and lexicographic order of
that vector is the enumeration and tie-breaking order.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, Sequence

import numpy as np

from .diagram import (
    DecisionStrategy,
    InfluenceDiagram,
    StrategySpaceOverflow,
    observation_set,
    strategy_space_size,
)
from .evaluate import cvar_batch
from .formulations import ChanceConstraintSpec
from .paths import enumerate_paths, path_probability, path_utility, quantize
from .results import CAP_EXCEEDED, INFEASIBLE, OPTIMAL, SolveResult

DEFAULT_CAP = 10**6
CHANCE_TOL = 1e-9
TIE_TOL = 1e-12


def iter_strategies(d: InfluenceDiagram) -> Iterator[DecisionStrategy]:
    """All strategies in lexicographic order of their rule digits."""
    rows = [(dn, d.n_states(dn)) for dn in d.decision_nodes for _ in range(d.n_info_states(dn))]
    for digits in itertools.product(*(range(n) for _, n in rows)):
        rules: dict[str, list[int]] = {dn: [] for dn in d.decision_nodes}
        for (dn, _), a in zip(rows, digits):
            rules[dn].append(a)
        yield DecisionStrategy.from_arrays(rules)


class PathTable:
    """Dense per-path table aggregated to observable segments."""

    def __init__(self, d: InfluenceDiagram, quantum: float | None = None):
        self.d = d
        paths = list(enumerate_paths(d))
        k = len(d.state_nodes)
        self.paths = np.array(paths, dtype=np.int64).reshape(len(paths), k)
        self.p = np.array([path_probability(d, s) for s in paths])
        self.u = np.array([path_utility(d, s) for s in paths])

        col = {n: i for i, n in enumerate(d.state_nodes)}
        self.obs = observation_set(d)
        self.obs_sizes = d.sizes(self.obs)
        self.n_seg = math.prod(self.obs_sizes)
        if self.obs:
            self.seg = np.ravel_multi_index(
                tuple(self.paths[:, col[n]] for n in self.obs), self.obs_sizes
            )
        else:
            self.seg = np.zeros(len(paths), dtype=np.int64)
        self.seg_eu = np.bincount(self.seg, weights=self.p * self.u, minlength=self.n_seg)

        coords = (
            dict(zip(self.obs, np.unravel_index(np.arange(self.n_seg), self.obs_sizes)))
            if self.obs
            else {}
        )
        self.info, self.alt = {}, {}
        for dn in d.decision_nodes:
            idx = np.zeros(self.n_seg, dtype=np.int64)
            for par in d.parents(dn):
                idx = idx * d.n_states(par) + coords[par]
            self.info[dn] = idx
            self.alt[dn] = coords[dn]

        uq = quantize(self.u, quantum)
        self.levels, li = np.unique(uq, return_inverse=True)
        self.masses = np.bincount(
            self.seg * len(self.levels) + li.reshape(-1),
            weights=self.p,
            minlength=self.n_seg * len(self.levels),
        ).reshape(self.n_seg, len(self.levels))
        self._col = col

    def event_weights(self, spec: ChanceConstraintSpec) -> np.ndarray:
        """Per segment, probability of extension paths whose ``spec.nodes`` lie in ``spec.states``."""
        forbidden = set(spec.states)
        cols = [self._col[n] for n in spec.nodes]
        hit = np.array([tuple(row) in forbidden for row in self.paths[:, cols].tolist()], dtype=bool)
        return np.bincount(self.seg, weights=self.p * hit, minlength=self.n_seg)


class _Rows:
    """Layout of the strategy digit vector."""

    def __init__(self, d: InfluenceDiagram, decisions: Sequence[str]):
        self.decisions = list(decisions)
        self.offset, self.radix = {}, []
        for dn in self.decisions:
            self.offset[dn] = len(self.radix)
            self.radix += [d.n_states(dn)] * d.n_info_states(dn)
        weights = [1] * len(self.radix)
        for r in range(len(self.radix) - 2, -1, -1):
            weights[r] = weights[r + 1] * self.radix[r + 1]
        self.weights = np.array(weights, dtype=np.int64)
        self.radix_arr = np.array(self.radix, dtype=np.int64)
        self.count = math.prod(self.radix)

    def digits(self, start: int, stop: int) -> np.ndarray:
        ids = np.arange(start, stop, dtype=np.int64)[:, None]
        return (ids // self.weights[None, :]) % self.radix_arr[None, :]

    def compat(self, table: PathTable, digits: np.ndarray) -> np.ndarray:
        out = np.ones((digits.shape[0], table.n_seg), dtype=bool)
        for dn in self.decisions:
            out &= digits[:, self.offset[dn] + table.info[dn]] == table.alt[dn][None, :]
        return out

    def strategy(self, d: InfluenceDiagram, digits: np.ndarray, extra=None) -> DecisionStrategy:
        rules = dict(extra or {})
        for dn in self.decisions:
            o = self.offset[dn]
            rules[dn] = digits[o : o + d.n_info_states(dn)].tolist()
        return DecisionStrategy.from_arrays({dn: rules[dn] for dn in d.decision_nodes})


def _batch_size(n_seg: int) -> int:
    return max(1, (1 << 21) // max(n_seg, 1))


def _argmax_first(vals: np.ndarray) -> int:
    top = vals.max()
    return int(np.flatnonzero(vals >= top - TIE_TOL * max(1.0, abs(top)))[0])


def solve_by_enumeration(
    d: InfluenceDiagram,
    objective: str = "eu",
    *,
    alpha: float | None = None,
    chance_specs: Sequence[ChanceConstraintSpec] = (),
    cap: int = DEFAULT_CAP,
    quantum: float | None = None,
    decompose: bool = False,
    workers: int = 1,
) -> SolveResult:
    """Maximize expected utility (``objective="eu"``) or CVaR at ``alpha``.

    With ``decompose`` (EU without chance constraints only) the decision with
    the most rules is optimized rule by rule for each enumerated assignment
    of the others; expected utility is additive over that decision's rules,
    so the result is still exact while the enumerated space shrinks.
    """
    if objective not in ("eu", "cvar"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "cvar" and (alpha is None or not 0.0 < alpha <= 1.0):
        raise ValueError("cvar objective needs alpha in (0, 1]")
    decompose = decompose and objective == "eu" and not chance_specs and bool(d.decision_nodes)

    t0 = time.perf_counter()
    collapsed = None
    if decompose:
        collapsed = max(reversed(d.decision_nodes), key=d.n_info_states)
    rows = _Rows(d, [dn for dn in d.decision_nodes if dn != collapsed])
    try:
        total = strategy_space_size(d)
    except StrategySpaceOverflow:
        total = math.inf
    if rows.count > cap:
        return SolveResult(CAP_EXCEEDED, info={"strategies": total, "cap": cap})

    table = PathTable(d, quantum)
    weights = [(table.event_weights(s), s.threshold) for s in chance_specs]
    tau_p = time.perf_counter() - t0

    t1 = time.perf_counter()
    bs = _batch_size(table.n_seg)
    if collapsed is not None:
        n_info, n_alt = d.n_info_states(collapsed), d.n_states(collapsed)
        group = np.zeros((table.n_seg, n_info * n_alt))
        group[np.arange(table.n_seg), table.info[collapsed] * n_alt + table.alt[collapsed]] = 1.0

    def score(start):
        stop = min(start + bs, rows.count)
        dig = rows.digits(start, stop)
        comp = rows.compat(table, dig).astype(float)
        if collapsed is not None:
            per_row = ((comp * table.seg_eu[None, :]) @ group).reshape(-1, n_info, n_alt)
            choice = per_row.argmax(axis=2)
            vals = per_row.max(axis=2).sum(axis=1)
            feas = np.ones(vals.shape, dtype=bool)
            extra = choice
        else:
            if objective == "eu":
                vals = comp @ table.seg_eu
            else:
                vals = cvar_batch(table.levels, comp @ table.masses, alpha)
            feas = np.ones(vals.shape, dtype=bool)
            for w, b in weights:
                feas &= comp @ w <= b + CHANCE_TOL
            extra = None
        if not feas.any():
            return None
        vals = np.where(feas, vals, -np.inf)
        k = _argmax_first(vals)
        return float(vals[k]), dig[k], None if extra is None else extra[k]

    starts = range(0, rows.count, bs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(score, starts))
    else:
        parts = map(score, starts)

    best = None
    for part in parts:
        if part is None:
            continue
        if best is None or part[0] > best[0] + TIE_TOL * max(1.0, abs(best[0])):
            best = part
    tau_s = time.perf_counter() - t1
    info = {"strategies": total, "enumerated": rows.count}
    if collapsed is not None:
        info["collapsed_decision"] = collapsed

    if best is None:
        return SolveResult(INFEASIBLE, tau_p=tau_p, tau_s=tau_s, info=info)
    value, dig, choice = best
    extra = {collapsed: choice.tolist()} if collapsed is not None else None
    strategy = rows.strategy(d, dig, extra)
    q = _segment_compat(d, table, strategy).astype(float) @ table.masses
    dist = [(float(u), float(m)) for u, m in zip(table.levels, q) if m > 0.0]
    return SolveResult(OPTIMAL, value, strategy, dist, tau_p, tau_s, info)


def _segment_compat(d: InfluenceDiagram, table: PathTable, strategy: DecisionStrategy) -> np.ndarray:
    ok = np.ones(table.n_seg, dtype=bool)
    for dn in d.decision_nodes:
        rule = np.asarray(strategy.rules[dn], dtype=np.int64)
        ok &= rule[table.info[dn]] == table.alt[dn]
    return ok
