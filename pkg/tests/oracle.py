"""Brute-force reference computations for the tests.

Everything here walks full paths with plain itertools and reads the tables of
an ``InfluenceDiagram`` directly, so it shares no code with the streaming
engine, the model builders or the solvers it is used to check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def _row(d, name, assign):
    parents = d.parents(name)
    if not parents:
        return 0
    idx = 0
    for p in parents:
        idx = idx * d.n_states(p) + assign[p]
    return idx


def state_nodes(d):
    return [n.name for n in d.nodes if n.kind != "value"]


def obs_nodes(d):
    observed = {p for dn in d.decision_nodes for p in d.parents(dn) if d.node(p).kind == "chance"}
    return [n.name for n in d.nodes if n.kind == "decision" or n.name in observed]


@dataclass
class PathData:
    """Every path of a diagram as parallel arrays."""

    states: np.ndarray  # (n_paths, n_state_nodes)
    prob: np.ndarray
    util: np.ndarray
    seg: np.ndarray  # mixed-radix observable segment index
    rows: dict  # decision -> information-state row of each path
    alts: dict


def all_paths(d) -> PathData:
    names = state_nodes(d)
    obs = obs_nodes(d)
    states, prob, util, seg = [], [], [], []
    rows = {dn: [] for dn in d.decision_nodes}
    alts = {dn: [] for dn in d.decision_nodes}
    for s in itertools.product(*(range(d.n_states(n)) for n in names)):
        a = dict(zip(names, s))
        p = 1.0
        for c in d.chance_nodes:
            p *= float(d.cpts[c][_row(d, c, a)][a[c]])
        u = sum(float(d.utilities[v][_row(d, v, a)]) for v in d.value_nodes)
        k = 0
        for o in obs:
            k = k * d.n_states(o) + a[o]
        states.append(s)
        prob.append(p)
        util.append(u)
        seg.append(k)
        for dn in d.decision_nodes:
            rows[dn].append(_row(d, dn, a))
            alts[dn].append(a[dn])
    return PathData(
        np.array(states), np.array(prob), np.array(util), np.array(seg),
        {k: np.array(v) for k, v in rows.items()}, {k: np.array(v) for k, v in alts.items()},
    )


def all_strategies(d):
    """Yield ``{decision: tuple_of_alternatives}`` for every strategy."""
    dns = d.decision_nodes
    per = [
        list(itertools.product(range(d.n_states(dn)), repeat=d.n_info_states(dn))) for dn in dns
    ]
    for combo in itertools.product(*per):
        yield dict(zip(dns, combo))


def random_strategy(d, rng):
    return {
        dn: tuple(int(a) for a in rng.integers(0, d.n_states(dn), d.n_info_states(dn)))
        for dn in d.decision_nodes
    }


def compatible(pd: PathData, rules) -> np.ndarray:
    ok = np.ones(len(pd.prob), dtype=bool)
    for dn, rule in rules.items():
        ok &= np.asarray(rule)[pd.rows[dn]] == pd.alts[dn]
    return ok


def expected_utility(pd: PathData, rules) -> float:
    c = compatible(pd, rules)
    return float(np.sum(pd.prob[c] * pd.util[c]))


def distribution(pd: PathData, rules, decimals=None):
    """Sorted ``[(utility, probability)]`` of the compatible positive paths."""
    c = compatible(pd, rules) & (pd.prob > 0)
    acc: dict[float, float] = {}
    for u, p in zip(pd.util[c], pd.prob[c]):
        key = round(u, decimals) if decimals is not None else u
        acc[key] = acc.get(key, 0.0) + p
    return sorted(acc.items())


def cvar(dist, alpha: float) -> float:
    """Mean of the lowest ``alpha`` probability mass."""
    left, total = alpha, 0.0
    for u, p in sorted(dist):
        take = min(p, left)
        total += take * u
        left -= take
        if left <= 1e-15:
            break
    return total / alpha


def event_probability(d, pd: PathData, rules, nodes, states) -> float:
    names = state_nodes(d)
    cols = [names.index(n) for n in nodes]
    hit = np.zeros(len(pd.prob), dtype=bool)
    for st in states:
        hit |= np.all(pd.states[:, cols] == np.asarray(st), axis=1)
    c = compatible(pd, rules)
    return float(pd.prob[c & hit].sum())


def best(d, score, feasible=None):
    """(value, rules) maximizing ``score(rules)`` over all strategies."""
    top, arg = -np.inf, None
    for rules in all_strategies(d):
        if feasible is not None and not feasible(rules):
            continue
        v = score(rules)
        if v > top:
            top, arg = v, rules
    return top, arg


def segment_expected_utilities(d, pd: PathData) -> np.ndarray:
    n = int(np.prod([d.n_states(o) for o in obs_nodes(d)]))
    return np.bincount(pd.seg, weights=pd.prob * pd.util, minlength=n)


def segment_compatible(d, rules) -> np.ndarray:
    """Indicator over observable segments that agree with ``rules``."""
    obs = obs_nodes(d)
    out = []
    for s in itertools.product(*(range(d.n_states(o)) for o in obs)):
        a = dict(zip(obs, s))
        out.append(all(rules[dn][_row(d, dn, a)] == a[dn] for dn in d.decision_nodes))
    return np.array(out)


def random_diagram(seed: int, max_nodes: int = 5, max_states: int = 3, zero_prob: float = 0.2):
    """Small random acyclic diagram; arcs only point from earlier to later nodes.

    CPT entries are zeroed with probability ``zero_prob`` (keeping one
    positive entry per row) so that zero-probability paths occur.
    """
    from id_milp.diagram import InfluenceDiagram, Node

    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    nodes, arcs = [], []
    for i in range(n):
        kind = "decision" if rng.random() < 0.4 else "chance"
        k = int(rng.integers(1 if kind == "chance" else 2, max_states + 1))
        nodes.append(Node(f"N{i}", kind, tuple(f"v{j}" for j in range(k))))
        for j in range(i):
            if rng.random() < 0.35:
                arcs.append((f"N{j}", f"N{i}"))
    for v in range(int(rng.integers(1, 3))):
        name = f"U{v}"
        nodes.append(Node(name, "value"))
        for j in range(n):
            if rng.random() < 0.5:
                arcs.append((f"N{j}", name))
    skel = InfluenceDiagram(nodes, arcs)
    cpts = {}
    for c in skel.chance_nodes:
        rows, k = skel.n_info_states(c), skel.n_states(c)
        t = rng.random((rows, k)) * (rng.random((rows, k)) >= zero_prob)
        t[np.arange(rows), rng.integers(0, k, rows)] += 0.1
        cpts[c] = t / t.sum(axis=1, keepdims=True)
    utils = {
        v: np.round(rng.uniform(-50, 50, skel.n_info_states(v)), 1) for v in skel.value_nodes
    }
    return skel.with_tables(cpts, utils)


def segment_rows(d):
    """Per decision, the information row and alternative of every observable segment."""
    obs = obs_nodes(d)
    segs = np.array(list(itertools.product(*(range(d.n_states(o)) for o in obs))), dtype=np.int64)
    segs = segs.reshape(-1, len(obs))
    col = {o: i for i, o in enumerate(obs)}
    out = {}
    for dn in d.decision_nodes:
        row = np.zeros(len(segs), dtype=np.int64)
        for p in d.parents(dn):
            row = row * d.n_states(p) + segs[:, col[p]]
        out[dn] = (row, segs[:, col[dn]])
    return segs, out


def strategy_batch(d, ks):
    """Rule arrays ``{decision: (len(ks), n_info)}`` for strategy numbers ``ks``.

    Strategy numbers are mixed radix over all decision rows, decisions in
    declared order and rows in order, the last row varying fastest.
    """
    ks = np.asarray(ks, dtype=object)
    digits = []
    radices = [d.n_states(dn) for dn in d.decision_nodes for _ in range(d.n_info_states(dn))]
    rest = ks.copy()
    for r in reversed(radices):
        digits.append((rest % r).astype(np.int64))
        rest = rest // r
    digits = np.array(digits[::-1]).T.reshape(len(ks), len(radices))
    out, start = {}, 0
    for dn in d.decision_nodes:
        n = d.n_info_states(dn)
        out[dn] = digits[:, start : start + n]
        start += n
    return out


def batch_segment_compatible(d, rules, seg_rows):
    """(batch, n_segments) compatibility for rule arrays from :func:`strategy_batch`."""
    n_batch = next(iter(rules.values())).shape[0] if rules else 1
    ok = None
    for dn, (row, alt) in seg_rows.items():
        hit = rules[dn][:, row] == alt[None, :]
        ok = hit if ok is None else ok & hit
    if ok is None:
        return np.ones((n_batch, 1), dtype=bool)
    return ok
