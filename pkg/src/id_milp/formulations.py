"""MILP builders: path-based, observation-based, CVaR, plus chance constraints.

Column naming is stable so exports diff cleanly::

    z[d][i_info][i_alt]   y[i_seg]   x[i_path]
    lam[i_u]  lambar[i_u]  rho[i_u]  rhobar[i_u]  eta
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diagram import InfluenceDiagram, observed_chance_nodes
from .model import BINARY, CONTINUOUS, MilpModel, ModelTooLarge, VariableMap, safe_name
from .paths import (
    DEFAULT_CHUNK,
    EPS_SHIFT,
    PathSpace,
    PathStatistics,
    check_state_nodes,
    compute_statistics,
    joint_state_indicator,
    segment_event_probability,
)

DEFAULT_MAX_PATHS = 5_000_000


@dataclass(frozen=True)
class ChanceConstraintSpec:
    """Bound ``threshold`` on the probability that nodes ``nodes`` take a joint
    state listed in ``states`` (state indices in ``nodes`` order)."""

    nodes: tuple[str, ...]
    states: tuple[tuple[int, ...], ...]
    threshold: float

    def __init__(self, nodes: Sequence[str], states, threshold: float):
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "states", tuple(tuple(int(x) for x in s) for s in states))
        object.__setattr__(self, "threshold", float(threshold))
        if not self.nodes:
            raise ValueError("chance constraint needs at least one node")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


# -- Γ ---------------------------------------------------------------------------


def _other_decisions_size(d: InfluenceDiagram, dn: str) -> int:
    skip = {dn, *d.parents(dn)}
    return math.prod(d.n_states(k) for k in d.decision_nodes if k not in skip)


def gamma_table(d: InfluenceDiagram, dn: str, stats: PathStatistics) -> np.ndarray:
    """Big-M coefficients for every ``(information state, alternative)`` of ``dn``.

    The minimum of the positive-path count and the number of paths other
    decisions can leave active.
    """
    n_info, n_alt = d.n_info_states(dn), d.n_states(dn)
    ext = stats.n_paths // (n_info * n_alt)
    cap = ext // _other_decisions_size(d, dn)
    pos = stats.positive_rows[dn].reshape(n_info, n_alt)
    return np.minimum(pos, cap).astype(float)


def gamma_bound(d: InfluenceDiagram, dn: str, s_d: int, s_info: int, stats=None) -> float:
    if dn not in d.decision_nodes:
        raise ValueError(f"{dn!r} is not a decision node")
    stats = stats or compute_statistics(d)
    return float(gamma_table(d, dn, stats)[s_info, s_d])


# -- shared pieces -----------------------------------------------------------------


def _add_strategy(model: MilpModel, d: InfluenceDiagram) -> dict[str, np.ndarray]:
    z = {}
    for dn in d.decision_nodes:
        n_info, n_alt = d.n_info_states(dn), d.n_states(dn)
        tag = safe_name(dn)
        cols = model.add_vars(
            (f"z[{tag}][{i}][{a}]" for i in range(n_info) for a in range(n_alt)), vtype=BINARY
        ).reshape(n_info, n_alt)
        z[dn] = cols
    for dn, cols in z.items():
        tag = safe_name(dn)
        for i, row in enumerate(cols):
            model.add_constraint(f"onehot[{tag}][{i}]", row, 1.0, "=", 1.0)
    return z


def _add_links(model, d, z, var_cols, row_keys: dict[str, np.ndarray], gamma: dict[str, np.ndarray]):
    """One row per (d, info, alt): sum of linked path/segment columns <= Γ z."""
    for dn, cols in z.items():
        n_info, n_alt = cols.shape
        keys = row_keys[dn]
        order = np.argsort(keys, kind="stable")
        bounds = np.searchsorted(keys[order], np.arange(n_info * n_alt + 1))
        tag = safe_name(dn)
        for i in range(n_info):
            for a in range(n_alt):
                r = i * n_alt + a
                members = var_cols[order[bounds[r] : bounds[r + 1]]]
                g = float(gamma[dn][i, a])
                model.add_constraint(
                    f"link[{tag}][{i}][{a}]",
                    np.append(members, cols[i, a]),
                    np.append(np.ones(members.size), -g),
                    "<=",
                    0.0,
                )


def _segment_coords(space: PathSpace, keys: np.ndarray) -> dict[str, np.ndarray]:
    coords = np.unravel_index(keys, space.obs_shape) if space.obs else ()
    return dict(zip(space.obs, coords))


def _joint(d: InfluenceDiagram, coords: dict[str, np.ndarray], members: Sequence[str], n: int):
    idx = np.zeros(n, dtype=np.int64)
    for m in members:
        idx = idx * d.n_states(m) + coords[m]
    return idx


def _decision_row_keys(d, coords, n):
    return {
        dn: _joint(d, coords, d.parents(dn), n) * d.n_states(dn) + coords[dn]
        for dn in d.decision_nodes
    }


# -- path-based model ------------------------------------------------------------------


def build_dp_model(
    d: InfluenceDiagram,
    *,
    eps_shift: float = EPS_SHIFT,
    max_paths: int = DEFAULT_MAX_PATHS,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    stats: PathStatistics | None = None,
):
    """One continuous x per positive-probability path, one binary z per decision row.

    Utilities are shifted internally so every path utility is at least
    ``eps_shift``; the offset is recorded as ``varmap.utility_shift``.
    """
    stats = stats or compute_statistics(d, chunk_size=chunk_size, workers=workers)
    if stats.n_positive > max_paths:
        raise ModelTooLarge("positive paths", stats.n_positive, max_paths)
    shift = stats.shift(eps_shift)
    space = PathSpace(d, chunk_size)
    row_factors = {dn: space.index_factor(list(d.parents(dn)) + [dn]) for dn in d.decision_nodes}

    keys, coef = [], []
    rows = {dn: [] for dn in d.decision_nodes}
    for b in space.blocks():
        pos = b.probability > 0.0
        keys.append(b.path_index[pos])
        coef.append(b.probability[pos] * (b.utility[pos] + shift))
        for dn, f in row_factors.items():
            rows[dn].append(b.take(f)[pos])
    keys = np.concatenate(keys)
    coef = np.concatenate(coef)
    rows = {dn: np.concatenate(v) for dn, v in rows.items()}

    model = MilpModel(metadata={"formulation": "dp", "utility_shift": shift})
    z = _add_strategy(model, d)
    x = model.add_vars((f"x[{k}]" for k in keys.tolist()), 0.0, 1.0, CONTINUOUS)
    model.set_objective(x, coef)
    gamma = {dn: gamma_table(d, dn, stats) for dn in d.decision_nodes}
    _add_links(model, d, z, x, rows, gamma)
    vm = VariableMap("dp", z, "x", x, keys, utility_shift=shift)
    return model, vm


# -- observation-based model ------------------------------------------------------------


def build_dpr_model(
    d: InfluenceDiagram,
    *,
    with_cuts: bool = True,
    cuts_as_equalities: bool = False,
    filter_zero_segments: bool = False,
    eps_shift: float = EPS_SHIFT,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    stats: PathStatistics | None = None,
):
    """One continuous y per observable segment, weighted by its expected utility."""
    if cuts_as_equalities and filter_zero_segments:
        raise ValueError(
            "equality cuts cannot be combined with zero-segment filtering: "
            "a compatible filtered segment would make the cut rows infeasible"
        )
    stats = stats or compute_statistics(d, chunk_size=chunk_size, workers=workers)
    shift = stats.shift(eps_shift)
    seg_coef = stats.shifted_segment_eu(eps_shift)
    keys = np.arange(stats.n_segments, dtype=np.int64)
    if filter_zero_segments:
        keys = keys[seg_coef > 0.0]

    model = MilpModel(metadata={"formulation": "dpr", "utility_shift": shift})
    z = _add_strategy(model, d)
    y = model.add_vars((f"y[{k}]" for k in keys.tolist()), 0.0, 1.0, CONTINUOUS)
    model.set_objective(y, seg_coef[keys])

    space = PathSpace(d, chunk_size)
    coords = _segment_coords(space, keys)
    row_keys = _decision_row_keys(d, coords, keys.size)
    gamma = {}
    for dn in d.decision_nodes:
        n_info, n_alt = d.n_info_states(dn), d.n_states(dn)
        n_linked = np.bincount(row_keys[dn], minlength=n_info * n_alt).reshape(n_info, n_alt)
        gamma[dn] = np.minimum(gamma_table(d, dn, stats), n_linked)
    _add_links(model, d, z, y, row_keys, gamma)
    if with_cuts or cuts_as_equalities:
        _add_cuts(model, d, y, coords, keys.size, "=" if cuts_as_equalities else "<=")
    vm = VariableMap("dpr", z, "y", y, keys, utility_shift=shift)
    return model, vm


def _add_cuts(model, d, y, coords, n, sense):
    ci = observed_chance_nodes(d)
    key = _joint(d, coords, ci, n)
    n_rows = math.prod(d.sizes(ci))
    order = np.argsort(key, kind="stable")
    bounds = np.searchsorted(key[order], np.arange(n_rows + 1))
    for r in range(n_rows):
        members = y[order[bounds[r] : bounds[r + 1]]]
        model.add_constraint(f"cut[{r}]", members, 1.0, sense, 1.0)


# -- CVaR model ------------------------------------------------------------------------


def build_cvar_model(
    d: InfluenceDiagram,
    alpha: float,
    *,
    quantum: float | None = None,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
    stats: PathStatistics | None = None,
):
    """Maximize the expected utility of the worst ``alpha`` tail.

    Observation cuts are equalities so that every segment compatible with the
    strategy carries its probability into the utility distribution.
    Utilities are not shifted.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if stats is None or stats.masses is None:
        stats = compute_statistics(
            d, levels=True, quantum=quantum, chunk_size=chunk_size, workers=workers
        )
    levels, eps = stats.levels, stats.cvar_eps
    big_m = float(levels[-1] - levels[0]) + eps
    keys = np.arange(stats.n_segments, dtype=np.int64)

    model = MilpModel(metadata={"formulation": "cvar", "alpha": alpha, "utility_shift": 0.0})
    z = _add_strategy(model, d)
    y = model.add_vars((f"y[{k}]" for k in keys.tolist()), 0.0, 1.0, CONTINUOUS)

    space = PathSpace(d, chunk_size)
    coords = _segment_coords(space, keys)
    row_keys = _decision_row_keys(d, coords, keys.size)
    gamma = {}
    for dn in d.decision_nodes:
        n_info, n_alt = d.n_info_states(dn), d.n_states(dn)
        n_linked = np.bincount(row_keys[dn], minlength=n_info * n_alt).reshape(n_info, n_alt)
        gamma[dn] = n_linked // _other_decisions_size(d, dn)
    _add_links(model, d, z, y, row_keys, gamma)
    _add_cuts(model, d, y, coords, keys.size, "=")

    nl = len(levels)
    lam = model.add_vars((f"lam[{k}]" for k in range(nl)), vtype=BINARY)
    lambar = model.add_vars((f"lambar[{k}]" for k in range(nl)), vtype=BINARY)
    rho = model.add_vars((f"rho[{k}]" for k in range(nl)), 0.0, 1.0)
    rhobar = model.add_vars((f"rhobar[{k}]" for k in range(nl)), 0.0, 1.0)
    eta = model.add_var("eta", -np.inf, np.inf)

    masses = stats.masses
    for k, u in enumerate(levels.tolist()):
        nz = np.nonzero(masses[:, k])[0]
        q_cols, q_coef = y[nz], masses[nz, k]
        add = model.add_constraint
        add(f"eta_lo[{k}]", [eta, lam[k]], [1.0, -big_m], "<=", u)
        add(f"eta_lam[{k}]", [eta, lam[k]], [1.0, -(big_m + eps)], ">=", u - big_m)
        add(f"eta_hi[{k}]", [eta, lambar[k]], [1.0, -(big_m + eps)], "<=", u - eps)
        add(f"eta_lambar[{k}]", [eta, lambar[k]], [1.0, -big_m], ">=", u - big_m)
        add(f"rhobar_lambar[{k}]", [rhobar[k], lambar[k]], [1.0, -1.0], "<=", 0.0)
        add(
            f"rho_q[{k}]",
            np.concatenate([q_cols, [lam[k], rho[k]]]),
            np.concatenate([q_coef, [1.0, -1.0]]),
            "<=",
            1.0,
        )
        add(f"rho_lam[{k}]", [rho[k], lam[k]], [1.0, -1.0], "<=", 0.0)
        add(f"rho_rhobar[{k}]", [rho[k], rhobar[k]], [1.0, -1.0], "<=", 0.0)
        add(
            f"rhobar_q[{k}]",
            np.concatenate([[rhobar[k]], q_cols]),
            np.concatenate([[1.0], -q_coef]),
            "<=",
            0.0,
        )
    model.add_constraint("tail_mass", rhobar, 1.0, "=", alpha)
    model.set_objective(rhobar, levels / alpha)

    vm = VariableMap(
        "cvar", z, "y", y, keys,
        lam=lam, lambar=lambar, rho=rho, rhobar=rhobar, eta=eta,
        levels=levels, alpha=alpha, big_m=big_m, cvar_eps=eps,
    )
    return model, vm


# -- chance constraints -------------------------------------------------------------------


def add_chance_constraint(
    model: MilpModel,
    varmap: VariableMap,
    d: InfluenceDiagram,
    spec: ChanceConstraintSpec,
    *,
    enforce_activity: bool = True,
    chunk_size: int = DEFAULT_CHUNK,
) -> MilpModel:
    """Append ``P(nodes in states) <= threshold`` to a dp or dpr model.

    With ``enforce_activity`` a single probability row ``sum p x = 1`` (or its
    segment analogue) is also added once per model. Without it the solver may
    zero out strategy-compatible paths to dodge the bound and report a value
    no strategy attains.
    """
    if varmap.formulation not in ("dp", "dpr"):
        raise ValueError("chance constraints are supported on dp and dpr models")
    check_state_nodes(d, spec.nodes)
    joint_state_indicator(d, spec.nodes, spec.states)  # bounds check

    if varmap.formulation == "dp":
        weights, probs = _path_weights(d, spec, varmap.path_key, chunk_size)
    else:
        seg_w = segment_event_probability(d, spec.nodes, spec.states, chunk_size)
        weights = seg_w[varmap.path_key]
        probs = None
    n = sum(1 for c in model.constraints if c.name.startswith("chance["))
    nz = np.nonzero(weights)[0]
    model.add_constraint(f"chance[{n}]", varmap.path[nz], weights[nz], "<=", spec.threshold)

    if enforce_activity and not model.metadata.get("activity_row"):
        if probs is None:
            probs = compute_statistics(d, chunk_size=chunk_size).segment_prob[varmap.path_key]
        nz = np.nonzero(probs)[0]
        model.add_constraint("activity", varmap.path[nz], probs[nz], "=", 1.0)
        model.metadata["activity_row"] = True
    return model


def _path_weights(d, spec, path_keys, chunk_size):
    space = PathSpace(d, chunk_size)
    ind = space.embed(joint_state_indicator(d, spec.nodes, spec.states), spec.nodes)
    w, p = [], []
    for b in space.blocks():
        pos = b.probability > 0.0
        w.append((b.probability * b.take(ind))[pos])
        p.append(b.probability[pos])
    w, p = np.concatenate(w), np.concatenate(p)
    if w.size != path_keys.size:
        raise ValueError("variable map does not match the diagram's positive paths")
    return w, p
