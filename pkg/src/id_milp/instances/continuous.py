"""Continuous turbine model: ancestral sampling and discretization by counting.

Every continuous quantity lives on [0, 100]. Interval states are
``[0, b1], (b1, b2], ..., (b_n, 100]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import truncnorm

from ..diagram import InfluenceDiagram
from .discrete import TURBINE_CHANCE, turbine_skeleton, turbine_utility

LO, HI = 0.0, 100.0
SAMPLE_CHUNK = 1 << 14

BREAKPOINTS = {
    2: (50.0,),
    3: (50.0, 75.0),
    4: (25.0, 50.0, 75.0),
    5: (25.0, 50.0, 75.0, 87.5),
    6: (25.0, 50.0, 62.5, 75.0, 87.5),
}

VARIANCE_RANGES = {
    "SS": (10.0, 100.0),
    "TS": (10.0, 100.0),
    "SE": (10.0, 100.0),
    "TR": (0.2, 10.0),
    "TF": (0.2, 10.0),
}
COST_RANGES = {
    "sensor": (0.0, 20.0),
    "turbine": (50.0, 300.0),
    "level1": (100.0, 2000.0),
    "level2": (3000.0, 8000.0),
}


def reward(tf):
    """Turbine-flow reward ``tf**3 / 100``."""
    return np.asarray(tf, dtype=float) ** 3 / 100.0


def default_breakpoints(N: int) -> tuple[float, ...]:
    if N not in BREAKPOINTS:
        raise ValueError(f"no default breakpoints for N={N}; supply custom breakpoints")
    return BREAKPOINTS[N]


@dataclass(frozen=True)
class TurbineVariances:
    """Variances per node. ``TR`` is (I=1, I=2); ``TF`` is (M=0, M=1, M=2)."""

    SS: float
    TS: float
    SE: float
    TR: tuple[float, float]
    TF: tuple[float, float, float]

    def check(self) -> None:
        for name in ("SS", "TS", "SE"):
            lo, hi = VARIANCE_RANGES[name]
            if not lo <= getattr(self, name) <= hi:
                raise ValueError(f"variance of {name} outside [{lo}, {hi}]")
        for name, k in (("TR", 2), ("TF", 3)):
            vals = getattr(self, name)
            lo, hi = VARIANCE_RANGES[name]
            if len(vals) != k or any(not lo <= v <= hi for v in vals):
                raise ValueError(f"variances of {name} must be {k} values in [{lo}, {hi}]")


@dataclass(frozen=True)
class TurbineCosts:
    sensor: float
    turbine: float
    level1: float
    level2: float

    @property
    def inspection(self) -> np.ndarray:
        return np.array([0.0, self.sensor, self.turbine])

    @property
    def maintenance(self) -> np.ndarray:
        return np.array([0.0, self.level1, self.level2])


def sample_parameters(seed: int) -> tuple[TurbineVariances, TurbineCosts]:
    """Random variances and costs for one continuous instance."""
    rng = np.random.default_rng(seed)
    ss, ts, se = rng.uniform(10.0, 100.0, 3)
    tr = np.sort(rng.uniform(0.2, 10.0, 2))[::-1]  # larger variance for I=1
    tf = np.sort(rng.uniform(0.2, 10.0, 3))[::-1]  # largest for M=0, smallest for M=2
    var = TurbineVariances(float(ss), float(ts), float(se), tuple(map(float, tr)), tuple(map(float, tf)))
    costs = TurbineCosts(*(float(rng.uniform(*COST_RANGES[k])) for k in ("sensor", "turbine", "level1", "level2")))
    return var, costs


def _tnorm(rng, mean, var, lo=LO, hi=HI):
    """Normal(mean, var) truncated to [lo, hi], elementwise; degenerate cases collapse."""
    mean = np.asarray(mean, dtype=float)
    n = mean.shape[0]
    var = np.broadcast_to(np.asarray(var, dtype=float), (n,))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    out = np.clip(mean, lo, hi)
    ok = (var > 1e-12) & (hi - lo > 1e-12)
    if ok.any():
        sd = np.sqrt(var[ok])
        a = (lo[ok] - mean[ok]) / sd
        b = (hi[ok] - mean[ok]) / sd
        out[ok] = truncnorm.rvs(a, b, loc=mean[ok], scale=sd, random_state=rng)
    return np.clip(out, lo, hi)


def _mixture(rng, weight, mean, var):
    """With probability ``weight`` a truncated normal, otherwise U(0, 100)."""
    n = mean.shape[0]
    normal = _tnorm(rng, mean, var)
    uniform = rng.uniform(LO, HI, n)
    pick = rng.random(n) < weight
    return np.where(pick, normal, uniform)


@dataclass(frozen=True)
class SamplePath:
    values: dict[str, float]
    IN: int
    M: int
    utility: float


@dataclass
class SampleSet:
    """Columnar sample paths; ``values[node]`` is an array over samples."""

    values: dict[str, np.ndarray]
    IN: np.ndarray
    M: np.ndarray
    utility: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.utility.shape[0])

    def __getitem__(self, i: int) -> SamplePath:
        return SamplePath(
            {k: float(v[i]) for k, v in self.values.items()},
            int(self.IN[i]), int(self.M[i]), float(self.utility[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _sample_chunk(seed_seq, n, var: TurbineVariances, costs: TurbineCosts, te_mean: str):
    rng = np.random.default_rng(seed_seq)
    v = {}
    v["W"] = rng.uniform(LO, HI, n)
    v["FH"] = rng.uniform(LO, HI, n)
    v["SS"] = _tnorm(rng, 100.0 - v["FH"], var.SS)
    v["TS"] = _tnorm(rng, 100.0 - (v["FH"] + v["W"]) / 2.0, var.TS)
    v["SE"] = _mixture(rng, v["TS"] / 100.0, v["SS"], var.SE)
    v["TE"] = _tnorm(rng, v[te_mean], (100.0 - v["SE"]) / 5.0)
    IN = rng.integers(0, 3, n)
    sr_noisy = _tnorm(rng, v["SS"], 1.0)
    v["SR"] = np.where(IN == 0, v["SE"], sr_noisy)
    tr1 = _mixture(rng, v["SR"] / 100.0, v["TS"], var.TR[0])
    tr2 = _tnorm(rng, v["TS"], var.TR[1])
    v["TR"] = np.select([IN == 0, IN == 1], [v["TE"], tr1], tr2)
    M = rng.integers(0, 3, n)
    ts, w = v["TS"], v["W"]
    tf0 = _tnorm(rng, ts - 0.02 * w, var.TF[0], LO, ts)
    tf1 = _tnorm(rng, ts + (100.0 - ts) / 2.0 - 0.02 * w, var.TF[1], ts, HI)
    tf2 = _tnorm(rng, np.full(n, 100.0), var.TF[2], ts, HI)
    v["TF"] = np.select([M == 0, M == 1], [tf0, tf1], tf2)
    util = reward(v["TF"]) - costs.inspection[IN] - costs.maintenance[M]
    return v, IN, M, util


def turbine_continuous_sample(
    variances: TurbineVariances,
    costs: TurbineCosts,
    n: int,
    seed: int,
    *,
    te_mean: str = "SS",
    workers: int = 1,
) -> SampleSet:
    """Draw ``n`` sample paths with both decisions chosen uniformly at random.

    ``te_mean`` selects the mean of the turbine estimate: ``"SS"`` as the
    distribution table prints it, or ``"TS"``.
    Samples are drawn in chunks of fixed size with seeds spawned from
    ``seed``, so the result does not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if te_mean not in ("SS", "TS"):
        raise ValueError("te_mean must be 'SS' or 'TS'")
    variances.check()
    n_chunks = math.ceil(n / SAMPLE_CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(SAMPLE_CHUNK, n - k * SAMPLE_CHUNK) for k in range(n_chunks)]

    def run(k):
        return _sample_chunk(seqs[k], sizes[k], variances, costs, te_mean)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(k) for k in range(n_chunks)]
    values = {c: np.concatenate([p[0][c] for p in parts]) for c in TURBINE_CHANCE}
    return SampleSet(
        values,
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]),
        {"seed": seed, "te_mean": te_mean, "costs": costs, "variances": variances},
    )


# -- discretization ---------------------------------------------------------------------


def to_bins(values, breakpoints: Sequence[float]) -> np.ndarray:
    """State index of each value: ``[0, b1]`` is state 0, ``(b_k, b_k+1]`` state k."""
    return np.searchsorted(np.asarray(breakpoints, dtype=float), values, side="left")


def interval_labels(breakpoints: Sequence[float]) -> tuple[str, ...]:
    edges = [LO, *breakpoints, HI]
    out = [f"[{edges[0]:g},{edges[1]:g}]"]
    out += [f"({a:g},{b:g}]" for a, b in zip(edges[1:-1], edges[2:])]
    return tuple(out)


def discretized_skeleton(breakpoints: Sequence[float]) -> InfluenceDiagram:
    labels = interval_labels(breakpoints)
    return turbine_skeleton({c: labels for c in TURBINE_CHANCE})


def discretize_from_samples(
    samples: SampleSet,
    breakpoints: Sequence[float],
    skeleton: InfluenceDiagram | None = None,
    notes: list | None = None,
):
    """Count-based CPTs and mean utilities from ``samples``.

    Information states never seen in the samples get a uniform CPT row, and
    utility cells never seen get ``reward(bin midpoint) - costs``; each such
    fallback is appended to ``notes`` when a list is given.
    Returns ``(cpts, utilities)``.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    bp = tuple(float(b) for b in breakpoints)
    if list(bp) != sorted(set(bp)) or (bp and (bp[0] <= LO or bp[-1] >= HI)):
        raise ValueError("breakpoints must be strictly increasing inside (0, 100)")
    skel = skeleton or discretized_skeleton(bp)
    state = {c: to_bins(samples.values[c], bp) for c in TURBINE_CHANCE}
    state["IN"] = samples.IN
    state["M"] = samples.M

    def row_index(node):
        idx = np.zeros(len(samples), dtype=np.int64)
        for p in skel.parents(node):
            idx = idx * skel.n_states(p) + state[p]
        return idx

    cpts = {}
    for c in TURBINE_CHANCE:
        n_rows, k = skel.n_info_states(c), skel.n_states(c)
        counts = np.bincount(row_index(c) * k + state[c], minlength=n_rows * k).reshape(n_rows, k)
        totals = counts.sum(axis=1, keepdims=True)
        empty = totals[:, 0] == 0
        table = np.where(totals > 0, counts / np.maximum(totals, 1), 1.0 / k)
        table /= table.sum(axis=1, keepdims=True)
        if notes is not None:
            for r in np.flatnonzero(empty).tolist():
                notes.append((c, "uniform-fallback", f"information state {r} never sampled"))
        cpts[c] = table

    n_cells = skel.n_info_states("U")
    idx = row_index("U")
    sums = np.bincount(idx, weights=samples.utility, minlength=n_cells)
    counts = np.bincount(idx, minlength=n_cells)
    edges = np.array([LO, *bp, HI])
    mids = (edges[:-1] + edges[1:]) / 2.0
    costs = samples.meta.get("costs")
    if costs is not None:
        fallback = turbine_utility(reward(mids), costs.inspection, costs.maintenance)
    else:
        fallback = np.tile(reward(mids), 9)
    util = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    if notes is not None:
        for r in np.flatnonzero(counts == 0).tolist():
            notes.append(("U", "utility-fallback", f"information state {r} never sampled"))
    return cpts, {"U": util}


def discretize_turbine(n_samples: int, N: int | Sequence[float], seed: int, *, te_mean="SS", workers=1):
    """Sample a random continuous instance and discretize it.

    ``N`` is a breakpoint count (default table) or an explicit breakpoint list.
    Returns ``(diagram, notes)``.
    """
    bp = default_breakpoints(N) if isinstance(N, int) else tuple(N)
    var, costs = sample_parameters(seed)
    samples = turbine_continuous_sample(var, costs, n_samples, seed + 1, te_mean=te_mean, workers=workers)
    skel = discretized_skeleton(bp)
    notes: list = []
    cpts, utils = discretize_from_samples(samples, bp, skel, notes)
    return skel.with_tables(cpts, utils), notes
