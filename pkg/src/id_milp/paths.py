"""Paths, observable segments and the precomputation layer.

A path assigns one state to every chance and decision node; paths are ordered
mixed-radix over the declared node order (last node fastest). Bulk statistics
are computed by streaming the path space in contiguous blocks so that memory
stays proportional to the number of observable segments, not paths.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .diagram import DiagramError, InfluenceDiagram, observation_set

EPS_SHIFT = 1.0
DEFAULT_CHUNK = 1 << 16


# -- per-path primitives --------------------------------------------------------


def enumerate_paths(d: InfluenceDiagram) -> Iterator[tuple[int, ...]]:
    """Yield every path in mixed-radix order."""
    return itertools.product(*(range(n) for n in d.sizes(d.state_nodes)))


def _assignment(d: InfluenceDiagram, s: Sequence[int]) -> dict[str, int]:
    return dict(zip(d.state_nodes, s))


def path_probability(d: InfluenceDiagram, s: Sequence[int]) -> float:
    a = _assignment(d, s)
    p = 1.0
    for c in d.chance_nodes:
        p *= float(d.cpts[c][d.info_index(c, a), a[c]])
    return p


def path_utility(d: InfluenceDiagram, s: Sequence[int]) -> float:
    a = _assignment(d, s)
    u = 0.0
    for v in d.value_nodes:
        u += float(d.utilities[v][d.info_index(v, a)])
    return u


def shift_utilities_positive(values, eps: float = EPS_SHIFT) -> np.ndarray:
    """Return ``values - min(values) + eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot shift an empty utility vector")
    return values - values.min() + eps


def observable_segments(d: InfluenceDiagram) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(n) for n in d.sizes(observation_set(d))))


def _check_universe(d: InfluenceDiagram, segment: Mapping[str, int], universe: Sequence[str]):
    for name, state in segment.items():
        if name not in universe:
            raise ValueError(f"segment node {name!r} is outside the allowed node set")
        if not 0 <= int(state) < d.n_states(name):
            raise ValueError(f"state {state} out of range for node {name!r}")


def extension(
    d: InfluenceDiagram, segment: Mapping[str, int], mode: str = "all"
) -> Iterator[tuple[int, ...]]:
    """Paths (modes ``all``/``positive``) or observable segments (``observable``)
    that agree with ``segment``."""
    if mode == "observable":
        universe = observation_set(d)
    elif mode in ("all", "positive"):
        universe = d.state_nodes
    else:
        raise ValueError(f"unknown extension mode {mode!r}")
    _check_universe(d, segment, universe)
    ranges = [
        (int(segment[n]),) if n in segment else range(d.n_states(n)) for n in universe
    ]
    for s in itertools.product(*ranges):
        if mode == "positive" and path_probability(d, s) <= 0.0:
            continue
        yield s


def _segment_dict(d: InfluenceDiagram, s_o: Sequence[int]) -> dict[str, int]:
    obs = observation_set(d)
    if len(s_o) != len(obs):
        raise ValueError(f"observable segment needs {len(obs)} states, got {len(s_o)}")
    return dict(zip(obs, s_o))


def segment_expected_utility(d: InfluenceDiagram, s_o: Sequence[int]) -> float:
    """Sum of p(s) U(s) over the extension of an observable segment."""
    total = 0.0
    for s in extension(d, _segment_dict(d, s_o)):
        total += path_probability(d, s) * path_utility(d, s)
    return total


def segment_utility_mass(d: InfluenceDiagram, s_o: Sequence[int], u: float, quantum=None) -> float:
    """Probability mass of the paths extending ``s_o`` whose utility is ``u``."""
    total = 0.0
    for s in extension(d, _segment_dict(d, s_o)):
        if quantize(path_utility(d, s), quantum) == u:
            total += path_probability(d, s)
    return total


def quantize(values, quantum=None):
    if quantum is None:
        return values
    return np.round(np.asarray(values, dtype=float) / quantum) * quantum


def cvar_epsilon(levels: np.ndarray) -> float:
    """Half the smallest positive gap between utility levels (1 if there is none)."""
    if len(levels) < 2:
        return 1.0
    return 0.5 * float(np.min(np.diff(levels)))


# -- block streaming engine ---------------------------------------------------------


class PathSpace:
    """Broadcast view of the path space of a diagram.

    Every table is embedded as an array with one axis per chance/decision
    node (singleton where the table does not depend on the node), so per-path
    quantities of a block are plain broadcasts.
    """

    def __init__(self, d: InfluenceDiagram, chunk_size: int = DEFAULT_CHUNK):
        self.d = d
        self.axes = d.state_nodes
        self.axis = {n: i for i, n in enumerate(self.axes)}
        self.shape = d.sizes(self.axes)
        self.n_paths = math.prod(self.shape)
        self.obs = observation_set(d)
        self.obs_shape = d.sizes(self.obs)
        self.n_segments = math.prod(self.obs_shape)
        self.chunk_size = max(1, int(chunk_size))
        self.prob_factors = [
            self.embed(d.cpts[c], list(d.parents(c)) + [c]) for c in d.chance_nodes
        ]
        self.util_factors = [self.embed(d.utilities[v], d.parents(v)) for v in d.value_nodes]
        self._split = next(
            j for j in range(len(self.shape) + 1) if math.prod(self.shape[j:]) <= self.chunk_size
        )

    def embed(self, table, members: Sequence[str]) -> np.ndarray:
        """Place a table over ``members`` (mixed radix, last fastest) on the path axes."""
        members = list(members)
        if len(set(members)) != len(members):
            raise ValueError("repeated member node")
        arr = np.asarray(table).reshape(self.d.sizes(members))
        order = sorted(range(len(members)), key=lambda i: self.axis[members[i]])
        arr = arr.transpose(order)
        full = [1] * len(self.axes)
        for i in order:
            full[self.axis[members[i]]] = self.d.n_states(members[i])
        return arr.reshape(full)

    def index_factor(self, members: Sequence[str]) -> np.ndarray:
        """Mixed-radix joint index over ``members`` as an embedded table."""
        sizes = self.d.sizes(members)
        return self.embed(np.arange(math.prod(sizes), dtype=np.int64), members)

    def blocks(self) -> Iterator["Block"]:
        j = self._split
        tail = self.shape[j:]
        tail_size = math.prod(tail)
        for k, prefix in enumerate(itertools.product(*(range(n) for n in self.shape[:j]))):
            yield Block(self, prefix, tail, k * tail_size)

    def dense(self, factor: np.ndarray) -> np.ndarray:
        return np.broadcast_to(factor, self.shape)

    def dense_probability(self) -> np.ndarray:
        out = np.ones(self.shape)
        for f in self.prob_factors:
            out = out * f
        return out

    def dense_utility(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for f in self.util_factors:
            out = out + f
        return out


class Block:
    """A contiguous run of paths sharing the states of the leading axes."""

    def __init__(self, space: PathSpace, prefix: tuple[int, ...], tail: tuple[int, ...], start: int):
        self.space = space
        self.prefix = prefix
        self.tail = tail
        self.start = start
        self.size = math.prod(tail)
        self._p = None
        self._u = None

    def take(self, factor: np.ndarray) -> np.ndarray:
        j = len(self.prefix)
        key = tuple(i if factor.shape[a] > 1 else 0 for a, i in enumerate(self.prefix))
        sub = factor[key] if j else factor
        return np.broadcast_to(sub, self.tail).reshape(-1)

    @property
    def probability(self) -> np.ndarray:
        if self._p is None:
            p = np.ones(self.size)
            for f in self.space.prob_factors:
                p = p * self.take(f)
            self._p = p
        return self._p

    @property
    def utility(self) -> np.ndarray:
        if self._u is None:
            u = np.zeros(self.size)
            for f in self.space.util_factors:
                u = u + self.take(f)
            self._u = u
        return self._u

    @property
    def path_index(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size, dtype=np.int64)


def positive_path_set(d: InfluenceDiagram, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Linear indices of S^> (paths with p(s) > 0), ascending."""
    space = PathSpace(d, chunk_size)
    parts = [b.path_index[b.probability > 0.0] for b in space.blocks()]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def utility_levels(d: InfluenceDiagram, quantum=None, chunk_size: int = DEFAULT_CHUNK):
    """Sorted distinct path utilities U and the CVaR epsilon."""
    space = PathSpace(d, chunk_size)
    levels = np.unique(
        np.concatenate([np.unique(quantize(b.utility, quantum)) for b in space.blocks()])
    )
    return levels, cvar_epsilon(levels)


# -- aggregated statistics ----------------------------------------------------------


@dataclass
class PathStatistics:
    """Per-segment aggregates used by the model builders.

    ``segment_eu`` and ``segment_prob`` are indexed by the mixed-radix index
    of the observable segment; ``positive_rows[d]`` counts positive-probability
    paths per ``(information state, alternative)`` of decision ``d``.
    """

    n_paths: int
    n_positive: int
    n_segments: int
    min_utility: float
    max_utility: float
    segment_eu: np.ndarray
    segment_prob: np.ndarray
    positive_rows: dict[str, np.ndarray]
    levels: np.ndarray | None = None
    cvar_eps: float | None = None
    masses: np.ndarray | None = None  # shape (n_segments, n_levels)
    quantum: float | None = None
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def shift(self, eps: float = EPS_SHIFT) -> float:
        """Offset added to every path utility to make it at least ``eps``."""
        return eps - self.min_utility

    def shifted_segment_eu(self, eps: float = EPS_SHIFT) -> np.ndarray:
        return self.segment_eu + self.shift(eps) * self.segment_prob


def _run_blocks(space: PathSpace, fn, workers: int):
    blocks = space.blocks()
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(fn, blocks)
    else:
        for b in blocks:
            yield fn(b)


def compute_statistics(
    d: InfluenceDiagram,
    *,
    levels: bool = False,
    quantum: float | None = None,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> PathStatistics:
    """Stream the path space once (twice when utility masses are requested).

    Partial sums are merged in block order, so results do not depend on
    ``workers``.
    """
    space = PathSpace(d, chunk_size)
    nseg = space.n_segments
    seg_factor = space.index_factor(space.obs)
    row_factors = {
        dn: space.index_factor(list(d.parents(dn)) + [dn]) for dn in d.decision_nodes
    }
    row_sizes = {dn: d.n_info_states(dn) * d.n_states(dn) for dn in d.decision_nodes}

    def first_pass(b: Block):
        p, u = b.probability, b.utility
        seg = b.take(seg_factor)
        pos = p > 0.0
        rows = {
            dn: np.bincount(b.take(f)[pos], minlength=row_sizes[dn]) for dn, f in row_factors.items()
        }
        lv = np.unique(quantize(u, quantum)) if levels else None
        return (
            np.bincount(seg, weights=p * u, minlength=nseg),
            np.bincount(seg, weights=p, minlength=nseg),
            int(pos.sum()),
            float(u.min()),
            float(u.max()),
            rows,
            lv,
        )

    seg_eu = np.zeros(nseg)
    seg_prob = np.zeros(nseg)
    n_pos = 0
    umin, umax = math.inf, -math.inf
    pos_rows = {dn: np.zeros(n, dtype=np.int64) for dn, n in row_sizes.items()}
    level_parts = []
    for eu, pr, npos, lo, hi, rows, lv in _run_blocks(space, first_pass, workers):
        seg_eu += eu
        seg_prob += pr
        n_pos += npos
        umin, umax = min(umin, lo), max(umax, hi)
        for dn in rows:
            pos_rows[dn] += rows[dn]
        if lv is not None:
            level_parts.append(lv)

    stats = PathStatistics(
        n_paths=space.n_paths,
        n_positive=n_pos,
        n_segments=nseg,
        min_utility=umin,
        max_utility=umax,
        segment_eu=seg_eu,
        segment_prob=seg_prob,
        positive_rows=pos_rows,
        quantum=quantum,
    )
    if levels:
        lv = np.unique(np.concatenate(level_parts))
        stats.levels = lv
        stats.cvar_eps = cvar_epsilon(lv)
        stats.masses = _segment_masses(space, seg_factor, lv, quantum, workers)
    return stats


def _segment_masses(space, seg_factor, lv, quantum, workers) -> np.ndarray:
    nseg, nlev = space.n_segments, len(lv)

    def mass_pass(b: Block):
        li = np.searchsorted(lv, quantize(b.utility, quantum))
        joint = b.take(seg_factor) * nlev + li
        return np.bincount(joint, weights=b.probability, minlength=nseg * nlev)

    total = np.zeros(nseg * nlev)
    for part in _run_blocks(space, mass_pass, workers):
        total += part
    return total.reshape(nseg, nlev)


def joint_state_indicator(d: InfluenceDiagram, nodes: Sequence[str], states: Iterable[Sequence[int]]):
    """Boolean table over the joint states of ``nodes`` marking ``states``."""
    sizes = d.sizes(nodes)
    table = np.zeros(math.prod(sizes), dtype=bool)
    for st in states:
        st = tuple(int(x) for x in st)
        if len(st) != len(nodes) or any(not 0 <= x < n for x, n in zip(st, sizes)):
            raise ValueError(f"joint state {st} out of bounds for nodes {list(nodes)}")
        table[np.ravel_multi_index(st, sizes) if nodes else 0] = True
    return table


def segment_event_probability(
    d: InfluenceDiagram,
    nodes: Sequence[str],
    states: Iterable[Sequence[int]],
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Per observable segment, the probability of its extension paths whose
    restriction to ``nodes`` lies in ``states``."""
    space = PathSpace(d, chunk_size)
    ind = space.embed(joint_state_indicator(d, nodes, states), nodes)
    seg_factor = space.index_factor(space.obs)
    out = np.zeros(space.n_segments)
    for b in space.blocks():
        out += np.bincount(
            b.take(seg_factor), weights=b.probability * b.take(ind), minlength=space.n_segments
        )
    return out


def check_state_nodes(d: InfluenceDiagram, nodes: Iterable[str]) -> None:
    for n in nodes:
        if n not in d:
            raise DiagramError(f"unknown node {n!r}")
        if d.node(n).kind == "value":
            raise DiagramError(f"value node {n!r} has no states")
