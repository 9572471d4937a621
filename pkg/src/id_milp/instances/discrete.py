"""Seeded random instances of the three benchmark families.

All randomness comes from ``numpy.random.default_rng(seed)`` (PCG64), drawn
in a fixed order, so a (family, size, seed) triple always yields the same
diagram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diagram import CHANCE, DECISION, VALUE, InfluenceDiagram, Node

FAMILIES = ("oil", "turbine", "water")


@dataclass(frozen=True)
class GeneratorConfig:
    family: str
    size: int
    seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        low = 1 if self.family == "oil" else 2
        if self.size < low:
            raise ValueError(f"{self.family} needs size >= {low}")

    def build(self) -> InfluenceDiagram:
        return GENERATORS[self.family](self.size, self.seed)


def random_cpt(row_count: int, state_count: int, rng: np.random.Generator) -> np.ndarray:
    """Rows of i.i.d. uniforms, each divided by its sum."""
    if row_count < 1 or state_count < 1:
        raise ValueError("row and state counts must be positive")
    v = rng.random((row_count, state_count))
    bad = v.sum(axis=1) == 0.0
    while bad.any():
        v[bad] = rng.random((int(bad.sum()), state_count))
        bad = v.sum(axis=1) == 0.0
    v /= v.sum(axis=1, keepdims=True)
    return v


def _labels(values) -> tuple[str, ...]:
    out = [f"{v:.4f}" for v in values]
    if len(set(out)) != len(out):
        out = [f"{s}#{i}" for i, s in enumerate(out)]
    return tuple(out)


def _sorted_uniform(rng, lo, hi, n) -> np.ndarray:
    return np.sort(rng.uniform(lo, hi, n))


# -- oil wildcatter --------------------------------------------------------------------


def generate_oil(M: int, seed: int) -> InfluenceDiagram:
    """Oil well with ``M`` optional tests, each reporting on the site geology."""
    if M < 1:
        raise ValueError("oil needs at least one test")
    rng = np.random.default_rng(seed)
    wells = ("dry", "medium", "wet")
    T = [f"T{i}" for i in range(1, M + 1)]
    R = [f"R{i}" for i in range(1, M + 1)]
    C = [f"C{i}" for i in range(1, M + 1)]

    nodes = [Node("O", CHANCE, wells), Node("S", CHANCE, wells)]
    nodes += [Node(t, DECISION, ("yes", "no")) for t in T]
    nodes += [Node(r, CHANCE, ("N/A", "dry", "medium", "wet")) for r in R]
    nodes += [Node("D", DECISION, ("yes", "no"))]
    nodes += [Node(c, VALUE, ()) for c in C] + [Node("U", VALUE, ())]
    arcs = [("O", "S"), ("O", "U"), ("D", "U")]
    for t, r, c in zip(T, R, C):
        arcs += [("S", r), (t, r), (r, "D"), (t, c)]

    cpts = {"O": random_cpt(1, 3, rng), "S": random_cpt(3, 3, rng)}
    for r in R:
        table = np.zeros((6, 4))  # rows: S state * 2 + T state
        table[0::2, 1:] = random_cpt(3, 3, rng)
        table[1::2, 0] = 1.0
        cpts[r] = table
    test_cost = rng.uniform(1, 50, M)
    drill_cost = rng.uniform(50, 90)
    medium, wet = _sorted_uniform(rng, 100, 1000, 2)
    payoff = np.array([0.0, medium, wet])

    utilities = {c: np.array([-test_cost[i], 0.0]) for i, c in enumerate(C)}
    u = np.zeros(6)  # rows: O state * 2 + D state
    u[0::2] = payoff - drill_cost
    utilities["U"] = u
    return InfluenceDiagram(nodes, arcs, cpts, utilities)


# -- turbine inspection and maintenance --------------------------------------------------

TURBINE_CHANCE = ("W", "FH", "SS", "TS", "SE", "TE", "SR", "TR", "TF")
TURBINE_ARCS = (
    ("FH", "SS"), ("FH", "IN"), ("FH", "M"), ("FH", "TS"), ("W", "TS"), ("W", "TF"),
    ("SS", "SE"), ("TS", "TE"), ("SE", "IN"), ("TS", "SE"), ("SE", "TE"), ("SS", "SR"),
    ("TS", "TR"), ("TS", "TF"), ("TE", "IN"), ("SE", "SR"), ("TE", "TR"), ("IN", "SR"),
    ("IN", "TR"), ("SR", "M"), ("SR", "TR"), ("TR", "M"), ("M", "TF"), ("M", "U"),
    ("IN", "U"), ("TF", "U"),
)
TURBINE_ORDER = ("W", "FH", "SS", "TS", "SE", "TE", "IN", "SR", "TR", "M", "TF", "U")
INSPECTIONS = ("none", "sensor check", "turbine check")
MAINTENANCE = ("none", "level 1", "level 2")


def turbine_skeleton(state_labels: dict[str, tuple[str, ...]]) -> InfluenceDiagram:
    """Turbine structure without tables; ``state_labels`` per chance node."""
    nodes = []
    for n in TURBINE_ORDER:
        if n == "IN":
            nodes.append(Node(n, DECISION, INSPECTIONS))
        elif n == "M":
            nodes.append(Node(n, DECISION, MAINTENANCE))
        elif n == "U":
            nodes.append(Node(n, VALUE, ()))
        else:
            nodes.append(Node(n, CHANCE, tuple(state_labels[n])))
    return InfluenceDiagram(nodes, list(TURBINE_ARCS))


def turbine_utility(reward: np.ndarray, inspection: np.ndarray, maintenance: np.ndarray) -> np.ndarray:
    """Table over (IN, M, TF), TF fastest: reward minus both costs."""
    return (reward[None, None, :] - inspection[:, None, None] - maintenance[None, :, None]).reshape(-1)


def generate_turbine(K: int, seed: int) -> InfluenceDiagram:
    if K < 2:
        raise ValueError("turbine needs K >= 2")
    rng = np.random.default_rng(seed)
    labels = {c: _labels(_sorted_uniform(rng, 0, 100, K)) for c in TURBINE_CHANCE}
    skel = turbine_skeleton(labels)
    cpts = {c: random_cpt(skel.n_info_states(c), K, rng) for c in TURBINE_CHANCE}
    inspection = np.concatenate([[0.0], _sorted_uniform(rng, 10, 100, 2)])
    maintenance = np.concatenate([[0.0], _sorted_uniform(rng, 500, 3000, 2)])
    reward = _sorted_uniform(rng, 100, 10000, K)
    return skel.with_tables(cpts, {"U": turbine_utility(reward, inspection, maintenance)})


# -- water management ----------------------------------------------------------------------

WATER_ORDER = ("A", "W1", "W2", "F", "M", "D", "C", "V")
WATER_ARCS = (
    ("F", "D"), ("W1", "W2"), ("D", "W2"), ("A", "W2"), ("A", "W1"), ("W1", "F"),
    ("M", "F"), ("D", "C"), ("M", "C"), ("C", "V"), ("M", "V"), ("W2", "V"),
)


def generate_water(K: int, seed: int) -> InfluenceDiagram:
    """Lake restoration: monitoring level M, dilution amount D; V = reward - costs."""
    if K < 2:
        raise ValueError("water needs K >= 2")
    rng = np.random.default_rng(seed)
    labels = {n: _labels(_sorted_uniform(rng, 0, 100, K)) for n in ("A", "W1", "W2", "F", "D")}
    dilution = _sorted_uniform(rng, 0, 100, K)
    labels["C"] = _labels(dilution)
    nodes = []
    for n in WATER_ORDER:
        if n == "M":
            nodes.append(Node(n, DECISION, ("level 1", "level 2", "level 3")))
        elif n == "D":
            nodes.append(Node(n, DECISION, labels["D"]))
        elif n == "V":
            nodes.append(Node(n, VALUE, ()))
        else:
            nodes.append(Node(n, CHANCE, labels[n]))
    skel = InfluenceDiagram(nodes, list(WATER_ARCS))
    cpts = {c: random_cpt(skel.n_info_states(c), K, rng) for c in ("A", "W1", "W2", "F", "C")}
    monitoring = _sorted_uniform(rng, 0, 100, 3)
    reward = _sorted_uniform(rng, 0, 500, K)
    # V parents in declared order: W2, M, C
    v = reward[:, None, None] - monitoring[None, :, None] - dilution[None, None, :]
    return skel.with_tables(cpts, {"V": v.reshape(-1)})


GENERATORS = {"oil": generate_oil, "turbine": generate_turbine, "water": generate_water}


def generate(family: str, size: int, seed: int) -> InfluenceDiagram:
    return GeneratorConfig(family, size, seed).build()
