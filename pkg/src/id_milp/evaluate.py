"""Evaluate a fixed decision strategy: expected utility, utility distribution, CVaR."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .diagram import DecisionStrategy, InfluenceDiagram
from .paths import DEFAULT_CHUNK, PathSpace, quantize


def compatibility_factors(space: PathSpace, strategy: DecisionStrategy) -> list[np.ndarray]:
    """Per decision, an embedded boolean table: does the path follow the rule?"""
    d = space.d
    out = []
    for dn in d.decision_nodes:
        z = strategy.one_hot(d)[dn].astype(bool)
        out.append(space.embed(z, list(d.parents(dn)) + [dn]))
    return out


def _compatible_blocks(d: InfluenceDiagram, strategy: DecisionStrategy, chunk_size: int):
    strategy.check(d)
    space = PathSpace(d, chunk_size)
    factors = compatibility_factors(space, strategy)
    for b in space.blocks():
        mask = np.ones(b.size, dtype=bool)
        for f in factors:
            mask &= b.take(f)
        yield b, mask


def expected_utility_of_strategy(
    d: InfluenceDiagram, strategy: DecisionStrategy, chunk_size: int = DEFAULT_CHUNK
) -> float:
    total = 0.0
    for b, mask in _compatible_blocks(d, strategy, chunk_size):
        total += float(np.dot(b.probability[mask], b.utility[mask]))
    return total


def utility_distribution_of_strategy(
    d: InfluenceDiagram,
    strategy: DecisionStrategy,
    quantum: float | None = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> list[tuple[float, float]]:
    """Atoms ``(u, q(u))`` with positive probability, ascending in ``u``."""
    us, ps = [], []
    for b, mask in _compatible_blocks(d, strategy, chunk_size):
        keep = mask & (b.probability > 0.0)
        us.append(quantize(b.utility[keep], quantum))
        ps.append(b.probability[keep])
    u = np.concatenate(us)
    p = np.concatenate(ps)
    levels, inv = np.unique(u, return_inverse=True)
    q = np.bincount(inv, weights=p, minlength=len(levels))
    return [(float(a), float(b)) for a, b in zip(levels, q)]


def cvar_of_distribution(dist: Sequence[tuple[float, float]], alpha: float) -> float:
    """Mean of the worst ``alpha`` probability tail of a discrete distribution."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    atoms = sorted(dist)
    remaining = alpha
    acc = 0.0
    for u, q in atoms:
        take = min(q, remaining)
        if take <= 0.0:
            break
        acc += take * u
        remaining -= take
    if remaining > 1e-9:
        raise ValueError("distribution mass is smaller than alpha")
    return acc / alpha


def cvar_batch(levels: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized CVaR for rows of ``q`` over ascending ``levels``."""
    q = np.atleast_2d(q)
    before = np.cumsum(q, axis=1) - q
    tail = np.clip(np.minimum(q, alpha - before), 0.0, None)
    return tail @ levels / alpha
