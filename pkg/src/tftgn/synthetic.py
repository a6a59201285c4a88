"""Seeded synthetic temporal graphs for tests, benchmarks and demos."""

from __future__ import annotations

from typing import Optional

import numpy as np

from tftgn.events import EventStream
from tftgn.exceptions import ValidationError


def zipf_stream(
    num_edges: int,
    num_nodes: int,
    seed: int = 0,
    exponent: float = 1.2,
    t_max: float = 1e6,
    edge_feature_dim: int = 0,
) -> EventStream:
    """Random stream whose endpoint popularity follows a truncated Zipf law.

    Node ``r`` of a random permutation is drawn with probability
    proportional to ``(r + 1) ** -exponent``, so slice lengths are heavily
    skewed. Timestamps are sorted uniform draws on ``[0, t_max)``.
    """
    if num_edges < 0 or num_nodes < 1:
        raise ValidationError("need num_edges >= 0 and num_nodes >= 1")
    rng = np.random.default_rng(seed)
    weights = (np.arange(1, num_nodes + 1, dtype=np.float64)) ** -exponent
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    relabel = rng.permutation(num_nodes)

    def draw(n):
        return relabel[np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), num_nodes - 1)]

    src = draw(num_edges)
    dst = draw(num_edges)
    ts = np.sort(rng.random(num_edges) * t_max)
    ef = rng.normal(size=(num_edges, edge_feature_dim)) if edge_feature_dim else None
    return EventStream(src, dst, ts, num_nodes, edge_features=ef)


def uniform_stream(
    num_edges: int,
    num_nodes: int,
    seed: int = 0,
    t_max: float = 1e6,
    integer_times: bool = False,
) -> EventStream:
    """Endpoints and timestamps drawn uniformly; ``integer_times`` forces many ties."""
    rng = np.random.default_rng(seed)
    src = rng.integers(0, num_nodes, num_edges)
    dst = rng.integers(0, num_nodes, num_edges)
    ts = rng.random(num_edges) * t_max
    if integer_times:
        ts = np.floor(ts / max(t_max / 50.0, 1.0))
    return EventStream(src, dst, np.sort(ts), num_nodes)


def planted_pairs_stream(
    num_edges: int = 200,
    num_pairs: int = 10,
    num_nodes: Optional[int] = None,
    seed: int = 0,
    noise: float = 0.0,
) -> EventStream:
    """Events that cycle through a fixed set of ``(src, dst)`` pairs.

    Each event picks one of ``num_pairs`` disjoint pairs at random, so every
    pair recurs throughout the stream. With probability ``noise`` the
    destination is replaced by a uniform random node instead.
    """
    num_nodes = 2 * num_pairs if num_nodes is None else num_nodes
    if num_nodes < 2 * num_pairs:
        raise ValidationError("need at least two nodes per planted pair")
    rng = np.random.default_rng(seed)
    nodes = rng.permutation(num_nodes)[: 2 * num_pairs].reshape(num_pairs, 2)
    which = rng.integers(0, num_pairs, num_edges)
    src = nodes[which, 0]
    dst = nodes[which, 1].copy()
    flip = rng.random(num_edges) < noise
    dst[flip] = rng.integers(0, num_nodes, int(flip.sum()))
    ts = np.cumsum(rng.exponential(1.0, num_edges))
    return EventStream(src, dst, ts, num_nodes)
