"""Temporal neighbor sampling over a :class:`~tftgn.tcsr.TCsr`.

A query ``(u, t)`` only sees entries of ``u``'s slice with timestamp strictly
below ``t``; the cutoff ``m`` is found by binary search. ``recent`` keeps the
last ``k`` of those entries, ``random`` draws ``k`` of them uniformly without
replacement using a counter-based generator keyed by ``(seed, query index)``,
so results do not depend on how queries are spread over threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from tftgn._parallel import check_threads, even_ranges, run_ranges
from tftgn.exceptions import ValidationError
from tftgn.tcsr import TCsr

STRATEGIES = ("recent", "random")

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True, eq=False)
class NeighborSample:
    """Up to ``k`` neighbors of ``query_node`` before ``query_time``, ascending by (time, edge id)."""

    query_node: int
    query_time: float
    neighbor_ids: np.ndarray
    edge_ids: np.ndarray
    timestamps: np.ndarray

    def __len__(self) -> int:
        return len(self.neighbor_ids)

    @property
    def neighbors(self) -> list[tuple[int, int, float]]:
        return [
            (int(v), int(e), float(t))
            for v, e, t in zip(self.neighbor_ids, self.edge_ids, self.timestamps)
        ]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NeighborSample):
            return NotImplemented
        return (
            self.query_node == other.query_node
            and self.query_time == other.query_time
            and np.array_equal(self.neighbor_ids, other.neighbor_ids)
            and np.array_equal(self.edge_ids, other.edge_ids)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SampledBlock:
    """Batched samples in padded form.

    ``neighbor_ids``, ``edge_ids`` and ``timestamps`` are ``[Q, k]``; row ``i``
    holds ``counts[i]`` valid entries left-aligned and ascending, the rest is
    zero.
    """

    nodes: np.ndarray
    times: np.ndarray
    neighbor_ids: np.ndarray
    edge_ids: np.ndarray
    timestamps: np.ndarray
    counts: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def row(self, i: int) -> NeighborSample:
        c = self.counts[i]
        return NeighborSample(
            int(self.nodes[i]),
            float(self.times[i]),
            self.neighbor_ids[i, :c].copy(),
            self.edge_ids[i, :c].copy(),
            self.timestamps[i, :c].copy(),
        )

    def to_samples(self) -> list[NeighborSample]:
        return [self.row(i) for i in range(len(self))]


@numba.njit(inline="always")
def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x, z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _below(state, n):
    """Unbiased integer in ``[0, n)`` by rejection; returns (state, value)."""
    un = np.uint64(n)
    limit = _MASK64 - (_MASK64 % un)
    while True:
        state, r = _splitmix(state)
        if r < limit:
            return state, np.int64(r % un)


@numba.njit(inline="always")
def _cutoff(ts, a, b, t):
    lo, hi = a, b
    while lo < hi:
        mid = (lo + hi) >> 1
        if ts[mid] < t:
            lo = mid + 1
        else:
            hi = mid
    return lo - a


@numba.njit(nogil=True, cache=True)
def _sample_range(
    indptr, g_nbr, g_eid, g_ts, nodes, times, k, random, seed, out_nbr, out_eid, out_ts, counts, lo, hi
):
    chosen = np.empty(k, dtype=np.int64)
    for q in range(lo, hi):
        u = nodes[q]
        a = indptr[u]
        m = _cutoff(g_ts, a, indptr[u + 1], times[q])
        if m <= k:
            c = m
            for j in range(m):
                chosen[j] = j
        elif not random:
            c = k
            for j in range(k):
                chosen[j] = m - k + j
        else:
            # Floyd's algorithm: k distinct uniform indices from [0, m).
            c = k
            _, state = _splitmix(np.uint64(seed) ^ np.uint64(0xD1B54A32D192ED03))
            _, h = _splitmix(np.uint64(q))
            state = state ^ h
            n_chosen = 0
            for j in range(m - k, m):
                state, r = _below(state, j + 1)
                dup = False
                for x in range(n_chosen):
                    if chosen[x] == r:
                        dup = True
                        break
                chosen[n_chosen] = j if dup else r
                n_chosen += 1
            chosen[:k].sort()
        counts[q] = c
        for j in range(c):
            pos = a + chosen[j]
            out_nbr[q, j] = g_nbr[pos]
            out_eid[q, j] = g_eid[pos]
            out_ts[q, j] = g_ts[pos]


def _check_query(g: TCsr, nodes: np.ndarray, k: int, strategy: str) -> None:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= g.num_nodes):
        raise ValidationError(f"query node out of range [0, {g.num_nodes})")


def sample_block(
    g: TCsr,
    nodes,
    times,
    k: int,
    strategy: str = "recent",
    seed: int = 0,
    num_threads: int = 1,
) -> SampledBlock:
    """Sample every ``(nodes[i], times[i])`` query into a padded block.

    Queries are split across ``num_threads`` threads; the TCsr is only read.
    """
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    if nodes.shape != times.shape or nodes.ndim != 1:
        raise ValidationError("nodes and times must be 1-D of equal length")
    _check_query(g, nodes, k, strategy)
    num_threads = check_threads(num_threads)
    q = len(nodes)
    out_nbr = np.zeros((q, k), dtype=np.int64)
    out_eid = np.zeros((q, k), dtype=np.int64)
    out_ts = np.zeros((q, k), dtype=np.float64)
    counts = np.zeros(q, dtype=np.int64)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    random = strategy == "random"

    def work(lo: int, hi: int) -> None:
        _sample_range(
            g.indptr, g.neighbor_ids, g.edge_ids, g.timestamps, nodes, times, k,
            random, seed, out_nbr, out_eid, out_ts, counts, lo, hi,
        )

    run_ranges(work, even_ranges(q, min(num_threads, max(q, 1))))
    return SampledBlock(nodes, times, out_nbr, out_eid, out_ts, counts)


def sample_recent(g: TCsr, u: int, t: float, k: int) -> NeighborSample:
    """The ``k`` most recent neighbors of ``u`` strictly before ``t``."""
    return sample_block(g, [u], [t], k, "recent").row(0)


def sample_random(g: TCsr, u: int, t: float, k: int, seed: int) -> NeighborSample:
    """``k`` uniformly drawn neighbors of ``u`` strictly before ``t`` (all of them if fewer)."""
    return sample_block(g, [u], [t], k, "random", seed).row(0)


def sample_batch(
    g: TCsr,
    nodes,
    times,
    k: int,
    strategy: str = "recent",
    seed: int = 0,
    num_threads: int = 1,
) -> list[NeighborSample]:
    """Per-query samples; query ``i`` of a random batch is keyed by ``(seed, i)``."""
    if len(nodes) != len(times):
        raise ValidationError(f"{len(nodes)} nodes but {len(times)} times")
    return sample_block(g, nodes, times, k, strategy, seed, num_threads).to_samples()
