"""Suffix-infilled neighbor sequences, padding/truncation and attention masks.

Each row is ``[n_1, ..., n_k, v, 0, ..., 0]``: the query node's sampled
neighbors in ascending time order, then the query node itself, then padding.
Ids are shifted by one so that index 0 is reserved for padding. The self
position uses edge index ``num_edges + 1``, whose embedding is a frozen zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tftgn.exceptions import ValidationError
from tftgn.sampler import NeighborSample, SampledBlock

MASK_KINDS = ("causal", "tgat", "self_loop")


@dataclass(frozen=True, eq=False)
class SequenceBatch:
    node_index: np.ndarray  # [B, l] int64, 0 = padding
    edge_index: np.ndarray  # [B, l] int64, 0 = padding, num_edges+1 = self
    time_delta: np.ndarray  # [B, l] float64
    valid_len: np.ndarray  # [B] int64
    target_row: np.ndarray  # [B] int64

    def __len__(self) -> int:
        return self.node_index.shape[0]

    @property
    def seq_len(self) -> int:
        return self.node_index.shape[1]

    def take(self, rows) -> SequenceBatch:
        """Sub-batch (or permutation) of rows."""
        rows = np.asarray(rows)
        return SequenceBatch(
            self.node_index[rows],
            self.edge_index[rows],
            self.time_delta[rows],
            self.valid_len[rows],
            self.target_row[rows],
        )


def concat_batches(batches: list[SequenceBatch]) -> SequenceBatch:
    if len({b.seq_len for b in batches}) != 1:
        raise ValidationError("batches must share a sequence length")
    return SequenceBatch(
        np.concatenate([b.node_index for b in batches]),
        np.concatenate([b.edge_index for b in batches]),
        np.concatenate([b.time_delta for b in batches]),
        np.concatenate([b.valid_len for b in batches]),
        np.concatenate([b.target_row for b in batches]),
    )


def build_block(block: SampledBlock, l: int, num_edges: int) -> SequenceBatch:
    """Vectorized :func:`build_sequence` over every query of a sampled block."""
    if l < 2:
        raise ValidationError(f"sequence length must be >= 2, got {l}")
    q, k = block.neighbor_ids.shape
    cap = l - 1
    counts = np.minimum(block.counts, cap)
    # Keep the most recent ``counts`` entries of each row.
    skip = block.counts - counts
    rows = np.arange(q)[:, None]
    cols = np.arange(min(k, cap))[None, :]
    src_cols = np.minimum(skip[:, None] + cols, max(k - 1, 0))
    live = cols < counts[:, None]

    node_index = np.zeros((q, l), dtype=np.int64)
    edge_index = np.zeros((q, l), dtype=np.int64)
    time_delta = np.zeros((q, l), dtype=np.float64)
    w = cols.shape[1]
    if w:
        nbr = block.neighbor_ids[rows, src_cols]
        eid = block.edge_ids[rows, src_cols]
        ts = block.timestamps[rows, src_cols]
        node_index[:, :w] = np.where(live, nbr + 1, 0)
        edge_index[:, :w] = np.where(live, eid + 1, 0)
        time_delta[:, :w] = np.where(live, block.times[:, None] - ts, 0.0)
    r = np.arange(q)
    node_index[r, counts] = block.nodes + 1
    edge_index[r, counts] = num_edges + 1
    return SequenceBatch(node_index, edge_index, time_delta, counts + 1, counts.copy())


def build_sequence(sample: NeighborSample, l: int, num_edges: int) -> SequenceBatch:
    """One-row batch: neighbors, then the query node at ``Δt = 0``, then padding.

    More than ``l - 1`` neighbors are truncated to the most recent ``l - 1``.
    """
    k = max(len(sample), 1)
    c = len(sample)
    nbr = np.zeros((1, k), dtype=np.int64)
    eid = np.zeros((1, k), dtype=np.int64)
    ts = np.zeros((1, k), dtype=np.float64)
    nbr[0, :c] = sample.neighbor_ids
    eid[0, :c] = sample.edge_ids
    ts[0, :c] = sample.timestamps
    block = SampledBlock(
        np.array([sample.query_node], dtype=np.int64),
        np.array([sample.query_time], dtype=np.float64),
        nbr,
        eid,
        ts,
        np.array([c], dtype=np.int64),
    )
    return build_block(block, l, num_edges)


def build_mask(batch: SequenceBatch, kind: str) -> np.ndarray:
    """Additive ``[B, l, l]`` mask with entries 0 (attend) or ``-inf``.

    ``causal`` lets row ``i`` see columns ``0..i``. ``tgat`` and ``self_loop``
    only keep the target row live: it sees the neighbors, plus itself for
    ``self_loop``. Columns at or past ``valid_len`` are masked for every row,
    and so are padding query rows.
    """
    if kind not in MASK_KINDS:
        raise ValidationError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    l = batch.seq_len
    i = np.arange(l)[None, :, None]
    j = np.arange(l)[None, None, :]
    vl = batch.valid_len[:, None, None]
    tr = batch.target_row[:, None, None]
    if kind == "causal":
        allowed = (j <= i) & (i < vl)
    elif kind == "tgat":
        allowed = (i == tr) & (j < tr)
    else:
        allowed = (i == tr) & (j <= tr)
    allowed = allowed & (j < vl)
    return np.where(allowed, 0.0, -np.inf)
