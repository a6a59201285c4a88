"""Shared fixtures and independent reference implementations."""

from __future__ import annotations

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --------------------------------------------------------------------------
# oracles: deliberately naive, pure-Python versions of library behavior


def incident_entries(src, dst, ts, eids, reverse):
    """``{node: [(t, edge_id, neighbor), ...]}`` by scanning every event."""
    out: dict[int, list] = {}
    for s, d, t, e in zip(src.tolist(), dst.tolist(), ts.tolist(), eids.tolist()):
        out.setdefault(s, []).append((t, e, d))
        if reverse:
            out.setdefault(d, []).append((t, e, s))
    return out


def oracle_tcsr(src, dst, ts, eids, num_nodes, reverse):
    """Per-node filter-and-sort: returns (indptr, neighbor_ids, edge_ids, timestamps)."""
    inc = incident_entries(np.asarray(src), np.asarray(dst), np.asarray(ts), np.asarray(eids), reverse)
    indptr = [0]
    nbr, eid, tt = [], [], []
    for u in range(num_nodes):
        for t, e, v in sorted(inc.get(u, [])):
            nbr.append(v)
            eid.append(e)
            tt.append(t)
        indptr.append(len(nbr))
    return (
        np.array(indptr, dtype=np.int64),
        np.array(nbr, dtype=np.int64),
        np.array(eid, dtype=np.int64),
        np.array(tt, dtype=np.float64),
    )


def oracle_recent(entries, t, k):
    """Most recent ``k`` of ``entries`` strictly before ``t``, ascending by (time, edge id)."""
    before = sorted(x for x in entries if x[0] < t)
    return before[max(len(before) - k, 0):]


def dense_attention(z, mask, wq, wk, wv, wo, heads):
    """Loop-based multi-head attention; fully masked rows give zeros."""
    b, l, d = z.shape
    dh = d // heads
    out = np.zeros((b, l, d))
    for n in range(b):
        q, k, v = z[n] @ wq, z[n] @ wk, z[n] @ wv
        concat = np.zeros((l, d))
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            for i in range(l):
                live = [j for j in range(l) if mask[n, i, j] == 0.0]
                if not live:
                    continue
                logits = [float(q[i, sl] @ k[j, sl]) / np.sqrt(dh) for j in live]
                top = max(logits)
                w = [np.exp(x - top) for x in logits]
                total = sum(w)
                for wj, j in zip(w, live):
                    concat[i, sl] += (wj / total) * v[j, sl]
        out[n] = concat @ wo
    return out


def brute_auc(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_batch(rng, b, l, num_nodes, num_edges, full=False):
    """Random well-formed SequenceBatch; ``full`` makes every row use all ``l`` slots."""
    from tftgn.sequence import SequenceBatch

    node = np.zeros((b, l), np.int64)
    edge = np.zeros((b, l), np.int64)
    delta = np.zeros((b, l))
    vl = np.full(b, l) if full else rng.integers(1, l + 1, b)
    for r in range(b):
        k = vl[r] - 1
        node[r, :k] = rng.integers(1, num_nodes + 1, k)
        edge[r, :k] = rng.integers(1, num_edges + 1, k)
        delta[r, :k] = np.sort(rng.random(k) * 50)[::-1]
        node[r, k] = rng.integers(1, num_nodes + 1)
        edge[r, k] = num_edges + 1
    return SequenceBatch(node, edge, delta, vl.astype(np.int64), (vl - 1).astype(np.int64))
