"""Temporal CSR adjacency: parallel and sequential construction, binary file format.

Node ``u``'s stored edges occupy ``[indptr[u], indptr[u+1])`` in the three
parallel arrays ``neighbor_ids``, ``edge_ids`` and ``timestamps``, ordered by
``(timestamp, edge_id)``. Edges are indexed by source; with ``reverse=True``
every edge is also stored ``dst -> src`` under the same edge id.
"""

from __future__ import annotations

import pathlib
import struct
import zlib
from dataclasses import dataclass

import numba
import numpy as np

from tftgn._atomic import atomic_fetch_add
from tftgn._parallel import check_threads, even_ranges, run_ranges, weighted_ranges
from tftgn.events import EventStream
from tftgn.exceptions import FormatError, ValidationError

MAGIC = b"TCSR"
VERSION = 1
_HEADER = struct.Struct("<4sBBqq")
_CRC = struct.Struct("<I")
_INSERTION_CUTOFF = 32


@dataclass(frozen=True, eq=False)
class TCsr:
    indptr: np.ndarray
    neighbor_ids: np.ndarray
    edge_ids: np.ndarray
    timestamps: np.ndarray
    reverse: bool

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_stored(self) -> int:
        return len(self.neighbor_ids)

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.indptr, self.neighbor_ids, self.edge_ids, self.timestamps))

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def node_slice(self, u: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(neighbor_ids, edge_ids, timestamps)`` views for node ``u``."""
        a, b = self.indptr[u], self.indptr[u + 1]
        return self.neighbor_ids[a:b], self.edge_ids[a:b], self.timestamps[a:b]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TCsr):
            return NotImplemented
        return (
            self.reverse == other.reverse
            and _same(self.indptr, other.indptr)
            and _same(self.neighbor_ids, other.neighbor_ids)
            and _same(self.edge_ids, other.edge_ids)
            and _same(self.timestamps, other.timestamps)
        )

    __hash__ = None

    def check_invariants(self, num_edges: int | None = None) -> None:
        """Raise :class:`ValidationError` if any structural invariant fails."""
        p = self.indptr
        if len(p) < 1 or p[0] != 0:
            raise ValidationError("indptr[0] must be 0")
        if np.any(np.diff(p) < 0):
            raise ValidationError("indptr must be non-decreasing")
        if p[-1] != self.n_stored:
            raise ValidationError("indptr[-1] must equal the number of stored edges")
        if not (len(self.edge_ids) == len(self.timestamps) == self.n_stored):
            raise ValidationError("neighbor_ids, edge_ids and timestamps differ in length")
        if num_edges is not None:
            expect = 2 * num_edges if self.reverse else num_edges
            if self.n_stored != expect:
                raise ValidationError(f"expected {expect} stored edges, found {self.n_stored}")
        if self.n_stored and (
            self.neighbor_ids.min() < 0 or self.neighbor_ids.max() >= self.num_nodes
        ):
            raise ValidationError("neighbor id out of range")
        if not _slices_sorted(p, self.timestamps, self.edge_ids):
            raise ValidationError("node slices are not sorted by (timestamp, edge_id)")


def _same(a: np.ndarray, b: np.ndarray) -> bool:
    return a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)


@numba.njit(nogil=True, cache=True)
def _slices_sorted(indptr, ts, eids):
    for u in range(len(indptr) - 1):
        for j in range(indptr[u] + 1, indptr[u + 1]):
            if ts[j] < ts[j - 1] or (ts[j] == ts[j - 1] and eids[j] < eids[j - 1]):
                return False
    return True


@numba.njit(nogil=True, cache=True)
def _sort_slice(nbr, eid, ts, a, b):
    """Order entries ``[a, b)`` by (timestamp, edge_id)."""
    ordered = True
    for j in range(a + 1, b):
        if ts[j] < ts[j - 1] or (ts[j] == ts[j - 1] and eid[j] < eid[j - 1]):
            ordered = False
            break
    if ordered:
        return
    if b - a <= _INSERTION_CUTOFF:
        for j in range(a + 1, b):
            tv, ev, nv = ts[j], eid[j], nbr[j]
            i = j - 1
            while i >= a and (ts[i] > tv or (ts[i] == tv and eid[i] > ev)):
                ts[i + 1] = ts[i]
                eid[i + 1] = eid[i]
                nbr[i + 1] = nbr[i]
                i -= 1
            ts[i + 1] = tv
            eid[i + 1] = ev
            nbr[i + 1] = nv
        return
    by_eid = np.argsort(eid[a:b], kind="mergesort")
    by_time = np.argsort(ts[a:b][by_eid], kind="mergesort")
    perm = by_eid[by_time]
    nbr[a:b] = nbr[a:b][perm]
    eid[a:b] = eid[a:b][perm]
    ts[a:b] = ts[a:b][perm]


@numba.njit(nogil=True, cache=True)
def _sort_range(indptr, nbr, eid, ts, lo, hi):
    for u in range(lo, hi):
        _sort_slice(nbr, eid, ts, indptr[u], indptr[u + 1])


@numba.njit(nogil=True, cache=True)
def _count_atomic(src, dst, reverse, counts, lo, hi):
    for i in range(lo, hi):
        atomic_fetch_add(counts, src[i] + 1, 1)
        if reverse:
            atomic_fetch_add(counts, dst[i] + 1, 1)


@numba.njit(nogil=True, cache=True)
def _scatter_atomic(src, dst, ts, eids, reverse, cursor, out_nbr, out_eid, out_ts, lo, hi):
    for i in range(lo, hi):
        pos = atomic_fetch_add(cursor, src[i], 1)
        out_nbr[pos] = dst[i]
        out_eid[pos] = eids[i]
        out_ts[pos] = ts[i]
        if reverse:
            pos = atomic_fetch_add(cursor, dst[i], 1)
            out_nbr[pos] = src[i]
            out_eid[pos] = eids[i]
            out_ts[pos] = ts[i]


@numba.njit(nogil=True, cache=True)
def _build_serial(src, dst, ts, eids, num_nodes, reverse):
    n = len(src)
    n_stored = 2 * n if reverse else n
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    for i in range(n):
        indptr[src[i] + 1] += 1
        if reverse:
            indptr[dst[i] + 1] += 1
    for u in range(num_nodes):
        indptr[u + 1] += indptr[u]
    cursor = indptr[:-1].copy()
    nbr = np.empty(n_stored, dtype=np.int64)
    eid = np.empty(n_stored, dtype=np.int64)
    out_ts = np.empty(n_stored, dtype=np.float64)
    for i in range(n):
        pos = cursor[src[i]]
        cursor[src[i]] += 1
        nbr[pos] = dst[i]
        eid[pos] = eids[i]
        out_ts[pos] = ts[i]
        if reverse:
            pos = cursor[dst[i]]
            cursor[dst[i]] += 1
            nbr[pos] = src[i]
            eid[pos] = eids[i]
            out_ts[pos] = ts[i]
    for u in range(num_nodes):
        _sort_slice(nbr, eid, out_ts, indptr[u], indptr[u + 1])
    return indptr, nbr, eid, out_ts


def _check_stream(stream: EventStream) -> None:
    if len(stream.src) and max(stream.src.max(), stream.dst.max()) >= stream.num_nodes:
        raise ValidationError("node id >= num_nodes")


def build_sequential(stream: EventStream, reverse: bool = False) -> TCsr:
    """Single-threaded count, prefix-sum, scatter, per-node sort.

    Only ``src``, ``dst``, ``timestamps``, ``edge_ids`` and ``num_nodes`` are
    read, and the events need not be in time order.
    """
    _check_stream(stream)
    indptr, nbr, eid, ts = _build_serial(
        stream.src, stream.dst, stream.timestamps, stream.edge_ids, stream.num_nodes, bool(reverse)
    )
    return TCsr(indptr, nbr, eid, ts, bool(reverse))


def build_parallel(stream: EventStream, reverse: bool = False, num_threads: int = 1) -> TCsr:
    """Multi-threaded construction with atomic degree counting and scatter.

    The phases are: count degrees with atomic increments; prefix-sum into
    ``indptr``; scatter through per-node cursors claimed with atomic
    fetch-and-increment; sort node slices concurrently. Scatter order depends on
    thread interleaving, but the ``(timestamp, edge_id)`` sort makes the output
    identical to :func:`build_sequential`.
    """
    num_threads = check_threads(num_threads)
    _check_stream(stream)
    reverse = bool(reverse)
    n = len(stream.src)
    n_stored = 2 * n if reverse else n
    src, dst = stream.src, stream.dst
    edge_chunks = even_ranges(n, num_threads)

    counts = np.zeros(stream.num_nodes + 1, dtype=np.int64)
    run_ranges(lambda lo, hi: _count_atomic(src, dst, reverse, counts, lo, hi), edge_chunks)

    indptr = np.cumsum(counts)

    cursor = indptr[:-1].copy()
    nbr = np.empty(n_stored, dtype=np.int64)
    eid = np.empty(n_stored, dtype=np.int64)
    ts = np.empty(n_stored, dtype=np.float64)
    run_ranges(
        lambda lo, hi: _scatter_atomic(
            src, dst, stream.timestamps, stream.edge_ids, reverse, cursor, nbr, eid, ts, lo, hi
        ),
        edge_chunks,
    )

    run_ranges(
        lambda lo, hi: _sort_range(indptr, nbr, eid, ts, lo, hi),
        weighted_ranges(indptr, num_threads),
    )
    return TCsr(indptr, nbr, eid, ts, reverse)


def serialize(g: TCsr, path: str | pathlib.Path) -> None:
    """Write ``g`` as a little-endian T-CSR file.

    Layout: ``b"TCSR"``, u8 version, u8 reverse flag, i64 num_nodes,
    i64 n_stored, then indptr, neighbor_ids, edge_ids (i64 each) and
    timestamps (f64), followed by a u32 CRC-32 of every preceding byte.
    """
    body = b"".join(
        [
            _HEADER.pack(MAGIC, VERSION, int(g.reverse), g.num_nodes, g.n_stored),
            np.ascontiguousarray(g.indptr, dtype="<i8").tobytes(),
            np.ascontiguousarray(g.neighbor_ids, dtype="<i8").tobytes(),
            np.ascontiguousarray(g.edge_ids, dtype="<i8").tobytes(),
            np.ascontiguousarray(g.timestamps, dtype="<f8").tobytes(),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(_CRC.pack(zlib.crc32(body)))


def deserialize(path: str | pathlib.Path) -> TCsr:
    """Read a file written by :func:`serialize`.

    Raises:
        FormatError: wrong magic, unknown version, truncation or CRC mismatch.
    """
    data = pathlib.Path(path).read_bytes()
    if len(data) < _HEADER.size + _CRC.size:
        raise FormatError("file too short for a T-CSR header")
    magic, version, rev, num_nodes, n_stored = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if rev not in (0, 1) or num_nodes < 0 or n_stored < 0:
        raise FormatError("corrupt header")
    expect = _HEADER.size + 8 * (num_nodes + 1) + 24 * n_stored + _CRC.size
    if len(data) != expect:
        raise FormatError(f"expected {expect} bytes, found {len(data)}")
    body = memoryview(data)[: -_CRC.size]
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch")
    off = _HEADER.size

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += 8 * count
        return arr.astype(dtype[1:], copy=True)

    indptr = take("<i8", num_nodes + 1)
    nbr = take("<i8", n_stored)
    eid = take("<i8", n_stored)
    ts = take("<f8", n_stored)
    return TCsr(indptr, nbr, eid, ts, bool(rev))
