"""Timestamped interaction streams: ingestion, validation and chronological splits."""

from __future__ import annotations

import csv
import math
import pathlib
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from tftgn.exceptions import ParseError, ValidationError


@dataclass(frozen=True)
class TemporalEvent:
    """One interaction ``(src, dst, timestamp, edge_feature)``."""

    edge_id: int
    src: int
    dst: int
    timestamp: float
    edge_feature: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class EventStream:
    """Chronologically ordered interactions stored column-wise.

    Attributes:
        src: int64 source node ids ``[n]``.
        dst: int64 destination node ids ``[n]``.
        timestamps: float64 event times ``[n]``, non-decreasing.
        num_nodes: size of the node id space (ids are ``0..num_nodes-1``).
        edge_ids: int64 ids ``[n]``. A freshly loaded stream has ``0..n-1``; a
            split part keeps the ids it had in the parent stream, so they are
            consecutive but may start above zero.
        edge_features: optional float64 ``[n, d_e]``.
        node_features: optional float64 ``[num_nodes, d_v]``.
    """

    src: np.ndarray
    dst: np.ndarray
    timestamps: np.ndarray
    num_nodes: int
    edge_ids: Optional[np.ndarray] = None
    edge_features: Optional[np.ndarray] = None
    node_features: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        ts = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        n = len(src)
        if len(dst) != n or len(ts) != n:
            raise ValidationError("src, dst and timestamps must have equal length")
        eids = (
            np.arange(n, dtype=np.int64)
            if self.edge_ids is None
            else np.ascontiguousarray(self.edge_ids, dtype=np.int64)
        )
        if len(eids) != n:
            raise ValidationError("edge_ids must have one entry per event")
        if n and np.any(np.diff(eids) != 1):
            raise ValidationError("edge_ids must be consecutive in stream order")
        if n and eids[0] < 0:
            raise ValidationError("edge_ids must be non-negative")
        if self.num_nodes < 0:
            raise ValidationError("num_nodes must be non-negative")
        if n:
            lo = min(src.min(), dst.min())
            hi = max(src.max(), dst.max())
            if lo < 0 or hi >= self.num_nodes:
                raise ValidationError(
                    f"node ids must lie in [0, {self.num_nodes}); found [{lo}, {hi}]"
                )
            if not np.all(np.isfinite(ts)) or ts.min() < 0:
                raise ValidationError("timestamps must be finite and non-negative")
            if np.any(np.diff(ts) < 0):
                raise ValidationError("events must be sorted by timestamp")
        ef = self.edge_features
        if ef is not None:
            ef = np.ascontiguousarray(ef, dtype=np.float64)
            if ef.ndim != 2 or ef.shape[0] != n:
                raise ValidationError(f"edge_features must be [{n}, d_e], got {ef.shape}")
        nf = self.node_features
        if nf is not None:
            nf = np.ascontiguousarray(nf, dtype=np.float64)
            if nf.ndim != 2 or nf.shape[0] != self.num_nodes:
                raise ValidationError(
                    f"node_features must be [{self.num_nodes}, d_v], got {nf.shape}"
                )
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "edge_ids", eids)
        object.__setattr__(self, "edge_features", ef)
        object.__setattr__(self, "node_features", nf)

    def __len__(self) -> int:
        return len(self.src)

    @property
    def d_e(self) -> int:
        return 0 if self.edge_features is None else self.edge_features.shape[1]

    @property
    def d_v(self) -> int:
        return 0 if self.node_features is None else self.node_features.shape[1]

    @property
    def events(self) -> list[TemporalEvent]:
        return list(iter(self))

    def __iter__(self) -> Iterator[TemporalEvent]:
        for i in range(len(self)):
            yield TemporalEvent(
                edge_id=int(self.edge_ids[i]),
                src=int(self.src[i]),
                dst=int(self.dst[i]),
                timestamp=float(self.timestamps[i]),
                edge_feature=None if self.edge_features is None else self.edge_features[i],
            )

    def __getitem__(self, idx: slice) -> EventStream:
        if not isinstance(idx, slice) or idx.step not in (None, 1):
            raise TypeError("EventStream supports contiguous slicing only")
        return EventStream(
            src=self.src[idx],
            dst=self.dst[idx],
            timestamps=self.timestamps[idx],
            num_nodes=self.num_nodes,
            edge_ids=self.edge_ids[idx],
            edge_features=None if self.edge_features is None else self.edge_features[idx],
            node_features=self.node_features,
        )

    def equals(self, other: EventStream) -> bool:
        """Exact equality of every column."""

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.num_nodes == other.num_nodes
            and same(self.src, other.src)
            and same(self.dst, other.dst)
            and same(self.timestamps, other.timestamps)
            and same(self.edge_ids, other.edge_ids)
            and same(self.edge_features, other.edge_features)
            and same(self.node_features, other.node_features)
        )

    @classmethod
    def from_unsorted(
        cls,
        src,
        dst,
        timestamps,
        num_nodes: Optional[int] = None,
        edge_features=None,
        node_features=None,
    ) -> EventStream:
        """Build a stream from arrays in arbitrary order (stable sort by time)."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        ts = np.asarray(timestamps, dtype=np.float64)
        if len(ts) and np.any(ts < 0):
            raise ValidationError("timestamps must be non-negative")
        order = np.argsort(ts, kind="stable")
        if num_nodes is None:
            num_nodes = int(max(src.max(), dst.max())) + 1 if len(src) else 0
        ef = None if edge_features is None else np.asarray(edge_features, dtype=np.float64)[order]
        return cls(
            src=src[order],
            dst=dst[order],
            timestamps=ts[order],
            num_nodes=num_nodes,
            edge_features=ef,
            node_features=node_features,
        )


def concatenate(parts: list[EventStream]) -> EventStream:
    """Join consecutive chronological parts back into one stream."""
    if not parts:
        raise ValidationError("nothing to concatenate")
    feats = [p.edge_features for p in parts]
    has_feats = [f is not None for f in feats]
    if any(has_feats) and not all(has_feats):
        raise ValidationError("cannot mix featured and featureless parts")
    return EventStream(
        src=np.concatenate([p.src for p in parts]),
        dst=np.concatenate([p.dst for p in parts]),
        timestamps=np.concatenate([p.timestamps for p in parts]),
        num_nodes=parts[0].num_nodes,
        edge_ids=np.concatenate([p.edge_ids for p in parts]),
        edge_features=np.concatenate(feats) if all(has_feats) else None,
        node_features=parts[0].node_features,
    )


def load_csv(
    path: str | pathlib.Path,
    has_features: bool = False,
    num_nodes: Optional[int] = None,
) -> EventStream:
    """Read ``src,dst,timestamp[,f1..fk]`` rows into an :class:`EventStream`.

    Rows may appear in any order; the result is stably sorted by timestamp so
    ties keep file order. ``num_nodes`` defaults to ``1 + max node id``.
    Columns after ``timestamp`` are read as edge features only when
    ``has_features`` is set and are otherwise ignored.

    Raises:
        ParseError: malformed header or row (carries the line number).
        ValidationError: negative timestamp or node id.
    """
    src, dst, ts, feats = [], [], [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header", 1)
        names = [h.strip().lower() for h in header]
        if names[:3] != ["src", "dst", "timestamp"]:
            raise ParseError(f"header must start with src,dst,timestamp; got {header}", 1)
        if has_features:
            width = len(names) - 3
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ParseError(f"expected at least 3 fields, got {len(row)}", line)
            try:
                u = int(row[0])
                v = int(row[1])
                t = float(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            if u < 0 or v < 0:
                raise ValidationError(f"line {line}: negative node id")
            if t < 0 or not math.isfinite(t):
                raise ValidationError(f"line {line}: negative or non-finite timestamp {t}")
            if has_features:
                if len(row) - 3 != width:
                    raise ParseError(f"expected {width} feature columns, got {len(row) - 3}", line)
                try:
                    feats.append([float(x) for x in row[3:]])
                except ValueError as exc:
                    raise ParseError(str(exc), line) from None
            src.append(u)
            dst.append(v)
            ts.append(t)
    ef = None
    if has_features:
        ef = np.asarray(feats, dtype=np.float64).reshape(len(src), width)
    return EventStream.from_unsorted(src, dst, ts, num_nodes=num_nodes, edge_features=ef)


def save_csv(stream: EventStream, path: str | pathlib.Path) -> None:
    """Write a stream in the format read by :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["src", "dst", "timestamp"] + [f"f{i + 1}" for i in range(stream.d_e)]
        writer.writerow(header)
        for i in range(len(stream)):
            row = [int(stream.src[i]), int(stream.dst[i]), repr(float(stream.timestamps[i]))]
            if stream.edge_features is not None:
                row.extend(repr(float(x)) for x in stream.edge_features[i])
            writer.writerow(row)


def chronological_split(
    stream: EventStream, train_frac: float = 0.70, val_frac: float = 0.15
) -> tuple[EventStream, EventStream, EventStream]:
    """Positional train/val/test split at ``floor(n*train)`` and ``floor(n*(train+val))``.

    Events sharing a timestamp may straddle a boundary; sizes are exact.
    """
    if not (0 < train_frac and 0 < val_frac and train_frac + val_frac < 1):
        raise ValidationError(
            f"need 0 < train_frac, 0 < val_frac, sum < 1; got {train_frac}, {val_frac}"
        )
    n = len(stream)
    a = math.floor(n * train_frac)
    b = math.floor(n * (train_frac + val_frac))
    return stream[0:a], stream[a:b], stream[b:n]
