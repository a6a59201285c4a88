"""Download the UC Irvine messages network and write it as an events CSV.

Usage::

    python3 scripts/fetch_uci.py                      # download to data/uci.csv
    python3 scripts/fetch_uci.py --source CollegeMsg.txt.gz --output data/uci.csv

The raw file holds one ``SRC DST UNIXTS`` line per message with 1-based node
ids. Output ids are 0-based and timestamps are shifted so the first event is
at time 0.
"""

from __future__ import annotations

import argparse
import gzip
import io
import sys
import urllib.request
from pathlib import Path

import numpy as np

URL = "https://snap.stanford.edu/data/CollegeMsg.txt.gz"
EXPECTED_NODES = 1899
EXPECTED_EDGES = 59835


def read_raw(source: str | None) -> bytes:
    if source is None:
        with urllib.request.urlopen(URL, timeout=60) as resp:
            data = resp.read()
    else:
        data = Path(source).read_bytes()
    return gzip.decompress(data) if data[:2] == b"\x1f\x8b" else data


def convert(raw: bytes) -> np.ndarray:
    table = np.loadtxt(io.BytesIO(raw), dtype=np.int64, comments="%", ndmin=2)
    if table.shape[1] < 3:
        raise ValueError(f"expected 3 columns, got {table.shape[1]}")
    src, dst, ts = table[:, 0] - 1, table[:, 1] - 1, table[:, 2]
    order = np.argsort(ts, kind="stable")
    return np.column_stack([src[order], dst[order], ts[order] - ts[order][0]])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--source", help="local copy of CollegeMsg.txt(.gz); downloads when omitted")
    parser.add_argument("--output", default=str(Path(__file__).resolve().parents[1] / "data" / "uci.csv"))
    args = parser.parse_args(argv)
    try:
        rows = convert(read_raw(args.source))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, rows, fmt="%d", delimiter=",", header="src,dst,timestamp", comments="")
    nodes = int(rows[:, :2].max()) + 1
    print(f"wrote {out}: {len(rows)} events, {nodes} nodes")
    if (nodes, len(rows)) != (EXPECTED_NODES, EXPECTED_EDGES):
        print(f"warning: expected {EXPECTED_NODES} nodes and {EXPECTED_EDGES} events", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
