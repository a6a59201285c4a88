"""``tftgn`` command line: convert, sample, train, eval, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage error. The default thread
count comes from ``$TFTGN_THREADS`` (falling back to the CPU count).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import statistics
import sys
import time
from typing import Optional, Sequence

import numpy as np

from tftgn._parallel import default_threads
from tftgn.attention import load_checkpoint, save_checkpoint
from tftgn.events import chronological_split, load_csv
from tftgn.exceptions import FormatError, ShapeError, UndefinedMetricError, ValidationError
from tftgn.metrics import roc_auc, score_split, write_report
from tftgn.pipeline import fit
from tftgn.sampler import STRATEGIES, sample_block
from tftgn.synthetic import zipf_stream
from tftgn.tcsr import build_parallel, build_sequential, deserialize, serialize
from tftgn.training import TrainConfig

logger = logging.getLogger("tftgn")

BENCH_HEADER = ("phase", "threads", "batch_size", "k", "repeats", "median_seconds")
BENCH_BATCH_SIZES = (64, 128, 256, 512, 1024, 2048)
BENCH_KS = (10, 32, 64, 128)


def _positive_int(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {val}")
    return val


def _echo(name: str, values: dict) -> None:
    print(f"[{name}] " + json.dumps(values, sort_keys=True, default=str))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tftgn", description="Temporal CSR conversion, sampling, link-prediction training and benchmarks."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="CSV events -> T-CSR file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--reverse", action="store_true", help="also store dst->src")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--baseline", action="store_true", help="compare with the sequential builder")
    p.add_argument("--has-features", action="store_true")

    p = sub.add_parser("sample", help="temporal neighbors from a T-CSR file")
    p.add_argument("--graph", required=True)
    p.add_argument("--node", type=int, nargs="+", required=True)
    p.add_argument("--time", type=float, nargs="+", required=True)
    p.add_argument("-k", type=_positive_int, default=10)
    p.add_argument("--strategy", choices=STRATEGIES, default="recent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None)

    for name in ("train", "eval"):
        p = sub.add_parser(name, help=f"{name} a link-prediction model")
        p.add_argument("--config", help="key = value training config")
        p.add_argument("--data", required=True, help="events CSV")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--has-features", action="store_true")
        p.add_argument("--report", help="evaluation report CSV")
        if name == "train":
            p.add_argument("--metrics", help="per-epoch metrics CSV (default: <checkpoint>.metrics.csv)")
        else:
            p.add_argument("--split", choices=("val", "test"), default="test")

    p = sub.add_parser("bench", help="conversion and sampling timings on a synthetic graph")
    p.add_argument("--edges", type=_positive_int, required=True)
    p.add_argument("--nodes", type=_positive_int, required=True)
    p.add_argument("--threads", type=_positive_int, nargs="+", default=None)
    p.add_argument("--repeat", type=_positive_int, default=3)
    p.add_argument("--batch-sizes", type=_positive_int, nargs="+", default=list(BENCH_BATCH_SIZES))
    p.add_argument("--ks", type=_positive_int, nargs="+", default=list(BENCH_KS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="CSV path (default: stdout)")
    return parser


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def cmd_convert(args) -> int:
    threads = args.threads or default_threads()
    _echo("convert", {"input": args.input, "output": args.output, "reverse": args.reverse,
                      "threads": threads, "baseline": args.baseline})
    stream = load_csv(args.input, has_features=args.has_features)
    g, t_par = _timed(lambda: build_parallel(stream, args.reverse, threads))
    g.check_invariants(num_edges=len(stream))
    serialize(g, args.output)
    print(f"events={len(stream)} nodes={stream.num_nodes} stored={g.n_stored}")
    print(f"parallel_seconds={t_par:.6f} threads={threads}")
    if args.baseline:
        ref, t_seq = _timed(lambda: build_sequential(stream, args.reverse))
        if ref != g:
            print("error: parallel and sequential builds differ", file=sys.stderr)
            return 1
        print(f"sequential_seconds={t_seq:.6f}")
        print(f"speedup={t_seq / t_par if t_par > 0 else float('inf'):.3f}")
        print("equal=true")
    return 0


def cmd_sample(args) -> int:
    if len(args.node) != len(args.time):
        raise ValidationError("--node and --time need the same number of values")
    threads = args.threads or default_threads()
    _echo("sample", {"graph": args.graph, "k": args.k, "strategy": args.strategy,
                     "seed": args.seed, "threads": threads})
    g = deserialize(args.graph)
    block = sample_block(g, args.node, args.time, args.k, args.strategy, args.seed, threads)
    writer = csv.writer(sys.stdout)
    writer.writerow(["query", "node", "time", "neighbor", "edge_id", "timestamp"])
    for i, s in enumerate(block.to_samples()):
        for v, e, t in s.neighbors:
            writer.writerow([i, s.query_node, s.query_time, v, e, repr(t)])
    return 0


def _train_config(args, stored: Optional[dict] = None) -> TrainConfig:
    if args.config:
        cfg = TrainConfig.from_file(args.config)
    elif stored:
        cfg = TrainConfig(**stored)
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    metrics = args.metrics or f"{args.checkpoint}.metrics.csv"
    _echo("train", {"data": args.data, "checkpoint": args.checkpoint, "metrics": metrics,
                    **dataclasses.asdict(cfg)})
    stream = load_csv(args.data, has_features=args.has_features)
    result = fit(cfg, stream, metrics_path=metrics, eval_seed=cfg.seed)
    save_checkpoint(result.params, args.checkpoint, metadata={"train_config": dataclasses.asdict(cfg)})
    auc = float("nan") if result.test_auc is None else result.test_auc
    print(f"test_auc={auc:.6f}")
    if args.report:
        write_report(args.report, [{"dataset": args.data, "split": "test", "auc": auc,
                                    "n_pairs": result.test_pairs,
                                    "seed": cfg.seed + 1}])
    return 0


def cmd_eval(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    cfg = _train_config(args, meta.get("train_config"))
    _echo("eval", {"data": args.data, "checkpoint": args.checkpoint, "split": args.split,
                   **dataclasses.asdict(cfg)})
    stream = load_csv(args.data, has_features=args.has_features)
    mc = params.config
    if (mc.num_nodes, mc.num_edges, mc.edge_feature_dim) != (stream.num_nodes, len(stream), stream.d_e):
        raise ShapeError(
            f"checkpoint expects {mc.num_nodes} nodes, {mc.num_edges} edges, {mc.edge_feature_dim} "
            f"edge features; data has {stream.num_nodes}, {len(stream)}, {stream.d_e}"
        )
    if cfg.d_model != mc.d_model or cfg.num_layers != mc.num_layers:
        raise ShapeError("config dimensions do not match the checkpoint")
    if "edge_features" in params.buffers and not np.array_equal(
        params.buffers["edge_features"][1:-1], stream.edge_features
    ):
        raise ShapeError("edge features differ from the checkpoint's")
    _, val, test = chronological_split(stream, 0.70, 0.15)
    split = val if args.split == "val" else test
    graph = build_parallel(stream, reverse=cfg.reverse_edges, num_threads=cfg.threads)
    seed = cfg.seed + (1 if args.split == "test" else 0)
    pairs = score_split(params, split, graph, cfg, seed=seed)
    auc = roc_auc(pairs)
    print(f"auc={auc:.6f} n_pairs={len(pairs.scores)} split={args.split} seed={seed}")
    if args.report:
        write_report(args.report, [{"dataset": args.data, "split": args.split, "auc": auc,
                                    "n_pairs": len(pairs.scores), "seed": seed}])
    return 0


def cmd_bench(args) -> int:
    threads = args.threads or [1, default_threads()]
    _echo("bench", {"edges": args.edges, "nodes": args.nodes, "threads": threads,
                    "repeat": args.repeat, "batch_sizes": args.batch_sizes, "ks": args.ks,
                    "seed": args.seed})
    stream = zipf_stream(args.edges, args.nodes, seed=args.seed)
    rows = []

    def cell(phase, nthreads, fn, batch_size="", k=""):
        times = [_timed(fn)[1] for _ in range(args.repeat)]
        rows.append({"phase": phase, "threads": nthreads, "batch_size": batch_size, "k": k,
                     "repeats": len(times), "median_seconds": statistics.median(times)})

    build_sequential(stream)  # compile kernels outside the timed region
    build_parallel(stream, False, 2)
    cell("convert_sequential", 1, lambda: build_sequential(stream))
    ref = build_sequential(stream)
    for n in threads:
        if build_parallel(stream, False, n) != ref:
            print(f"error: {n}-thread build differs from sequential", file=sys.stderr)
            return 1
        cell("convert_parallel", n, lambda n=n: build_parallel(stream, False, n))
    graph = build_parallel(stream, True, max(threads))
    rng = np.random.default_rng(args.seed)
    for bs in args.batch_sizes:
        pick = rng.integers(0, len(stream), bs)
        nodes, times = stream.src[pick], stream.timestamps[pick]
        for k in args.ks:
            for n in threads:
                cell("sample", n, lambda: sample_block(graph, nodes, times, k, "recent", 0, n), bs, k)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=BENCH_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            out.close()
    return 0


COMMANDS = {"convert": cmd_convert, "sample": cmd_sample, "train": cmd_train,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FormatError, ShapeError, UndefinedMetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
