"""End-to-end fit/evaluate loop with a per-epoch metrics log."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from tftgn.attention import ModelParams
from tftgn.events import EventStream, chronological_split
from tftgn.metrics import evaluate
from tftgn.tcsr import TCsr, build_parallel
from tftgn.training import TrainConfig, make_optimizer, new_model, train_epoch

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "val_auc", "seconds")


@dataclass
class FitResult:
    params: ModelParams
    graph: TCsr
    history: list[dict] = field(default_factory=list)
    test_auc: Optional[float] = None
    test_pairs: int = 0


def fit(
    cfg: TrainConfig,
    stream: EventStream,
    metrics_path=None,
    eval_seed: int = 0,
    params: Optional[ModelParams] = None,
) -> FitResult:
    """Train on the first 70% of ``stream``, validate on the next 15%, test on the rest.

    The sampling graph holds every event; strict-time sampling keeps future
    edges out of each query's context.
    """
    train, val, test = chronological_split(stream, 0.70, 0.15)
    graph = build_parallel(stream, reverse=cfg.reverse_edges, num_threads=cfg.threads)
    params = new_model(cfg, stream) if params is None else params
    opt = make_optimizer(cfg)
    result = FitResult(params, graph)
    writer = None
    fh = open(metrics_path, "w", newline="", encoding="utf-8") if metrics_path else None
    try:
        if fh:
            writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
            writer.writeheader()
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            _, loss = train_epoch(params, opt, train, graph, cfg, epoch)
            val_auc = evaluate(params, val, graph, cfg, seed=eval_seed) if len(val) else float("nan")
            row = {
                "epoch": epoch,
                "train_loss": loss,
                "val_auc": val_auc,
                "seconds": time.perf_counter() - start,
            }
            result.history.append(row)
            logger.info("epoch %d loss %.5f val_auc %.4f (%.1fs)", epoch, loss, val_auc, row["seconds"])
            if writer:
                writer.writerow(row)
                fh.flush()
    finally:
        if fh:
            fh.close()
    if len(test):
        result.test_auc = evaluate(params, test, graph, cfg, seed=eval_seed + 1)
        result.test_pairs = 2 * len(test)
    return result
