"""ROC AUC for dynamic link prediction."""

from __future__ import annotations

import csv
import pathlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from tftgn.attention import ModelParams
from tftgn.events import EventStream
from tftgn.exceptions import UndefinedMetricError, ValidationError
from tftgn.tcsr import TCsr
from tftgn.training import LinkBatch, TrainConfig, forward_concat, score_pairs


@dataclass(frozen=True)
class ScoredPairs:
    scores: np.ndarray
    labels: np.ndarray


def roc_auc(scores, labels=None) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Accepts ``roc_auc(ScoredPairs)`` or ``roc_auc(scores, labels)``. Uses the
    rank-sum identity with average ranks for ties.
    """
    if isinstance(scores, ScoredPairs):
        scores, labels = scores.scores, scores.labels
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValidationError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0 or 1")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs at least one positive and one negative")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score_split(
    params: ModelParams,
    split: EventStream,
    graph: TCsr,
    cfg: TrainConfig,
    seed: int = 0,
) -> ScoredPairs:
    """Score every held-out event and one uniform negative destination per event."""
    if len(split) == 0:
        raise ValidationError("cannot evaluate an empty split")
    rng = np.random.default_rng(seed)
    neg = rng.integers(0, params.config.num_nodes, size=(len(split), 1))

    pos_scores, neg_scores = [], []
    bs = cfg.eval_batch_size
    for s in range(0, len(split), bs):
        batch = LinkBatch(
            split.src[s : s + bs], split.dst[s : s + bs], neg[s : s + bs], split.timestamps[s : s + bs]
        )
        src, dst, ng = forward_concat(params, batch, graph, cfg)
        pos_scores.append(score_pairs(params, src, dst))
        neg_scores.append(score_pairs(params, src, ng))
    scores = np.concatenate(pos_scores + neg_scores)
    labels = np.concatenate([np.ones(len(split)), np.zeros(len(split))])
    return ScoredPairs(scores, labels)


def evaluate(
    params: ModelParams,
    split: EventStream,
    graph: TCsr,
    cfg: TrainConfig,
    seed: int = 0,
) -> float:
    """AUC over held-out events with one seeded negative each (no dropout)."""
    return roc_auc(score_split(params, split, graph, cfg, seed))


REPORT_HEADER = ("dataset", "split", "auc", "n_pairs", "seed")


def write_report(path, rows: list[dict]) -> None:
    """Evaluation report CSV with columns ``dataset,split,auc,n_pairs,seed``."""
    path = pathlib.Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_HEADER})
