from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_auc
from tftgn.events import chronological_split
from tftgn.exceptions import UndefinedMetricError, ValidationError
from tftgn.metrics import REPORT_HEADER, ScoredPairs, evaluate, roc_auc, score_split, write_report
from tftgn.synthetic import uniform_stream
from tftgn.tcsr import build_parallel
from tftgn.training import TrainConfig, new_model


def test_perfect_separation():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc(ScoredPairs(np.array([0.1, 0.9]), np.array([1, 0]))) == 0.0


def test_all_ties():
    assert roc_auc(np.ones(7), [1, 0, 1, 0, 0, 1, 1]) == 0.5


def test_oracle_scorer():
    labels = np.random.default_rng(0).integers(0, 2, 500)
    labels[:2] = [0, 1]
    assert roc_auc(labels.astype(float), labels) == 1.0


def test_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1], [0])


def test_input_validation():
    with pytest.raises(ValidationError):
        roc_auc([0.1, 0.2], [1])
    with pytest.raises(ValidationError):
        roc_auc([0.1, 0.2], [1, 2])


def test_matches_pair_counting_200():
    rng = np.random.default_rng(1)
    s = rng.random(200)
    y = rng.integers(0, 2, 200)
    assert abs(roc_auc(s, y) - brute_auc(s, y)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=60).filter(
        lambda rows: len({y for _, y in rows}) == 2
    )
)
def test_matches_pair_counting_with_ties(rows):
    s = np.array([x for x, _ in rows], dtype=float)
    y = np.array([y for _, y in rows])
    assert abs(roc_auc(s, y) - brute_auc(s, y)) < 1e-12


def test_monotone_invariance_and_negation():
    rng = np.random.default_rng(2)
    s = rng.normal(size=300)
    y = rng.integers(0, 2, 300)
    base = roc_auc(s, y)
    for f in (np.exp, lambda x: 3 * x - 7, lambda x: x**3, np.arctan):
        assert roc_auc(f(s), y) == pytest.approx(base, abs=1e-15)
    assert roc_auc(-s, y) + base == pytest.approx(1.0, abs=1e-12)


def test_null_model_on_random_graph():
    s = uniform_stream(10_000, 300, seed=4)
    cfg = TrainConfig(batch_size=100, num_neighbors=10, d_model=16, dropout=0.0, eval_batch_size=500)
    p = new_model(cfg, s)
    # random (untrained) decoder so the model produces varied scores
    p.tensors["dec.w2"][:] = np.random.default_rng(0).normal(size=p.tensors["dec.w2"].shape)
    g = build_parallel(s, True, 2)
    _, _, test = chronological_split(s)
    pairs = score_split(p, test, g, cfg, seed=9)
    assert len(pairs.scores) >= 1000
    assert len(np.unique(pairs.scores)) > 100
    assert abs(roc_auc(pairs) - 0.5) <= 0.05


def test_zero_decoder_gives_exactly_half():
    s = uniform_stream(2000, 50, seed=5)
    cfg = TrainConfig(d_model=8, dropout=0.0)
    p = new_model(cfg, s)
    g = build_parallel(s, True, 1)
    _, val, _ = chronological_split(s)
    assert evaluate(p, val, g, cfg, seed=1) == 0.5


def test_evaluate_is_seeded():
    s = uniform_stream(2000, 50, seed=6)
    cfg = TrainConfig(d_model=8, dropout=0.0)
    p = new_model(cfg, s)
    p.tensors["dec.w2"][:] = 1.0
    g = build_parallel(s, True, 1)
    _, val, _ = chronological_split(s)
    assert evaluate(p, val, g, cfg, seed=3) == evaluate(p, val, g, cfg, seed=3)


def test_evaluate_rejects_empty_split():
    s = uniform_stream(100, 10, seed=0)
    cfg = TrainConfig(d_model=8)
    with pytest.raises(ValidationError):
        evaluate(new_model(cfg, s), s[0:0], build_parallel(s), cfg)


def test_report_csv(tmp_path):
    path = tmp_path / "r.csv"
    write_report(path, [{"dataset": "x", "split": "test", "auc": 0.75, "n_pairs": 10, "seed": 1, "extra": 2}])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == REPORT_HEADER
    assert rows[1] == ["x", "test", "0.75", "10", "1"]
