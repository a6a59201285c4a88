"""Transformer-decoder temporal graph learning on CPU.

Parallel temporal-CSR construction, strict-time neighbor sampling,
suffix-infilled sequences with causal-masked attention, and a link-prediction
trainer with simulated data-parallel gradient averaging.
"""

from tftgn.attention import (
    ModelConfig,
    ModelParams,
    backward,
    forward,
    hidden_states,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from tftgn.events import EventStream, TemporalEvent, chronological_split, load_csv
from tftgn.metrics import evaluate, roc_auc
from tftgn.sampler import NeighborSample, sample_batch, sample_random, sample_recent
from tftgn.sequence import SequenceBatch, build_mask, build_sequence
from tftgn.tcsr import TCsr, build_parallel, build_sequential, deserialize, serialize
from tftgn.training import TrainConfig, train_epoch

__version__ = "0.1.0"

__all__ = [
    "EventStream",
    "ModelConfig",
    "ModelParams",
    "NeighborSample",
    "SequenceBatch",
    "TCsr",
    "TemporalEvent",
    "TrainConfig",
    "backward",
    "build_mask",
    "build_parallel",
    "build_sequence",
    "build_sequential",
    "chronological_split",
    "deserialize",
    "evaluate",
    "forward",
    "hidden_states",
    "init_params",
    "load_checkpoint",
    "load_csv",
    "roc_auc",
    "sample_batch",
    "sample_random",
    "sample_recent",
    "save_checkpoint",
    "serialize",
    "train_epoch",
]
