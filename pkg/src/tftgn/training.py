"""Link-prediction training: batching, concat/chunk forward, BCE loss, optimizers.

One training step scores every ``(src, dst)`` event of a batch against
``neg_per_pos`` uniformly drawn negative destinations. Sources, destinations
and negatives are sampled, sequenced and pushed through the model as a single
concatenated batch, then chunked back into three groups. Simulated data
parallelism splits a step's batch into ``workers`` equal shards, computes
each shard's mean-loss gradient on its own parameter copy and averages them
before a single optimizer update.
"""

from __future__ import annotations

import dataclasses
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tftgn.attention import ModelConfig, ModelParams, Tape, backward, forward, init_params
from tftgn.events import EventStream
from tftgn.exceptions import ShapeError, ValidationError
from tftgn.sampler import STRATEGIES, sample_block
from tftgn.sequence import MASK_KINDS, build_block
from tftgn.tcsr import TCsr


@dataclass
class TrainConfig:
    batch_size: int = 200
    num_neighbors: int = 10
    seq_len: Optional[int] = None
    num_layers: int = 1
    num_heads: int = 2
    d_model: int = 64
    d_time: Optional[int] = None
    combine_mode: str = "sum"
    learning_rate: float = 1e-4
    epochs: int = 10
    neg_per_pos: int = 1
    workers: int = 1
    seed: int = 0
    mask_kind: str = "causal"
    dropout: float = 0.1
    optimizer: str = "adam"
    strategy: str = "recent"
    threads: int = 1
    ffn: bool = True
    norm: bool = True
    eval_batch_size: int = 1000
    reverse_edges: bool = True

    def __post_init__(self) -> None:
        if self.seq_len is None:
            self.seq_len = self.num_neighbors + 1
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.num_neighbors < 1:
            raise ValidationError("num_neighbors must be >= 1")
        if self.num_neighbors > self.seq_len - 1:
            raise ValidationError(
                f"num_neighbors ({self.num_neighbors}) must be <= seq_len - 1 ({self.seq_len - 1})"
            )
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.neg_per_pos < 1:
            raise ValidationError("neg_per_pos must be >= 1")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.mask_kind not in MASK_KINDS:
            raise ValidationError(f"mask_kind must be one of {MASK_KINDS}")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"strategy must be one of {STRATEGIES}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError("optimizer must be 'adam' or 'sgd'")

    def model_config(
        self,
        num_nodes: int,
        num_edges: int,
        edge_feature_dim: int = 0,
        node_feature_dim: int = 0,
    ) -> ModelConfig:
        return ModelConfig(
            num_nodes=num_nodes,
            num_edges=num_edges,
            d_model=self.d_model,
            num_heads=self.num_heads,
            num_layers=self.num_layers,
            combine=self.combine_mode,
            d_time=self.d_time if self.combine_mode == "concat" else None,
            ffn=self.ffn,
            norm=self.norm,
            dropout=self.dropout,
            node_feature_dim=node_feature_dim,
            edge_feature_dim=edge_feature_dim,
            seed=self.seed,
        )

    @classmethod
    def from_file(cls, path) -> TrainConfig:
        """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        text = pathlib.Path(path).read_text(encoding="utf-8")
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], val, f"{path}:{lineno}")
        return cls(**values)

    def to_file(self, path) -> None:
        lines = [f"{k} = {'none' if v is None else v}" for k, v in dataclasses.asdict(self).items()]
        pathlib.Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(type_name: str, text: str, where: str):
    base = type_name.replace("Optional[", "").rstrip("]")
    if text.lower() == "none" and type_name.startswith("Optional"):
        return None
    try:
        if base == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
    except ValueError:
        raise ValidationError(f"{where}: cannot parse {text!r} as {base}") from None
    return text


@dataclass(frozen=True, eq=False)
class LinkBatch:
    """Positive events plus negatives; ``neg`` is ``[b, neg_per_pos]``."""

    src: np.ndarray
    dst: np.ndarray
    neg: np.ndarray
    times: np.ndarray

    def __len__(self) -> int:
        return len(self.src)

    def shard(self, parts: int) -> list[LinkBatch]:
        idx = np.array_split(np.arange(len(self)), parts)
        return [LinkBatch(self.src[i], self.dst[i], self.neg[i], self.times[i]) for i in idx]


def make_batches(
    train: EventStream,
    b: int,
    neg_per_pos: int = 1,
    seed: int = 0,
    num_nodes: Optional[int] = None,
) -> list[LinkBatch]:
    """Consecutive chronological slices of ``b`` events with uniform negatives."""
    n = len(train)
    if n == 0:
        raise ValidationError("cannot batch an empty stream")
    if b < 1:
        raise ValidationError("batch size must be >= 1")
    num_nodes = train.num_nodes if num_nodes is None else num_nodes
    rng = np.random.default_rng(seed)
    neg = rng.integers(0, num_nodes, size=(n, neg_per_pos))
    return [
        LinkBatch(train.src[s : s + b], train.dst[s : s + b], neg[s : s + b], train.timestamps[s : s + b])
        for s in range(0, n, b)
    ]


def embed_nodes(
    params: ModelParams,
    nodes: np.ndarray,
    times: np.ndarray,
    graph: TCsr,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    sample_seed: int = 0,
    record: bool = False,
):
    """Sample, sequence and encode ``(node, time)`` queries in one forward pass."""
    block = sample_block(
        graph, nodes, times, cfg.num_neighbors, cfg.strategy, sample_seed, cfg.threads
    )
    seq = build_block(block, cfg.seq_len, params.config.num_edges)
    return forward(params, seq, cfg.mask_kind, rng=rng, record=record)


def forward_concat(
    params: ModelParams,
    batch: LinkBatch,
    graph: TCsr,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    sample_seed: int = 0,
    record: bool = False,
):
    """Embeddings ``(src, dst, neg)`` from a single concatenated forward pass.

    ``neg`` embeddings come back flattened to ``[b * neg_per_pos, d_model]``
    in row-major order of ``batch.neg``. With ``record=True`` the model tape is
    returned as a fourth element.
    """
    b, npp = batch.neg.shape[0], batch.neg.shape[1]
    nodes = np.concatenate([batch.src, batch.dst, batch.neg.reshape(-1)])
    times = np.concatenate([batch.times, batch.times, np.repeat(batch.times, npp)])
    res = embed_nodes(params, nodes, times, graph, cfg, rng, sample_seed, record)
    out, tape = res if record else (res, None)
    chunks = (out[:b], out[b : 2 * b], out[2 * b :])
    return (*chunks, tape) if record else chunks


# --------------------------------------------------------------------------
# pair decoder and loss


def score_pairs(params: ModelParams, a: np.ndarray, b: np.ndarray, _cache: Optional[dict] = None) -> np.ndarray:
    """MLP logit for each row pair: ``relu([a, b] W1 + b1) W2 + b2``."""
    t = params.tensors
    x = np.concatenate([a, b], axis=-1)
    pre = x @ t["dec.w1"] + t["dec.b1"]
    hid = np.maximum(pre, 0.0)
    out = (hid @ t["dec.w2"] + t["dec.b2"])[:, 0]
    if _cache is not None:
        _cache.update(x=x, pre=pre, hid=hid)
    return out


def _score_backward(params, cache, dscore, grads):
    t = params.tensors
    ds = dscore[:, None]
    grads["dec.w2"] += cache["hid"].T @ ds
    grads["dec.b2"] += ds.sum(axis=0)
    dpre = (ds @ t["dec.w2"].T) * (cache["pre"] > 0)
    grads["dec.w1"] += cache["x"].T @ dpre
    grads["dec.b1"] += dpre.sum(axis=0)
    dx = dpre @ t["dec.w1"].T
    d = dx.shape[1] // 2
    return dx[:, :d], dx[:, d:]


def bce_with_logits(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on logits and its gradient w.r.t. the logits."""
    loss = np.mean(np.logaddexp(0.0, scores) - labels * scores)
    sig = 0.5 * (1.0 + np.tanh(0.5 * scores))
    return float(loss), (sig - labels) / len(scores)


def link_loss(params: ModelParams, src_emb: np.ndarray, dst_emb: np.ndarray, neg_emb: np.ndarray):
    """Mean BCE over positive pairs (label 1) and negative pairs (label 0).

    Returns ``(loss, (d_src, d_dst, d_neg), decoder_grads)``; ``decoder_grads``
    is a full gradient dict that is zero outside the decoder tensors.
    """
    if src_emb.shape != dst_emb.shape or neg_emb.shape[0] % max(len(src_emb), 1):
        raise ShapeError("embedding groups have incompatible shapes")
    npp = neg_emb.shape[0] // len(src_emb)
    src_rep = np.repeat(src_emb, npp, axis=0)
    a = np.concatenate([src_emb, src_rep])
    b = np.concatenate([dst_emb, neg_emb])
    labels = np.concatenate([np.ones(len(src_emb)), np.zeros(len(neg_emb))])
    cache: dict = {}
    scores = score_pairs(params, a, b, cache)
    loss, dscore = bce_with_logits(scores, labels)
    grads = params.zeros_like()
    da, db = _score_backward(params, cache, dscore, grads)
    n = len(src_emb)
    d_src = da[:n] + da[n:].reshape(n, npp, -1).sum(axis=1)
    return loss, (d_src, db[:n], db[n:]), grads


def batch_gradients(
    params: ModelParams,
    batch: LinkBatch,
    graph: TCsr,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    sample_seed: int = 0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss of ``batch`` and its gradient for every trainable tensor."""
    src, dst, neg, tape = forward_concat(params, batch, graph, cfg, rng, sample_seed, record=True)
    loss, (d_src, d_dst, d_neg), grads = link_loss(params, src, dst, neg)
    model_grads = backward(params, tape, np.concatenate([d_src, d_dst, d_neg]))
    for k, g in model_grads.items():
        grads[k] += g
    return loss, grads


def _shard_rng(cfg: TrainConfig, epoch: int, step: int, shard: int) -> Optional[np.random.Generator]:
    if cfg.dropout <= 0:
        return None
    return np.random.default_rng([cfg.seed, epoch, step, shard])


def averaged_gradients(
    params: ModelParams,
    batch: LinkBatch,
    graph: TCsr,
    cfg: TrainConfig,
    workers: int,
    epoch: int = 0,
    step: int = 0,
    training: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Average of per-shard mean-loss gradients over ``workers`` shards.

    Each shard runs on its own copy of ``params``, concurrently. With equal
    shard sizes the result equals the gradient of the batch's mean loss.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    if workers > len(batch):
        raise ValidationError(f"cannot split {len(batch)} events over {workers} workers")
    shards = batch.shard(workers)

    def run(i: int):
        rng = _shard_rng(cfg, epoch, step, i) if training else None
        return batch_gradients(params.copy(), shards[i], graph, cfg, rng, _sample_seed(cfg, epoch, step, i))

    if workers == 1:
        results = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(workers)))
    loss = sum(r[0] for r in results) / workers
    grads = {k: sum(r[1][k] for r in results) / workers for k in params.tensors}
    return loss, grads


def _sample_seed(cfg: TrainConfig, epoch: int, step: int, shard: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, epoch, step, shard]).generate_state(1)[0])


# --------------------------------------------------------------------------
# optimizers


class SGD:
    """Plain gradient descent ``θ ← θ - η g``."""

    def __init__(self, lr: float) -> None:
        self.lr = lr

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        for k, p in params.tensors.items():
            p -= self.lr * grads[k]
        params.zero_frozen()


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in params.tensors.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        params.zero_frozen()


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


def train_epoch(
    params: ModelParams,
    optimizer,
    train: EventStream,
    graph: TCsr,
    cfg: TrainConfig,
    epoch: int = 0,
    distributed: Optional[bool] = None,
) -> tuple[ModelParams, float]:
    """One pass over ``train`` in chronological batches; returns ``(params, mean loss)``.

    ``distributed`` selects the simulated multi-worker path (default: when
    ``cfg.workers > 1``). With one worker both paths produce identical bits.
    """
    if distributed is None:
        distributed = cfg.workers > 1
    batches = make_batches(train, cfg.batch_size, cfg.neg_per_pos, seed=cfg.seed * 1_000_003 + epoch,
                           num_nodes=params.config.num_nodes)
    total, weight = 0.0, 0
    for step, batch in enumerate(batches):
        if distributed:
            workers = min(cfg.workers, len(batch))
            loss, grads = averaged_gradients(params, batch, graph, cfg, workers, epoch, step)
        else:
            loss, grads = batch_gradients(
                params, batch, graph, cfg, _shard_rng(cfg, epoch, step, 0), _sample_seed(cfg, epoch, step, 0)
            )
        optimizer.step(params, grads)
        total += loss * len(batch)
        weight += len(batch)
    return params, total / weight


def new_model(cfg: TrainConfig, stream: EventStream) -> ModelParams:
    """Initialize parameters sized for ``stream`` (its node count, edge count and features)."""
    mc = cfg.model_config(
        stream.num_nodes,
        len(stream),
        edge_feature_dim=stream.d_e,
        node_feature_dim=stream.d_v,
    )
    return init_params(mc, node_features=stream.node_features, edge_features=stream.edge_features)
