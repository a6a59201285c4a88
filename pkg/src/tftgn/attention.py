"""Masked multi-head self-attention over suffix-infilled sequences, with exact gradients.

The model maps a :class:`~tftgn.sequence.SequenceBatch` to one embedding per
row:

1. ``Z = E_node (+|concat) E_edge (+|concat) Φ(Δt)``, zero at padding.
2. ``num_layers`` pre-norm blocks: ``x += MHA(LN(x), mask)``,
   ``x += FFN(LN(x))``.
3. A final LayerNorm, then the row at ``target_row`` is selected.

All arithmetic is numpy float64. :func:`forward` can record a :class:`Tape`
that :func:`backward` replays in reverse to produce gradients for every
trainable tensor. Frozen rows (padding and the self edge) always receive zero
gradient.
"""

from __future__ import annotations

import json
import math
import pathlib
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from tftgn.exceptions import FormatError, ShapeError, ValidationError
from tftgn.sequence import SequenceBatch, build_mask

COMBINE_MODES = ("sum", "concat")
_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    In ``sum`` mode the node, edge and time widths all equal ``d_model``. In
    ``concat`` mode ``d_node + d_edge + d_time`` must equal ``d_model``; leave
    ``d_node`` unset to take the remainder.
    """

    num_nodes: int
    num_edges: int
    d_model: int = 64
    num_heads: int = 2
    num_layers: int = 1
    combine: str = "sum"
    d_node: Optional[int] = None
    d_edge: Optional[int] = None
    d_time: Optional[int] = None
    ffn: bool = True
    norm: bool = True
    residual: bool = True
    ffn_mult: int = 4
    dropout: float = 0.0
    node_feature_dim: int = 0
    edge_feature_dim: int = 0
    learn_edge_embeddings: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.combine not in COMBINE_MODES:
            raise ValidationError(f"combine must be one of {COMBINE_MODES}, got {self.combine!r}")
        if self.d_model < 1 or self.num_heads < 1 or self.d_model % self.num_heads:
            raise ValidationError(
                f"d_model ({self.d_model}) must be a positive multiple of num_heads ({self.num_heads})"
            )
        if self.num_layers < 0:
            raise ValidationError("num_layers must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")
        has_edge = self.edge_feature_dim > 0 or self.learn_edge_embeddings
        if self.combine == "sum":
            for name in ("d_node", "d_edge", "d_time"):
                val = getattr(self, name)
                if val not in (None, self.d_model):
                    raise ValidationError(f"{name} must equal d_model in sum mode")
                setattr(self, name, self.d_model)
            if not has_edge:
                self.d_edge = self.d_model
        else:
            if self.d_edge is None:
                self.d_edge = 0 if not has_edge else self.d_model // 4
            if self.d_time is None:
                self.d_time = self.d_model // 4
            if self.d_node is None:
                self.d_node = self.d_model - self.d_edge - self.d_time
            if min(self.d_node, self.d_time) < 1 or self.d_edge < 0:
                raise ValidationError("concat widths must be positive")
            if self.d_node + self.d_edge + self.d_time != self.d_model:
                raise ValidationError("d_node + d_edge + d_time must equal d_model in concat mode")
            if self.d_edge == 0 and has_edge:
                raise ValidationError("edge inputs configured but d_edge is 0")

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads

    @property
    def has_edges(self) -> bool:
        return self.edge_feature_dim > 0 or self.learn_edge_embeddings


FROZEN_ROWS = {"node_table": (0,), "edge_table": (0, -1)}


@dataclass
class ModelParams:
    """Trainable tensors plus fixed feature buffers.

    ``tensors`` holds everything an optimizer updates; ``buffers`` holds the
    raw node/edge feature tables (row 0 and the self-edge row are zero).
    """

    config: ModelConfig
    tensors: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> ModelParams:
        return ModelParams(
            ModelConfig(**asdict(self.config)),
            {k: v.copy() for k, v in self.tensors.items()},
            self.buffers,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def zero_frozen(self, grads: Optional[dict[str, np.ndarray]] = None) -> None:
        """Zero the frozen rows in ``grads`` (or in the parameters themselves)."""
        target = self.tensors if grads is None else grads
        for name, rows in FROZEN_ROWS.items():
            if name in target:
                target[name][list(rows)] = 0.0

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


def init_params(
    config: ModelConfig,
    node_features: Optional[np.ndarray] = None,
    edge_features: Optional[np.ndarray] = None,
) -> ModelParams:
    """Seeded initialization: weights ~ U(±1/sqrt(fan_in)), LayerNorm gains 1, biases 0.

    Time frequencies start at ``10**-linspace(0, 9, d_time)`` with zero phase.
    ``node_features`` is ``[num_nodes, F_v]`` and ``edge_features`` is
    ``[num_edges, F_e]``; both are padded here with the reserved zero rows.
    """
    c = config
    rng = np.random.default_rng(c.seed)

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    t: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    if c.node_feature_dim:
        if node_features is None or node_features.shape != (c.num_nodes, c.node_feature_dim):
            raise ShapeError(f"node_features must be [{c.num_nodes}, {c.node_feature_dim}]")
        buffers["node_features"] = np.vstack([np.zeros((1, c.node_feature_dim)), node_features])
        t["node_proj"] = uniform((c.node_feature_dim, c.d_node), c.node_feature_dim)
    else:
        t["node_table"] = uniform((c.num_nodes + 1, c.d_node), c.d_node)
    if c.edge_feature_dim:
        if edge_features is None or edge_features.shape != (c.num_edges, c.edge_feature_dim):
            raise ShapeError(f"edge_features must be [{c.num_edges}, {c.edge_feature_dim}]")
        z = np.zeros((1, c.edge_feature_dim))
        buffers["edge_features"] = np.vstack([z, edge_features, z])
        t["edge_proj"] = uniform((c.edge_feature_dim, c.d_edge), c.edge_feature_dim)
    elif c.learn_edge_embeddings:
        t["edge_table"] = uniform((c.num_edges + 2, c.d_edge), c.d_edge)
    t["time.omega"] = 1.0 / 10.0 ** np.linspace(0, 9, c.d_time)
    t["time.phi"] = np.zeros(c.d_time)
    d = c.d_model
    for i in range(c.num_layers):
        p = f"layer{i}."
        for w in ("wq", "wk", "wv", "wo"):
            t[p + w] = uniform((d, d), d)
        if c.norm:
            for ln in ("ln1", "ln2"):
                t[p + ln + ".gain"] = np.ones(d)
                t[p + ln + ".bias"] = np.zeros(d)
        if c.ffn:
            h = c.ffn_mult * d
            t[p + "ffn.w1"] = uniform((d, h), d)
            t[p + "ffn.b1"] = np.zeros(h)
            t[p + "ffn.w2"] = uniform((h, d), h)
            t[p + "ffn.b2"] = np.zeros(d)
    if c.norm and c.num_layers:
        t["ln_f.gain"] = np.ones(d)
        t["ln_f.bias"] = np.zeros(d)
    t["dec.w1"] = uniform((2 * d, d), 2 * d)
    t["dec.b1"] = np.zeros(d)
    t["dec.w2"] = np.zeros((d, 1))
    t["dec.b2"] = np.zeros(1)
    params = ModelParams(config, t, buffers)
    params.zero_frozen()
    return params


# --------------------------------------------------------------------------
# time encoding and input assembly


def encode_time(omega: np.ndarray, phi: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``cos(omega * Δt + phi)`` broadcast over a trailing ``d_time`` axis."""
    delta = np.asarray(delta, dtype=np.float64)
    return np.cos(delta[..., None] * omega + phi)


def encode_time_grad(omega, phi, delta, upstream):
    """Gradients of ``sum(upstream * encode_time(...))`` w.r.t. (omega, phi, delta)."""
    delta = np.asarray(delta, dtype=np.float64)
    s = -np.sin(delta[..., None] * omega + phi) * upstream
    axes = tuple(range(s.ndim - 1))
    return (s * delta[..., None]).sum(axis=axes), s.sum(axis=axes), (s * omega).sum(axis=-1)


def _check_indices(params: ModelParams, batch: SequenceBatch) -> None:
    c = params.config
    ni, ei = batch.node_index, batch.edge_index
    if ni.size and (ni.min() < 0 or ni.max() > c.num_nodes):
        raise ValidationError(f"node index out of bounds for {c.num_nodes} nodes")
    if ei.size and (ei.min() < 0 or ei.max() > c.num_edges + 1):
        raise ValidationError(f"edge index out of bounds for {c.num_edges} edges")


def assemble_inputs(params: ModelParams, batch: SequenceBatch, _cache: Optional[dict] = None) -> np.ndarray:
    """Input matrix ``Z`` of shape ``[B, l, d_model]``; padding rows are exactly zero."""
    _check_indices(params, batch)
    c, t = params.config, params.tensors
    ni, ei = batch.node_index, batch.edge_index
    live = (ni != 0)[..., None]
    if "node_table" in t:
        e_node = t["node_table"][ni]
    else:
        e_node = params.buffers["node_features"][ni] @ t["node_proj"]
    e_edge = None
    if "edge_proj" in t:
        e_edge = params.buffers["edge_features"][ei] @ t["edge_proj"]
    elif "edge_table" in t:
        e_edge = t["edge_table"][ei]
    e_time = encode_time(t["time.omega"], t["time.phi"], batch.time_delta) * live
    if c.combine == "sum":
        z = e_node + e_time
        if e_edge is not None:
            z = z + e_edge
    else:
        parts = [e_node]
        if c.d_edge:
            parts.append(e_edge if e_edge is not None else np.zeros(ni.shape + (c.d_edge,)))
        parts.append(e_time)
        z = np.concatenate(parts, axis=-1)
    if _cache is not None:
        _cache["live"] = live
    return z


def _assemble_backward(params: ModelParams, batch: SequenceBatch, cache: dict, dz, grads) -> None:
    c, t = params.config, params.tensors
    ni, ei = batch.node_index, batch.edge_index
    if c.combine == "sum":
        dn = de = dt = dz
    else:
        dn = dz[..., : c.d_node]
        de = dz[..., c.d_node : c.d_node + c.d_edge]
        dt = dz[..., c.d_node + c.d_edge :]
    d = dn.shape[-1]
    if "node_table" in t:
        np.add.at(grads["node_table"], ni.reshape(-1), dn.reshape(-1, d))
    else:
        feats = params.buffers["node_features"][ni]
        grads["node_proj"] += feats.reshape(-1, feats.shape[-1]).T @ dn.reshape(-1, d)
    if "edge_proj" in t:
        feats = params.buffers["edge_features"][ei]
        grads["edge_proj"] += feats.reshape(-1, feats.shape[-1]).T @ de.reshape(-1, de.shape[-1])
    elif "edge_table" in t:
        np.add.at(grads["edge_table"], ei.reshape(-1), de.reshape(-1, de.shape[-1]))
    g_omega, g_phi, _ = encode_time_grad(
        t["time.omega"], t["time.phi"], batch.time_delta, dt * cache["live"]
    )
    grads["time.omega"] += g_omega
    grads["time.phi"] += g_phi


# --------------------------------------------------------------------------
# layer primitives


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + _LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def _layer_norm_backward(dy, gain, cache):
    xhat, inv = cache
    n = xhat.shape[-1]
    dxhat = dy * gain
    dx = inv / n * (
        n * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)


def _gelu(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    return 0.5 * x * (1.0 + th), th


def _gelu_backward(x, th, dy):
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner)


def _dropout_mask(rng, shape, rate):
    if rate <= 0.0 or rng is None:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def _split_heads(x, h):
    b, l, d = x.shape
    return x.reshape(b, l, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def _softmax_masked(scores, live_rows):
    """Row softmax; rows with no live column become all-zero."""
    safe = np.where(live_rows[..., None], scores, 0.0)
    safe = safe - safe.max(axis=-1, keepdims=True)
    e = np.exp(safe)
    e = np.where(live_rows[..., None], e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    return e / np.where(denom > 0, denom, 1.0)


def masked_attention(
    z: np.ndarray,
    mask: np.ndarray,
    params: ModelParams,
    layer: int,
    rng: Optional[np.random.Generator] = None,
    _cache: Optional[dict] = None,
) -> np.ndarray:
    """Multi-head ``softmax(Q Kᵀ / sqrt(d_head) + M) V`` followed by the output projection.

    ``mask`` is ``[B, l, l]`` (or ``[l, l]``) over ``{0, -inf}``. Rows with no
    live column produce zeros. ``rng`` enables dropout on attention weights.
    """
    c, t = params.config, params.tensors
    if z.ndim != 3 or z.shape[-1] != c.d_model:
        raise ShapeError(f"expected [B, l, {c.d_model}] input, got {z.shape}")
    b, l, _ = z.shape
    mask = np.broadcast_to(mask, (b, l, l)) if mask.ndim == 2 else mask
    if mask.shape != (b, l, l):
        raise ShapeError(f"mask shape {mask.shape} incompatible with input {z.shape}")
    p = f"layer{layer}."
    h, dh = c.num_heads, c.d_head
    q = _split_heads(z @ t[p + "wq"], h)
    k = _split_heads(z @ t[p + "wk"], h)
    v = _split_heads(z @ t[p + "wv"], h)
    m = mask[:, None, :, :]
    live_rows = np.broadcast_to(np.isfinite(m).any(axis=-1), (b, h, l))
    scale = 1.0 / math.sqrt(dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale + m
    probs = _softmax_masked(scores, live_rows)
    drop = _dropout_mask(rng, probs.shape, c.dropout)
    used = probs if drop is None else probs * drop
    o = _merge_heads(used @ v)
    out = o @ t[p + "wo"]
    if _cache is not None:
        _cache.update(z=z, q=q, k=k, v=v, probs=probs, drop=drop, used=used, o=o, scale=scale)
    return out


def _attention_backward(params, layer, cache, dout, grads):
    t = params.tensors
    p = f"layer{layer}."
    h = params.config.num_heads
    z, q, k, v = cache["z"], cache["q"], cache["k"], cache["v"]
    probs, drop, used, o, scale = (cache[n] for n in ("probs", "drop", "used", "o", "scale"))
    grads[p + "wo"] += np.einsum("bld,ble->de", o, dout)
    do = _split_heads(dout @ t[p + "wo"].T, h)
    d_used = do @ v.transpose(0, 1, 3, 2)
    dv = used.transpose(0, 1, 3, 2) @ do
    dprobs = d_used if drop is None else d_used * drop
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dq = (dscores @ k) * scale
    dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
    dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
    grads[p + "wq"] += np.einsum("bld,ble->de", z, dq)
    grads[p + "wk"] += np.einsum("bld,ble->de", z, dk)
    grads[p + "wv"] += np.einsum("bld,ble->de", z, dv)
    return dq @ t[p + "wq"].T + dk @ t[p + "wk"].T + dv @ t[p + "wv"].T


# --------------------------------------------------------------------------
# full model


@dataclass
class Tape:
    """Intermediate values recorded by :func:`forward` for :func:`backward`."""

    batch: SequenceBatch
    kind: str
    assemble: dict
    blocks: list
    final: Optional[tuple]
    rows: np.ndarray


def forward(
    params: ModelParams,
    batch: SequenceBatch,
    kind: str = "causal",
    rng: Optional[np.random.Generator] = None,
    record: bool = False,
):
    """Target-row embeddings ``[B, d_model]``.

    Passing ``rng`` turns on dropout (training mode). With ``record=True``
    returns ``(embeddings, tape)``.
    """
    c, t = params.config, params.tensors
    asm: dict = {}
    x, blocks = _encode(params, batch, kind, rng, asm)
    final = None
    rows = np.arange(len(batch))
    picked = x[rows, batch.target_row]
    if c.norm and c.num_layers:
        picked, final = _layer_norm(picked, t["ln_f.gain"], t["ln_f.bias"])
    if record:
        return picked, Tape(batch, kind, asm, blocks, final, rows)
    return picked


def hidden_states(params: ModelParams, batch: SequenceBatch, kind: str = "causal") -> np.ndarray:
    """Every position's output ``[B, l, d_model]`` (inference mode, final norm applied)."""
    c, t = params.config, params.tensors
    x, _ = _encode(params, batch, kind, None, {})
    if c.norm and c.num_layers:
        x, _ = _layer_norm(x, t["ln_f.gain"], t["ln_f.bias"])
    return x


def _encode(params, batch, kind, rng, asm):
    c, t = params.config, params.tensors
    mask = build_mask(batch, kind)
    x = assemble_inputs(params, batch, asm)
    blocks = []
    for i in range(c.num_layers):
        p = f"layer{i}."
        blk: dict = {"attn": {}}
        a_in = x
        if c.norm:
            a_in, blk["ln1"] = _layer_norm(x, t[p + "ln1.gain"], t[p + "ln1.bias"])
        a_out = masked_attention(a_in, mask, params, i, rng, blk["attn"])
        x = x + a_out if c.residual else a_out
        if c.ffn:
            f_in = x
            if c.norm:
                f_in, blk["ln2"] = _layer_norm(x, t[p + "ln2.gain"], t[p + "ln2.bias"])
            pre = f_in @ t[p + "ffn.w1"] + t[p + "ffn.b1"]
            act, th = _gelu(pre)
            drop = _dropout_mask(rng, act.shape, c.dropout)
            used = act if drop is None else act * drop
            f_out = used @ t[p + "ffn.w2"] + t[p + "ffn.b2"]
            blk.update(f_in=f_in, pre=pre, th=th, drop=drop, used=used)
            x = x + f_out if c.residual else f_out
        blocks.append(blk)
    return x, blocks


def backward(params: ModelParams, tape: Tape, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * forward(...))`` for every trainable tensor."""
    c, t = params.config, params.tensors
    batch = tape.batch
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (len(batch), c.d_model):
        raise ShapeError(f"upstream must be [{len(batch)}, {c.d_model}], got {upstream.shape}")
    grads = params.zeros_like()
    d_picked = upstream
    if tape.final is not None:
        d_picked, grads["ln_f.gain"], grads["ln_f.bias"] = _layer_norm_backward(
            upstream, t["ln_f.gain"], tape.final
        )
    dx = np.zeros((len(batch), batch.seq_len, c.d_model))
    dx[tape.rows, batch.target_row] = d_picked
    for i in reversed(range(c.num_layers)):
        p = f"layer{i}."
        blk = tape.blocks[i]
        if c.ffn:
            d_fout = dx
            grads[p + "ffn.b2"] += d_fout.sum(axis=(0, 1))
            grads[p + "ffn.w2"] += np.einsum("blh,bld->hd", blk["used"], d_fout)
            d_used = d_fout @ t[p + "ffn.w2"].T
            d_act = d_used if blk["drop"] is None else d_used * blk["drop"]
            d_pre = _gelu_backward(blk["pre"], blk["th"], d_act)
            grads[p + "ffn.b1"] += d_pre.sum(axis=(0, 1))
            grads[p + "ffn.w1"] += np.einsum("bld,blh->dh", blk["f_in"], d_pre)
            d_fin = d_pre @ t[p + "ffn.w1"].T
            if c.norm:
                d_fin, g, bb = _layer_norm_backward(d_fin, t[p + "ln2.gain"], blk["ln2"])
                grads[p + "ln2.gain"] += g
                grads[p + "ln2.bias"] += bb
            dx = dx + d_fin if c.residual else d_fin
        d_ain = _attention_backward(params, i, blk["attn"], dx, grads)
        if c.norm:
            d_ain, g, bb = _layer_norm_backward(d_ain, t[p + "ln1.gain"], blk["ln1"])
            grads[p + "ln1.gain"] += g
            grads[p + "ln1.bias"] += bb
        dx = dx + d_ain if c.residual else d_ain
    _assemble_backward(params, batch, tape.assemble, dx, grads)
    params.zero_frozen(grads)
    return grads


# --------------------------------------------------------------------------
# checkpoints

_CK_MAGIC = b"TFCK"
_CK_VERSION = 1
_CK_HEAD = struct.Struct("<4sBI")
_CK_CRC = struct.Struct("<I")


def save_checkpoint(params: ModelParams, path, metadata: Optional[dict] = None) -> None:
    """Write config, metadata and every tensor/buffer as one checksummed blob.

    Layout: ``b"TFCK"``, u8 version, u32 header length, UTF-8 JSON header
    (config, metadata, tensor directory), raw little-endian float64 data in
    directory order, u32 CRC-32 of all preceding bytes.
    """
    entries, blobs = [], []
    for group, store in (("tensor", params.tensors), ("buffer", params.buffers)):
        for name, arr in store.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            entries.append({"name": name, "group": group, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
    header = json.dumps(
        {"config": asdict(params.config), "metadata": metadata or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    body = _CK_HEAD.pack(_CK_MAGIC, _CK_VERSION, len(header)) + header + b"".join(blobs)
    pathlib.Path(path).write_bytes(body + _CK_CRC.pack(zlib.crc32(body)))


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(params, metadata)``."""
    data = pathlib.Path(path).read_bytes()
    if len(data) < _CK_HEAD.size + _CK_CRC.size:
        raise FormatError("file too short for a checkpoint")
    magic, version, hlen = _CK_HEAD.unpack_from(data, 0)
    if magic != _CK_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _CK_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (crc,) = _CK_CRC.unpack_from(data, len(data) - _CK_CRC.size)
    if zlib.crc32(memoryview(data)[: -_CK_CRC.size]) != crc:
        raise FormatError("checksum mismatch")
    try:
        header = json.loads(data[_CK_HEAD.size : _CK_HEAD.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from None
    off = _CK_HEAD.size + hlen
    tensors, buffers = {}, {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if off + 8 * count > len(data) - _CK_CRC.size:
            raise FormatError("truncated tensor data")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(entry["shape"])
        off += 8 * count
        (tensors if entry["group"] == "tensor" else buffers)[entry["name"]] = arr.astype(np.float64)
    if off != len(data) - _CK_CRC.size:
        raise FormatError("trailing bytes after tensor data")
    return ModelParams(ModelConfig(**header["config"]), tensors, buffers), header["metadata"]
