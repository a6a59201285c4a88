from __future__ import annotations

import numpy as np
import pytest

from conftest import dense_attention, random_batch
from tftgn.attention import (
    FROZEN_ROWS,
    ModelConfig,
    assemble_inputs,
    backward,
    encode_time,
    encode_time_grad,
    forward,
    hidden_states,
    init_params,
    load_checkpoint,
    masked_attention,
    save_checkpoint,
)
from tftgn.exceptions import FormatError, ShapeError, ValidationError
from tftgn.sequence import SequenceBatch, build_mask

N_NODES, N_EDGES = 9, 14


def make_params(seed=0, edge_feats=0, node_feats=0, perturb=True, **kw):
    rng = np.random.default_rng(seed + 100)
    cfg = ModelConfig(num_nodes=N_NODES, num_edges=N_EDGES, seed=seed,
                      edge_feature_dim=edge_feats, node_feature_dim=node_feats, **kw)
    p = init_params(
        cfg,
        node_features=rng.normal(size=(N_NODES, node_feats)) if node_feats else None,
        edge_features=rng.normal(size=(N_EDGES, edge_feats)) if edge_feats else None,
    )
    if perturb:
        # move LayerNorm/bias/phase parameters off their trivial init values
        for name, t in p.tensors.items():
            if name.endswith((".bias", ".gain", ".b1", ".b2", "time.phi")):
                t += rng.normal(scale=0.3, size=t.shape)
        p.zero_frozen()
    return p


def edge_rows(p, ei):
    t = p.tensors
    if "edge_proj" in t:
        return p.buffers["edge_features"][ei] @ t["edge_proj"]
    if "edge_table" in t:
        return t["edge_table"][ei]
    return np.zeros(ei.shape + (p.config.d_edge,))


def node_rows(p, ni):
    t = p.tensors
    if "node_table" in t:
        return t["node_table"][ni]
    return p.buffers["node_features"][ni] @ t["node_proj"]


# --------------------------------------------------------------------------
# time encoding and input assembly


def test_time_encoding_basics():
    rng = np.random.default_rng(0)
    omega, phi = rng.normal(size=5), rng.normal(size=5)
    np.testing.assert_array_equal(encode_time(omega, phi, np.array([0.0]))[0], np.cos(phi))
    flat = encode_time(np.zeros(5), phi, np.array([0.0, 3.0, 1e6]))
    np.testing.assert_array_equal(flat, np.tile(np.cos(phi), (3, 1)))


def test_time_encoding_gradients():
    rng = np.random.default_rng(1)
    omega, phi = rng.normal(size=6), rng.normal(size=6)
    delta = rng.random((4, 3)) * 5
    up = rng.normal(size=(4, 3, 6))
    f = lambda o, p, d: float((encode_time(o, p, d) * up).sum())
    g_o, g_p, g_d = encode_time_grad(omega, phi, delta, up)
    eps = 1e-6
    for arr, grad, which in ((omega, g_o, 0), (phi, g_p, 1), (delta, g_d, 2)):
        num = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            args = [omega.copy(), phi.copy(), delta.copy()]
            args[which][i] += eps
            hi = f(*args)
            args[which][i] -= 2 * eps
            num[i] = (hi - f(*args)) / (2 * eps)
        assert np.abs(num - grad).max() / np.abs(grad).max() < 1e-4


def test_assemble_sum_mode_single_neighbor():
    p = make_params(learn_edge_embeddings=True, d_model=8)
    t = p.tensors
    b = SequenceBatch(np.array([[3, 5, 0]]), np.array([[7, N_EDGES + 1, 0]]), np.array([[2.5, 0.0, 0.0]]),
                      np.array([2]), np.array([1]))
    z = assemble_inputs(p, b)
    expect0 = t["node_table"][3] + t["edge_table"][7] + np.cos(t["time.omega"] * 2.5 + t["time.phi"])
    np.testing.assert_allclose(z[0, 0], expect0, rtol=0, atol=1e-15)
    # self position: frozen zero edge, Φ(0)
    np.testing.assert_allclose(z[0, 1], t["node_table"][5] + np.cos(t["time.phi"]), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(z[0, 2], 0.0)


def test_assemble_concat_layout():
    p = make_params(edge_feats=3, combine="concat", d_model=12, d_time=4, d_edge=4)
    b = random_batch(np.random.default_rng(2), 4, 5, N_NODES, N_EDGES)
    z = assemble_inputs(p, b)
    c = p.config
    np.testing.assert_array_equal(z[..., : c.d_node], p.tensors["node_table"][b.node_index])
    np.testing.assert_array_equal(z[..., c.d_node : c.d_node + c.d_edge], edge_rows(p, b.edge_index))
    for r in range(4):
        np.testing.assert_array_equal(z[r, b.valid_len[r]:], 0.0)


def test_all_padding_row_is_zero():
    p = make_params(node_feats=3, edge_feats=2)
    b = SequenceBatch(np.zeros((1, 4), np.int64), np.zeros((1, 4), np.int64), np.zeros((1, 4)),
                      np.array([0]), np.array([0]))
    np.testing.assert_array_equal(assemble_inputs(p, b), 0.0)


def test_out_of_bounds_indices():
    p = make_params()
    b = random_batch(np.random.default_rng(0), 2, 3, N_NODES, N_EDGES)
    bad = SequenceBatch(b.node_index + 100, b.edge_index, b.time_delta, b.valid_len, b.target_row)
    with pytest.raises(ValidationError):
        assemble_inputs(p, bad)
    bad = SequenceBatch(b.node_index, b.edge_index + 100, b.time_delta, b.valid_len, b.target_row)
    with pytest.raises(ValidationError):
        forward(p, bad)


def test_config_validation():
    with pytest.raises(ValidationError):
        ModelConfig(num_nodes=2, num_edges=2, d_model=10, num_heads=3)
    with pytest.raises(ValidationError):
        ModelConfig(num_nodes=2, num_edges=2, combine="product")
    with pytest.raises(ValidationError):
        ModelConfig(num_nodes=2, num_edges=2, combine="concat", d_model=8, d_node=4, d_edge=4, d_time=4)
    with pytest.raises(ValidationError):
        ModelConfig(num_nodes=2, num_edges=2, d_node=3)


# --------------------------------------------------------------------------
# masked attention


def test_matches_dense_oracle_on_50_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(50):
        heads = int(rng.choice([1, 2, 4]))
        d = heads * int(rng.integers(1, 5))
        b, l = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        p = make_params(seed=i, d_model=d, num_heads=heads)
        z = rng.normal(size=(b, l, d))
        batch = random_batch(rng, b, l, N_NODES, N_EDGES)
        mask = build_mask(batch, rng.choice(["causal", "tgat", "self_loop"]))
        got = masked_attention(z, mask, p, 0)
        t = p.tensors
        ref = dense_attention(z, mask, t["layer0.wq"], t["layer0.wk"], t["layer0.wv"], t["layer0.wo"], heads)
        worst = max(worst, np.abs(got - ref).max())
    assert worst < 1e-6


def test_random_2x4x8_two_heads():
    rng = np.random.default_rng(8)
    p = make_params(d_model=8, num_heads=2)
    z = rng.normal(size=(2, 4, 8))
    mask = np.where(np.tril(np.ones((4, 4))) > 0, 0.0, -np.inf)
    t = p.tensors
    ref = dense_attention(z, np.broadcast_to(mask, (2, 4, 4)), t["layer0.wq"], t["layer0.wk"],
                          t["layer0.wv"], t["layer0.wo"], 2)
    assert np.abs(masked_attention(z, mask, p, 0) - ref).max() < 1e-6


def test_singleton_sequence_returns_value_row():
    p = make_params(d_model=6, num_heads=3)
    z = np.random.default_rng(0).normal(size=(1, 1, 6))
    out = masked_attention(z, np.zeros((1, 1)), p, 0)
    t = p.tensors
    np.testing.assert_allclose(out[0, 0], z[0, 0] @ t["layer0.wv"] @ t["layer0.wo"], atol=1e-12)


def test_probabilities_sum_to_one_and_masked_weights_zero():
    rng = np.random.default_rng(3)
    p = make_params(d_model=8, num_heads=2)
    batch = random_batch(rng, 6, 5, N_NODES, N_EDGES)
    mask = build_mask(batch, "causal")
    cache: dict = {}
    masked_attention(rng.normal(size=(6, 5, 8)) * 10, mask, p, 0, _cache=cache)
    probs = cache["probs"]
    live = np.isfinite(mask).any(-1)[:, None, :]
    sums = probs.sum(-1)
    assert np.abs(sums[np.broadcast_to(live, sums.shape)] - 1).max() < 1e-6
    assert np.all(sums[~np.broadcast_to(live, sums.shape)] == 0)
    assert np.all(probs[np.broadcast_to(np.isneginf(mask)[:, None], probs.shape)] == 0)


def test_fully_masked_rows_output_zero():
    p = make_params(d_model=4)
    out = masked_attention(np.ones((1, 3, 4)), np.full((3, 3), -np.inf), p, 0)
    np.testing.assert_array_equal(out, 0.0)


def test_attention_shape_errors():
    p = make_params(d_model=8, num_heads=2)
    with pytest.raises(ShapeError):
        masked_attention(np.zeros((2, 3, 6)), np.zeros((3, 3)), p, 0)
    with pytest.raises(ShapeError):
        masked_attention(np.zeros((2, 3, 8)), np.zeros((2, 4, 4)), p, 0)


# --------------------------------------------------------------------------
# causality


def test_causality_at_attention_level_is_bit_exact():
    rng = np.random.default_rng(4)
    p = make_params(d_model=8, num_heads=2)
    l = 6
    mask = np.where(np.tril(np.ones((l, l))) > 0, 0.0, -np.inf)
    z = rng.normal(size=(3, l, 8))
    base = masked_attention(z, mask, p, 0)
    for j in range(l - 1):
        z2 = z.copy()
        z2[:, j + 1 :] = rng.normal(size=z2[:, j + 1 :].shape) * 100
        out = masked_attention(z2, mask, p, 0)
        assert np.array_equal(out[:, : j + 1], base[:, : j + 1])


@pytest.mark.parametrize("combine", ["sum", "concat"])
def test_causality_through_full_stack_is_bit_exact(combine):
    rng = np.random.default_rng(5)
    p = make_params(num_layers=2, d_model=8, num_heads=2, combine=combine, learn_edge_embeddings=True)
    l = 7
    batch = random_batch(rng, 4, l, N_NODES, N_EDGES, full=True)
    base = hidden_states(p, batch, "causal")
    for j in range(l - 1):
        ni, ei, dt = batch.node_index.copy(), batch.edge_index.copy(), batch.time_delta.copy()
        tail = (slice(None), slice(j + 1, None))
        ni[tail] = rng.integers(1, N_NODES + 1, ni[tail].shape)
        ei[tail] = rng.integers(1, N_EDGES + 2, ei[tail].shape)
        dt[tail] = rng.random(dt[tail].shape) * 1e3
        out = hidden_states(p, SequenceBatch(ni, ei, dt, batch.valid_len, batch.target_row), "causal")
        assert np.array_equal(out[:, : j + 1], base[:, : j + 1])


def test_padding_cannot_influence_live_rows():
    rng = np.random.default_rng(6)
    p = make_params(num_layers=2, d_model=8)
    batch = random_batch(rng, 5, 6, N_NODES, N_EDGES)
    base = forward(p, batch)
    # write garbage into padding slots
    ni, dt = batch.node_index.copy(), batch.time_delta.copy()
    for r in range(5):
        ni[r, batch.valid_len[r]:] = rng.integers(1, N_NODES + 1, 6 - batch.valid_len[r])
        dt[r, batch.valid_len[r]:] = 77.0
    out = forward(p, SequenceBatch(ni, batch.edge_index, dt, batch.valid_len, batch.target_row))
    assert np.array_equal(out, base)


# --------------------------------------------------------------------------
# mask-specialization equivalences


def tgat_oracle(p, batch, include_self):
    """Direct attention over (neighbors [+ self]) keyed as node ⊕ time ⊕ edge rows.

    Keys and values use the neighbor-order layout node ⊕ time ⊕ edge, so the
    key/value projection rows are re-ordered to match. The query comes from
    the node ⊕ time row only (the self edge carries no features).
    """
    c, t = p.config, p.tensors
    h, dh = c.num_heads, c.d_head
    if c.combine == "concat":
        dn, de = c.d_node, c.d_edge
        rows_n = np.arange(dn)
        rows_e = np.arange(dn, dn + de)
        rows_t = np.arange(dn + de, c.d_model)
        perm = np.concatenate([rows_n, rows_t, rows_e])
        wq_nt = t["layer0.wq"][np.concatenate([rows_n, rows_t])]
    out = np.zeros((len(batch), c.d_model))
    for r in range(len(batch)):
        k = int(batch.target_row[r])
        v_node = node_rows(p, batch.node_index[r, k])
        phi0 = np.cos(t["time.phi"])
        ids = list(range(k + 1 if include_self else k))
        if not ids:
            continue
        hn = node_rows(p, batch.node_index[r, ids])
        he = edge_rows(p, batch.edge_index[r, ids])
        ht = np.cos(np.outer(batch.time_delta[r, ids], t["time.omega"]) + t["time.phi"])
        if c.combine == "sum":
            rows = hn + he + ht
            q = (v_node + phi0) @ t["layer0.wq"]
            keys, vals = rows @ t["layer0.wk"], rows @ t["layer0.wv"]
        else:
            rows = np.concatenate([hn, ht, he], axis=1)
            q = np.concatenate([v_node, phi0]) @ wq_nt
            keys, vals = rows @ t["layer0.wk"][perm], rows @ t["layer0.wv"][perm]
        heads = []
        for j in range(h):
            sl = slice(j * dh, (j + 1) * dh)
            logits = keys[:, sl] @ q[sl] / np.sqrt(dh)
            w = np.exp(logits - logits.max())
            heads.append((w / w.sum()) @ vals[:, sl])
        out[r] = np.concatenate(heads) @ t["layer0.wo"]
    return out


@pytest.mark.parametrize("kind", ["tgat", "self_loop"])
@pytest.mark.parametrize("combine", ["sum", "concat"])
@pytest.mark.parametrize("edges", ["table", "features"])
def test_mask_kind_matches_direct_construction(kind, combine, edges):
    rng = np.random.default_rng(9)
    extra = {"learn_edge_embeddings": True} if edges == "table" else {"edge_feats": 3}
    kw = dict(d_model=12, num_heads=3, combine=combine, ffn=False, norm=False, residual=False, **extra)
    if combine == "concat":
        kw.update(d_node=4, d_edge=4, d_time=4)
    for trial in range(10):
        p = make_params(seed=trial, **kw)
        batch = random_batch(rng, 8, 6, N_NODES, N_EDGES)
        got = forward(p, batch, kind)
        ref = tgat_oracle(p, batch, include_self=kind == "self_loop")
        assert np.abs(got - ref).max() < 1e-6


# --------------------------------------------------------------------------
# forward properties


def test_zero_layers_returns_target_input():
    p = make_params(num_layers=0, learn_edge_embeddings=True, d_model=8)
    batch = random_batch(np.random.default_rng(1), 5, 4, N_NODES, N_EDGES)
    z = assemble_inputs(p, batch)
    np.testing.assert_array_equal(forward(p, batch), z[np.arange(5), batch.target_row])


@pytest.mark.parametrize("kind", ["causal", "tgat", "self_loop"])
def test_batch_invariance(kind):
    rng = np.random.default_rng(11)
    p = make_params(num_layers=2, d_model=16, num_heads=4, edge_feats=2)
    batch = random_batch(rng, 32, 8, N_NODES, N_EDGES)
    full = forward(p, batch, kind)
    for r in (0, 13, 31):
        assert np.abs(forward(p, batch.take([r]), kind)[0] - full[r]).max() < 1e-6


def test_permutation_equivariance():
    rng = np.random.default_rng(12)
    p = make_params(num_layers=2, d_model=8)
    batch = random_batch(rng, 20, 6, N_NODES, N_EDGES)
    perm = rng.permutation(20)
    np.testing.assert_allclose(forward(p, batch.take(perm)), forward(p, batch)[perm], rtol=0, atol=1e-12)


def test_dropout_only_with_rng():
    rng = np.random.default_rng(13)
    p = make_params(num_layers=1, d_model=8, dropout=0.5)
    batch = random_batch(rng, 6, 5, N_NODES, N_EDGES)
    assert np.array_equal(forward(p, batch), forward(p, batch))
    a = forward(p, batch, rng=np.random.default_rng(0))
    b = forward(p, batch, rng=np.random.default_rng(0))
    assert np.array_equal(a, b)
    assert not np.allclose(a, forward(p, batch))


# --------------------------------------------------------------------------
# gradients


GRAD_CONFIGS = [
    dict(num_layers=2, d_model=8, num_heads=2, learn_edge_embeddings=True),
    dict(num_layers=1, d_model=8, num_heads=2, combine="concat", d_node=3, d_edge=2, d_time=3, edge_feats=2),
    dict(num_layers=1, d_model=6, num_heads=3, node_feats=4, edge_feats=3, ffn_mult=2),
    dict(num_layers=2, d_model=4, num_heads=1, norm=False, residual=False, ffn=False, learn_edge_embeddings=True),
    dict(num_layers=1, d_model=8, num_heads=2, dropout=0.3),
]


def grad_check(p, batch, kind, seed, dropout_seed=None):
    """Worst tensor-wise relative error between backprop and central differences."""
    up = np.random.default_rng(seed).normal(size=(len(batch), p.config.d_model))

    def loss():
        rng = None if dropout_seed is None else np.random.default_rng(dropout_seed)
        return float((forward(p, batch, kind, rng=rng) * up).sum())

    rng = None if dropout_seed is None else np.random.default_rng(dropout_seed)
    _, tape = forward(p, batch, kind, rng=rng, record=True)
    grads = backward(p, tape, up)
    eps = 1e-6
    worst = {}
    for name, t in p.tensors.items():
        num = np.zeros_like(t)
        for i in np.ndindex(t.shape):
            old = t[i]
            t[i] = old + eps
            hi = loss()
            t[i] = old - eps
            lo = loss()
            t[i] = old
            num[i] = (hi - lo) / (2 * eps)
        if name in FROZEN_ROWS:
            num[list(FROZEN_ROWS[name])] = 0.0
        scale = max(np.linalg.norm(num), np.linalg.norm(grads[name]))
        worst[name] = 0.0 if scale < 1e-9 else np.linalg.norm(num - grads[name]) / scale
    return worst


@pytest.mark.parametrize("cfg", range(len(GRAD_CONFIGS)))
@pytest.mark.parametrize("kind", ["causal", "tgat", "self_loop"])
def test_gradients_match_finite_differences(cfg, kind):
    kw = dict(GRAD_CONFIGS[cfg])
    p = make_params(seed=cfg, **kw)
    batch = random_batch(np.random.default_rng(cfg), 3, 5, N_NODES, N_EDGES)
    errs = grad_check(p, batch, kind, seed=cfg, dropout_seed=7 if kw.get("dropout") else None)
    bad = {k: v for k, v in errs.items() if v >= 1e-4}
    assert not bad, bad


def test_frozen_rows_get_zero_gradient():
    p = make_params(d_model=8, learn_edge_embeddings=True)
    batch = random_batch(np.random.default_rng(0), 10, 6, N_NODES, N_EDGES)
    _, tape = forward(p, batch, record=True)
    g = backward(p, tape, np.ones((10, 8)))
    assert np.all(g["node_table"][0] == 0)
    assert np.all(g["edge_table"][0] == 0) and np.all(g["edge_table"][-1] == 0)
    assert np.any(g["node_table"][1:] != 0)


def test_backward_is_linear_in_upstream():
    rng = np.random.default_rng(14)
    p = make_params(num_layers=2, d_model=8, edge_feats=2)
    batch = random_batch(rng, 7, 5, N_NODES, N_EDGES)
    up = rng.normal(size=(7, 8))
    _, tape = forward(p, batch, record=True)
    g1 = backward(p, tape, up)
    g2 = backward(p, tape, 2 * up)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-12, atol=1e-15)


def test_backward_shape_error():
    p = make_params(d_model=8)
    batch = random_batch(np.random.default_rng(0), 3, 4, N_NODES, N_EDGES)
    _, tape = forward(p, batch, record=True)
    with pytest.raises(ShapeError):
        backward(p, tape, np.ones((2, 8)))


# --------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    p = make_params(num_layers=2, d_model=8, node_feats=3, edge_feats=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(p, path, metadata={"note": "x", "epoch": 3})
    q, meta = load_checkpoint(path)
    assert meta == {"note": "x", "epoch": 3}
    assert q.config == p.config
    assert q.tensors.keys() == p.tensors.keys() and q.buffers.keys() == p.buffers.keys()
    for store_a, store_b in ((p.tensors, q.tensors), (p.buffers, q.buffers)):
        for k in store_a:
            assert store_a[k].shape == store_b[k].shape
            assert np.array_equal(store_a[k], store_b[k])
    batch = random_batch(np.random.default_rng(0), 4, 4, N_NODES, N_EDGES)
    assert np.array_equal(forward(p, batch), forward(q, batch))


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(make_params(d_model=4), path)
    data = path.read_bytes()
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(data[:-40] + bytes([data[-40] ^ 1]) + data[-39:])
    with pytest.raises(FormatError, match="checksum"):
        load_checkpoint(path)
    path.write_bytes(data[:20])
    with pytest.raises(FormatError):
        load_checkpoint(path)
