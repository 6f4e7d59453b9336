import math

import numpy as np
import pytest

from amrqe import model as M
from amrqe.preprocess import PAD_ID, EncodedInput

N_TOK, N_PTR, N_SENSE = 30, 15, 6


def tiny_config(**kw):
    base = dict(n_tokens=N_TOK, n_pointers=N_PTR, n_senses=N_SENSE, embed_dim=6, hidden_dim=5, max_len=12, seed=3)
    base.update(kw)
    return M.ModelConfig(**base)


def random_items(n, seed=0, max_len=12, max_seq=9):
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n):
        la, ld = int(rng.integers(1, max_seq + 1)), int(rng.integers(1, max_seq + 1))

        def seq(high, length):
            out = np.full(max_len, PAD_ID, dtype=np.int64)
            out[:length] = rng.integers(1, high, length)
            return out

        senses = seq(N_SENSE, la)
        senses[:la][rng.random(la) < 0.5] = 0
        items.append(EncodedInput(seq(N_TOK, la), seq(N_PTR, la), senses, seq(N_TOK, ld), seq(N_PTR, ld), la, ld))
    return items


def random_targets(n, seed=0):
    return np.random.default_rng(seed + 100).random((n, 36))


# --------------------------------------------------------------------------- losses

def loss_flat_loops(preds, targets):
    n, d = len(preds), len(preds[0])
    total = 0.0
    for i in range(n):
        for j in range(d):
            total += (targets[i][j] - preds[i][j]) ** 2
    return total / (d * n)


def loss_hier_loops(sub, main, targets, l1, l2, k=3):
    n = len(targets)
    s_sub = s_main = 0.0
    for i in range(n):
        for j in range(len(sub[i])):
            s_sub += (targets[i][k + j] - sub[i][j]) ** 2
        for j in range(k):
            s_main += (targets[i][j] - main[i][j]) ** 2
    return l1 * s_sub / (len(sub[0]) * n) + l2 * s_main / (k * n)


@pytest.mark.parametrize("seed", range(20))
def test_loss_flat_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    p, t = rng.random((n, 36)), rng.random((n, 36))
    assert M.loss_flat(p, t) == pytest.approx(loss_flat_loops(p.tolist(), t.tolist()), rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_loss_hier_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    sub, main, t = rng.random((n, 33)), rng.random((n, 3)), rng.random((n, 36))
    l1, l2 = float(rng.random()), float(rng.random()) + 0.1
    want = loss_hier_loops(sub.tolist(), main.tolist(), t.tolist(), l1, l2)
    assert M.loss_hier(sub, main, t, l1, l2) == pytest.approx(want, rel=1e-12)


def test_loss_trivial_values():
    t = np.random.default_rng(1).random((4, 36))
    assert M.loss_flat(t, t) == 0.0
    assert M.loss_flat(np.full((1, 36), 0.5), np.zeros((1, 36))) == 0.25
    assert M.loss_hier(t[:, 3:], t[:, :3], t, 0.2, 1.0) == 0.0


def test_loss_hier_lambda1_zero_is_smatch_slice_mse():
    rng = np.random.default_rng(2)
    sub, main, t = rng.random((5, 33)), rng.random((5, 3)), rng.random((5, 36))
    assert M.loss_hier(sub, main, t, 0.0, 1.0) == M.loss_flat(main, t[:, :3])


def test_loss_hier_manual_two_instances():
    t = np.zeros((2, 36))
    main = np.array([[0.5, 0.5, 0.5], [0.1, 0.2, 0.3]])
    sub = np.full((2, 33), 0.2)
    # main: (3 * 0.25 + 0.01 + 0.04 + 0.09) / 6 = 0.89 / 6; sub: 0.04
    want = 0.2 * 0.04 + 1.0 * (0.89 / 6)
    assert M.loss_hier(sub, main, t, 0.2, 1.0) == pytest.approx(want, rel=1e-12)


def test_loss_errors():
    with pytest.raises(ValueError):
        M.loss_flat(np.zeros((0, 36)), np.zeros((0, 36)))
    with pytest.raises(ValueError):
        M.loss_flat(np.zeros((2, 36)), np.zeros((2, 35)))
    with pytest.raises(ValueError):
        M.loss_hier(np.zeros((2, 32)), np.zeros((2, 3)), np.zeros((2, 36)), 0.2, 1.0)


# --------------------------------------------------------------------------- init and config

def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(k=36)
    with pytest.raises(ValueError):
        tiny_config(lambda2=0.0)
    with pytest.raises(ValueError):
        tiny_config(hidden_dim=0)
    with pytest.raises(ValueError):
        tiny_config(hierarchical=True, multitask=False)
    tiny_config(lambda1=0.0)


def test_init_is_seeded_and_bounded():
    cfg = tiny_config()
    a, b = M.init_model(cfg), M.init_model(cfg)
    assert sorted(a.params) == sorted(M.init_param_names(cfg))
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])
    for name in ("emb.token", "emb.pointer", "emb.sense"):
        table = a.params[name]
        assert np.abs(table).max() <= M.EMBED_INIT
        assert not table[PAD_ID].any()
    for name, w in a.params.items():
        if name.endswith(".W") or name.endswith(".U"):
            n_in, n_out = w.shape
            assert np.abs(w).max() <= math.sqrt(6.0 / (n_in + n_out))
    assert a.params["sub.W"].shape == (6 * 5, 33)
    assert a.params["main.W"].shape == (6 * 5 + 33, 3)
    assert not np.array_equal(M.init_model(tiny_config(seed=4)).params["sub.W"], a.params["sub.W"])


def test_glorot_bound():
    w = M.glorot(np.random.default_rng(0), 40, 24)
    assert w.shape == (40, 24)
    assert np.abs(w).max() <= math.sqrt(6.0 / 64)


# --------------------------------------------------------------------------- forward

def test_embed_and_sum_definition():
    m = M.init_model(tiny_config())
    item = random_items(1, seed=5)[0]
    batch = M.make_batch([item])
    amr, dep = M.embed_and_sum(m, batch)
    p = m.params
    want = p["emb.token"][item.amr_tokens[0]] + p["emb.pointer"][item.amr_pointers[0]] + p["emb.sense"][item.amr_senses[0]]
    assert np.allclose(amr[0, 0], want)
    assert np.allclose(dep[0, 0], p["emb.token"][item.dep_tokens[0]] + p["emb.pointer"][item.dep_pointers[0]])


def test_embed_all_pad_is_zero():
    m = M.init_model(tiny_config())
    z = np.zeros((1, 4), dtype=np.int64)
    batch = M.Batch(z, z, z, np.array([4]), z, z, np.array([4]))
    amr, dep = M.embed_and_sum(m, batch)
    assert not amr.any() and not dep.any()


def test_embed_out_of_range_id():
    m = M.init_model(tiny_config())
    item = random_items(1)[0]
    item.amr_tokens[0] = N_TOK + 3
    with pytest.raises(IndexError):
        M.embed_and_sum(m, M.make_batch([item]))


def test_no_pointers_ignores_pointer_ids():
    m = M.init_model(tiny_config(use_pointers=False))
    items = random_items(4, seed=8)
    shuffled = random_items(4, seed=8)
    rng = np.random.default_rng(9)
    for x in shuffled:
        x.amr_pointers[: x.amr_length] = rng.integers(1, N_PTR, x.amr_length)
        x.dep_pointers[: x.dep_length] = rng.integers(1, N_PTR, x.dep_length)
    assert np.array_equal(M.predict(m, M.make_batch(items)), M.predict(m, M.make_batch(shuffled)))


def test_encode_joint_shape_and_equal_streams():
    m = M.init_model(tiny_config())
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 5, 6))
    out = M.encode_joint(m, x, x, [5, 3], [5, 3])
    assert out.shape == (2, 30)
    # the two streams have separate encoders, so only an identical encoder pair makes the middle third vanish
    for name in list(m.params):
        if name.startswith("dep."):
            m.params[name] = m.params["amr." + name[4:]].copy()
    out = M.encode_joint(m, x, x, [5, 3], [5, 3])
    assert np.allclose(out[:, 10:20], 0.0)


def test_zero_length_sequence_is_rejected():
    m = M.init_model(tiny_config())
    x = np.zeros((1, 3, 6))
    with pytest.raises(ValueError):
        M.encode_joint(m, x, x, [0], [3])


def test_padding_invariance():
    m = M.init_model(tiny_config())
    items = random_items(5, seed=11)
    longer = [M.EncodedInput(*(np.concatenate([a, np.zeros(7, dtype=np.int64)]) for a in
                               (x.amr_tokens, x.amr_pointers, x.amr_senses, x.dep_tokens, x.dep_pointers)),
                             x.amr_length, x.dep_length) for x in items]
    short = M.predict(m, M.make_batch(items))
    wide = M.make_batch(longer)
    wide.amr_tokens = np.pad(wide.amr_tokens, ((0, 0), (0, 7)))
    wide.amr_pointers = np.pad(wide.amr_pointers, ((0, 0), (0, 7)))
    wide.amr_senses = np.pad(wide.amr_senses, ((0, 0), (0, 7)))
    assert np.allclose(short, M.predict(m, wide), rtol=0, atol=1e-13)
    # batching with a longer neighbour does not change a short instance either
    alone = M.predict(m, M.make_batch(items[:1]))
    assert np.allclose(alone[0], short[0], rtol=0, atol=1e-13)


@pytest.mark.parametrize("hierarchical", [True, False])
def test_output_range_and_layout(hierarchical):
    m = M.init_model(tiny_config(hierarchical=hierarchical))
    y = M.predict(m, M.make_batch(random_items(6)))
    assert y.shape == (6, 36)
    assert np.all((y > 0) & (y < 1))


def test_output_range_under_extreme_weights():
    m = M.init_model(tiny_config())
    for name in m.params:
        m.params[name] = m.params[name] * 200.0
    y = M.predict(m, M.make_batch(random_items(4)))
    assert np.all((y >= 0) & (y <= 1)) and np.all(np.isfinite(y))


def test_zeroed_subtask_to_main_weights_decouple_main_head():
    m = M.init_model(tiny_config())
    m.params["main.W"][30:] = 0.0
    batch = M.make_batch(random_items(3))
    base = M.predict(m, batch)[:, :3]
    m.params["sub.W"] = m.params["sub.W"] + 1.0
    assert np.array_equal(base, M.predict(m, batch)[:, :3])


# --------------------------------------------------------------------------- gradients

@pytest.mark.parametrize("kw", [dict(), dict(hierarchical=False), dict(hierarchical=False, multitask=False),
                                dict(use_pointers=False), dict(lstm_layers=1)])
def test_grad_check_at_init(kw):
    m = M.init_model(tiny_config(**kw))
    items = random_items(3, seed=21)
    err = M.grad_check(m, M.make_batch(items), random_targets(3), n_samples=200)
    assert err < 1e-4


def test_zero_loss_gives_zero_gradients():
    m = M.init_model(tiny_config())
    batch = M.make_batch(random_items(3))
    y = M.predict(m, batch)
    loss, grads = M.loss_and_grads(m, batch, y)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_gradient_is_linear_in_lambda():
    batch = M.make_batch(random_items(3))
    t = random_targets(3)
    _, g1 = M.loss_and_grads(M.init_model(tiny_config(lambda1=0.2, lambda2=1.0)), batch, t)
    _, g3 = M.loss_and_grads(M.init_model(tiny_config(lambda1=0.6, lambda2=3.0)), batch, t)
    for name in g1:
        assert np.allclose(3.0 * g1[name], g3[name], rtol=1e-10, atol=1e-15)


def test_main_loss_reaches_shared_encoder_with_lambda1_zero():
    m = M.init_model(tiny_config(lambda1=0.0))
    batch = M.make_batch(random_items(3))
    _, grads = M.loss_and_grads(m, batch, random_targets(3))
    assert np.abs(grads["amr.l0.fwd.W"]).max() > 0
    assert np.abs(grads["dep.l1.bwd.U"]).max() > 0
    assert np.abs(grads["sub.W"]).max() > 0  # through the subtask outputs fed to the main head
    before = m.params["amr.l0.fwd.W"].copy()
    M.Adam(m.params).step(m.params, grads)
    assert not np.array_equal(before, m.params["amr.l0.fwd.W"])


def test_single_task_ignores_subtask_targets():
    m = M.init_model(tiny_config(hierarchical=False, multitask=False))
    batch = M.make_batch(random_items(3))
    t = random_targets(3)
    t2 = t.copy()
    t2[:, 3:] = 0.0
    l1, g1 = M.loss_and_grads(m, batch, t)
    l2, g2 = M.loss_and_grads(m, batch, t2)
    assert l1 == l2
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


def test_pad_rows_receive_no_gradient():
    m = M.init_model(tiny_config())
    _, grads = M.loss_and_grads(m, M.make_batch(random_items(4)), random_targets(4))
    for name in ("emb.token", "emb.pointer", "emb.sense"):
        assert not grads[name][PAD_ID].any()


# --------------------------------------------------------------------------- training

def learnable_data(n, seed):
    """Targets are a smooth function of the token ids, so a small model can fit them."""
    items = random_items(n, seed=seed)
    y = np.empty((n, 36))
    for i, x in enumerate(items):
        v = x.amr_tokens[: x.amr_length].mean() / N_TOK
        y[i] = np.clip(v + 0.01 * np.arange(36) / 36, 0, 1)
    return items, y


def test_training_is_deterministic_and_decreases_loss():
    items, y = learnable_data(64, seed=1)
    dev, dev_y = learnable_data(16, seed=2)
    cfg = tiny_config()
    m1, h1 = M.train(M.init_model(cfg), items, y, dev, dev_y, lr=0.01, epochs=6, batch_size=16, seed=5)
    m2, h2 = M.train(M.init_model(cfg), items, y, dev, dev_y, lr=0.01, epochs=6, batch_size=16, seed=5)
    assert h1 == h2
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    assert h1[5].train_loss < h1[0].train_loss


def test_loss_decreases_for_most_seeds():
    items, y = learnable_data(48, seed=3)
    dev, dev_y = learnable_data(12, seed=4)
    wins = 0
    for seed in range(10):
        _, hist = M.train(M.init_model(tiny_config(seed=seed)), items, y, dev, dev_y,
                          lr=0.01, epochs=6, batch_size=16, seed=seed)
        wins += hist[5].train_loss < hist[0].train_loss
    assert wins >= 9


def test_early_stopping_returns_best_epoch():
    items, y = learnable_data(48, seed=5)
    dev, dev_y = learnable_data(12, seed=6)
    snapshots = []
    model = M.init_model(tiny_config())

    best, hist = M.train(model, items, y, dev, dev_y, lr=0.02, epochs=5, batch_size=16, seed=0,
                         on_epoch=lambda rec: snapshots.append(rec))
    rhos = [h.dev_rho for h in hist]
    best_epoch = int(np.nanargmax(rhos))
    got = M._pearson_or_nan(M.predict_all(best, dev)[:, 2], dev_y[:, 2])
    assert got == pytest.approx(rhos[best_epoch], abs=1e-12)
    assert len(snapshots) == 5
    # the input model is not mutated
    assert np.array_equal(model.params["sub.W"], M.init_model(tiny_config()).params["sub.W"])


def test_grad_check_after_one_epoch():
    items, y = learnable_data(32, seed=7)
    for hierarchical in (True, False):
        m, _ = M.train(M.init_model(tiny_config(hierarchical=hierarchical)), items, y, items[:8], y[:8],
                       lr=0.01, epochs=1, batch_size=8, seed=0)
        assert M.grad_check(m, M.make_batch(items[:3]), y[:3], n_samples=200) < 1e-4


def test_train_rejects_empty_sets():
    m = M.init_model(tiny_config())
    items, y = learnable_data(4, seed=0)
    with pytest.raises(ValueError):
        M.train(m, [], y[:0], items, y)


def test_nan_targets_abort_with_context():
    m = M.init_model(tiny_config())
    items, y = learnable_data(8, seed=0)
    y[3, 0] = np.nan
    with pytest.raises(M.TrainingError, match="epoch 0"):
        M.train(m, items, y, items, y, epochs=1, batch_size=4)


# --------------------------------------------------------------------------- persistence

def test_save_load_roundtrip(tmp_path):
    m = M.init_model(tiny_config(hierarchical=False, lstm_layers=1))
    m.vocab = {"tokens": ["<pad>"]}
    path = tmp_path / "m.bin"
    M.save_model(m, path)
    back = M.load_model(path)
    assert back.config == m.config
    assert back.vocab == m.vocab
    items = random_items(50, seed=31)
    assert np.array_equal(M.predict_all(m, items), M.predict_all(back, items))


def test_load_rejects_damaged_files(tmp_path):
    m = M.init_model(tiny_config())
    path = tmp_path / "m.bin"
    M.save_model(m, path)
    data = path.read_bytes()
    cases = {
        "truncated": data[:-10],
        "magic": b"XXXXXXXX" + data[8:],
        "version": data[:8] + (99).to_bytes(4, "little") + data[12:],
        "trailing": data + b"\0",
    }
    for name, blob in cases.items():
        bad = tmp_path / f"{name}.bin"
        bad.write_bytes(blob)
        with pytest.raises(M.ModelFormatError):
            M.load_model(bad)
