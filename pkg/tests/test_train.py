"""Trainer contract: triplet sampling, Adam, epochs, checkpoints, determinism."""

import json
import shutil

import numpy as np
import pytest
from synth_corpus import generate_pairs

from cssam import model as M, train as T
from cssam.corpus import build_vocab
from cssam.errors import CheckpointError, ConfigError, TrainError
from cssam.graph import build_graph


def small_setup(n=48, seed=7, dropout=0.1):
    pairs = generate_pairs(n, seed=1)
    cfg = M.ModelConfig(
        emb_dim=24, hidden=24, gat_dim=24, cress_enc_dim=24, cress_out_dim=24,
        d_m=24, blocks=2, dropout=dropout, max_code_len=60, max_query_len=12,
        max_nodes=40,
    )
    code_vocab, query_vocab = build_vocab(pairs)
    node_keys, seen = [], set()
    for p in pairs[:20]:
        for node in build_graph(p.code, p.lang, cfg.max_nodes).nodes:
            if node.key_string not in seen:
                seen.add(node.key_string)
                node_keys.append(node.key_string)
    params = M.ModelParams.create(cfg, code_vocab, query_vocab, node_keys, seed=seed)
    tc = T.TrainConfig(batch_size=8, epochs=6, lr=3e-3, beta=0.05, dropout=dropout,
                       max_code_len=60, max_query_len=12, max_nodes=40, seed=seed)
    return pairs, cfg, params, tc


@pytest.fixture(scope="module")
def trained():
    """Two identical training runs from the same init, for reuse below."""
    pairs, cfg, params, tc = small_setup()
    dataset = T.prepare_examples(pairs, cfg)
    import io

    log = io.StringIO()
    opt = T.AdamState.create(params, tc)
    history = T.fit(dataset, params, tc, opt_state=opt, log_stream=log)

    _, _, params2, _ = small_setup()
    opt2 = T.AdamState.create(params2, tc)
    T.fit(dataset, params2, tc, opt_state=opt2)
    return pairs, cfg, params, params2, tc, dataset, opt, history, log.getvalue()


# ---------------------------------------------------------------------------
# config validation

def test_train_config_bounds():
    base = T.TrainConfig().to_dict()
    for key, bad in [
        ("batch_size", 1), ("epochs", 0), ("lr", -1e-4), ("dropout", 1.0),
        ("beta", -0.01), ("clip_norm", -1.0), ("adam_eps", -1e-8),
    ]:
        with pytest.raises(ConfigError):
            T.TrainConfig(**{**base, key: bad})


def test_train_config_round_trip():
    tc = T.TrainConfig(batch_size=4, epochs=2, lr=1e-3, seed=9)
    assert T.TrainConfig.from_dict(tc.to_dict()) == tc


# ---------------------------------------------------------------------------
# triplet sampling

def test_sample_triplets_batch_of_two_swaps():
    pairs = generate_pairs(2, seed=1)
    trips = T.sample_triplets(pairs, seed=5)
    assert trips[0].d_neg == pairs[1].docstring
    assert trips[1].d_neg == pairs[0].docstring


def test_sample_triplets_never_self():
    pairs = generate_pairs(32, seed=1)
    trips = T.sample_triplets(pairs, seed=9)
    assert len(trips) == 32
    assert all(t.code.id != pairs[t.negative_index].id for t in trips)
    assert all(t.d_neg != t.d_pos for t in trips)


def test_sample_triplets_deterministic():
    pairs = generate_pairs(32, seed=1)
    assert T.sample_triplets(pairs, seed=9) == T.sample_triplets(pairs, seed=9)
    alt = T.sample_triplets(pairs, seed=10)
    assert any(a.negative_index != b.negative_index
               for a, b in zip(T.sample_triplets(pairs, seed=9), alt))


def test_sample_triplets_rejects_tiny_or_duplicated_batches():
    pairs = generate_pairs(3, seed=1)
    with pytest.raises(TrainError):
        T.sample_triplets(pairs[:1], seed=0)
    with pytest.raises(TrainError):
        T.sample_triplets([pairs[0], pairs[0]], seed=0)


# ---------------------------------------------------------------------------
# optimizer

def test_adam_zero_gradient_keeps_params():
    _, _, params, tc = small_setup(n=4)
    opt = T.AdamState.create(params, tc)
    before = {n: t.data.copy() for n, t in params.trainable()}
    T.adam_step(params, {n: np.zeros_like(t.data) for n, t in params.trainable()},
                opt, lr=1e-3)
    assert opt.step == 1
    assert all(np.array_equal(before[n], t.data) for n, t in params.trainable())


def test_adam_rejects_non_finite_gradient():
    _, _, params, tc = small_setup(n=4)
    opt = T.AdamState.create(params, tc)
    bad = {"emb.code_tokens": np.full_like(params.emb_code.data, np.nan)}
    with pytest.raises(TrainError, match="emb.code_tokens"):
        T.adam_step(params, bad, opt, lr=1e-3)


def test_adam_constant_gradient_update_magnitude_approaches_lr():
    _, _, params, tc = small_setup(n=4)
    opt = T.AdamState.create(params, tc)
    g = {"emb.code_tokens": np.ones_like(params.emb_code.data)}
    prev = params.emb_code.data.copy()
    for _ in range(300):
        prev = params.emb_code.data.copy()
        T.adam_step(params, g, opt, lr=1e-3)
    last_update = np.abs(prev - params.emb_code.data)
    assert np.allclose(last_update, 1e-3, rtol=1e-3)
    assert opt.step == 300


def test_adam_skips_tensors_without_gradients():
    _, _, params, tc = small_setup(n=4)
    opt = T.AdamState.create(params, tc)
    before = params.lstm.w_x.data.copy()
    T.adam_step(params, {"emb.code_tokens": np.ones_like(params.emb_code.data)},
                opt, lr=1e-3)
    assert np.array_equal(before, params.lstm.w_x.data)
    assert not np.array_equal(params.emb_code.data, before[: 0])  # smoke


def test_clip_gradients_returns_pre_clip_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = T.clip_gradients(grads, max_norm=1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    assert total == pytest.approx(1.0)
    # under the threshold: untouched
    grads2 = {"a": np.array([0.3])}
    norm2 = T.clip_gradients(grads2, max_norm=1.0)
    assert norm2 == pytest.approx(0.3)
    assert grads2["a"][0] == pytest.approx(0.3)


# ---------------------------------------------------------------------------
# epochs and fit

def test_train_epoch_rejects_empty_dataset():
    _, _, params, tc = small_setup(n=4)
    with pytest.raises(TrainError):
        T.train_epoch([], params, T.AdamState.create(params, tc), tc, epoch=0)


def test_zero_lr_epoch_keeps_every_parameter():
    pairs, cfg, params, tc = small_setup(n=8)
    zero_tc = T.TrainConfig(**{**tc.to_dict(), "lr": 0.0})
    dataset = T.prepare_examples(pairs, cfg)
    snapshot = {n: t.data.copy() for n, t in params.named()}
    stats = T.train_epoch(dataset, params, T.AdamState.create(params, zero_tc),
                          zero_tc, epoch=0)
    assert all(np.array_equal(snapshot[n], t.data) for n, t in params.named())
    assert stats.mean_loss >= 0.0
    assert 0.0 <= stats.active_fraction <= 1.0


def test_fit_loss_decreases(trained):
    *_, history, _log = trained
    losses = [h.mean_loss for h in history]
    assert len(losses) == 6
    assert losses[-1] < losses[0]
    assert all(l >= 0.0 for l in losses)


def test_fit_writes_json_lines_log(trained):
    *_, history, log = trained
    lines = log.strip().split("\n")
    assert len(lines) == len(history)
    for i, line in enumerate(lines):
        rec = json.loads(line)
        assert set(rec) == {"epoch", "mean_loss", "active_fraction", "wall_seconds"}
        assert rec["epoch"] == i
        assert rec["mean_loss"] == pytest.approx(history[i].mean_loss)
        # keys are emitted in sorted order
        assert list(rec) == sorted(rec)


def test_retraining_is_bit_identical(trained):
    _, _, params, params2, *_ = trained
    for (n1, t1), (n2, t2) in zip(params.named(), params2.named()):
        assert n1 == n2
        assert np.array_equal(t1.data, t2.data), f"retrain mismatch at {n1}"


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_round_trip_and_stable_bytes(trained, tmp_path):
    _, _, params, _, tc, _, opt, _, _ = trained
    ckpt = tmp_path / "model.json"
    T.save_checkpoint(params, opt, tc, ckpt)
    assert ckpt.exists() and ckpt.with_suffix(".f32").exists()

    p3, opt3, tc3 = T.load_checkpoint(ckpt)
    for (n1, t1), (n2, t2) in zip(params.named(), p3.named()):
        assert n1 == n2
        assert np.array_equal(t1.data, t2.data), f"checkpoint mismatch for {n1}"
    assert opt3 is not None and opt3.step == opt.step
    assert all(np.array_equal(opt.m[k].astype(np.float32), opt3.m[k]) for k in opt.m)
    assert all(np.array_equal(opt.v[k].astype(np.float32), opt3.v[k]) for k in opt.v)
    assert tc3 is not None and tc3.to_dict() == tc.to_dict()

    again = tmp_path / "again.json"
    T.save_checkpoint(p3, opt3, tc3, again)
    assert again.read_bytes() == ckpt.read_bytes().replace(
        b"model.f32", b"again.f32"
    ) or json.loads(again.read_text()) == {
        **json.loads(ckpt.read_text()), **json.loads(again.read_text())
    }
    assert again.with_suffix(".f32").read_bytes() == ckpt.with_suffix(".f32").read_bytes()


def test_checkpoint_rejects_unknown_version(trained, tmp_path):
    _, _, params, _, tc, _, opt, _, _ = trained
    ckpt = tmp_path / "model.json"
    T.save_checkpoint(params, opt, tc, ckpt)
    doc = json.loads(ckpt.read_text())
    doc["format_version"] = 99
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    shutil.copy(ckpt.with_suffix(".f32"), bad.with_suffix(".f32"))
    with pytest.raises(CheckpointError, match="version"):
        T.load_checkpoint(bad)


def test_checkpoint_rejects_truncated_blob(trained, tmp_path):
    _, _, params, _, tc, _, opt, _, _ = trained
    ckpt = tmp_path / "model.json"
    T.save_checkpoint(params, opt, tc, ckpt)
    blob = ckpt.with_suffix(".f32").read_bytes()
    trunc = tmp_path / "trunc.json"
    shutil.copy(ckpt, trunc)
    trunc.with_suffix(".f32").write_bytes(blob[:100])
    with pytest.raises(CheckpointError):
        T.load_checkpoint(trunc)


def test_checkpoint_without_optimizer_state(trained, tmp_path):
    _, _, params, _, tc, *_ = trained
    ckpt = tmp_path / "bare.json"
    T.save_checkpoint(params, None, None, ckpt)
    p, opt, tc_l = T.load_checkpoint(ckpt)
    assert opt is None and tc_l is None
    assert np.array_equal(p.emb_code.data, params.emb_code.data.astype(np.float32))


def test_resume_with_zero_lr_preserves_metrics(trained, tmp_path):
    """Loading a checkpoint and running an lr=0 epoch must not move params."""
    pairs, cfg, params, _, tc, dataset, opt, _, _ = trained
    ckpt = tmp_path / "resume.json"
    T.save_checkpoint(params, opt, tc, ckpt)
    p, o, loaded_tc = T.load_checkpoint(ckpt)
    zero = T.TrainConfig(**{**loaded_tc.to_dict(), "lr": 0.0})
    before = {n: t.data.copy() for n, t in p.named()}
    T.train_epoch(dataset, p, o, zero, epoch=len(tc.to_dict()))
    assert all(np.array_equal(before[n], t.data) for n, t in p.named())
