import dataclasses
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from lltn.checkpoint import CheckpointError, export_tensors, import_tensors
from lltn.data import TimedToken
from lltn.interleave import (
    KIND_MOTION,
    KIND_SPACE,
    KIND_TEXT,
    InterleaveConfig,
    Vocabulary,
    assemble,
)
from lltn.lm import (
    ListenerLm,
    LmConfig,
    causal_mask,
    generate,
    generate_unaligned,
    lm_loss,
    load_lm,
    motion_loss,
    pretrain_text_lm,
    save_lm,
    train_lm,
    warm_start,
)
from lltn.vq import MotionTokenSequence

VOCAB = Vocabulary(tuple(sorted(f"w{i}" for i in range(12))), v_vq=8)
ICFG = InterleaveConfig(max_tokens=128, frames_per_token=8)
SMALL = LmConfig(layers=2, model_dim=32, heads=4, max_positions=64, max_steps=20, batch_size=4,
                 early_stop_window=10_000)


def _seq(tokens=(1, 2, 3), words=((0, 5), (3, 12))):
    timed = tuple(TimedToken(VOCAB.words[i], f) for i, f in words)
    return assemble((), timed, MotionTokenSequence(tokens, 8), VOCAB, ICFG)


def test_causal_mask_patterns():
    m1 = causal_mask(1)
    assert m1.shape == (1, 1) and float(m1[0, 0]) == 0.0
    m3 = causal_mask(3)
    for i in range(3):
        for j in range(3):
            if j > i:
                assert math.isinf(float(m3[i, j])) and float(m3[i, j]) < 0
            else:
                assert float(m3[i, j]) == 0.0


def test_masked_softmax_rows_are_distributions():
    torch.manual_seed(0)
    scores = torch.randn(6, 6, dtype=torch.float64)
    att = torch.softmax(scores + causal_mask(6, torch.float64), dim=-1)
    sums = att.sum(dim=-1)
    torch.testing.assert_close(sums, torch.ones(6, dtype=torch.float64), rtol=0, atol=1e-9)
    assert (att >= 0).all()
    for i in range(6):
        assert float(att[i, i + 1 :].sum()) == 0.0


def test_forward_causality_exact():
    torch.manual_seed(1)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq).double()
    ids = torch.randint(0, VOCAB.size, (1, 12))
    with torch.no_grad():
        base = model(ids)
    for j in range(3, 12):
        mutated = ids.clone()
        mutated[0, j] = (int(mutated[0, j]) + 1) % VOCAB.size
        with torch.no_grad():
            out = model(mutated)
        assert float((out[0, :j] - base[0, :j]).abs().max()) <= 1e-12


def test_forward_shapes_and_finiteness():
    torch.manual_seed(2)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    out = model(torch.tensor([[3]]))
    assert out.shape == (1, 1, VOCAB.v_vq)
    out = model(torch.randint(0, VOCAB.size, (2, 20)))
    assert torch.isfinite(out).all()
    with pytest.raises(ValueError, match="max_positions"):
        model(torch.zeros(1, SMALL.max_positions + 1, dtype=torch.int64))


class _StubModel(nn.Module):
    """Fixed logits per position; lets the loss semantics be tested alone."""

    def __init__(self, logits, text_size):
        super().__init__()
        self.logits = logits
        self.text_size = text_size

    def forward(self, ids):
        return self.logits


def test_lm_loss_uniform_logits_is_log_vocab():
    seq = _seq()
    logits = torch.zeros(1, len(seq), VOCAB.v_vq, dtype=torch.float64)
    stub = _StubModel(logits, VOCAB.text_size)
    ids = torch.as_tensor(seq.ids.copy()).unsqueeze(0)
    kinds = torch.as_tensor(seq.kinds.copy(), dtype=torch.int64).unsqueeze(0)
    loss = motion_loss(stub, ids, ids, kinds)
    assert float(loss) == pytest.approx(math.log(VOCAB.v_vq), rel=1e-12)


def test_lm_loss_oracle_logits_vanishes():
    seq = _seq()
    logits = torch.zeros(1, len(seq), VOCAB.v_vq, dtype=torch.float64)
    pos = seq.motion_positions
    for p in pos:
        target = int(seq.ids[p]) - VOCAB.text_size
        logits[0, p - 1, target] = 1e4
    stub = _StubModel(logits, VOCAB.text_size)
    ids = torch.as_tensor(seq.ids.copy()).unsqueeze(0)
    kinds = torch.as_tensor(seq.kinds.copy(), dtype=torch.int64).unsqueeze(0)
    loss = motion_loss(stub, ids, ids, kinds)
    assert float(loss) < 1e-10


def test_lm_loss_masks_text_positions():
    seq = _seq()
    torch.manual_seed(3)
    logits = torch.randn(1, len(seq), VOCAB.v_vq, dtype=torch.float64)
    stub = _StubModel(logits, VOCAB.text_size)
    ids = torch.as_tensor(seq.ids.copy()).unsqueeze(0)
    kinds = torch.as_tensor(seq.kinds.copy(), dtype=torch.int64).unsqueeze(0)
    base = float(motion_loss(stub, ids, ids, kinds))
    # perturbing any text/space target never changes the loss
    for p in range(len(seq)):
        if seq.kinds[p] in (KIND_TEXT, KIND_SPACE):
            tgt = ids.clone()
            tgt[0, p] = (int(tgt[0, p]) + 1) % VOCAB.text_size
            assert float(motion_loss(stub, ids, tgt, kinds)) == base


def test_lm_loss_requires_motion_tokens():
    torch.manual_seed(4)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    ids = torch.tensor([[1, 2, 3]])
    kinds = torch.full((1, 3), KIND_TEXT, dtype=torch.int64)
    with pytest.raises(ValueError, match="motion"):
        motion_loss(model, ids, ids, kinds)


def test_lm_loss_corruption_leaves_targets():
    seq = _seq()
    torch.manual_seed(5)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq).double()
    with torch.no_grad():
        r1 = float(lm_loss(model, seq, VOCAB, 0.0, np.random.default_rng(0)))
        r2 = float(lm_loss(model, seq, VOCAB, 0.0, np.random.default_rng(1)))
    assert r1 == r2  # p=0: rng must not matter


def test_lm_gradients_match_finite_differences():
    from gradcheck import check_gradients

    torch.manual_seed(6)
    cfg = LmConfig(layers=1, model_dim=16, heads=2, max_positions=32, batch_size=1)
    model = ListenerLm(cfg, VOCAB.text_size, VOCAB.v_vq).double()
    seq = _seq()
    ids = torch.as_tensor(seq.ids.copy()).unsqueeze(0)
    kinds = torch.as_tensor(seq.kinds.copy(), dtype=torch.int64).unsqueeze(0)

    def loss_fn():
        return motion_loss(model, ids, ids, kinds)

    worst = check_gradients(model, loss_fn, np.random.default_rng(8), n_coords=5)
    assert worst <= 1e-4


def _streams(n=6, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(2, 6))
        tokens = tuple(int(t) for t in rng.integers(0, VOCAB.v_vq, size=k))
        words = []
        frame = 0
        for _ in range(int(rng.integers(0, 5))):
            frame += int(rng.integers(1, 10))
            words.append((int(rng.integers(0, len(VOCAB.words))), min(frame, 8 * k)))
        out.append(_seq(tokens, tuple(words)))
    return out


def test_train_lm_deterministic():
    streams = _streams()
    _, trace_a = train_lm(streams, VOCAB, SMALL, ICFG, seed=1)
    _, trace_b = train_lm(streams, VOCAB, SMALL, ICFG, seed=1)
    np.testing.assert_array_equal(trace_a, trace_b)
    _, trace_c = train_lm(streams, VOCAB, SMALL, ICFG, seed=2)
    assert not np.array_equal(trace_a, trace_c)


def test_warm_start_reproduces_step0_loss():
    streams = _streams()
    model, trace = train_lm(streams, VOCAB, SMALL, ICFG, seed=3)
    resumed_a, trace_a = train_lm(streams, VOCAB, dataclasses.replace(SMALL, max_steps=5),
                                  ICFG, seed=3, init=model, init_mode="full")
    resumed_b, trace_b = train_lm(streams, VOCAB, dataclasses.replace(SMALL, max_steps=5),
                                  ICFG, seed=3, init=model, init_mode="full")
    assert trace_a[0] == trace_b[0]
    np.testing.assert_array_equal(trace_a, trace_b)


def test_early_stopping_halts():
    streams = _streams()
    cfg = dataclasses.replace(SMALL, max_steps=400, early_stop_window=20, early_stop_delta=10.0)
    _, trace = train_lm(streams, VOCAB, cfg, ICFG, seed=4)
    assert len(trace) == 40  # second window cannot beat the first by delta=10


def test_generate_zero_and_determinism():
    torch.manual_seed(9)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    out = generate(model, VOCAB, ICFG, [], [], 0)
    assert len(out) == 0
    words = [(VOCAB.word_id("w1"), 4), (VOCAB.word_id("w2"), 19)]
    a = generate(model, VOCAB, ICFG, [3, 4], words, 4)
    b = generate(model, VOCAB, ICFG, [3, 4], words, 4)
    assert a.tokens == b.tokens
    assert len(a) == 4 and a.frames_per_token == 8


def test_generate_streaming_causality():
    torch.manual_seed(10)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    rng = np.random.default_rng(11)
    words = []
    frame = 0
    for _ in range(10):
        frame += int(rng.integers(2, 12))
        words.append((int(rng.integers(0, len(VOCAB.words))), frame))
    full = generate(model, VOCAB, ICFG, [1], words, 8)
    for k in (1, 3, 5, 8):
        truncated = [w for w in words if w[1] <= 8 * k]
        partial = generate(model, VOCAB, ICFG, [1], truncated, k)
        assert partial.tokens == full.tokens[:k], f"prefix mismatch at k={k}"


def test_generate_unaligned_no_spaces_in_stream():
    torch.manual_seed(12)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    out = generate_unaligned(model, VOCAB, ICFG, [2, 3], [(1, 5)], 3)
    assert len(out) == 3
    again = generate_unaligned(model, VOCAB, ICFG, [2, 3], [(1, 5)], 3)
    assert out.tokens == again.tokens


def test_pretrain_text_lm_and_warm_start():
    rng = np.random.default_rng(13)
    streams = [rng.integers(0, len(VOCAB.words), size=rng.integers(4, 20)) for _ in range(8)]
    cfg = dataclasses.replace(SMALL, max_steps=40)
    model, trace = pretrain_text_lm(streams, VOCAB, cfg, seed=5)
    assert model.head.out_features == VOCAB.text_size
    # training reduces loss on synthetic text
    assert np.mean(trace[-10:]) < np.mean(trace[:10])
    model_b, trace_b = pretrain_text_lm(streams, VOCAB, cfg, seed=5)
    np.testing.assert_array_equal(trace, trace_b)
    # the checkpoint loads into fine-tuning init
    fine = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq, head="motion")
    head_before = fine.head.weight.detach().clone()
    warm_start(fine, model, mode="text")
    torch.testing.assert_close(fine.word_emb.weight, model.word_emb.weight)
    torch.testing.assert_close(fine.head.weight, head_before)  # head untouched
    assert not torch.equal(fine.blocks[0].attn.q.weight, ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq).blocks[0].attn.q.weight)


def test_checkpoint_round_trip_forward_bitwise(tmp_path):
    torch.manual_seed(14)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    path = tmp_path / "lm.lltn"
    save_lm(model, path)
    back = load_lm(path, SMALL, VOCAB.text_size, VOCAB.v_vq)
    ids = torch.randint(0, VOCAB.size, (1, 16))
    with torch.no_grad():
        a = model(ids)
        b = back(ids)
    assert torch.equal(a, b)


def test_checkpoint_rejects_mismatches(tmp_path):
    torch.manual_seed(15)
    model = ListenerLm(SMALL, VOCAB.text_size, VOCAB.v_vq)
    path = tmp_path / "lm.lltn"
    save_lm(model, path)
    # unknown tensor name is rejected with its name
    tensors = import_tensors(path)
    tensors["sneaky.extra"] = np.zeros((2, 2), dtype=np.float32)
    evil = tmp_path / "evil.lltn"
    export_tensors(evil, tensors)
    with pytest.raises(CheckpointError, match="sneaky.extra"):
        load_lm(evil, SMALL, VOCAB.text_size, VOCAB.v_vq)
    # truncated file rejected
    blob = path.read_bytes()
    trunc = tmp_path / "trunc.lltn"
    trunc.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError):
        load_lm(trunc, SMALL, VOCAB.text_size, VOCAB.v_vq)
    # wrong architecture rejected with tensor name
    with pytest.raises(CheckpointError, match="shape|missing"):
        load_lm(path, dataclasses.replace(SMALL, model_dim=64, heads=4), VOCAB.text_size, VOCAB.v_vq)
