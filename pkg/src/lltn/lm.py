"""Causal transformer over the interleaved text/motion vocabulary.

Separate embedding tables for word and motion ids, learned positions,
pre-norm blocks, and an output head over motion ids only (a text head is
used for optional text-only pretraining and replaced at fine-tune time).
Training is teacher-forced next-token prediction scored at the position
immediately before each motion token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from .interleave import (
    KIND_HISTORY,
    KIND_MOTION,
    KIND_SPACE,
    KIND_TEXT,
    InterleaveConfig,
    InterleavedSequence,
    Vocabulary,
    corrupt_motion_tokens,
    transform_scrambled,
)
from .seeding import CORRUPTION, LM_TRAIN, rng_for, substream_seed
from .vq import MotionTokenSequence


@dataclass(frozen=True)
class LmConfig:
    layers: int = 4
    model_dim: int = 128
    heads: int = 4
    max_positions: int = 512
    learning_rate: float = 5e-5
    max_steps: int = 50_000
    early_stop_window: int = 600
    early_stop_delta: float = 0.001
    batch_size: int = 16

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")
        if self.max_positions <= 0:
            raise ValueError("max_positions must be positive")


def causal_mask(n: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Additive mask: 0 on and below the diagonal, -inf above."""
    mask = torch.zeros(n, n, dtype=dtype)
    return mask.masked_fill(torch.ones(n, n, dtype=torch.bool).triu(1), float("-inf"))


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, D = x.shape
        H = self.heads
        q = self.q(x).view(B, T, H, D // H).transpose(1, 2)
        k = self.k(x).view(B, T, H, D // H).transpose(1, 2)
        v = self.v(x).view(B, T, H, D // H).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(D // H)
        scores = scores + causal_mask(T, x.dtype)
        att = torch.softmax(scores, dim=-1)
        y = (att @ v).transpose(1, 2).reshape(B, T, D)
        return self.out(y)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class ListenerLm(nn.Module):
    """``head``: "motion" predicts motion ids; "text" predicts text ids
    (used for pretraining, replaced at fine-tune time)."""

    def __init__(self, cfg: LmConfig, text_size: int, v_vq: int, head: str = "motion"):
        super().__init__()
        if head not in ("motion", "text"):
            raise ValueError("head must be 'motion' or 'text'")
        self.cfg = cfg
        self.text_size = text_size
        self.v_vq = v_vq
        self.head_kind = head
        d = cfg.model_dim
        self.word_emb = nn.Embedding(text_size, d)
        self.motion_emb = nn.Embedding(v_vq, d)
        self.pos_emb = nn.Embedding(cfg.max_positions, d)
        self.blocks = nn.ModuleList(Block(d, cfg.heads) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(d)
        self.head = nn.Linear(d, v_vq if head == "motion" else text_size)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
            if isinstance(module, nn.Linear) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        is_motion = ids >= self.text_size
        words = self.word_emb(ids.clamp(max=self.text_size - 1))
        motion = self.motion_emb((ids - self.text_size).clamp(min=0, max=self.v_vq - 1))
        return torch.where(is_motion.unsqueeze(-1), motion, words)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """(B, T) combined-vocabulary ids -> (B, T, head size) logits."""
        if ids.ndim != 2:
            raise ValueError("ids must be (batch, length)")
        T = ids.shape[1]
        if T > self.cfg.max_positions:
            raise ValueError(f"sequence length {T} exceeds max_positions {self.cfg.max_positions}")
        pos = torch.arange(T, device=ids.device)
        x = self.embed(ids) + self.pos_emb(pos).unsqueeze(0)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


def motion_loss(
    model: ListenerLm,
    input_ids: torch.Tensor,
    target_ids: torch.Tensor,
    kinds: torch.Tensor,
) -> torch.Tensor:
    """Mean cross-entropy over motion predictions: logits at the position
    before each motion token vs that token's uncorrupted id. Text and pad
    positions contribute nothing. Accepts (B, T) batches."""
    logits = model(input_ids)
    motion = kinds == KIND_MOTION
    motion[:, 0] = False  # a motion token with no predecessor is unscorable
    if not bool(motion.any()):
        raise ValueError("no motion tokens to score")
    rows, cols = torch.nonzero(motion, as_tuple=True)
    pred = logits[rows, cols - 1]
    targets = target_ids[rows, cols] - model.text_size
    return F.cross_entropy(pred, targets)


def lm_loss(
    model: ListenerLm,
    seq: InterleavedSequence,
    vocab: Vocabulary,
    p: float,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Single-sequence loss with input-side motion corruption."""
    inputs, targets = corrupt_motion_tokens(seq, p, rng, vocab)
    return motion_loss(
        model,
        torch.as_tensor(inputs).unsqueeze(0),
        torch.as_tensor(targets).unsqueeze(0),
        torch.as_tensor(seq.kinds.astype(np.int64)).unsqueeze(0),
    )


def _pad_batch(
    items: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids, _, _ in items)
    B = len(items)
    ids = np.full((B, width), pad_id, dtype=np.int64)
    tgt = np.full((B, width), pad_id, dtype=np.int64)
    kinds = np.full((B, width), -1, dtype=np.int64)
    for i, (inp, out, kind) in enumerate(items):
        ids[i, : len(inp)] = inp
        tgt[i, : len(out)] = out
        kinds[i, : len(kind)] = kind
    return torch.from_numpy(ids), torch.from_numpy(tgt), torch.from_numpy(kinds)


def _should_stop(trace: list[float], window: int, delta: float) -> bool:
    """The mean over the latest full window failed to drop by delta."""
    if window <= 0 or len(trace) < 2 * window or len(trace) % window != 0:
        return False
    cur = float(np.mean(trace[-window:]))
    prev = float(np.mean(trace[-2 * window : -window]))
    return cur > prev - delta


def train_lm(
    streams: Sequence[InterleavedSequence],
    vocab: Vocabulary,
    cfg: LmConfig,
    icfg: InterleaveConfig,
    seed: int,
    init: Optional[ListenerLm] = None,
    init_mode: str = "full",
    scramble: bool = False,
):
    """Teacher-forced training over assembled streams.

    init: warm-start source; ``init_mode`` "full" copies every tensor
    (same-architecture resume), "text" copies the trunk, word and position
    embeddings from a text-pretrained model while the motion embeddings and
    output head stay freshly initialized. ``scramble`` re-permutes text ids
    each visit (Scrambled ablation). Stops early when the mean loss over
    early_stop_window steps no longer drops by early_stop_delta; the final
    (last-step) parameters are returned along with the loss trace.
    """
    if not streams:
        raise ValueError("no training streams")
    torch.manual_seed(substream_seed(seed, LM_TRAIN))
    model = ListenerLm(cfg, vocab.text_size, vocab.v_vq, head="motion")
    if init is not None:
        warm_start(model, init, init_mode)
    batch_rng = rng_for(seed, LM_TRAIN + "/batches")
    corrupt_rng = rng_for(seed, CORRUPTION)
    scramble_rng = rng_for(seed, LM_TRAIN + "/scramble")
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    trace: list[float] = []
    for step in range(cfg.max_steps):
        idxs = batch_rng.integers(0, len(streams), size=cfg.batch_size)
        items = []
        for i in idxs:
            seq = streams[i]
            if scramble:
                seq = transform_scrambled(seq, scramble_rng)
            inputs, targets = corrupt_motion_tokens(
                seq, icfg.corruption_probability, corrupt_rng, vocab
            )
            items.append((inputs, targets, seq.kinds.astype(np.int64)))
        ids, tgt, kinds = _pad_batch(items, vocab.pad_id)
        opt.zero_grad()
        loss = motion_loss(model, ids, tgt, kinds)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite LM loss at step {step}")
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
        if _should_stop(trace, cfg.early_stop_window, cfg.early_stop_delta):
            break
    return model, np.asarray(trace)


def pretrain_text_lm(
    text_streams: Sequence[np.ndarray],
    vocab: Vocabulary,
    cfg: LmConfig,
    seed: int,
):
    """Next-token prediction over text-only id streams with a text head."""
    streams = [np.asarray(s, dtype=np.int64) for s in text_streams if len(s) >= 2]
    if not streams:
        raise ValueError("no text streams of length >= 2")
    torch.manual_seed(substream_seed(seed, "text-pretrain"))
    model = ListenerLm(cfg, vocab.text_size, vocab.v_vq, head="text")
    batch_rng = rng_for(seed, "text-pretrain/batches")
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    trace: list[float] = []
    pad = vocab.pad_id
    for step in range(cfg.max_steps):
        idxs = batch_rng.integers(0, len(streams), size=cfg.batch_size)
        width = max(len(streams[i]) for i in idxs)
        ids = np.full((len(idxs), width), pad, dtype=np.int64)
        valid = np.zeros((len(idxs), width), dtype=bool)
        for row, i in enumerate(idxs):
            ids[row, : len(streams[i])] = streams[i]
            valid[row, : len(streams[i])] = True
        ids_t = torch.from_numpy(ids)
        logits = model(ids_t)
        mask = torch.from_numpy(valid[:, 1:] & valid[:, :-1])
        loss = F.cross_entropy(
            logits[:, :-1][mask], ids_t[:, 1:][mask]
        )
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite pretraining loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
        if _should_stop(trace, cfg.early_stop_window, cfg.early_stop_delta):
            break
    return model, np.asarray(trace)


def warm_start(model: ListenerLm, source: ListenerLm, mode: str = "full") -> None:
    """Copy tensors from ``source``. "full" requires identical architecture;
    "text" copies everything except the motion embeddings and output head."""
    src = source.state_dict()
    dst = model.state_dict()
    if mode == "full":
        names = list(dst)
        if set(src) != set(dst):
            raise ckpt.CheckpointError("full warm start requires identical tensor sets")
    elif mode == "text":
        names = [n for n in dst if not (n.startswith("head.") or n.startswith("motion_emb."))]
        for name in names:
            if name not in src:
                raise ckpt.CheckpointError(f"missing tensor {name!r} in pretraining source")
    else:
        raise ValueError("mode must be 'full' or 'text'")
    with torch.no_grad():
        for name in names:
            if src[name].shape != dst[name].shape:
                raise ckpt.CheckpointError(
                    f"tensor {name!r}: shape {tuple(src[name].shape)} != {tuple(dst[name].shape)}"
                )
            dst[name].copy_(src[name])


def save_lm(model: ListenerLm, path) -> None:
    ckpt.export_tensors(path, {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()})


def load_lm(path, cfg: LmConfig, text_size: int, v_vq: int, head: str = "motion") -> ListenerLm:
    tensors = ckpt.import_tensors(path)
    model = ListenerLm(cfg, text_size, v_vq, head=head)
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    ckpt.validate_tensors(tensors, expected)
    with torch.no_grad():
        for name, value in tensors.items():
            model.state_dict()[name].copy_(torch.from_numpy(value.copy()))
    return model


# ---------------------------------------------------------------------------
# Greedy streaming generation
# ---------------------------------------------------------------------------


def _argmax_lowest(logits: torch.Tensor) -> int:
    # numpy argmax documents first-occurrence tie-breaking
    return int(np.argmax(logits.detach().cpu().numpy()))


def generate(
    model: ListenerLm,
    vocab: Vocabulary,
    icfg: InterleaveConfig,
    history_ids: Sequence[int],
    words: Sequence[tuple[int, int]],
    num_tokens: int,
) -> MotionTokenSequence:
    """Greedy streaming decode.

    ``words`` are (token id, end frame) pairs sorted by end frame. Before
    emitting motion token t, every not-yet-consumed word with end frame
    <= r*t is appended, then a space; words further in the future are never
    consulted. Ties in the argmax break to the lowest index.
    """
    r = icfg.frames_per_token
    usable = [w for w in words if w[1] <= r * num_tokens]
    budget = icfg.max_tokens - 2 * num_tokens - len(usable)
    history = list(history_ids)
    if budget < len(history):
        history = history[max(0, len(history) - max(budget, 0)) :]
    ids = list(history)
    out: list[int] = []
    wi = 0
    with torch.no_grad():
        for t in range(1, num_tokens + 1):
            while wi < len(usable) and usable[wi][1] <= r * t:
                ids.append(usable[wi][0])
                wi += 1
            ids.append(vocab.space_id)
            logits = model(torch.as_tensor(ids, dtype=torch.int64).unsqueeze(0))[0, -1]
            token = _argmax_lowest(logits)
            out.append(token)
            ids.append(vocab.motion_id(token))
    return MotionTokenSequence(tuple(out), r)


def generate_unaligned(
    model: ListenerLm,
    vocab: Vocabulary,
    icfg: InterleaveConfig,
    history_ids: Sequence[int],
    words: Sequence[tuple[int, int]],
    num_tokens: int,
) -> MotionTokenSequence:
    """Unaligned-ablation decode: all text prepended, no spaces."""
    ids = list(history_ids) + [w[0] for w in words]
    overflow = len(ids) + num_tokens - icfg.max_tokens
    if overflow > 0:
        ids = ids[overflow:]
    out: list[int] = []
    with torch.no_grad():
        for _ in range(num_tokens):
            if not ids:
                # nothing to condition on yet: seed with a space token
                ids.append(vocab.space_id)
            logits = model(torch.as_tensor(ids, dtype=torch.int64).unsqueeze(0))[0, -1]
            token = _argmax_lowest(logits)
            out.append(token)
            ids.append(vocab.motion_id(token))
    return MotionTokenSequence(tuple(out), icfg.frames_per_token)
