"""End-to-end experiment plumbing: stream preparation, variant training
(full model, baselines, ablation transforms), greedy generation over a test
set, evaluation, and the history-length sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import DyadSegment, MotionSequence, history_window
from .interleave import (
    InterleaveConfig,
    InterleavedSequence,
    Vocabulary,
    assemble,
    build_vocabulary,
    retokenize,
    transform_fixtok,
    transform_fixtok_punc,
    transform_unaligned,
)
from .lm import LmConfig, ListenerLm, generate, generate_unaligned, pretrain_text_lm, train_lm
from .metrics import AffectModel, MetricsReport, evaluate
from .seeding import rng_for
from .synth import SynthCorpus
from .vq import MotionTokenSequence, MotionVqvae, VqConfig, decode_tokens, tokenize_motion, train_vqvae

ABLATIONS = ("nopt", "unaligned", "scrambled", "fixtok", "fixtok-punc")
VARIANTS = ("full",) + ABLATIONS + ("uncond",)


def build_streams(
    segments: Sequence[DyadSegment],
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    icfg: InterleaveConfig,
    history_seconds: float,
    transform: str = "full",
) -> list[InterleavedSequence]:
    """Assembled training streams for one variant. "scrambled" and "nopt"
    keep the standard layout (scrambling is applied per visit during
    training; nopt only changes initialization)."""
    streams = []
    for seg in segments:
        motion = tokenize_motion(vq_model, seg.listener)
        if transform == "uncond":
            seq = assemble((), (), motion, vocab, icfg)
        else:
            hist = retokenize(history_window(seg, history_seconds))
            words = retokenize(seg.words)
            seq = assemble(hist, words, motion, vocab, icfg)
            if transform == "unaligned":
                seq = transform_unaligned(seq)
            elif transform == "fixtok":
                seq = transform_fixtok(seq, vocab)
            elif transform == "fixtok-punc":
                seq = transform_fixtok_punc(seq, vocab)
        streams.append(seq)
    return streams


def text_streams(
    segments: Sequence[DyadSegment], vocab: Vocabulary, history_seconds: float
) -> list[np.ndarray]:
    """Text-only id streams (history + segment words) for pretraining."""
    out = []
    for seg in segments:
        toks = retokenize(history_window(seg, history_seconds)) + retokenize(seg.words)
        out.append(np.array([vocab.word_id(t.text) for t in toks], dtype=np.int64))
    return out


def _transform_text_ids(
    hist_ids: list[int],
    word_pairs: list[tuple[int, int]],
    transform: str,
    vocab: Vocabulary,
    rng: Optional[np.random.Generator],
) -> tuple[list[int], list[tuple[int, int]]]:
    if transform in ("full", "nopt", "unaligned"):
        return hist_ids, word_pairs
    if transform == "uncond":
        return [], []
    if transform == "fixtok":
        return (
            [vocab.fixed_id] * len(hist_ids),
            [(vocab.fixed_id, f) for _, f in word_pairs],
        )
    if transform == "fixtok-punc":
        keep = lambda i: i if vocab.is_punctuation_id(i) else vocab.fixed_id
        return [keep(i) for i in hist_ids], [(keep(i), f) for i, f in word_pairs]
    if transform == "scrambled":
        ids = hist_ids + [i for i, _ in word_pairs]
        perm = rng.permutation(len(ids)) if len(ids) > 1 else np.arange(len(ids))
        shuffled = [ids[p] for p in perm]
        new_hist = shuffled[: len(hist_ids)]
        new_words = [(shuffled[len(hist_ids) + k], f) for k, (_, f) in enumerate(word_pairs)]
        return new_hist, new_words
    raise ValueError(f"unknown transform {transform!r}")


def generate_predictions(
    lm_model: ListenerLm,
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    icfg: InterleaveConfig,
    segments: Sequence[DyadSegment],
    history_seconds: float,
    transform: str = "full",
    seed: int = 0,
) -> list[MotionSequence]:
    """Greedy predictions covering each segment's frame count exactly."""
    r = icfg.frames_per_token
    if r != vq_model.frames_per_token:
        raise ValueError("interleave frames_per_token disagrees with the VQ model")
    rng = rng_for(seed, "generate/scramble")
    preds = []
    for seg in segments:
        T = seg.num_frames
        num = math.ceil(T / r)
        hist_ids = [vocab.word_id(t.text) for t in retokenize(history_window(seg, history_seconds))]
        word_pairs = [(vocab.word_id(t.text), t.end_frame) for t in retokenize(seg.words)]
        hist_ids, word_pairs = _transform_text_ids(hist_ids, word_pairs, transform, vocab, rng)
        if transform == "unaligned":
            tokens = generate_unaligned(lm_model, vocab, icfg, hist_ids, word_pairs, num)
        else:
            tokens = generate(lm_model, vocab, icfg, hist_ids, word_pairs, num)
        mts = MotionTokenSequence(tokens.tokens, r, trim=num * r - T)
        preds.append(decode_tokens(vq_model, mts, fps=seg.listener.fps))
    return preds


@dataclass
class VariantRun:
    name: str
    lm: ListenerLm
    trace: np.ndarray
    predictions: list[MotionSequence]
    report: MetricsReport


def train_variant(
    corpus: SynthCorpus,
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    lm_cfg: LmConfig,
    icfg: InterleaveConfig,
    history_seconds: float,
    variant: str,
    seed: int,
    pretrained: Optional[ListenerLm] = None,
):
    """Train one variant's LM. "full" warm-starts from ``pretrained`` when
    given; "nopt" always starts cold."""
    transform = variant if variant != "nopt" else "full"
    streams = build_streams(corpus.train, vq_model, vocab, icfg, history_seconds, transform)
    init = pretrained if (variant not in ("nopt",) and pretrained is not None) else None
    return train_lm(
        streams,
        vocab,
        lm_cfg,
        icfg,
        seed,
        init=init,
        init_mode="text",
        scramble=(variant == "scrambled"),
    )


def run_variant(
    corpus: SynthCorpus,
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    lm_cfg: LmConfig,
    icfg: InterleaveConfig,
    history_seconds: float,
    variant: str,
    seed: int,
    pretrained: Optional[ListenerLm] = None,
    eval_window: int = 16,
    fd_resamples: int = 100,
    resamples: int = 2000,
) -> VariantRun:
    lm_model, trace = train_variant(
        corpus, vq_model, vocab, lm_cfg, icfg, history_seconds, variant, seed, pretrained
    )
    transform = variant if variant != "nopt" else "full"
    preds = generate_predictions(
        lm_model, vq_model, vocab, icfg, corpus.test, history_seconds, transform, seed
    )
    report = evaluate(
        preds,
        corpus.test,
        vq_model,
        corpus.affect_model,
        seed=seed,
        window=eval_window,
        resamples=resamples,
        fd_resamples=fd_resamples,
    )
    return VariantRun(variant, lm_model, trace, preds, report)


def prepare_corpus_models(corpus: SynthCorpus, vq_cfg: VqConfig, seed: int):
    """Shared per-corpus assets: trained VQ model and vocabulary."""
    vq_model, vq_trace = train_vqvae(list(corpus.train), vq_cfg, seed)
    vocab = build_vocabulary([corpus.train, corpus.val, corpus.test], vq_cfg.codebook_size)
    return vq_model, vq_trace, vocab


def history_sweep(
    corpus: SynthCorpus,
    h_values: Sequence[float],
    vq_cfg: VqConfig,
    lm_cfg: LmConfig,
    icfg: InterleaveConfig,
    seed: int,
    eval_window: int = 16,
) -> dict[float, MetricsReport]:
    """Train/evaluate the full pipeline once per history length. The VQ
    model and vocabulary are history-independent and shared."""
    vq_model, _, vocab = prepare_corpus_models(corpus, vq_cfg, seed)
    out: dict[float, MetricsReport] = {}
    for h in h_values:
        run = run_variant(
            corpus, vq_model, vocab, lm_cfg, icfg, h, "full", seed, eval_window=eval_window
        )
        out[float(h)] = run.report
    return out
