"""Comparison systems: random retrieval, random VQ tokens, mean pose,
TF-IDF nearest-neighbor text retrieval, and the unconditional token LM.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import DyadSegment, MotionSequence, compute_normalization, history_window
from .interleave import InterleaveConfig, InterleavedSequence, Vocabulary, assemble, tokenize_text
from .lm import LmConfig, train_lm
from .vq import MotionTokenSequence, MotionVqvae, decode_tokens, tokenize_motion


def _fit_length(seq: MotionSequence, target_len: int) -> MotionSequence:
    """Truncate to target_len, repeating the final frame if the source is
    shorter."""
    frames = seq.frames
    if frames.shape[0] < target_len:
        pad = np.repeat(frames[-1:], target_len - frames.shape[0], axis=0)
        frames = np.concatenate([frames, pad], axis=0)
    return MotionSequence(frames[:target_len], seq.fps)


def baseline_random_train(
    train: Sequence[DyadSegment], rng: np.random.Generator, target_len: int
) -> MotionSequence:
    """A uniformly chosen training listener sequence cut to the target
    length."""
    if not train:
        raise ValueError("empty training set")
    pick = train[int(rng.integers(0, len(train)))]
    return _fit_length(pick.listener, target_len)


def baseline_random_vq(
    vq_model: MotionVqvae, rng: np.random.Generator, target_len: int, fps: int = 30
) -> MotionSequence:
    """Uniform random codebook tokens decoded and trimmed."""
    r = vq_model.frames_per_token
    n = math.ceil(target_len / r)
    tokens = rng.integers(0, vq_model.codebook.size, size=n)
    mts = MotionTokenSequence(tuple(int(t) for t in tokens), r, trim=n * r - target_len)
    return decode_tokens(vq_model, mts, fps=fps)


class MeanBaseline:
    """Constant training-mean frame at any requested length."""

    def __init__(self, train: Sequence[DyadSegment]):
        self.mean_frame = compute_normalization(train).mean
        self.fps = train[0].listener.fps

    def generate(self, target_len: int) -> MotionSequence:
        return MotionSequence(np.tile(self.mean_frame, (target_len, 1)), self.fps)


def baseline_mean(train: Sequence[DyadSegment]) -> MeanBaseline:
    return MeanBaseline(train)


# ---------------------------------------------------------------------------
# Nearest-neighbor text retrieval (TF-IDF over word 1/2-grams)
# ---------------------------------------------------------------------------


def _ngrams(tokens: list[str]) -> Counter:
    grams = Counter(tokens)
    grams.update(" ".join(pair) for pair in zip(tokens, tokens[1:]))
    return grams


def _segment_key_text(seg: DyadSegment, history_seconds: float = 3.0) -> str:
    words = [t.text for t in history_window(seg, history_seconds)] + [t.text for t in seg.words]
    return " ".join(tokenize_text(" ".join(words)))


@dataclass
class NnIndex:
    """Deduplicated text keys with sublinear-TF IDF-weighted n-gram vectors
    and the associated listener motion."""

    keys: list[str]
    vectors: list[dict[str, float]]
    motions: list[MotionSequence]
    idf: dict[str, float]

    @classmethod
    def build(
        cls,
        train: Sequence[DyadSegment],
        min_frames: int = 240,
        history_seconds: float = 3.0,
    ) -> "NnIndex":
        """Index the training segments of at least min_frames frames
        (falling back to all segments when none qualify)."""
        chosen = [seg for seg in train if seg.num_frames >= min_frames]
        if not chosen:
            warnings.warn(f"no training segments with >= {min_frames} frames; indexing all")
            chosen = list(train)
        seen: dict[str, DyadSegment] = {}
        for seg in chosen:
            key = _segment_key_text(seg, history_seconds)
            if key not in seen:
                seen[key] = seg
        keys = sorted(seen)
        df: Counter = Counter()
        raw = []
        for key in keys:
            grams = _ngrams(key.split())
            raw.append(grams)
            df.update(grams.keys())
        n_docs = len(keys)
        idf = {g: math.log((1 + n_docs) / (1 + c)) + 1.0 for g, c in df.items()}
        vectors = [cls._vectorize(grams, idf) for grams in raw]
        return cls(keys=keys, vectors=vectors, motions=[seen[k].listener for k in keys], idf=idf)

    @staticmethod
    def _vectorize(grams: Counter, idf: dict[str, float]) -> dict[str, float]:
        vec = {g: (1.0 + math.log(c)) * idf.get(g, 0.0) for g, c in grams.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        if norm > 0:
            vec = {g: v / norm for g, v in vec.items()}
        return vec

    def query_vector(self, text: str) -> dict[str, float]:
        return self._vectorize(_ngrams(tokenize_text(text)), self.idf)

    def to_json(self) -> dict:
        return {
            "keys": self.keys,
            "vectors": self.vectors,
            "idf": self.idf,
            "motions": [m.frames.tolist() for m in self.motions],
            "fps": self.motions[0].fps if self.motions else 30,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NnIndex":
        fps = int(obj.get("fps", 30))
        return cls(
            keys=list(obj["keys"]),
            vectors=[{k: float(v) for k, v in vec.items()} for vec in obj["vectors"]],
            motions=[MotionSequence(np.asarray(m, dtype=np.float64), fps) for m in obj["motions"]],
            idf={k: float(v) for k, v in obj["idf"].items()},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "NnIndex":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def baseline_nn_text(index: NnIndex, query: DyadSegment, history_seconds: float = 3.0) -> MotionSequence:
    """Highest cosine similarity wins; ties break to the lexicographically
    smallest key. Retrieved motion is cut to the query length."""
    if not index.keys:
        raise ValueError("empty nearest-neighbor index")
    qvec = index.query_vector(_segment_key_text(query, history_seconds))
    best_i, best_score = 0, -1.0
    for i, vec in enumerate(index.vectors):
        small, large = (qvec, vec) if len(qvec) < len(vec) else (vec, qvec)
        score = sum(v * large.get(g, 0.0) for g, v in small.items())
        if score > best_score:  # keys are sorted, so first best is smallest key
            best_i, best_score = i, score
    return _fit_length(index.motions[best_i], query.num_frames)


def uncond_streams(
    train: Sequence[DyadSegment],
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    icfg: InterleaveConfig,
) -> list[InterleavedSequence]:
    """Motion-token-only streams (space + motion layout, no text)."""
    return [
        assemble((), (), tokenize_motion(vq_model, seg.listener), vocab, icfg) for seg in train
    ]


def baseline_uncond(
    train: Sequence[DyadSegment],
    vq_model: MotionVqvae,
    vocab: Vocabulary,
    lm_cfg: LmConfig,
    icfg: InterleaveConfig,
    seed: int,
):
    """Listener LM trained without text conditioning. Greedy decoding makes
    its output a function of the requested length alone."""
    streams = uncond_streams(train, vq_model, vocab, icfg)
    return train_lm(streams, vocab, lm_cfg, icfg, seed)
