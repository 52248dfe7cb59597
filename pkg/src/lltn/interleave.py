"""Mixed text/motion token streams for the listener LM.

Motion tokens are appended to the id space after the word table and three
reserved ids. Assembly interleaves segment text between motion tokens by
timestamp (a space token immediately before every motion token) and
enforces the stream budget by dropping history from the front first.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import DyadSegment, TimedToken
from .vq import MotionTokenSequence

KIND_HISTORY = 0
KIND_TEXT = 1
KIND_SPACE = 2
KIND_MOTION = 3

_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]", re.UNICODE)
_WORD_RE = re.compile(r"\w")


def tokenize_text(s: str) -> list[str]:
    """Lowercased word-level split with punctuation as separate tokens."""
    return _TOKEN_RE.findall(s.lower())


def is_punctuation(token: str) -> bool:
    return bool(token) and not _WORD_RE.search(token)


def retokenize(tokens: Sequence[TimedToken]) -> tuple[TimedToken, ...]:
    """Split each timed token with tokenize_text, keeping its end frame."""
    out = []
    for tok in tokens:
        for piece in tokenize_text(tok.text):
            out.append(TimedToken(piece, tok.end_frame))
    return tuple(out)


@dataclass(frozen=True)
class Vocabulary:
    """Word table plus reserved ids (SPACE, FIXED, PAD) and the motion range."""

    words: tuple[str, ...]
    v_vq: int

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "_word_to_id", {w: i for i, w in enumerate(self.words)})
        if len(self._word_to_id) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    @property
    def space_id(self) -> int:
        return len(self.words)

    @property
    def fixed_id(self) -> int:
        return len(self.words) + 1

    @property
    def pad_id(self) -> int:
        return len(self.words) + 2

    @property
    def text_size(self) -> int:
        """Word ids plus reserved ids; motion ids start here."""
        return len(self.words) + 3

    @property
    def motion_base(self) -> int:
        return self.text_size

    @property
    def size(self) -> int:
        return self.text_size + self.v_vq

    def word_id(self, token: str) -> int:
        # Out-of-table words fall back to PAD: they are conditioning only
        # and are never prediction targets.
        return self._word_to_id.get(token, self.pad_id)

    def motion_id(self, token: int) -> int:
        if not 0 <= token < self.v_vq:
            raise ValueError(f"motion token {token} out of range [0, {self.v_vq})")
        return self.motion_base + token

    def motion_token(self, token_id: int) -> int:
        return token_id - self.motion_base

    def is_motion_id(self, token_id: int) -> bool:
        return self.motion_base <= token_id < self.size

    def is_punctuation_id(self, token_id: int) -> bool:
        return token_id < len(self.words) and is_punctuation(self.words[token_id])

    def to_json(self) -> dict:
        return {
            "words": list(self.words),
            "reserved": {"space": self.space_id, "fixed": self.fixed_id, "pad": self.pad_id},
            "v_vq": self.v_vq,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        vocab = cls(tuple(obj["words"]), int(obj["v_vq"]))
        reserved = obj.get("reserved", {})
        for key, expect in (("space", vocab.space_id), ("fixed", vocab.fixed_id), ("pad", vocab.pad_id)):
            if key in reserved and int(reserved[key]) != expect:
                raise ValueError(f"reserved id {key} does not match word-table layout")
        return vocab

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def build_vocabulary(datasets: Iterable[Sequence[DyadSegment]], v_vq: int) -> Vocabulary:
    """Word table over every token string in the given datasets (sorted)."""
    words = set()
    for dataset in datasets:
        for seg in dataset:
            for tok in list(seg.words) + list(seg.history_words):
                words.update(tokenize_text(tok.text))
    return Vocabulary(tuple(sorted(words)), v_vq)


@dataclass(frozen=True)
class InterleaveConfig:
    max_tokens: int = 480
    corruption_probability: float = 0.5
    frames_per_token: int = 8
    fps: int = 30

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not 0 <= self.corruption_probability <= 1:
            raise ValueError("corruption_probability must be in [0, 1]")


def _frozen(arr, dtype):
    arr = np.asarray(arr, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class InterleavedSequence:
    """Token ids with parallel kinds and, per motion token, its interval end
    frame (r * t), in motion order."""

    ids: np.ndarray
    kinds: np.ndarray
    motion_slot_frame: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", _frozen(self.ids, np.int64))
        object.__setattr__(self, "kinds", _frozen(self.kinds, np.int8))
        object.__setattr__(self, "motion_slot_frame", _frozen(self.motion_slot_frame, np.int64))
        if self.ids.shape != self.kinds.shape:
            raise ValueError("ids and kinds must be parallel")
        if (self.kinds == KIND_MOTION).sum() != self.motion_slot_frame.shape[0]:
            raise ValueError("motion_slot_frame must align with motion tokens")

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def motion_positions(self) -> np.ndarray:
        return np.nonzero(self.kinds == KIND_MOTION)[0]

    @property
    def text_positions(self) -> np.ndarray:
        return np.nonzero((self.kinds == KIND_HISTORY) | (self.kinds == KIND_TEXT))[0]


def assemble(
    history: Sequence[TimedToken],
    words: Sequence[TimedToken],
    motion: MotionTokenSequence,
    vocab: Vocabulary,
    cfg: InterleaveConfig,
) -> InterleavedSequence:
    """history, then per motion slot t: the words ending in (r(t-1), r t],
    a space token, and motion token t. Words in the first r frames land
    before the first motion token."""
    r = motion.frames_per_token
    n = len(motion.tokens)
    if words and n and words[-1].end_frame > r * n:
        raise ValueError(
            f"word end_frame {words[-1].end_frame} beyond motion span {r * n}"
        )
    items: list[tuple[int, int, int]] = []  # (id, kind, slot frame)
    for tok in history:
        items.append((vocab.word_id(tok.text), KIND_HISTORY, -1))
    wi = 0
    for t in range(1, n + 1):
        while wi < len(words) and words[wi].end_frame <= r * t:
            items.append((vocab.word_id(words[wi].text), KIND_TEXT, -1))
            wi += 1
        items.append((vocab.space_id, KIND_SPACE, -1))
        items.append((vocab.motion_id(motion.tokens[t - 1]), KIND_MOTION, r * t))

    overflow = len(items) - cfg.max_tokens
    if overflow > 0:
        kept = []
        for item in items:
            if overflow > 0 and item[1] in (KIND_HISTORY, KIND_TEXT):
                overflow -= 1
                continue
            kept.append(item)
        items = kept
    ids = [it[0] for it in items]
    kinds = [it[1] for it in items]
    slots = [it[2] for it in items if it[1] == KIND_MOTION]
    return InterleavedSequence(np.array(ids), np.array(kinds), np.array(slots))


def corrupt_motion_tokens(
    seq: InterleavedSequence, p: float, rng: np.random.Generator, vocab: Vocabulary
) -> tuple[np.ndarray, np.ndarray]:
    """Input ids with each motion position independently resampled to a
    uniform motion id with probability p; targets stay untouched."""
    if not 0 <= p <= 1:
        raise ValueError("corruption probability must be in [0, 1]")
    targets = seq.ids.copy()
    inputs = seq.ids.copy()
    pos = seq.motion_positions
    if pos.size:
        mask = rng.random(pos.size) < p
        draws = vocab.motion_base + rng.integers(0, vocab.v_vq, size=pos.size)
        inputs[pos[mask]] = draws[mask]
    return inputs, targets


def transform_unaligned(seq: InterleavedSequence) -> InterleavedSequence:
    """All text first in original order, then all motion tokens; spaces
    removed."""
    text = (seq.kinds == KIND_HISTORY) | (seq.kinds == KIND_TEXT)
    motion = seq.kinds == KIND_MOTION
    order = np.concatenate([np.nonzero(text)[0], np.nonzero(motion)[0]])
    return InterleavedSequence(seq.ids[order], seq.kinds[order], seq.motion_slot_frame)


def transform_scrambled(seq: InterleavedSequence, rng: np.random.Generator) -> InterleavedSequence:
    """Uniformly permute the text token ids in place; everything else fixed."""
    pos = seq.text_positions
    ids = seq.ids.copy()
    if pos.size > 1:
        ids[pos] = ids[pos][rng.permutation(pos.size)]
    return InterleavedSequence(ids, seq.kinds, seq.motion_slot_frame)


def transform_fixtok(seq: InterleavedSequence, vocab: Vocabulary) -> InterleavedSequence:
    """Replace every text id with the reserved FIXED token (spaces kept)."""
    ids = seq.ids.copy()
    ids[seq.text_positions] = vocab.fixed_id
    return InterleavedSequence(ids, seq.kinds, seq.motion_slot_frame)


def transform_fixtok_punc(seq: InterleavedSequence, vocab: Vocabulary) -> InterleavedSequence:
    """Replace every non-punctuation text id with FIXED."""
    ids = seq.ids.copy()
    for pos in seq.text_positions:
        if not vocab.is_punctuation_id(int(ids[pos])):
            ids[pos] = vocab.fixed_id
    return InterleavedSequence(ids, seq.kinds, seq.motion_slot_frame)
