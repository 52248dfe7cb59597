"""Synthetic dyadic corpora with known, tunable text-to-motion couplings.

The listener's first expression coefficient tracks (with strength kappa and
lag lambda) the polarity of the phrase most recently spoken by the speaker;
head-pitch nod bursts follow end punctuation with probability rho. Both
couplings are causal in the word timeline, so an interleaved model can
learn them, and both are recoverable by the analysis operations below.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import DyadSegment, MotionSequence, TimedToken
from .interleave import is_punctuation
from .metrics import AffectModel, frame_affects
from .seeding import SYNTH, rng_for
from .vq import MotionVqvae, decode_tokens, tokenize_motion

POSITIVE_WORDS = (
    "great", "amazing", "wonderful", "love", "happy", "awesome", "fantastic", "joy", "brilliant", "win",
)
NEGATIVE_WORDS = (
    "terrible", "awful", "sad", "hate", "angry", "horrible", "tragic", "pain", "lost", "fear",
)
NEUTRAL_WORDS = (
    "the", "a", "and", "so", "then", "we", "they", "today", "about", "thing",
    "said", "talk", "time", "day", "place", "people", "story", "show", "like", "or",
)
END_PUNCTUATION = (".", "!", "?")


@dataclass(frozen=True)
class SynthConfig:
    d_m: int = 50
    fps: int = 30
    positive_words: tuple[str, ...] = POSITIVE_WORDS
    negative_words: tuple[str, ...] = NEGATIVE_WORDS
    neutral_words: tuple[str, ...] = NEUTRAL_WORDS
    end_punctuation: tuple[str, ...] = END_PUNCTUATION
    affect_strength: float = 0.9  # kappa
    affect_lag_frames: int = 0  # lambda
    nod_probability: float = 0.8  # rho
    nod_amplitude: float = 0.4
    nod_frames: int = 8
    nod_cycles: float = 1.0
    noise_level: float = 0.05  # sigma
    words_per_second: float = 2.5
    polar_phrase_probability: float = 0.6
    end_punct_probability: float = 0.65
    train_segments: int = 128
    val_segments: int = 32
    test_segments: int = 48
    min_segment_frames: int = 72
    max_segment_frames: int = 192
    history_seconds: float = 10.0
    speaker_affect_scale: float = 0.5
    speaker_nod_scale: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not (self.positive_words and self.negative_words and self.neutral_words):
            raise ValueError("degenerate vocabulary: word lists must be non-empty")
        for p in (self.nod_probability, self.polar_phrase_probability, self.end_punct_probability):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.affect_strength < 0 or self.noise_level < 0:
            raise ValueError("affect_strength and noise_level must be non-negative")

    def lexicon(self) -> dict[str, int]:
        table = {w: 1 for w in self.positive_words}
        table.update({w: -1 for w in self.negative_words})
        table.update({w: 0 for w in self.neutral_words})
        return table


@dataclass(frozen=True)
class SynthCorpus:
    train: tuple[DyadSegment, ...]
    val: tuple[DyadSegment, ...]
    test: tuple[DyadSegment, ...]
    affect_model: AffectModel
    lexicon: dict[str, int]


@dataclass(frozen=True)
class _Word:
    text: str
    end_frame: int
    polarity: int  # polarity of the phrase this token belongs to


def _smooth_noise(rng: np.random.Generator, n: int, scale: float, kernel: int = 9) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(n)
    raw = rng.normal(0.0, 1.0, n + kernel)
    win = np.hanning(kernel + 2)[1:-1]
    win /= win.sum()
    sm = np.convolve(raw, win, mode="same")[:n]
    return scale * sm / max(1e-12, sm.std())


def _sample_words(rng: np.random.Generator, cfg: SynthConfig, start_frame: int, end_frame: int) -> list[_Word]:
    """Phrase-structured token timeline over [start_frame, end_frame].

    Polar phrases open with a polarity word (so their polarity is revealed
    causally) and never mix polarities; each phrase ends with punctuation.
    """
    step = max(1, int(round(cfg.fps / cfg.words_per_second)))
    frame = start_frame + int(rng.integers(0, step))
    out: list[_Word] = []
    while frame <= end_frame:
        if rng.random() < cfg.polar_phrase_probability:
            polarity = 1 if rng.random() < 0.5 else -1
        else:
            polarity = 0
        pool = cfg.positive_words if polarity > 0 else cfg.negative_words
        length = int(rng.integers(2, 7))
        for k in range(length):
            if frame > end_frame:
                return out
            if polarity != 0 and (k == 0 or rng.random() < 0.5):
                text = str(rng.choice(pool))
            else:
                text = str(rng.choice(cfg.neutral_words))
            out.append(_Word(text, frame, polarity))
            frame += step + int(rng.integers(0, 3))
        if out:
            if rng.random() < cfg.end_punct_probability:
                punct = str(rng.choice(cfg.end_punctuation))
            else:
                punct = ","
            out.append(_Word(punct, out[-1].end_frame, polarity))
    return out


def _polarity_track(words: Sequence[_Word], lo: int, hi: int) -> np.ndarray:
    """Per-frame polarity of the phrase of the last token spoken at or
    before each frame in [lo, hi]."""
    track = np.zeros(hi - lo + 1)
    value = 0
    wi = 0
    for f in range(lo, hi + 1):
        while wi < len(words) and words[wi].end_frame <= f:
            value = words[wi].polarity
            wi += 1
        track[f - lo] = value
    return track


def _nod_waveform(cfg: SynthConfig) -> np.ndarray:
    k = np.arange(cfg.nod_frames)
    return cfg.nod_amplitude * np.sin(2 * math.pi * cfg.nod_cycles * k / cfg.nod_frames)


def _insert_nods(
    pitch: np.ndarray,
    words: Sequence[_Word],
    cfg: SynthConfig,
    rng: np.random.Generator,
    probability: float,
) -> None:
    wave = _nod_waveform(cfg)
    T = pitch.shape[0]
    for w in words:
        if w.text in cfg.end_punctuation and 1 <= w.end_frame <= T:
            if rng.random() < probability:
                start = w.end_frame  # nod begins the frame after the punctuation
                stop = min(T, start + cfg.nod_frames)
                pitch[start:stop] += wave[: stop - start]


def _motion_channels(
    rng: np.random.Generator,
    cfg: SynthConfig,
    T: int,
    affect_track: np.ndarray,
) -> np.ndarray:
    frames = np.zeros((T, cfg.d_m + 3))
    frames[:, 0] = affect_track + _smooth_noise(rng, T, cfg.noise_level)
    for c in range(1, cfg.d_m):
        amp = rng.uniform(0.08, 0.22)
        freq = rng.uniform(0.15, 0.6)
        phase = rng.uniform(0, 2 * math.pi)
        t = np.arange(T) / cfg.fps
        frames[:, c] = amp * np.sin(2 * math.pi * freq * t + phase)
        frames[:, c] += _smooth_noise(rng, T, cfg.noise_level * 0.5)
    frames[:, cfg.d_m] = _smooth_noise(rng, T, cfg.noise_level * 0.5)
    frames[:, cfg.d_m + 1] = _smooth_noise(rng, T, cfg.noise_level * 0.3)
    frames[:, cfg.d_m + 2] = _smooth_noise(rng, T, cfg.noise_level * 0.3)
    return frames


def _make_segment(seg_id: str, rng: np.random.Generator, cfg: SynthConfig) -> DyadSegment:
    T = int(rng.integers(cfg.min_segment_frames, cfg.max_segment_frames + 1))
    hist = int(round(cfg.history_seconds * cfg.fps))
    words = _sample_words(rng, cfg, 1 - hist, T)

    lam = cfg.affect_lag_frames
    polarity = _polarity_track(words, 1 - lam - hist, T)  # indexed from frame 1-lam-hist

    def pol(frame):
        return polarity[frame - (1 - lam - hist)]

    listener_affect = cfg.affect_strength * np.array([pol(t - lam) for t in range(1, T + 1)])
    listener = _motion_channels(rng, cfg, T, listener_affect)
    _insert_nods(listener[:, cfg.d_m], words, cfg, rng, cfg.nod_probability)

    speaker_affect = cfg.speaker_affect_scale * cfg.affect_strength * np.array(
        [pol(t) for t in range(1, T + 1)]
    )
    speaker = _motion_channels(rng, cfg, T, speaker_affect)
    _insert_nods(speaker[:, cfg.d_m], words, cfg, rng, cfg.nod_probability * cfg.speaker_nod_scale)

    fps = cfg.fps
    return DyadSegment(
        id=seg_id,
        listener=MotionSequence(listener, fps),
        speaker=MotionSequence(speaker, fps),
        words=tuple(TimedToken(w.text, w.end_frame) for w in words if 1 <= w.end_frame <= T),
        history_words=tuple(TimedToken(w.text, w.end_frame) for w in words if w.end_frame <= 0),
    )


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Deterministic per cfg.seed; train/val/test ids are disjoint."""
    rng = rng_for(cfg.seed, SYNTH)
    splits = {}
    for name, count in (("train", cfg.train_segments), ("val", cfg.val_segments), ("test", cfg.test_segments)):
        splits[name] = tuple(_make_segment(f"{name}/{i:04d}", rng, cfg) for i in range(count))
    weights = np.zeros(cfg.d_m)
    weights[0] = 1.0
    return SynthCorpus(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        affect_model=AffectModel(weights, 0.0),
        lexicon=cfg.lexicon(),
    )


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------

DEFAULT_MARKERS = (
    (",", (",",)),
    ("./!/?", (".", "!", "?")),
    ("?", ("?",)),
    ("!", ("!",)),
    ("...", ("…",)),
    ("and/like/or", ("and", "like", "or")),
)


@dataclass(frozen=True)
class NodStats:
    """Fraction of nod / plain-face tokens whose five preceding text tokens
    contain each marker class."""

    rows: tuple[tuple[str, float, float], ...]
    nod_count: int
    plain_count: int
    threshold: float

    def to_csv(self) -> str:
        lines = ["marker,nod,plain"]
        for label, nod, plain in self.rows:
            lines.append(f"\"{label}\",{nod:.4f},{plain:.4f}")
        return "\n".join(lines) + "\n"


def punctuation_nod_stats(
    segments: Sequence[DyadSegment],
    vq_model: MotionVqvae,
    markers: Sequence[tuple[str, tuple[str, ...]]] = DEFAULT_MARKERS,
    context_tokens: int = 5,
) -> NodStats:
    """Classify each VQ token as nod vs plain by the decoded pitch
    peak-to-peak within its frame span (threshold: 3x the corpus median,
    a robust stand-in for a 3-sigma baseline), then tally marker occurrence
    in the five text tokens preceding the token's slot."""
    spans = []  # (preceding text tokens, peak-to-peak)
    p2ps = []
    for seg in segments:
        tokens = tokenize_motion(vq_model, seg.listener)
        decoded = decode_tokens(vq_model, tokens, fps=seg.listener.fps)
        pitch = decoded.rotation[:, 0]
        r = tokens.frames_per_token
        text = sorted(
            list(seg.history_words) + list(seg.words), key=lambda w: w.end_frame
        )
        for t in range(1, len(tokens.tokens) + 1):
            lo, hi = (t - 1) * r, min(t * r, pitch.shape[0])
            if hi - lo < 2:
                continue
            p2p = float(pitch[lo:hi].max() - pitch[lo:hi].min())
            preceding = [w.text for w in text if w.end_frame <= t * r][-context_tokens:]
            spans.append((preceding, p2p))
            p2ps.append(p2p)
    if not spans:
        raise ValueError("no motion tokens to classify")
    threshold = 3.0 * float(np.median(p2ps))
    nods = [s for s in spans if s[1] > threshold]
    plains = [s for s in spans if s[1] <= threshold]

    def frac(group, marker_set):
        if not group:
            return 0.0
        hits = sum(1 for prec, _ in group if any(tok in marker_set for tok in prec))
        return hits / len(group)

    rows = tuple(
        (label, frac(nods, set(marks)), frac(plains, set(marks))) for label, marks in markers
    )
    return NodStats(rows, len(nods), len(plains), threshold)


@dataclass(frozen=True)
class AffectHistogram:
    bin_edges: np.ndarray
    positive_counts: np.ndarray
    negative_counts: np.ndarray
    positive_values: np.ndarray
    negative_values: np.ndarray

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,positive,negative"]
        for i in range(len(self.positive_counts)):
            lines.append(
                f"{self.bin_edges[i]:.4f},{self.bin_edges[i + 1]:.4f},"
                f"{int(self.positive_counts[i])},{int(self.negative_counts[i])}"
            )
        return "\n".join(lines) + "\n"


def affect_phrase_histogram(
    segments: Sequence[DyadSegment],
    affect_model: AffectModel,
    lexicon: dict[str, int],
    listeners: Optional[Sequence[MotionSequence]] = None,
    k: int = 100,
    bins: int = 20,
    follow_seconds: float = 2.0,
) -> AffectHistogram:
    """Rank segment phrases by mean word sentiment, take the top/bottom k,
    and histogram the listener affect during each phrase plus the following
    two seconds. ``listeners`` overrides the motion evaluated (e.g. model
    predictions); defaults to the ground-truth listeners."""
    motions = list(listeners) if listeners is not None else [seg.listener for seg in segments]
    if len(motions) != len(segments):
        raise ValueError("listeners must align with segments")
    phrases = []  # (score, affect value)
    for seg, motion in zip(segments, motions):
        affects = frame_affects(affect_model, motion)
        fps = motion.fps
        T = motion.num_frames
        current: list[TimedToken] = []
        for tok in list(seg.words) + [TimedToken(".", T)]:
            if is_punctuation(tok.text) or tok.end_frame >= T:
                if current:
                    labels = [lexicon.get(w.text, 0) for w in current]
                    score = float(np.mean(labels))
                    lo = max(1, current[0].end_frame)
                    hi = min(T, current[-1].end_frame + int(round(follow_seconds * fps)))
                    if hi >= lo:
                        phrases.append((score, float(affects[lo - 1 : hi].mean())))
                current = []
            else:
                current.append(tok)
    if not phrases:
        raise ValueError("no phrases found")
    ranked = sorted(phrases, key=lambda p: p[0])
    neg = np.array([v for _, v in ranked[:k]])
    pos = np.array([v for _, v in ranked[-k:]])
    edges = np.linspace(-1.0, 1.0, bins + 1)
    pos_counts, _ = np.histogram(pos, bins=edges)
    neg_counts, _ = np.histogram(neg, bins=edges)
    return AffectHistogram(edges, pos_counts, neg_counts, pos, neg)
