"""Domain types, the dyad-v1 dataset format, segmentation, and normalization.

A frame of facial state is a vector of expression coefficients plus three
Euler rotation angles. Sequences are stored as (T, d_m+3) float arrays with
row i holding frame i; all types are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_FPS = 30

#: Dataset header format tag (JSON Lines, one header + one segment per line).
FORMAT_TAG = "dyad-v1"


class DatasetError(ValueError):
    """Malformed dataset file or violated segment invariant."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FaceFrame:
    """One frame of facial state: expression coefficients and Euler rotation."""

    expression: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "expression", _freeze(self.expression))
        object.__setattr__(self, "rotation", _freeze(self.rotation))
        if self.rotation.shape != (3,):
            raise DatasetError(f"rotation must have 3 angles, got {self.rotation.shape}")
        if not (np.isfinite(self.expression).all() and np.isfinite(self.rotation).all()):
            raise DatasetError("non-finite values in face frame")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.expression, self.rotation])


@dataclass(frozen=True)
class MotionSequence:
    """Ordered facial frames at a fixed frame rate.

    ``frames`` is a (T, d_m+3) array; the last 3 columns are rotation.
    """

    frames: np.ndarray
    fps: int = DEFAULT_FPS

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 4:
            raise DatasetError(f"frames must be (T>=1, d_m+3>=4), got {frames.shape}")
        if not np.isfinite(frames).all():
            raise DatasetError("non-finite values in motion sequence")
        object.__setattr__(self, "frames", _freeze(frames))

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def d_m(self) -> int:
        return self.frames.shape[1] - 3

    @property
    def expression(self) -> np.ndarray:
        return self.frames[:, : self.d_m]

    @property
    def rotation(self) -> np.ndarray:
        return self.frames[:, self.d_m :]

    def frame(self, i: int) -> FaceFrame:
        return FaceFrame(self.frames[i, : self.d_m], self.frames[i, self.d_m :])

    def head(self, n: int) -> "MotionSequence":
        return MotionSequence(self.frames[:n], self.fps)


@dataclass(frozen=True, order=True)
class TimedToken:
    """A text token with the frame index at which its spoken interval ends.

    Frames inside a segment are 1-based; history tokens carry end frames
    shifted to <= 0 so one integer axis orders all tokens.
    """

    text: str
    end_frame: int


@dataclass(frozen=True)
class SegmentationConfig:
    min_frames: int = 24
    max_frames: int = 240
    min_onset_seconds: float = 3.0
    history_seconds: float = 3.0

    def __post_init__(self):
        if self.min_frames <= 0 or self.max_frames <= 0:
            raise ValueError("frame bounds must be positive")
        if self.min_frames > self.max_frames:
            raise ValueError("min_frames must not exceed max_frames")
        if self.min_onset_seconds < 0 or self.history_seconds < 0:
            raise ValueError("onset and history windows must be non-negative")


@dataclass(frozen=True)
class DyadSegment:
    """One training/eval unit: listener motion, optional speaker motion,
    timestamped segment words, and history words from before frame 1."""

    id: str
    listener: MotionSequence
    speaker: Optional[MotionSequence]
    words: tuple[TimedToken, ...]
    history_words: tuple[TimedToken, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "history_words", tuple(self.history_words))
        self._validate()

    def _validate(self):
        T = self.listener.num_frames
        if T < 24:
            raise DatasetError(f"segment {self.id!r}: listener has T={T} < 24 frames")
        if T > 240:
            raise DatasetError(f"segment {self.id!r}: listener has T={T} > 240 frames")
        if self.speaker is not None:
            if self.speaker.num_frames != T:
                raise DatasetError(
                    f"segment {self.id!r}: speaker length {self.speaker.num_frames} != listener {T}"
                )
            if self.speaker.fps != self.listener.fps:
                raise DatasetError(f"segment {self.id!r}: speaker fps != listener fps")
            if self.speaker.dim != self.listener.dim:
                raise DatasetError(f"segment {self.id!r}: speaker dim != listener dim")
        _check_tokens(self.id, "words", self.words, lo=1, hi=T)
        _check_tokens(self.id, "history_words", self.history_words, lo=None, hi=0)

    @property
    def num_frames(self) -> int:
        return self.listener.num_frames


def _check_tokens(seg_id, fieldname, tokens, lo, hi):
    prev = None
    for tok in tokens:
        if lo is not None and tok.end_frame < lo:
            raise DatasetError(f"segment {seg_id!r}: {fieldname} end_frame {tok.end_frame} < {lo}")
        if tok.end_frame > hi:
            raise DatasetError(f"segment {seg_id!r}: {fieldname} end_frame {tok.end_frame} > {hi}")
        if prev is not None and tok.end_frame < prev:
            raise DatasetError(f"segment {seg_id!r}: {fieldname} end_frames decrease")
        prev = tok.end_frame


@dataclass(frozen=True)
class NormalizationStats:
    """Per-coefficient mean and standard deviation over training frames."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _freeze(self.mean))
        object.__setattr__(self, "std", _freeze(self.std))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean/std must be 1-D and the same length")
        if not (self.std > 0).all():
            raise ValueError("std components must be positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


# ---------------------------------------------------------------------------
# Dataset file I/O (dyad-v1 JSON Lines)
# ---------------------------------------------------------------------------


def _tokens_to_json(tokens: Sequence[TimedToken]) -> list[dict]:
    return [{"t": tok.text, "end_frame": int(tok.end_frame)} for tok in tokens]


def _tokens_from_json(raw, seg_id, fieldname) -> tuple[TimedToken, ...]:
    try:
        return tuple(TimedToken(str(item["t"]), int(item["end_frame"])) for item in raw)
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"segment {seg_id!r}: malformed {fieldname}: {exc}") from exc


def save_dataset(path, segments: Sequence[DyadSegment]) -> None:
    if not segments:
        raise DatasetError("refusing to write an empty dataset")
    d_m = segments[0].listener.d_m
    fps = segments[0].listener.fps
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": FORMAT_TAG, "d_m": d_m, "fps": fps}) + "\n")
        for seg in segments:
            if seg.listener.d_m != d_m:
                raise DatasetError(f"segment {seg.id!r}: d_m {seg.listener.d_m} != header {d_m}")
            row = {
                "id": seg.id,
                "listener": seg.listener.frames.tolist(),
                "speaker": None if seg.speaker is None else seg.speaker.frames.tolist(),
                "words": _tokens_to_json(seg.words),
                "history_words": _tokens_to_json(seg.history_words),
            }
            fh.write(json.dumps(row) + "\n")


def load_dataset(path) -> list[DyadSegment]:
    segments: list[DyadSegment] = []
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise DatasetError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: line 1: {exc}") from exc
        if header.get("format") != FORMAT_TAG:
            raise DatasetError(f"{path}: line 1: format tag is not {FORMAT_TAG!r}")
        d_m = int(header["d_m"])
        fps = int(header["fps"])
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
            segments.append(_segment_from_json(row, d_m, fps, lineno, path))
    return segments


def _segment_from_json(row, d_m, fps, lineno, path) -> DyadSegment:
    try:
        seg_id = str(row["id"])
        listener = MotionSequence(np.asarray(row["listener"], dtype=np.float64), fps)
        speaker = None
        if row.get("speaker") is not None:
            speaker = MotionSequence(np.asarray(row["speaker"], dtype=np.float64), fps)
    except DatasetError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
    if listener.d_m != d_m:
        raise DatasetError(f"segment {seg_id!r}: listener d_m {listener.d_m} != header {d_m}")
    return DyadSegment(
        id=seg_id,
        listener=listener,
        speaker=speaker,
        words=_tokens_from_json(row.get("words", []), seg_id, "words"),
        history_words=_tokens_from_json(row.get("history_words", []), seg_id, "history_words"),
    )


# ---------------------------------------------------------------------------
# Session segmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Session:
    """A full recorded interaction: long motion pair, transcript with session
    frame timestamps (1-based), and sorted speaker-turn start frames."""

    listener: MotionSequence
    speaker: Optional[MotionSequence]
    words: tuple[TimedToken, ...]
    turn_starts: tuple[int, ...]
    id: str = "session"

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "turn_starts", tuple(self.turn_starts))
        S = self.listener.num_frames
        if list(self.turn_starts) != sorted(self.turn_starts):
            raise ValueError("turn_starts must be sorted")
        for b in self.turn_starts:
            if not (1 <= b <= S):
                raise ValueError(f"turn start {b} outside session frames 1..{S}")


def segment_session(session: Session, cfg: SegmentationConfig) -> list[DyadSegment]:
    """Cut a session into dyad segments.

    Within each speaker turn, motion is eligible starting min_onset_seconds
    after the turn start; the eligible span is tiled with windows of at most
    max_frames, keeping a tail only if it reaches min_frames. History words
    are the turn's tokens from the history_seconds window before each
    segment's first frame, re-timestamped to end frames <= 0.
    """
    fps = session.listener.fps
    S = session.listener.num_frames
    onset = int(round(cfg.min_onset_seconds * fps))
    hist = int(round(cfg.history_seconds * fps))
    out: list[DyadSegment] = []
    boundaries = list(session.turn_starts) + [S + 1]
    for ti in range(len(session.turn_starts)):
        turn_start, turn_end = boundaries[ti], boundaries[ti + 1] - 1
        start = turn_start + onset
        while start <= turn_end:
            stop = min(start + cfg.max_frames - 1, turn_end)
            T = stop - start + 1
            if T < cfg.min_frames:
                break
            lo, hi = start - 1, stop  # 0-based slice bounds
            listener = MotionSequence(session.listener.frames[lo:hi], fps)
            speaker = None
            if session.speaker is not None:
                speaker = MotionSequence(session.speaker.frames[lo:hi], fps)
            words = tuple(
                TimedToken(w.text, w.end_frame - start + 1)
                for w in session.words
                if start <= w.end_frame <= stop
            )
            history = tuple(
                TimedToken(w.text, w.end_frame - start + 1)
                for w in session.words
                if max(turn_start, start - hist) <= w.end_frame < start
            )
            out.append(
                DyadSegment(
                    id=f"{session.id}/t{ti}/f{start}",
                    listener=listener,
                    speaker=speaker,
                    words=words,
                    history_words=history,
                )
            )
            start = stop + 1
    return out


def history_window(segment: DyadSegment, history_seconds: float) -> tuple[TimedToken, ...]:
    """Restrict a segment's history words to the given window before frame 1."""
    hist = int(round(history_seconds * segment.listener.fps))
    return tuple(w for w in segment.history_words if w.end_frame > -hist)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

# Stds this small are treated as zero-variance channels and clamped to 1.
_STD_FLOOR = 1e-8


def compute_normalization(train: Sequence[DyadSegment]) -> NormalizationStats:
    """Per-coefficient mean/std over all listener frames (population variance)."""
    if not train:
        raise ValueError("training set is empty")
    frames = np.concatenate([seg.listener.frames for seg in train], axis=0)
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)  # population convention (divide by N)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    return NormalizationStats(mean, std)


def normalize(seq: MotionSequence, stats: NormalizationStats) -> MotionSequence:
    if seq.dim != stats.dim:
        raise ValueError(f"sequence dim {seq.dim} != stats dim {stats.dim}")
    return MotionSequence((seq.frames - stats.mean) / stats.std, seq.fps)


def denormalize(seq: MotionSequence, stats: NormalizationStats) -> MotionSequence:
    if seq.dim != stats.dim:
        raise ValueError(f"sequence dim {seq.dim} != stats dim {stats.dim}")
    return MotionSequence(seq.frames * stats.std + stats.mean, seq.fps)
