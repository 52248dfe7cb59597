"""Evaluation suite: L2, Fréchet distances on windowed motion, variation,
diversity, paired FD, sliding-window affect L2, Shannon index, and bootstrap
standard errors.

FD treats flattened fixed-length windows of a sequence set as samples of a
Gaussian; the matrix square root comes from a symmetric eigen-decomposition
with negative eigenvalues clamped to zero.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import DyadSegment, MotionSequence
from .seeding import BOOTSTRAP, rng_for
from .vq import MotionVqvae, tokenize_motion

#: Diagonal jitter applied to covariances before the matrix square root.
_COV_JITTER = 1e-10


@dataclass(frozen=True)
class AffectModel:
    """Linear valence functional over expression coefficients, clamped to
    [-1, 1]."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValueError("affect model must be finite")

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": float(self.bias)}

    @classmethod
    def from_json(cls, obj: dict) -> "AffectModel":
        return cls(np.asarray(obj["weights"], dtype=np.float64), float(obj["bias"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "AffectModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def affect(model: AffectModel, expression: np.ndarray) -> float:
    """Valence of one frame's expression coefficients."""
    return float(np.clip(expression @ model.weights + model.bias, -1.0, 1.0))


def frame_affects(model: AffectModel, seq: MotionSequence) -> np.ndarray:
    return np.clip(seq.expression @ model.weights + model.bias, -1.0, 1.0)


def window_affect(model: AffectModel, seq: MotionSequence, window_seconds: float = 1.0) -> np.ndarray:
    """Sliding mean of per-frame affect, stride one frame. Sequences shorter
    than the window yield a single all-frames mean."""
    values = frame_affects(model, seq)
    w = max(1, int(round(window_seconds * seq.fps)))
    if len(values) <= w:
        return np.array([values.mean()])
    kernel = np.cumsum(np.concatenate([[0.0], values]))
    return (kernel[w:] - kernel[:-w]) / w


def l2_metric(pred: MotionSequence, gt: MotionSequence) -> float:
    """Mean over frames of the Euclidean norm of the frame difference."""
    if pred.frames.shape != gt.frames.shape:
        raise ValueError(f"shape mismatch {pred.frames.shape} vs {gt.frames.shape}")
    return float(np.linalg.norm(pred.frames - gt.frames, axis=1).mean())


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with population
    covariances; the cross term uses sqrt(S_a^{1/2} S_b S_a^{1/2})."""
    a = np.atleast_2d(np.asarray(samples_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(samples_b, dtype=np.float64))
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite samples")
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample dimensionality mismatch")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca = np.cov(a, rowvar=False, bias=True) + _COV_JITTER * np.eye(a.shape[1])
    cb = np.cov(b, rowvar=False, bias=True) + _COV_JITTER * np.eye(b.shape[1])
    half = _psd_sqrt(ca)
    cross = _psd_sqrt(half @ cb @ half)
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(ca) + np.trace(cb) - 2.0 * np.trace(cross))


def sequence_windows(seq: MotionSequence, window: int) -> np.ndarray:
    """Non-overlapping length-`window` slices flattened to rows; the tail
    shorter than a window is dropped."""
    T = seq.num_frames
    n = T // window
    if n == 0:
        return np.empty((0, window * seq.dim))
    return seq.frames[: n * window].reshape(n, window * seq.dim)


def _split_windows(seq: MotionSequence, window: int) -> tuple[np.ndarray, np.ndarray]:
    d_m = seq.d_m
    T = (seq.num_frames // window) * window
    if T == 0:
        return (np.empty((0, window * d_m)), np.empty((0, window * 3)))
    expr = seq.expression[:T].reshape(-1, window * d_m)
    pose = seq.rotation[:T].reshape(-1, window * 3)
    return expr, pose


def fd_motion(
    pred: Sequence[MotionSequence], gt: Sequence[MotionSequence], window: int = 32
) -> tuple[float, float]:
    """FD in the flattened expression and pose window spaces."""
    pe = np.concatenate([_split_windows(s, window)[0] for s in pred], axis=0)
    pp = np.concatenate([_split_windows(s, window)[1] for s in pred], axis=0)
    ge = np.concatenate([_split_windows(s, window)[0] for s in gt], axis=0)
    gp = np.concatenate([_split_windows(s, window)[1] for s in gt], axis=0)
    if pe.shape[0] == 0 or ge.shape[0] == 0:
        raise ValueError(f"no complete {window}-frame windows in the sets")
    return frechet_distance(pe, ge), frechet_distance(pp, gp)


def _pair_windows(
    listener: MotionSequence, speaker: MotionSequence, window: int
) -> tuple[np.ndarray, np.ndarray]:
    """Windows of per-frame [listener || speaker] concatenations, split into
    the joint expression (2 d_m) and joint pose (6) spaces."""
    d_m = listener.d_m
    T = (listener.num_frames // window) * window
    if T == 0:
        return (np.empty((0, window * 2 * d_m)), np.empty((0, window * 6)))
    expr = np.concatenate([listener.expression[:T], speaker.expression[:T]], axis=1)
    pose = np.concatenate([listener.rotation[:T], speaker.rotation[:T]], axis=1)
    return expr.reshape(-1, window * 2 * d_m), pose.reshape(-1, window * 6)


def paired_fd(
    pred: Sequence[MotionSequence],
    speakers: Sequence[MotionSequence],
    gt: Sequence[MotionSequence],
    window: int = 32,
) -> float:
    """FD on concatenated listener-speaker windows (expression and pose
    spaces, summed)."""
    pe, pp, ge, gp = [], [], [], []
    for p, g, s in zip(pred, gt, speakers):
        e, r = _pair_windows(p, s, window)
        pe.append(e)
        pp.append(r)
        e, r = _pair_windows(g, s, window)
        ge.append(e)
        gp.append(r)
    pe, pp, ge, gp = (np.concatenate(x, axis=0) for x in (pe, pp, ge, gp))
    if pe.shape[0] == 0 or ge.shape[0] == 0:
        raise ValueError(f"no complete {window}-frame windows in the sets")
    return frechet_distance(pe, ge) + frechet_distance(pp, gp)


def variation(seq: MotionSequence) -> float:
    """Per-coefficient variance across time, averaged over coefficients."""
    return float(seq.frames.var(axis=0).mean())


def diversity(seq: MotionSequence, rng: np.random.Generator, pairs: int = 30) -> float:
    """Mean Euclidean distance between uniformly sampled distinct frame
    pairs."""
    T = seq.num_frames
    if T < 2:
        return 0.0
    i = rng.integers(0, T, size=pairs)
    j = (i + 1 + rng.integers(0, T - 1, size=pairs)) % T
    return float(np.linalg.norm(seq.frames[i] - seq.frames[j], axis=1).mean())


def l2_affect(
    model: AffectModel, pred: MotionSequence, gt: MotionSequence, window_seconds: float = 1.0
) -> float:
    """RMS difference between the sliding-window affect series (raw scale;
    reports multiply by 100)."""
    a = window_affect(model, pred, window_seconds)
    b = window_affect(model, gt, window_seconds)
    n = min(len(a), len(b))
    return float(np.sqrt(np.mean((a[:n] - b[:n]) ** 2)))


def shannon_index(token_seqs: Sequence, v_vq: Optional[int] = None) -> float:
    """Entropy (natural log) of the empirical VQ-token histogram."""
    tokens = np.concatenate([np.asarray(getattr(s, "tokens", s), dtype=np.int64) for s in token_seqs])
    if tokens.size == 0:
        return 0.0
    counts = np.bincount(tokens, minlength=v_vq or 0).astype(np.float64)
    p = counts[counts > 0] / tokens.size
    return float(-(p * np.log(p)).sum())


def bootstrap_se(values, resamples: int = 10_000, rng: Optional[np.random.Generator] = None) -> float:
    """Standard deviation of resampled means (segments drawn with
    replacement). Values are sorted first so the estimate does not depend
    on segment ordering."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size == 0:
        raise ValueError("no values to resample")
    rng = rng or rng_for(0, BOOTSTRAP)
    idx = rng.integers(0, vals.size, size=(resamples, vals.size))
    return float(vals[idx].mean(axis=1).std())


def _entropy_of_counts(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        term = np.where(counts > 0, p * np.log(np.where(counts > 0, p, 1.0)), 0.0)
    return -term.sum(axis=-1)


@dataclass(frozen=True)
class MetricValue:
    value: float
    se: float

    def __str__(self) -> str:
        return f"{self.value:.4f} ± {self.se:.4f}"


@dataclass(frozen=True)
class MetricsReport:
    """Point estimates with bootstrap standard errors. l2_affect is on the
    x100 scale used by the result tables."""

    l2: MetricValue
    fd_expression: MetricValue
    fd_pose: MetricValue
    fd_total: MetricValue
    variation: MetricValue
    diversity: MetricValue
    pfd: Optional[MetricValue]
    l2_affect: MetricValue
    shannon_index: MetricValue
    gt_variation: MetricValue
    gt_diversity: MetricValue
    num_segments: int

    _COLUMNS = (
        ("l2", "L2"),
        ("fd_expression", "FD-expr"),
        ("fd_pose", "FD-pose"),
        ("fd_total", "FD"),
        ("variation", "variation"),
        ("diversity", "diversity"),
        ("pfd", "P-FD"),
        ("l2_affect", "L2 Affect (10^2)"),
        ("shannon_index", "Shannon"),
    )

    def to_json(self) -> dict:
        def enc(mv):
            return None if mv is None else {"value": mv.value, "se": mv.se}

        out = {name: enc(getattr(self, name)) for name, _ in self._COLUMNS}
        out["gt_variation"] = enc(self.gt_variation)
        out["gt_diversity"] = enc(self.gt_diversity)
        out["num_segments"] = self.num_segments
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        def dec(item):
            return None if item is None else MetricValue(float(item["value"]), float(item["se"]))

        fields = {name: dec(obj[name]) for name, _ in cls._COLUMNS}
        return cls(
            gt_variation=dec(obj["gt_variation"]),
            gt_diversity=dec(obj["gt_diversity"]),
            num_segments=int(obj["num_segments"]),
            **fields,
        )

    def table(self, row_label: str = "model") -> str:
        headers = [label for _, label in self._COLUMNS]
        gt_cells = ["" for _ in headers]
        gt_cells[4] = str(self.gt_variation)
        gt_cells[5] = str(self.gt_diversity)
        cells = []
        for name, _ in self._COLUMNS:
            mv = getattr(self, name)
            cells.append("n/a" if mv is None else str(mv))
        name_w = max(len(row_label), len("GT"), len("row"))
        widths = [max(len(h), len(c), len(g)) for h, c, g in zip(headers, cells, gt_cells)]
        def fmt(row_name, row):
            parts = [row_name.ljust(name_w)] + [c.rjust(w) for c, w in zip(row, widths)]
            return "  ".join(parts)
        lines = [fmt("row", headers), fmt("GT", gt_cells), fmt(row_label, cells)]
        return "\n".join(lines)


def evaluate(
    predictions: Sequence[MotionSequence],
    dataset: Sequence[DyadSegment],
    vq_model: Optional[MotionVqvae],
    affect_model: AffectModel,
    seed: int = 0,
    window: int = 32,
    resamples: int = 10_000,
    fd_resamples: int = 200,
    diversity_pairs: int = 30,
) -> MetricsReport:
    """Per-segment metrics averaged over the set with bootstrap SEs; FD-type
    metrics are computed over pooled windows and bootstrapped by resampling
    segments (fd_resamples draws). Paired FD is skipped with a warning when
    any speaker motion is absent."""
    if len(predictions) != len(dataset):
        raise ValueError("predictions and dataset must align")
    if not dataset:
        raise ValueError("empty dataset")
    preds = []
    for pred, seg in zip(predictions, dataset):
        T = seg.listener.num_frames
        if pred.num_frames < T:
            raise ValueError(f"prediction for {seg.id!r} shorter than ground truth")
        preds.append(pred.head(T))

    boot = rng_for(seed, BOOTSTRAP)
    n = len(dataset)

    l2_vals = np.array([l2_metric(p, seg.listener) for p, seg in zip(preds, dataset)])
    var_vals = np.array([variation(p) for p in preds])
    gt_var_vals = np.array([variation(seg.listener) for seg in dataset])
    div_vals = np.array(
        [diversity(p, rng_for(seed, f"diversity/{seg.id}"), diversity_pairs) for p, seg in zip(preds, dataset)]
    )
    gt_div_vals = np.array(
        [diversity(seg.listener, rng_for(seed, f"diversity-gt/{seg.id}"), diversity_pairs) for seg in dataset]
    )
    aff_vals = np.array([l2_affect(affect_model, p, seg.listener) for p, seg in zip(preds, dataset)])

    def scalar(vals, scale=1.0):
        return MetricValue(float(vals.mean() * scale), bootstrap_se(vals, resamples, boot) * scale)

    # FD point estimates and segment-level bootstrap. Segments are taken in
    # id-sorted order so the estimate and its bootstrap do not depend on
    # dataset ordering.
    order = sorted(range(n), key=lambda i: dataset[i].id)
    pred_wins = [_split_windows(preds[i], window) for i in order]
    gt_wins = [_split_windows(dataset[i].listener, window) for i in order]
    have_speaker = all(seg.speaker is not None for seg in dataset)
    if not have_speaker:
        warnings.warn("speaker motion absent for some segments; skipping paired FD")
    pair_pred_wins = pair_gt_wins = None
    if have_speaker:
        pair_pred_wins = [
            _pair_windows(preds[i], dataset[i].speaker, window) for i in order
        ]
        pair_gt_wins = [
            _pair_windows(dataset[i].listener, dataset[i].speaker, window) for i in order
        ]

    def fd_for(idx):
        pe = np.concatenate([pred_wins[i][0] for i in idx], axis=0)
        pp = np.concatenate([pred_wins[i][1] for i in idx], axis=0)
        ge = np.concatenate([gt_wins[i][0] for i in idx], axis=0)
        gp = np.concatenate([gt_wins[i][1] for i in idx], axis=0)
        if pe.shape[0] == 0 or ge.shape[0] == 0:
            return np.nan, np.nan, np.nan
        fe, fp = frechet_distance(pe, ge), frechet_distance(pp, gp)
        pf = np.nan
        if have_speaker:
            ppe = np.concatenate([pair_pred_wins[i][0] for i in idx], axis=0)
            ppp = np.concatenate([pair_pred_wins[i][1] for i in idx], axis=0)
            pge = np.concatenate([pair_gt_wins[i][0] for i in idx], axis=0)
            pgp = np.concatenate([pair_gt_wins[i][1] for i in idx], axis=0)
            pf = frechet_distance(ppe, pge) + frechet_distance(ppp, pgp)
        return fe, fp, pf

    fe0, fp0, pf0 = fd_for(range(n))
    if np.isnan(fe0):
        raise ValueError(f"no complete {window}-frame windows in the evaluation set")
    draws = np.empty((fd_resamples, 3))
    for b in range(fd_resamples):
        idx = boot.integers(0, n, size=n)
        draws[b] = fd_for(idx)
    ok = ~np.isnan(draws[:, 0])
    fd_se = draws[ok].std(axis=0) if ok.any() else np.zeros(3)

    # Shannon index over VQ tokens of the predictions
    if vq_model is not None:
        hists = np.stack(
            [
                np.bincount(
                    np.asarray(tokenize_motion(vq_model, preds[i]).tokens, dtype=np.int64),
                    minlength=vq_model.codebook.size,
                )
                for i in order
            ]
        ).astype(np.float64)
        shannon0 = float(_entropy_of_counts(hists.sum(axis=0)))
        ent = np.empty(fd_resamples)
        for b in range(fd_resamples):
            idx = boot.integers(0, n, size=n)
            ent[b] = _entropy_of_counts(hists[idx].sum(axis=0))
        shannon = MetricValue(shannon0, float(ent.std()))
    else:
        shannon = MetricValue(0.0, 0.0)

    return MetricsReport(
        l2=scalar(l2_vals),
        fd_expression=MetricValue(fe0, float(fd_se[0])),
        fd_pose=MetricValue(fp0, float(fd_se[1])),
        fd_total=MetricValue(fe0 + fp0, float((draws[ok][:, 0] + draws[ok][:, 1]).std()) if ok.any() else 0.0),
        variation=scalar(var_vals),
        diversity=scalar(div_vals),
        pfd=MetricValue(pf0, float(fd_se[2])) if have_speaker else None,
        l2_affect=scalar(aff_vals, scale=100.0),
        shannon_index=shannon,
        gt_variation=scalar(gt_var_vals),
        gt_diversity=scalar(gt_div_vals),
        num_segments=n,
    )
