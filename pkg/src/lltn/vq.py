"""VQ-VAE over listener motion: strided-conv encoder, codebook quantizer with
EMA updates and dead-code reset, nearest-neighbor-upsampling decoder.

The quantizer is parameter-free; the codebook is maintained purely by EMA
statistics (no gradient), while encoder gradients cross the quantization
boundary through the straight-through estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import DyadSegment, MotionSequence, NormalizationStats, compute_normalization
from .seeding import VQ_TRAIN, rng_for, substream_seed

EMA_EPS = 1e-5


@dataclass(frozen=True)
class VqConfig:
    codebook_size: int = 256
    embed_dim: int = 64
    downsample_levels: int = 3  # tokens span r = 2**levels frames
    channel_width: int = 128
    train_segment_frames: int = 32
    weight_reconstruct: float = 1.0
    weight_velocity: float = 0.5
    weight_embed: float = 0.02
    ema_decay: float = 0.99
    reset_usage_threshold: float = 1.0
    reset_interval: int = 250
    learning_rate: float = 2e-4
    total_steps: int = 300_000
    warmup_steps: int = 1000
    decay_step: int = 200_000
    decay_factor: float = 0.05
    batch_size: int = 32

    def __post_init__(self):
        if self.train_segment_frames % self.frames_per_token != 0:
            raise ValueError("train_segment_frames must be divisible by 2**downsample_levels")
        if min(self.weight_reconstruct, self.weight_velocity, self.weight_embed) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 < self.ema_decay < 1:
            raise ValueError("ema_decay must be in (0, 1)")

    @property
    def frames_per_token(self) -> int:
        return 2 ** self.downsample_levels


@dataclass(frozen=True)
class MotionTokenSequence:
    """Discrete codebook indices; each spans frames_per_token motion frames.

    ``trim`` records how many trailing frames of the decoded output are
    padding (sources whose length is not a token multiple are right-padded
    by repeating the final frame).
    """

    tokens: tuple[int, ...]
    frames_per_token: int
    trim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_frames(self) -> int:
        return len(self.tokens) * self.frames_per_token - self.trim


def quantize_batch(embeddings, latents) -> np.ndarray:
    """Indices of the nearest codebook row per latent (squared Euclidean,
    lowest index on ties). Exact brute-force scan, chunked for memory."""
    emb = np.asarray(embeddings)
    zs = np.atleast_2d(np.asarray(latents))
    out = np.empty(zs.shape[0], dtype=np.int64)
    chunk = max(1, (1 << 22) // max(1, emb.size))
    for i in range(0, zs.shape[0], chunk):
        d2 = np.square(zs[i : i + chunk, None, :] - emb[None, :, :]).sum(axis=2)
        out[i : i + chunk] = np.argmin(d2, axis=1)
    return out


def quantize(embeddings, z) -> int:
    """Token index for a single latent vector."""
    return int(quantize_batch(embeddings, np.asarray(z)[None, :])[0])


class Codebook(nn.Module):
    """Embedding table with EMA usage statistics (buffers, not parameters)."""

    def __init__(self, size: int, dim: int):
        super().__init__()
        self.register_buffer("embeddings", torch.randn(size, dim) * 0.1)
        self.register_buffer("ema_counts", torch.ones(size))
        self.register_buffer("ema_sums", self.embeddings.clone())

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]


@torch.no_grad()
def ema_update(codebook: Codebook, latents: torch.Tensor, assignments: np.ndarray, decay: float) -> None:
    """Fold one batch of assigned latents into the EMA statistics and refresh
    every codebook row as ema_sums / max(ema_counts, eps)."""
    flat = latents.reshape(-1, codebook.embeddings.shape[1])
    idx = torch.as_tensor(np.asarray(assignments).reshape(-1), dtype=torch.long)
    counts = torch.bincount(idx, minlength=codebook.size).to(codebook.ema_counts.dtype)
    sums = torch.zeros_like(codebook.ema_sums)
    sums.index_add_(0, idx, flat.to(sums.dtype))
    codebook.ema_counts.mul_(decay).add_(counts, alpha=1 - decay)
    codebook.ema_sums.mul_(decay).add_(sums, alpha=1 - decay)
    denom = codebook.ema_counts.clamp_min(EMA_EPS).unsqueeze(1)
    codebook.embeddings.copy_(codebook.ema_sums / denom)


@torch.no_grad()
def codebook_reset(
    codebook: Codebook, recent_latents: torch.Tensor, threshold: float, rng: np.random.Generator
) -> int:
    """Reseed rows whose EMA count fell below threshold to uniformly sampled
    recent latents, resetting their EMA stats to (1, latent). Returns the
    number of rows reseeded."""
    flat = recent_latents.reshape(-1, codebook.embeddings.shape[1])
    if flat.shape[0] == 0:
        raise ValueError("recent_latents is empty")
    dead = torch.nonzero(codebook.ema_counts < threshold).flatten()
    for j in dead.tolist():
        pick = int(rng.integers(0, flat.shape[0]))
        latent = flat[pick].to(codebook.embeddings.dtype)
        codebook.embeddings[j] = latent
        codebook.ema_sums[j] = latent
        codebook.ema_counts[j] = 1.0
    return int(dead.numel())


class ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv1d(width, width, 3, padding=1)
        self.conv2 = nn.Conv1d(width, width, 1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


def _encoder(in_dim: int, width: int, levels: int, out_dim: int) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv1d(in_dim, width, 3, padding=1), nn.ReLU()]
    for _ in range(levels):
        layers += [nn.Conv1d(width, width, 4, stride=2, padding=1), nn.ReLU(), ResidualBlock(width)]
    layers.append(nn.Conv1d(width, out_dim, 3, padding=1))
    return nn.Sequential(*layers)


def _decoder(in_dim: int, width: int, levels: int, out_dim: int) -> nn.Sequential:
    # Nearest-neighbor upsample + conv mirrors the encoder without the
    # checkerboard artifacts of transposed convolution.
    layers: list[nn.Module] = [nn.Conv1d(in_dim, width, 3, padding=1), nn.ReLU()]
    for _ in range(levels):
        layers += [
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv1d(width, width, 3, padding=1),
            nn.ReLU(),
            ResidualBlock(width),
        ]
    layers.append(nn.Conv1d(width, out_dim, 3, padding=1))
    return nn.Sequential(*layers)


class MotionVqvae(nn.Module):
    """Encoder, codebook, and decoder over (T, d_m+3) motion windows.

    encode/decode operate in normalized coefficient space; the normalization
    statistics ride along as buffers so a checkpoint is self-contained.
    """

    def __init__(self, cfg: VqConfig, input_dim: int):
        super().__init__()
        self.cfg = cfg
        self.input_dim = input_dim
        self.encoder = _encoder(input_dim, cfg.channel_width, cfg.downsample_levels, cfg.embed_dim)
        self.decoder = _decoder(cfg.embed_dim, cfg.channel_width, cfg.downsample_levels, input_dim)
        self.codebook = Codebook(cfg.codebook_size, cfg.embed_dim)
        self.register_buffer("norm_mean", torch.zeros(input_dim))
        self.register_buffer("norm_std", torch.ones(input_dim))

    @property
    def frames_per_token(self) -> int:
        return self.cfg.frames_per_token

    def set_normalization(self, stats: NormalizationStats) -> None:
        self.norm_mean.copy_(torch.from_numpy(stats.mean.copy()).to(self.norm_mean.dtype))
        self.norm_std.copy_(torch.from_numpy(stats.std.copy()).to(self.norm_std.dtype))

    def encode(self, batch: torch.Tensor) -> torch.Tensor:
        """(B, T, dim) normalized frames -> (B, T/r, d_c) latents."""
        if not torch.isfinite(batch).all():
            raise ValueError("non-finite input to encoder")
        if batch.shape[1] % self.frames_per_token != 0:
            raise ValueError(f"T={batch.shape[1]} not divisible by r={self.frames_per_token}")
        z = self.encoder(batch.transpose(1, 2))
        return z.transpose(1, 2)

    def decode_latents(self, latents: torch.Tensor) -> torch.Tensor:
        """(B, n, d_c) latents -> (B, n*r, dim) normalized frames."""
        out = self.decoder(latents.transpose(1, 2))
        return out.transpose(1, 2)


def vq_losses(model: MotionVqvae, batch: torch.Tensor):
    """Losses for one batch of normalized (B, T, dim) windows.

    embed: squared distance from latents to their (stop-gradient) codebook
    rows, summed over time; reconstruct/velocity: smooth-L1 on frames and
    frame differences. Each is summed within a sequence and averaged over
    the batch. Returns (losses dict, detached latents, assignments).
    """
    z = model.encode(batch)
    assignments = quantize_batch(
        model.codebook.embeddings.detach().cpu().numpy(), z.detach().cpu().numpy().reshape(-1, z.shape[-1])
    ).reshape(z.shape[0], z.shape[1])
    rows = model.codebook.embeddings[torch.as_tensor(assignments, dtype=torch.long)].to(z.dtype)
    embed = (z - rows.detach()).pow(2).sum(dim=(1, 2)).mean()
    z_q = z + (rows - z).detach()  # straight-through estimator
    recon = model.decode_latents(z_q)
    rec = F.smooth_l1_loss(recon, batch, reduction="none").sum(dim=(1, 2)).mean()
    if batch.shape[1] >= 2:
        vel = F.smooth_l1_loss(
            recon[:, 1:] - recon[:, :-1], batch[:, 1:] - batch[:, :-1], reduction="none"
        ).sum(dim=(1, 2)).mean()
    else:
        vel = torch.zeros((), dtype=batch.dtype)
    cfg = model.cfg
    total = cfg.weight_reconstruct * rec + cfg.weight_velocity * vel + cfg.weight_embed * embed
    losses = {"embed": embed, "reconstruct": rec, "velocity": vel, "total": total}
    return losses, z.detach(), assignments


def lr_at(step: int, cfg: VqConfig) -> float:
    """Closed-form schedule: linear warmup, one-shot decay multiplier."""
    scale = min(1.0, (step + 1) / cfg.warmup_steps) if cfg.warmup_steps > 0 else 1.0
    if step >= cfg.decay_step:
        scale *= cfg.decay_factor
    return cfg.learning_rate * scale


def _window(frames: np.ndarray, start: int, length: int) -> np.ndarray:
    win = frames[start : start + length]
    if win.shape[0] < length:
        pad = np.repeat(win[-1:], length - win.shape[0], axis=0)
        win = np.concatenate([win, pad], axis=0)
    return win


def train_vqvae(
    train: Sequence[DyadSegment],
    cfg: VqConfig,
    seed: int,
    stats: Optional[NormalizationStats] = None,
):
    """Train on random fixed-length windows of the training segments.

    Adam on encoder/decoder, EMA codebook updates every step, dead-code
    reset every reset_interval steps. Deterministic given (seed, cfg, data).
    Returns (model, loss trace dict of per-step arrays).
    """
    if not train:
        raise ValueError("training set is empty")
    stats = stats or compute_normalization(train)
    input_dim = train[0].listener.dim
    torch.manual_seed(substream_seed(seed, VQ_TRAIN))
    model = MotionVqvae(cfg, input_dim)
    model.set_normalization(stats)
    batch_rng = rng_for(seed, VQ_TRAIN + "/batches")
    reset_rng = rng_for(seed, VQ_TRAIN + "/reset")
    opt = torch.optim.Adam(
        list(model.encoder.parameters()) + list(model.decoder.parameters()),
        lr=cfg.learning_rate,
        betas=(0.9, 0.999),
        eps=1e-8,
    )
    mean = model.norm_mean.numpy()
    std = model.norm_std.numpy()
    all_frames = [seg.listener.frames.astype(np.float32) for seg in train]
    trace = {k: np.zeros(cfg.total_steps) for k in ("total", "reconstruct", "velocity", "embed")}
    F_len = cfg.train_segment_frames
    for step in range(cfg.total_steps):
        for group in opt.param_groups:
            group["lr"] = lr_at(step, cfg)
        idxs = batch_rng.integers(0, len(all_frames), size=cfg.batch_size)
        windows = []
        for i in idxs:
            frames = all_frames[i]
            hi = max(1, frames.shape[0] - F_len + 1)
            start = int(batch_rng.integers(0, hi))
            windows.append(_window(frames, start, F_len))
        batch = torch.from_numpy((np.stack(windows) - mean) / std)
        opt.zero_grad()
        losses, latents, assignments = vq_losses(model, batch)
        if not torch.isfinite(losses["total"]):
            raise RuntimeError(
                f"non-finite VQ loss at step {step}: "
                + ", ".join(f"{k}={float(v):.4g}" for k, v in losses.items())
            )
        losses["total"].backward()
        opt.step()
        ema_update(model.codebook, latents, assignments, cfg.ema_decay)
        if cfg.reset_interval > 0 and (step + 1) % cfg.reset_interval == 0:
            codebook_reset(model.codebook, latents, cfg.reset_usage_threshold, reset_rng)
        for key in trace:
            trace[key][step] = float(losses[key].detach())
    return model, trace


def tokenize_motion(model: MotionVqvae, seq: MotionSequence) -> MotionTokenSequence:
    """encode + quantize with final-frame tail padding to a token multiple."""
    r = model.frames_per_token
    frames = seq.frames.astype(np.float32)
    T = frames.shape[0]
    padded = math.ceil(T / r) * r
    if padded > T:
        frames = np.concatenate([frames, np.repeat(frames[-1:], padded - T, axis=0)], axis=0)
    mean = model.norm_mean.numpy()
    std = model.norm_std.numpy()
    batch = torch.from_numpy((frames - mean) / std).unsqueeze(0).to(model.norm_mean.dtype)
    with torch.no_grad():
        z = model.encode(batch)[0]
    tokens = quantize_batch(model.codebook.embeddings.cpu().numpy(), z.cpu().numpy())
    return MotionTokenSequence(tuple(tokens.tolist()), r, trim=padded - T)


def decode_tokens(model: MotionVqvae, tokens: MotionTokenSequence, fps: int = 30) -> MotionSequence:
    """Decode token indices to a denormalized motion sequence, trimming any
    recorded tail padding."""
    ids = np.asarray(tokens.tokens, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty token sequence")
    if ids.min() < 0 or ids.max() >= model.codebook.size:
        raise ValueError(f"token index out of range [0, {model.codebook.size})")
    rows = model.codebook.embeddings[torch.as_tensor(ids)].unsqueeze(0)
    with torch.no_grad():
        out = model.decode_latents(rows)[0]
    frames = out.cpu().numpy() * model.norm_std.numpy() + model.norm_mean.numpy()
    T = frames.shape[0] - tokens.trim
    return MotionSequence(frames[:T].astype(np.float64), fps)


def reconstruct(model: MotionVqvae, seq: MotionSequence) -> MotionSequence:
    """tokenize + decode round trip at the source length."""
    return decode_tokens(model, tokenize_motion(model, seq), fps=seq.fps)
