"""Finite-difference gradient harness.

For the VQ model the check targets the straight-through surrogate: the
stop-gradient branch (codebook rows and the base latents) is frozen at the
evaluation point, which is exactly the function whose gradient the
straight-through estimator defines. Everything else is checked on the loss
as computed.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F


def vq_surrogate_total(model, batch, rows0, z0):
    """VQ total loss with quantization frozen at (rows0, z0)."""
    cfg = model.cfg
    z = model.encode(batch)
    embed = (z - rows0).pow(2).sum(dim=(1, 2)).mean()
    recon = model.decode_latents(z + (rows0 - z0))
    rec = F.smooth_l1_loss(recon, batch, reduction="none").sum(dim=(1, 2)).mean()
    if batch.shape[1] >= 2:
        vel = F.smooth_l1_loss(
            recon[:, 1:] - recon[:, :-1], batch[:, 1:] - batch[:, :-1], reduction="none"
        ).sum(dim=(1, 2)).mean()
    else:
        vel = torch.zeros((), dtype=batch.dtype)
    return cfg.weight_reconstruct * rec + cfg.weight_velocity * vel + cfg.weight_embed * embed


def check_gradients(model, loss_fn, rng, n_coords=6, h=1e-5, tol=1e-4):
    """Compare autograd gradients of loss_fn() against central finite
    differences on sampled coordinates of every parameter. Returns the worst
    relative error seen."""
    model.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for name, param in model.named_parameters():
        if param.grad is None:
            continue
        flat = param.detach().reshape(-1)
        gflat = param.grad.reshape(-1)
        coords = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
        for c in coords:
            with torch.no_grad():
                orig = float(flat[c])
                flat[c] = orig + h
                up = float(loss_fn())
                flat[c] = orig - h
                down = float(loss_fn())
                flat[c] = orig
            fd = (up - down) / (2 * h)
            an = float(gflat[c])
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            worst = max(worst, rel)
            assert rel <= tol, f"{name}[{c}]: analytic {an} vs fd {fd} (rel {rel:.2e})"
    return worst
