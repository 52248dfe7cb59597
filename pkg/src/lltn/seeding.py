"""Named random substreams derived from a single run seed.

All stochastic stages (corpus synthesis, VQ training, LM training, input
corruption, bootstrap resampling) draw from independent streams keyed by
name, so changing one stage's consumption pattern never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Stream names used across the package. Free-form names are allowed; these
# are the ones the CLI records in manifests.
SYNTH = "synth"
VQ_TRAIN = "vq-train"
LM_TRAIN = "lm-train"
CORRUPTION = "corruption"
BOOTSTRAP = "bootstrap"


def substream_seed(seed: int, name: str) -> int:
    """Stable 63-bit seed for the (seed, name) substream."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(seed: int, name: str) -> np.random.Generator:
    """numpy Generator for a named substream."""
    return np.random.default_rng(substream_seed(seed, name))


def counter_rng(seed: int, name: str) -> np.random.Generator:
    """Counter-based (Philox) generator; safe to split across workers."""
    return np.random.Generator(np.random.Philox(key=substream_seed(seed, name)))
