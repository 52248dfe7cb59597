"""Desk-scale laboratory for text-conditioned listener facial motion.

Pipeline: a VQ-VAE discretizes listener motion into codebook tokens, and a
causal transformer predicts those tokens autoregressively from
timestamp-interleaved speaker text. Includes baselines, ablation transforms,
a synthetic dyadic-corpus generator, and an evaluation suite with bootstrap
standard errors.
"""

__version__ = "0.1.0"
