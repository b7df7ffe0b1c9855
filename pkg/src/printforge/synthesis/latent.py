"""Latent sampling for the generator."""

import numpy as np


def sample_latent(seed, count, dim=512):
    """Seeded batch of standard-normal latent vectors, shape (count, dim)."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, dim))
