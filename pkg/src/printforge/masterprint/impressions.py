"""Rolled and plain impression rendering from a grown masterprint.

Output images use scanner conventions: white background (1.0), dark
ridges (towards 0.0), values in [0, 1].
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

# Ellipse semi-axes as fractions of the frame; rolled covers >= 60% of
# the frame, plain lands in the 25-45% band, nested inside rolled.
_GEOMETRY = {
    "rolled": {"ax": 0.45, "ay": 0.45, "area_jitter": 0.012, "center_jitter": 0.01},
    "plain": {"ax": 0.33, "ay": 0.36, "area_jitter": 0.012, "center_jitter": 0.03},
}


def foreground_mask(extent, kind, rng=None, feather=3.0):
    """Soft elliptical foreground in [0, 1]; rng None gives the nominal
    zero-jitter geometry."""
    if kind not in _GEOMETRY:
        raise ValueError(f"unknown impression kind {kind!r}")
    geo = _GEOMETRY[kind]
    e = float(extent)
    ax, ay = geo["ax"] * e, geo["ay"] * e
    cx = cy = 0.5 * e
    if rng is not None:
        ax += rng.uniform(-geo["area_jitter"], geo["area_jitter"]) * e
        ay += rng.uniform(-geo["area_jitter"], geo["area_jitter"]) * e
        cx += rng.uniform(-geo["center_jitter"], geo["center_jitter"]) * e
        cy += rng.uniform(-geo["center_jitter"], geo["center_jitter"]) * e
    yy, xx = np.mgrid[0:int(extent), 0:int(extent)]
    rho = np.sqrt(((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2)
    return np.clip((1.0 - rho) * (min(ax, ay) / max(feather, 1e-6)), 0.0, 1.0)


def _smooth_noise(rng, shape, sigma):
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    scale = max(float(field.std()), 1e-9)
    return field / scale


def render_impression(record, kind, noise_seed, noise_scale=1.0):
    """One acquisition of a masterprint: warped, pressed, masked.

    Deterministic in (record, kind, noise_seed, noise_scale).  With
    noise_scale 0 the render is the clean masked masterprint under the
    nominal foreground geometry.
    """
    ridge = np.asarray(record.ridge_image, dtype=np.float64)
    h, w = ridge.shape
    if h != w:
        raise ValueError(f"expected a square masterprint, got {ridge.shape}")
    rng = np.random.default_rng(noise_seed)
    if noise_scale > 0:
        amp = 2.0 * noise_scale
        dy = _smooth_noise(rng, ridge.shape, 8.0) * amp
        dx = _smooth_noise(rng, ridge.shape, 8.0) * amp
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        warped = ndimage.map_coordinates(
            ridge, [yy + dy, xx + dx], order=1, mode="nearest"
        )
        gain = 1.0 + float(rng.uniform(-0.2, 0.2)) * noise_scale
        blotch = 1.0 + 0.3 * noise_scale * _smooth_noise(rng, ridge.shape, 16.0)
        mask = foreground_mask(h, kind, rng=rng)
        ink = np.clip((warped * gain * blotch + 1.0) / 2.0, 0.0, 1.0)
        ink = np.clip(ink + 0.04 * noise_scale * rng.standard_normal(ridge.shape), 0.0, 1.0)
    else:
        mask = foreground_mask(h, kind, rng=None)
        ink = np.clip((ridge + 1.0) / 2.0, 0.0, 1.0)
    return np.clip(1.0 - mask * ink, 0.0, 1.0)
