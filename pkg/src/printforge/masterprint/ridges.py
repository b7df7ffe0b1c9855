"""Ridge frequency sampling and iterative Gabor ridge growth.

Growth starts from sparse random impulses and repeatedly convolves with
locally oriented, frequency-tuned Gabor kernels, renormalizing and
clipping after each pass.  The pattern saturates into ridges (+1) and
valleys (-1) whose local orientation follows the input field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .orientation import OrientationField

# 500-dpi ridge periods span roughly 6 to 12 pixels.
FREQ_LOW = 1.0 / 12.0
FREQ_HIGH = 1.0 / 6.0


@dataclass
class RidgeFrequencyMap:
    base: float  # cycles/pixel, the print's sampled base frequency
    values: np.ndarray  # (H, W) per-pixel frequency inside the band

    @property
    def shape(self):
        return self.values.shape


def sample_frequency(seed, extent, lattice=None, wobble=0.04):
    """Draw one print's ridge frequency map.

    The base frequency is uniform over the allowed band; with
    ``lattice`` set it is snapped to that many evenly spaced band
    values, which lets a corpus builder batch prints sharing kernels
    while still spanning the band.  Per-pixel values add a smooth
    few-percent modulation, clipped back into the band.
    """
    rng = np.random.default_rng(seed)
    base = float(rng.uniform(FREQ_LOW, FREQ_HIGH))
    if lattice:
        grid = np.linspace(FREQ_LOW, FREQ_HIGH, int(lattice))
        base = float(grid[np.argmin(np.abs(grid - base))])
    noise = rng.standard_normal((int(extent), int(extent)))
    smooth = ndimage.gaussian_filter(noise, sigma=extent / 8.0)
    denom = max(float(np.abs(smooth).max()), 1e-9)
    values = base * (1.0 + wobble * smooth / denom)
    return RidgeFrequencyMap(base=base, values=np.clip(values, FREQ_LOW, FREQ_HIGH))


def gabor_kernel(theta, freq, sigma_factor=0.5):
    """Even, DC-free Gabor tuned to ridges along ``theta``.

    The modulation runs along the ridge normal, so filter output forms
    stripes parallel to theta.  Extent is two ridge periods; sigma is
    proportional to the period.
    """
    period = 1.0 / float(freq)
    half = max(int(round(period)), 2)
    sigma = sigma_factor * period
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    envelope = np.exp(-(xs**2 + ys**2) / (2.0 * sigma**2))
    u = -xs * np.sin(theta) + ys * np.cos(theta)
    wave = np.cos(2.0 * np.pi * freq * u)
    # exact discrete DC removal: project the carrier off the envelope
    dc = (envelope * wave).sum() / envelope.sum()
    return envelope * (wave - dc)


def _orientation_bins(field_angles, n_orient):
    """Nearest bank-orientation index per pixel (mod-pi distance)."""
    bank = np.arange(n_orient) * np.pi / n_orient
    diffs = np.mod(field_angles[..., None] - bank + np.pi / 2.0, np.pi) - np.pi / 2.0
    return np.argmin(np.abs(diffs), axis=-1)


def _seed_image(rng, shape, density):
    spots = rng.random(shape) < density
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return np.where(spots, signs, 0.0)


def _bank(freq_base, n_orient, sigma_factor):
    angles = np.arange(n_orient) * np.pi / n_orient
    return [gabor_kernel(a, freq_base, sigma_factor) for a in angles]


def gabor_grow(
    field,
    freq,
    seed,
    iterations=25,
    n_orient=12,
    density=0.01,
    norm_percentile=70.0,
    sigma_factor=0.5,
):
    """Grow one ridge image in [-1, 1] from sparse random seed points.

    With ``iterations`` zero the raw seed image is returned unchanged.
    Deterministic in (field, freq, seed, settings).
    """
    angles = field.angles if isinstance(field, OrientationField) else np.asarray(field)
    rng = np.random.default_rng(seed)
    img = _seed_image(rng, angles.shape, density)
    if iterations <= 0:
        return img
    idx = _orientation_bins(angles, n_orient)
    kernels = _bank(freq.base, n_orient, sigma_factor)
    for _ in range(int(iterations)):
        acc = np.zeros_like(img)
        for k, kernel in enumerate(kernels):
            sel = idx == k
            if not sel.any():
                continue
            resp = fftconvolve(img, kernel, mode="same")
            acc[sel] = resp[sel]
        scale = np.percentile(np.abs(acc), norm_percentile) + 1e-9
        img = np.clip(acc / scale, -1.0, 1.0)
    return img


def gabor_grow_batch(
    fields,
    freqs,
    seeds,
    iterations=25,
    n_orient=12,
    density=0.01,
    norm_percentile=70.0,
    sigma_factor=0.5,
):
    """Grow many prints, batching those that share a base frequency.

    Same per-print settings as gabor_grow; prints whose frequency maps
    came from a snapped lattice share kernel banks, so each convolution
    runs over a whole stack at once.  Returns a list in input order.
    """
    n = len(fields)
    out = [None] * n
    groups = {}
    for i in range(n):
        groups.setdefault(freqs[i].base, []).append(i)
    for base, members in groups.items():
        kernels = _bank(base, n_orient, sigma_factor)
        stack = []
        idxs = []
        for i in members:
            angles = (
                fields[i].angles
                if isinstance(fields[i], OrientationField)
                else np.asarray(fields[i])
            )
            rng = np.random.default_rng(seeds[i])
            stack.append(_seed_image(rng, angles.shape, density))
            idxs.append(_orientation_bins(angles, n_orient))
        imgs = np.stack(stack)
        idx = np.stack(idxs)
        if iterations > 0:
            for _ in range(int(iterations)):
                acc = np.zeros_like(imgs)
                for k, kernel in enumerate(kernels):
                    sel = idx == k
                    if not sel.any():
                        continue
                    resp = fftconvolve(imgs, kernel[None, :, :], mode="same", axes=(1, 2))
                    acc[sel] = resp[sel]
                scales = (
                    np.percentile(np.abs(acc), norm_percentile, axis=(1, 2))[:, None, None]
                    + 1e-9
                )
                imgs = np.clip(acc / scales, -1.0, 1.0)
        for slot, i in enumerate(members):
            out[i] = imgs[slot]
    return out
