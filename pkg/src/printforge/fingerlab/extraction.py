"""Minutiae extraction: segment, binarize, thin, classify, filter.

Input images follow scanner conventions: values in [0, 1], dark ridges
on a light background.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .orientation import estimate_orientation
from .templates import Minutia, MinutiaTemplate


class EmptyForeground(Exception):
    pass


def segment_foreground(image, block=16, threshold=5e-3):
    """Block-variance segmentation; ridge texture has variance, paper
    background does not.  Returns a boolean pixel mask."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    hb, wb = h // block, w // block
    if hb == 0 or wb == 0:
        return np.zeros_like(img, dtype=bool)
    trimmed = img[: hb * block, : wb * block]
    blocks = trimmed.reshape(hb, block, wb, block)
    variances = blocks.var(axis=(1, 3))
    mask_blocks = variances > threshold
    mask = np.zeros((h, w), dtype=bool)
    mask[: hb * block, : wb * block] = np.repeat(
        np.repeat(mask_blocks, block, axis=0), block, axis=1
    )
    mask = ndimage.binary_closing(mask, structure=np.ones((3, 3)), iterations=2)
    return ndimage.binary_fill_holes(mask)


def binarize(image, mask, window=9, bias=0.02):
    """Adaptive threshold against the local mean; True marks ridge ink."""
    img = np.asarray(image, dtype=np.float64)
    local = ndimage.uniform_filter(img, window)
    return (img < local - bias) & np.asarray(mask, dtype=bool)


_NEIGHBOR_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _crossing_number(skel):
    """Half the sign changes around each pixel's 8-neighbour ring."""
    s = np.pad(skel.astype(np.int8), 1)
    ring = [s[1 + dy : s.shape[0] - 1 + dy, 1 + dx : s.shape[1] - 1 + dx]
            for dy, dx in _NEIGHBOR_RING]
    total = np.zeros(skel.shape, dtype=np.int16)
    for i in range(8):
        total += np.abs(ring[i] - ring[(i + 1) % 8])
    return total // 2


def _neighbor_count(skel):
    s = np.pad(skel.astype(np.int8), 1)
    out = np.zeros(skel.shape, dtype=np.int16)
    for dy, dx in _NEIGHBOR_RING:
        out += s[1 + dy : s.shape[0] - 1 + dy, 1 + dx : s.shape[1] - 1 + dx]
    return out


def prune_spurs(skel, max_length=8):
    """Delete short dead-end branches that hang off a junction.

    Walks from each endpoint; if a junction is reached within
    max_length steps the walked pixels are removed.  Dead ends of long
    ridges (real endings) survive.
    """
    skel = skel.copy()
    counts = _neighbor_count(skel)
    endpoints = np.argwhere(skel & (counts == 1))
    h, w = skel.shape
    for y0, x0 in endpoints:
        if not skel[y0, x0]:
            continue
        path = [(y0, x0)]
        prev = None
        y, x = y0, x0
        hit_junction = False
        for _ in range(max_length):
            nbrs = [
                (y + dy, x + dx)
                for dy, dx in _NEIGHBOR_RING
                if 0 <= y + dy < h and 0 <= x + dx < w
                and skel[y + dy, x + dx] and (y + dy, x + dx) != prev
            ]
            if len(nbrs) == 0:
                break
            if len(nbrs) > 1:
                hit_junction = True
                break
            prev = (y, x)
            y, x = nbrs[0]
            nxt_degree = sum(
                1
                for dy, dx in _NEIGHBOR_RING
                if 0 <= y + dy < h and 0 <= x + dx < w and skel[y + dy, x + dx]
            )
            if nxt_degree > 2:
                hit_junction = True
                break
            path.append((y, x))
        if hit_junction:
            for py, px in path:
                skel[py, px] = False
    return skel


def _direction_vector(skel, y, x, radius=3):
    """Mean offset towards nearby skeleton pixels; short local tangent."""
    h, w = skel.shape
    y0, y1 = max(0, y - radius), min(h, y + radius + 1)
    x0, x1 = max(0, x - radius), min(w, x + radius + 1)
    ys, xs = np.nonzero(skel[y0:y1, x0:x1])
    vy = (ys + y0 - y).sum()
    vx = (xs + x0 - x).sum()
    return float(vx), float(vy)


def _resolve_angle(theta, vx, vy, toward):
    """Pick theta or theta+pi by the side the ridge mass sits on."""
    if vx == 0.0 and vy == 0.0:
        return float(np.mod(theta, 2.0 * np.pi))
    ref = np.arctan2(vy, vx) if toward else np.arctan2(-vy, -vx)
    for candidate in (theta, theta + np.pi):
        if np.cos(candidate - ref) >= 0.0:
            return float(np.mod(candidate, 2.0 * np.pi))
    return float(np.mod(theta, 2.0 * np.pi))


def extract_minutiae(
    image,
    mask=None,
    orientation=None,
    coherence=None,
    border=8,
    spur_length=8,
    min_separation=5,
    block=16,
):
    """Full pipeline from a grayscale print to a MinutiaTemplate.

    An explicit mask/orientation pair overrides the estimators, which
    is how noise-free renders get ground-truth angles.  Minutiae closer
    than ``border`` pixels to the foreground edge are suppressed, as are
    near-duplicates within ``min_separation`` pixels.
    """
    img = np.asarray(image, dtype=np.float64)
    if mask is None:
        mask = segment_foreground(img, block=block)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyForeground("no foreground blocks found")
    if orientation is None or coherence is None:
        est_theta, est_coh = estimate_orientation(img)
        orientation = est_theta if orientation is None else orientation
        coherence = est_coh if coherence is None else coherence
    ridge = binarize(img, mask)
    skel = prune_spurs(skeletonize(ridge), max_length=spur_length)
    cn = _crossing_number(skel)
    # pad so the image frame itself counts as foreground boundary
    interior = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1] > border
    candidates = []
    for kind, cn_value in (("ending", 1), ("bifurcation", 3)):
        for y, x in np.argwhere(skel & (cn == cn_value) & interior):
            candidates.append((int(y), int(x), kind))
    candidates.sort()
    h, w = img.shape
    kept = []
    minutiae = []
    for y, x, kind in candidates:
        if any((y - ky) ** 2 + (x - kx) ** 2 < min_separation**2 for ky, kx in kept):
            continue
        kept.append((y, x))
        vx, vy = _direction_vector(skel, y, x)
        angle = _resolve_angle(
            float(orientation[y, x]), vx, vy, toward=(kind == "bifurcation")
        )
        minutiae.append(
            Minutia(
                x=float(x),
                y=float(y),
                angle=angle,
                quality=float(np.clip(coherence[y, x], 0.0, 1.0)),
                kind=kind,
            )
        )
    return MinutiaTemplate(width=w, height=h, minutiae=minutiae)
