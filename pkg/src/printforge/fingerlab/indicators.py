"""The eight per-corpus realism indicators.

Template-level indicators read MinutiaTemplate objects alone;
block-level ones tile images or minutiae into BlockGrid cells.  The two
quality indicators are documented proxies (orientation coherence and a
coherence/band/foreground blend), not vendor quality scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extraction import segment_foreground
from .orientation import estimate_orientation
from .stats import EmpiricalDistribution


class TooFewMinutiae(Exception):
    pass


@dataclass
class BlockGrid:
    block: int = 16


def _hull(points):
    """Monotone-chain convex hull of an (n, 2) array, counterclockwise."""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return pts

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                ox, oy = out[-2]
                ax, ay = out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return lower[:-1] + upper[:-1]


def convex_hull_area(template):
    """Shoelace area of the hull of minutiae positions; degenerate
    configurations (fewer than 3 non-collinear points) give 0."""
    if len(template.minutiae) < 3:
        return 0.0
    points = [(m.x, m.y) for m in template.minutiae]
    hull = _hull(points)
    if len(hull) < 3:
        return 0.0
    area = 0.0
    for i in range(len(hull)):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % len(hull)]
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def _occupied_blocks(template, block):
    """Blocks intersecting the template's minutiae hull (its foreground
    proxy), with per-block minutia counts."""
    if not template.minutiae:
        return {}
    xs = np.array([m.x for m in template.minutiae])
    ys = np.array([m.y for m in template.minutiae])
    counts = {}
    for x, y in zip(xs, ys):
        key = (int(y // block), int(x // block))
        counts[key] = counts.get(key, 0) + 1
    # blocks under the hull's bounding region count as occupied even
    # with zero minutiae, so sparse interiors pull the distribution down
    bx0, bx1 = int(xs.min() // block), int(xs.max() // block)
    by0, by1 = int(ys.min() // block), int(ys.max() // block)
    hull_pts = _hull([(m.x, m.y) for m in template.minutiae])
    for by in range(by0, by1 + 1):
        for bx in range(bx0, bx1 + 1):
            key = (by, bx)
            if key in counts:
                continue
            cx = (bx + 0.5) * block
            cy = (by + 0.5) * block
            if _inside_hull(hull_pts, cx, cy):
                counts[key] = 0
    return counts


def _inside_hull(hull, x, y):
    if len(hull) < 3:
        return False
    for i in range(len(hull)):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % len(hull)]
        if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0:
            return False
    return True


def minutiae_count_samples(templates, grid=None):
    """Template-level counts plus per-occupied-block counts."""
    grid = grid or BlockGrid()
    template_counts = [float(len(t.minutiae)) for t in templates]
    block_counts = []
    for t in templates:
        block_counts.extend(float(c) for c in _occupied_blocks(t, grid.block).values())
    return template_counts, block_counts


def _circular_mean(angles):
    z = np.exp(1j * np.asarray(angles, dtype=np.float64))
    return float(np.mod(np.angle(z.mean()), 2.0 * np.pi))


def direction_samples(templates, grid=None):
    """Pooled minutia angles plus per-block circular mean angles."""
    grid = grid or BlockGrid()
    template_dirs = []
    block_dirs = []
    for t in templates:
        by_block = {}
        for m in t.minutiae:
            template_dirs.append(float(m.angle))
            by_block.setdefault((int(m.y // grid.block), int(m.x // grid.block)), []).append(
                m.angle
            )
        for angles in by_block.values():
            block_dirs.append(_circular_mean(angles))
    return template_dirs, block_dirs


def spatial_histogram(template, n_r=16, n_theta=8, cap=None):
    """Normalized 2-D histogram over unordered minutiae pairs.

    Rows bin pairwise distance up to ``cap`` (image diagonal by
    default); columns bin the mod-pi angular difference.
    """
    minutiae = template.minutiae
    if len(minutiae) < 2:
        raise TooFewMinutiae(f"need at least 2 minutiae, got {len(minutiae)}")
    if cap is None:
        cap = float(np.hypot(template.width, template.height))
    xs = np.array([m.x for m in minutiae])
    ys = np.array([m.y for m in minutiae])
    angles = np.array([m.angle for m in minutiae])
    iu, ju = np.triu_indices(len(minutiae), k=1)
    dists = np.hypot(xs[iu] - xs[ju], ys[iu] - ys[ju])
    dangs = np.mod(angles[iu] - angles[ju], np.pi)
    r_bins = np.minimum((dists / cap * n_r).astype(int), n_r - 1)
    t_bins = np.minimum((dangs / np.pi * n_theta).astype(int), n_theta - 1)
    hist = np.zeros((n_r, n_theta), dtype=np.float64)
    np.add.at(hist, (r_bins, t_bins), 1.0)
    return hist / hist.sum()


def pair_marginal_samples(template, cap=None):
    """Raw per-pair (distance, mod-pi angle difference) samples, the
    continuous substrate under spatial_histogram's bins."""
    minutiae = template.minutiae
    if len(minutiae) < 2:
        return np.empty(0), np.empty(0)
    if cap is None:
        cap = float(np.hypot(template.width, template.height))
    xs = np.array([m.x for m in minutiae])
    ys = np.array([m.y for m in minutiae])
    angles = np.array([m.angle for m in minutiae])
    iu, ju = np.triu_indices(len(minutiae), k=1)
    dists = np.minimum(np.hypot(xs[iu] - xs[ju], ys[iu] - ys[ju]), cap)
    dangs = np.mod(angles[iu] - angles[ju], np.pi)
    return dists, dangs


def block_coherence_values(image, grid=None, mask=None):
    """Per-foreground-block orientation coherence values for one image."""
    grid = grid or BlockGrid()
    img = np.asarray(image, dtype=np.float64)
    if mask is None:
        mask = segment_foreground(img, block=grid.block)
    _, coherence = estimate_orientation(img)
    b = grid.block
    h, w = img.shape
    values = []
    for y0 in range(0, h - b + 1, b):
        for x0 in range(0, w - b + 1, b):
            cell_mask = mask[y0 : y0 + b, x0 : x0 + b]
            if cell_mask.mean() < 0.5:
                continue
            values.append(float(coherence[y0 : y0 + b, x0 : x0 + b].mean()))
    return values


def block_quality_samples(images, grid=None, masks=None):
    """Pooled per-block coherence over a corpus of images."""
    grid = grid or BlockGrid()
    pooled = []
    for i, image in enumerate(images):
        mask = None if masks is None else masks[i]
        pooled.extend(block_coherence_values(image, grid=grid, mask=mask))
    return pooled


def band_occupancy(image, low=1.0 / 15.0, high=1.0 / 5.0):
    """Fraction of non-DC spectral power inside the ridge-frequency
    annulus; near 1 for clean ridge patterns."""
    img = np.asarray(image, dtype=np.float64)
    img = img - img.mean()
    power = np.abs(np.fft.fftshift(np.fft.fft2(img))) ** 2
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w]
    radius = np.hypot((yy - h // 2) / h, (xx - w // 2) / w)
    total = power.sum()
    if total <= 0:
        return 0.0
    band = power[(radius >= low) & (radius <= high)].sum()
    return float(band / total)


def quality_score(image, grid=None):
    """Deterministic 0-100 proxy score.

    100 * (0.5 * mean block coherence + 0.3 * band occupancy +
    0.2 * foreground fraction), each term clamped to [0, 1].  A blank
    image scores 0; noise scores low on coherence and band terms.
    """
    grid = grid or BlockGrid()
    img = np.asarray(image, dtype=np.float64)
    mask = segment_foreground(img, block=grid.block)
    fg_fraction = float(mask.mean())
    coh_values = block_coherence_values(img, grid=grid, mask=mask)
    coh = float(np.mean(coh_values)) if coh_values else 0.0
    band = band_occupancy(img) if fg_fraction > 0 else 0.0
    score = 100.0 * (
        0.5 * np.clip(coh, 0.0, 1.0)
        + 0.3 * np.clip(band, 0.0, 1.0)
        + 0.2 * np.clip(fg_fraction, 0.0, 1.0)
    )
    return float(score)
