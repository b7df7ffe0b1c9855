"""Zero-pole orientation fields and their singularity layouts.

Coordinates are image coordinates: x rightward, y downward, both in
pixels.  Orientations are ridge tangents modulo pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLASSES = ("arch", "left_loop", "right_loop", "whorl")

# Roughly natural class frequencies; arches fold in tented arches.
CLASS_PRIOR = {"arch": 0.05, "left_loop": 0.33, "right_loop": 0.33, "whorl": 0.29}

_COUNTS = {"arch": (0, 0), "left_loop": (1, 1), "right_loop": (1, 1), "whorl": (2, 2)}


class EvaluationAtSingularity(Exception):
    """A grid point coincides exactly with a core or delta."""


@dataclass
class SingularityConfig:
    cores: list  # (x, y) pairs; the model's zeros
    deltas: list  # (x, y) pairs; the model's poles
    label: str
    offset: float = 0.0  # background orientation angle

    def __post_init__(self):
        if self.label not in _COUNTS:
            raise ValueError(f"unknown fingerprint class {self.label!r}")
        want = _COUNTS[self.label]
        got = (len(self.cores), len(self.deltas))
        if got != want:
            raise ValueError(
                f"class {self.label!r} needs {want[0]} cores / {want[1]} deltas, "
                f"got {got[0]}/{got[1]}"
            )


@dataclass
class OrientationField:
    angles: np.ndarray  # (H, W), radians in [0, pi)
    offset: float = 0.0

    @property
    def shape(self):
        return self.angles.shape


def sample_class(rng):
    labels = list(CLASS_PRIOR)
    probs = np.array([CLASS_PRIOR[c] for c in labels])
    return labels[int(rng.choice(len(labels), p=probs / probs.sum()))]


def class_singularities(label, seed, extent):
    """Jittered class-typical singularity layout for one print.

    Cores sit upper-center; loop deltas sit low on the side opposite the
    loop's opening, so a left loop carries its delta to the right of the
    core.  Whorls stack two cores with deltas low on both flanks.
    """
    if extent < 64:
        raise ValueError(f"extent {extent} too small for a singularity layout")
    rng = np.random.default_rng(seed)
    e = float(extent)

    def jitter(x_frac, y_frac, wobble=0.04):
        return (
            e * (x_frac + rng.uniform(-wobble, wobble)),
            e * (y_frac + rng.uniform(-wobble, wobble)),
        )

    offset = float(rng.uniform(-0.2, 0.2))
    if label == "arch":
        return SingularityConfig([], [], "arch", offset)
    if label == "left_loop":
        core = jitter(0.50, 0.38)
        delta = jitter(0.68, 0.78)
        return SingularityConfig([core], [delta], "left_loop", offset)
    if label == "right_loop":
        core = jitter(0.50, 0.38)
        delta = jitter(0.32, 0.78)
        return SingularityConfig([core], [delta], "right_loop", offset)
    if label == "whorl":
        top = jitter(0.48, 0.34)
        bottom = jitter(0.52, 0.52)
        left = jitter(0.22, 0.80)
        right = jitter(0.78, 0.80)
        return SingularityConfig([top, bottom], [left, right], "whorl", offset)
    raise ValueError(f"unknown fingerprint class {label!r}")


def _neighbor_cycle_mean(angles, y, x):
    """Circular (mod pi) mean of the 4-neighbours, for singular pixels."""
    h, w = angles.shape
    samples = []
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = y + dy, x + dx
        if 0 <= ny < h and 0 <= nx < w:
            samples.append(angles[ny, nx])
    doubled = np.exp(2j * np.asarray(samples))
    return float(np.mod(np.angle(doubled.mean()) / 2.0, np.pi))


def zero_pole_orientation(config, extent):
    """Orientation field O(p) = offset + sum of half-argument terms.

    Cores contribute +arg(p - c)/2, deltas -arg(p - d)/2, reduced
    modulo pi.  A grid point that lands exactly on a singularity has no
    defined angle; it is assigned the circular mean of its neighbours.
    """
    h = w = int(extent)
    yy, xx = np.mgrid[0:h, 0:w]
    p = xx + 1j * yy
    total = np.full((h, w), float(config.offset))
    hits = []
    for sign, points in ((0.5, config.cores), (-0.5, config.deltas)):
        for (cx, cy) in points:
            rel = p - complex(cx, cy)
            exact = rel == 0
            if exact.any():
                hits.extend(zip(*np.nonzero(exact)))
            total += sign * np.angle(rel)
    angles = np.mod(total, np.pi)
    for (y, x) in set(hits):
        angles[y, x] = _neighbor_cycle_mean(angles, y, x)
    return OrientationField(angles=angles, offset=float(config.offset))


def poincare_index(field, center, radius, samples=64):
    """Winding of the orientation field around a circuit, in half-turns.

    Accumulates wrapped consecutive differences along a circle and
    divides by 2*pi: a core gives +1/2, a delta -1/2, a regular point 0.
    """
    angles = field.angles if isinstance(field, OrientationField) else np.asarray(field)
    h, w = angles.shape
    cx, cy = center
    ts = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    xs = np.clip(np.round(cx + radius * np.cos(ts)).astype(int), 0, w - 1)
    ys = np.clip(np.round(cy + radius * np.sin(ts)).astype(int), 0, h - 1)
    ring = angles[ys, xs]
    diffs = np.diff(np.concatenate([ring, ring[:1]]))
    wrapped = np.mod(diffs + np.pi / 2.0, np.pi) - np.pi / 2.0
    return float(wrapped.sum() / (2.0 * np.pi))
