"""Corpus-level indicator extraction and cross-dataset KS reports.

A report scores one candidate corpus against several references: for
each of the eight indicators, the two-sample KS statistic against each
reference plus their arithmetic mean.  Lower means closer.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .indicators import (
    BlockGrid,
    block_coherence_values,
    convex_hull_area,
    direction_samples,
    minutiae_count_samples,
    pair_marginal_samples,
    quality_score,
)
from .stats import ks_statistic


INDICATOR_LABELS = {
    "A": "minutiae count per template",
    "B": "minutiae count per block",
    "C": "minutia direction (template)",
    "D": "minutia direction (block mean)",
    "E": "minutiae convex hull area",
    "F": "pairwise spatial histogram",
    "G": "block quality (coherence proxy)",
    "H": "quality score (proxy)",
}


class CorpusTooSmall(Exception):
    pass


@dataclass
class CorpusIndicators:
    """All indicator samples for one corpus, ready for KS comparison.

    F is held as its two marginal samples (pair distance, pair angle
    difference); its KS value is the mean of the two marginal KS
    statistics.
    """

    size: int
    samples: dict = field(default_factory=dict)

    @classmethod
    def from_corpus(cls, images, templates, grid=None, cap=None):
        grid = grid or BlockGrid()
        images = list(images)
        templates = list(templates)
        if len(images) != len(templates):
            raise ValueError(
                f"{len(images)} images but {len(templates)} templates"
            )
        tmpl_counts, block_counts = minutiae_count_samples(templates, grid)
        tmpl_dirs, block_dirs = direction_samples(templates, grid)
        hull_areas = [convex_hull_area(t) for t in templates]
        dists = []
        dangs = []
        for t in templates:
            d, a = pair_marginal_samples(t, cap=cap)
            dists.append(d)
            dangs.append(a)
        quality_blocks = []
        scores = []
        for img in images:
            quality_blocks.extend(block_coherence_values(img, grid=grid))
            scores.append(quality_score(img, grid=grid))
        samples = {
            "A": np.asarray(tmpl_counts),
            "B": np.asarray(block_counts),
            "C": np.asarray(tmpl_dirs),
            "D": np.asarray(block_dirs),
            "E": np.asarray(hull_areas),
            "F_dist": np.concatenate(dists) if dists else np.empty(0),
            "F_ang": np.concatenate(dangs) if dangs else np.empty(0),
            "G": np.asarray(quality_blocks),
            "H": np.asarray(scores),
        }
        return cls(size=len(images), samples=samples)


def _ks(a, b):
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return 1.0
    return ks_statistic(a, b).statistic


def _indicator_ks(candidate, reference, key):
    if key == "F":
        d = _ks(candidate.samples["F_dist"], reference.samples["F_dist"])
        a = _ks(candidate.samples["F_ang"], reference.samples["F_ang"])
        return 0.5 * (d + a)
    return _ks(candidate.samples[key], reference.samples[key])


@dataclass
class ComparisonReport:
    config: dict
    rows: list  # per indicator: {indicator, label, ks: [...], mean}

    def mean_of(self, indicator):
        for row in self.rows:
            if row["indicator"] == indicator:
                return row["mean"]
        raise KeyError(indicator)

    def as_dict(self):
        return {"config": self.config, "rows": self.rows}

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=1)
            handle.write("\n")

    def save_csv(self, path):
        n_refs = len(self.rows[0]["ks"]) if self.rows else 0
        header = ["indicator", "label"] + [f"ref{i + 1}" for i in range(n_refs)] + [
            "average"
        ]
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in self.rows:
                writer.writerow(
                    [row["indicator"], row["label"]]
                    + [f"{v:.6f}" for v in row["ks"]]
                    + [f"{row['mean']:.6f}"]
                )


def as_indicators(corpus, grid=None, cap=None):
    """Accept either precomputed CorpusIndicators or (images, templates)."""
    if isinstance(corpus, CorpusIndicators):
        return corpus
    images, templates = corpus
    return CorpusIndicators.from_corpus(images, templates, grid=grid, cap=cap)


def compare_datasets(candidate, reference_corpora, grid=None, cap=None, min_prints=100):
    """Eight-indicator KS report of a candidate against references.

    Corpora are (images, templates) pairs or CorpusIndicators.  Every
    corpus must hold at least ``min_prints`` prints.
    """
    grid = grid or BlockGrid()
    cand = as_indicators(candidate, grid=grid, cap=cap)
    refs = [as_indicators(r, grid=grid, cap=cap) for r in reference_corpora]
    if not refs:
        raise ValueError("need at least one reference corpus")
    for label, ind in [("candidate", cand)] + [
        (f"reference {i + 1}", r) for i, r in enumerate(refs)
    ]:
        if ind.size < min_prints:
            raise CorpusTooSmall(
                f"{label} has {ind.size} prints, needs at least {min_prints}"
            )
    rows = []
    for key in "ABCDEFGH":
        values = [float(_indicator_ks(cand, r, key)) for r in refs]
        rows.append(
            {
                "indicator": key,
                "label": INDICATOR_LABELS[key],
                "ks": values,
                "mean": float(np.mean(values)),
            }
        )
    config = {
        "block": grid.block,
        "hist_bins": [16, 8],
        "distance_cap": "image diagonal" if cap is None else float(cap),
        "min_prints": int(min_prints),
        "references": len(refs),
        "quality_indicators": "proxy (not vendor quality scores)",
    }
    return ComparisonReport(config=config, rows=rows)
