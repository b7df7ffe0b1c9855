"""Minutiae extraction and the eight-indicator realism protocol."""

from .templates import (
    Minutia,
    MinutiaTemplate,
    TemplateError,
    load_template,
    save_template,
)
from .orientation import estimate_orientation, orientation_rms_deg
from .extraction import EmptyForeground, extract_minutiae, segment_foreground
from .stats import EmpiricalDistribution, KSResult, ks_statistic
from .indicators import (
    BlockGrid,
    TooFewMinutiae,
    block_quality_samples,
    convex_hull_area,
    direction_samples,
    minutiae_count_samples,
    quality_score,
    spatial_histogram,
)
from .compare import (
    ComparisonReport,
    CorpusIndicators,
    CorpusTooSmall,
    INDICATOR_LABELS,
    compare_datasets,
)

__all__ = [
    "Minutia",
    "MinutiaTemplate",
    "TemplateError",
    "load_template",
    "save_template",
    "estimate_orientation",
    "orientation_rms_deg",
    "EmptyForeground",
    "extract_minutiae",
    "segment_foreground",
    "EmpiricalDistribution",
    "KSResult",
    "ks_statistic",
    "BlockGrid",
    "TooFewMinutiae",
    "block_quality_samples",
    "convex_hull_area",
    "direction_samples",
    "minutiae_count_samples",
    "quality_score",
    "spatial_histogram",
    "ComparisonReport",
    "CorpusIndicators",
    "CorpusTooSmall",
    "INDICATOR_LABELS",
    "compare_datasets",
]
