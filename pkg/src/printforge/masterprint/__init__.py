"""Model-based fingerprint synthesis: orientation fields from
singularity layouts, Gabor ridge growth, impression rendering, and
corpus generation with ground-truth minutiae."""

from .orientation import (
    CLASS_PRIOR,
    CLASSES,
    EvaluationAtSingularity,
    OrientationField,
    SingularityConfig,
    class_singularities,
    poincare_index,
    sample_class,
    zero_pole_orientation,
)
from .ridges import (
    FREQ_HIGH,
    FREQ_LOW,
    RidgeFrequencyMap,
    gabor_grow,
    gabor_grow_batch,
    gabor_kernel,
    sample_frequency,
)
from .impressions import render_impression, foreground_mask
from .corpus import (
    MasterPrintRecord,
    generate_corpus,
    generate_record,
    generate_records,
    ground_truth_minutiae,
    load_manifest,
)

__all__ = [
    "CLASS_PRIOR",
    "CLASSES",
    "EvaluationAtSingularity",
    "OrientationField",
    "SingularityConfig",
    "class_singularities",
    "poincare_index",
    "sample_class",
    "zero_pole_orientation",
    "FREQ_HIGH",
    "FREQ_LOW",
    "RidgeFrequencyMap",
    "gabor_grow",
    "gabor_grow_batch",
    "gabor_kernel",
    "sample_frequency",
    "render_impression",
    "foreground_mask",
    "MasterPrintRecord",
    "generate_corpus",
    "generate_record",
    "generate_records",
    "ground_truth_minutiae",
    "load_manifest",
]
