"""Run orchestration: configuration, stages, manifests, and reports."""

from .config import (
    ConfigInvalid,
    ExperimentConfig,
    PRESETS,
    config_snapshot,
    default_out_root,
    load_config,
)
from .manifest import ManifestError, RunManifest, architecture_echo, file_checksum
from .reports import REPORT_KINDS, MissingStage, emit_report
from .stages import (
    MissingDependency,
    STAGES,
    StageFailure,
    run_stage,
    stage_dependencies,
)

__all__ = [
    "ConfigInvalid",
    "ExperimentConfig",
    "ManifestError",
    "MissingDependency",
    "MissingStage",
    "PRESETS",
    "REPORT_KINDS",
    "RunManifest",
    "STAGES",
    "StageFailure",
    "architecture_echo",
    "config_snapshot",
    "default_out_root",
    "emit_report",
    "file_checksum",
    "load_config",
    "run_stage",
    "stage_dependencies",
]
