"""Run manifest: config snapshot, stage records, output checksums.

The manifest is the run's single source of truth.  It is rewritten
atomically after every stage, lists every output file with a SHA-256
checksum, and embeds the resolved configuration, including the training
constants and the generator's layer ladder, so a run documents the
architecture it was built against.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict
from datetime import datetime, timezone

import numpy as np
import scipy
import skimage

from .. import __version__
from ..synthesis import describe_ladder
from .config import config_snapshot

MANIFEST_NAME = "manifest.json"


class ManifestError(Exception):
    """The manifest file is missing or does not parse."""


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def architecture_echo(config):
    """Training constants and layer ladder, as recorded in the manifest."""
    schedules = config.schedules
    return {
        "preset": config.preset,
        "generator_ladder": describe_ladder(config.ladder_spec()),
        "training_constants": {
            "cae": {
                "lr": schedules.cae.lr,
                "beta1": schedules.cae.beta1,
                "beta2": schedules.cae.beta2,
                "batch_size": schedules.cae.batch_size,
                "steps": schedules.cae.steps,
            },
            "gan": {
                "lr": schedules.gan.lr,
                "beta1": schedules.gan.beta1,
                "beta2": schedules.gan.beta2,
                "batch_size": schedules.gan.batch_size,
                "steps": schedules.gan.steps,
            },
            "finetune_steps": schedules.finetune.steps,
        },
    }


class RunManifest:
    """Mutable view over one run directory's manifest document."""

    def __init__(self, run_dir, data):
        self.run_dir = run_dir
        self.data = data

    @property
    def path(self):
        return os.path.join(self.run_dir, MANIFEST_NAME)

    @classmethod
    def create(cls, run_dir, config):
        data = {
            "created": _now(),
            "updated": _now(),
            "versions": {
                "printforge": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "scikit-image": skimage.__version__,
            },
            "config": config_snapshot(config),
            "configuration": architecture_echo(config),
            "stages": {},
        }
        manifest = cls(run_dir, data)
        manifest.save()
        return manifest

    @classmethod
    def load(cls, run_dir):
        path = os.path.join(run_dir, MANIFEST_NAME)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ManifestError(f"no manifest under {run_dir}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is corrupt: {exc}") from exc
        return cls(run_dir, data)

    @classmethod
    def open_or_create(cls, run_dir, config):
        if os.path.exists(os.path.join(run_dir, MANIFEST_NAME)):
            return cls.load(run_dir)
        os.makedirs(run_dir, exist_ok=True)
        return cls.create(run_dir, config)

    def save(self):
        os.makedirs(self.run_dir, exist_ok=True)
        self.data["updated"] = _now()
        fd, tmp = tempfile.mkstemp(
            dir=self.run_dir, prefix=".manifest-", suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(self.data, handle, indent=1, sort_keys=True)
                handle.write("\n")
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # -- stage records ----------------------------------------------------

    def stage_status(self, stage):
        entry = self.data["stages"].get(stage)
        return entry["status"] if entry else None

    def stage_entry(self, stage):
        return self.data["stages"].get(stage)

    def _relative(self, path):
        return os.path.relpath(path, self.run_dir).replace(os.sep, "/")

    def _output_records(self, paths, valid):
        records = []
        for path in sorted(str(p) for p in paths):
            records.append(
                {
                    "path": self._relative(path),
                    "bytes": os.path.getsize(path),
                    "sha256": file_checksum(path),
                    "valid": valid,
                }
            )
        return records

    def record_stage(self, stage, parameters, outputs, elapsed, details=None):
        self.data["stages"][stage] = {
            "status": "done",
            "finished": _now(),
            "elapsed_s": round(float(elapsed), 3),
            "parameters": parameters,
            "outputs": self._output_records(outputs, valid=True),
            "details": details or {},
        }
        self.save()

    def record_failure(self, stage, parameters, outputs, elapsed, error):
        """Mark a stage failed; whatever it wrote is listed as invalid."""
        present = [p for p in outputs if os.path.exists(str(p))]
        self.data["stages"][stage] = {
            "status": "failed",
            "finished": _now(),
            "elapsed_s": round(float(elapsed), 3),
            "parameters": parameters,
            "outputs": self._output_records(present, valid=False),
            "details": {"error": str(error)},
        }
        self.save()

    # -- completeness -----------------------------------------------------

    def listed_files(self):
        files = {}
        for entry in self.data["stages"].values():
            for record in entry["outputs"]:
                files[record["path"]] = record
        return files

    def verify(self):
        """Check completeness: every file on disk listed, checksums good.

        Returns a dict of problem lists; all empty means the manifest
        and the run directory agree.
        """
        listed = self.listed_files()
        missing, corrupt, unlisted = [], [], []
        for rel, record in listed.items():
            full = os.path.join(self.run_dir, rel)
            if not os.path.exists(full):
                missing.append(rel)
            elif record["valid"] and file_checksum(full) != record["sha256"]:
                corrupt.append(rel)
        for root, _, names in os.walk(self.run_dir):
            for name in names:
                full = os.path.join(root, name)
                rel = self._relative(full)
                if rel == MANIFEST_NAME or name.startswith(".manifest-"):
                    continue
                if rel not in listed:
                    unlisted.append(rel)
        return {
            "missing": sorted(missing),
            "corrupt": sorted(corrupt),
            "unlisted": sorted(unlisted),
        }
