"""Configuration resolution, manifests, stage DAG, reports, CLI codes."""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from printforge.pipeline import (
    ConfigInvalid,
    ManifestError,
    MissingDependency,
    MissingStage,
    PRESETS,
    RunManifest,
    STAGES,
    StageFailure,
    architecture_echo,
    config_snapshot,
    emit_report,
    file_checksum,
    load_config,
    run_stage,
    stage_dependencies,
)
from printforge.pipeline.cli import main as cli_main
from printforge.synthesis import LadderSpec, describe_ladder


def write_document(path, doc):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle)
    return str(path)


def tiny_document(run_dir):
    """Minutes-scale override of the desk preset for end-to-end tests."""
    return {
        "preset": "desk",
        "out_root": str(run_dir),
        "model": {"ablation": {"enabled": False}},
        "corpus": {"count": 6, "extent": 64, "batch": 4},
        "schedules": {
            "cae": {"steps": 8, "batch_size": 8},
            "gan": {"steps": 3, "batch_size": 8},
            "finetune": {"steps": 2, "batch_size": 8},
            "encoder": {"steps": 10, "batch_size": 8},
        },
        "generate": {"shard_count": 2, "prints_per_shard": 30, "batch_size": 16},
        "metrics": {"references": 1, "min_prints": 4},
        "gallery": {
            "mates": 8,
            "folds": 2,
            "n_max": 5,
            "imposter_pairs": 150,
            "bench_sizes": [30, 60],
            "bench_repetitions": 1,
        },
    }


# ---------------------------------------------------------------------------
# Configuration


def test_desk_preset_defaults():
    config = load_config()
    assert config.preset == "desk"
    assert config.corpus.count == 250
    assert config.corpus.extent == 96
    assert config.schedules.cae.steps == 2000
    assert config.schedules.gan.steps == 2000
    assert config.schedules.finetune.steps == 2000
    assert config.model.ladder == "desk"
    assert config.model.ablation.enabled
    assert config.out_root == os.path.join("runs", "desk")


def test_full_preset_training_constants():
    config = load_config(preset="full")
    cae = config.schedules.cae
    assert (cae.lr, cae.beta1, cae.beta2) == (0.0002, 0.5, 0.9)
    assert (cae.batch_size, cae.steps) == (128, 39000)
    gan = config.schedules.gan
    assert (gan.lr, gan.beta1, gan.beta2) == (0.0001, 0.0, 0.9)
    assert (gan.batch_size, gan.steps) == (32, 54000)
    assert config.schedules.finetune.steps == 37000
    assert config.model.ladder == "full"
    assert config.generate.prints_per_shard * config.generate.shard_count == 10**8


def test_document_overrides_preset(tmp_path):
    path = write_document(tmp_path / "c.json", {"corpus": {"count": 9}})
    config = load_config(path)
    assert config.corpus.count == 9
    assert config.corpus.extent == PRESETS["desk"]["corpus"]["extent"]


def test_cli_arguments_override_document(tmp_path):
    path = write_document(
        tmp_path / "c.json", {"seed": 5, "jobs": 2, "out_root": "doc-root"}
    )
    config = load_config(path, seed=9, jobs=3, out_root=str(tmp_path / "cli"))
    assert config.seed == 9
    assert config.jobs == 3
    assert config.out_root == str(tmp_path / "cli")


def test_env_overrides_out_root(tmp_path, monkeypatch):
    path = write_document(tmp_path / "c.json", {"out_root": "doc-root"})
    monkeypatch.setenv("PRINTFORGE_OUT", str(tmp_path / "env"))
    config = load_config(path, out_root=str(tmp_path / "cli"))
    assert config.out_root == str(tmp_path / "env")


def test_unknown_key_rejected(tmp_path):
    path = write_document(tmp_path / "c.json", {"corpus": {"counts": 5}})
    with pytest.raises(ConfigInvalid, match="corpus.counts"):
        load_config(path)


def test_section_must_be_object(tmp_path):
    path = write_document(tmp_path / "c.json", {"corpus": 5})
    with pytest.raises(ConfigInvalid, match="must be an object"):
        load_config(path)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigInvalid, match="unknown preset"):
        load_config(preset="huge")


def test_invalid_schedule_rejected(tmp_path):
    path = write_document(tmp_path / "c.json", {"schedules": {"cae": {"steps": -5}}})
    with pytest.raises(ConfigInvalid, match="schedules.cae"):
        load_config(path)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigInvalid, match="not valid JSON"):
        load_config(str(path))


def test_mates_must_fit_generated_prints(tmp_path):
    path = write_document(
        tmp_path / "c.json",
        {"generate": {"shard_count": 1, "prints_per_shard": 10}},
    )
    with pytest.raises(ConfigInvalid, match="mates"):
        load_config(path)


def test_schedule_seeds_derive_from_base_seed():
    config = load_config(seed=40)
    assert config.schedules.cae.seed == 41
    assert config.schedules.gan.seed == 42
    assert config.schedules.finetune.seed == 43
    assert config.schedules.encoder.seed == 44
    assert config.schedules.mixture.seed == 45


def test_snapshot_is_json_serializable():
    config = load_config()
    snapshot = config_snapshot(config)
    assert json.loads(json.dumps(snapshot)) == snapshot
    assert snapshot["preset"] == "desk"


# ---------------------------------------------------------------------------
# Manifest


def test_checksum_tracks_content(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"abc")
    first = file_checksum(path)
    assert first == file_checksum(path)
    path.write_bytes(b"abd")
    assert file_checksum(path) != first


def test_manifest_echoes_full_architecture(tmp_path):
    config = load_config(preset="full", out_root=str(tmp_path / "run"))
    manifest = RunManifest.create(config.out_root, config)
    stored = json.loads(
        (tmp_path / "run" / "manifest.json").read_text(encoding="utf-8")
    )
    constants = stored["configuration"]["training_constants"]
    assert constants["cae"] == {
        "lr": 0.0002, "beta1": 0.5, "beta2": 0.9,
        "batch_size": 128, "steps": 39000,
    }
    assert constants["gan"] == {
        "lr": 0.0001, "beta1": 0.0, "beta2": 0.9,
        "batch_size": 32, "steps": 54000,
    }
    assert constants["finetune_steps"] == 37000
    assert stored["configuration"]["generator_ladder"] == describe_ladder(
        LadderSpec.full()
    )
    assert manifest.verify() == {"missing": [], "corrupt": [], "unlisted": []}


def test_manifest_records_and_verifies(tmp_path):
    config = load_config(out_root=str(tmp_path / "run"))
    manifest = RunManifest.create(config.out_root, config)
    payload = tmp_path / "run" / "corpus" / "data.bin"
    payload.parent.mkdir(parents=True)
    payload.write_bytes(b"payload")
    manifest.record_stage("corpus", {"count": 1}, [payload], 0.25, {"note": 1})
    assert manifest.stage_status("corpus") == "done"
    reloaded = RunManifest.load(config.out_root)
    record = reloaded.stage_entry("corpus")["outputs"][0]
    assert record["path"] == "corpus/data.bin"
    assert record["bytes"] == 7
    assert record["valid"]
    assert reloaded.verify() == {"missing": [], "corrupt": [], "unlisted": []}

    stray = tmp_path / "run" / "stray.txt"
    stray.write_text("x", encoding="utf-8")
    assert reloaded.verify()["unlisted"] == ["stray.txt"]
    stray.unlink()

    payload.write_bytes(b"tampered")
    assert reloaded.verify()["corrupt"] == ["corpus/data.bin"]
    payload.unlink()
    assert reloaded.verify()["missing"] == ["corpus/data.bin"]


def test_manifest_failure_marks_outputs_invalid(tmp_path):
    config = load_config(out_root=str(tmp_path / "run"))
    manifest = RunManifest.create(config.out_root, config)
    partial = tmp_path / "run" / "gan" / "partial.npz"
    partial.parent.mkdir(parents=True)
    partial.write_bytes(b"half")
    manifest.record_failure("train-gan", {}, [partial], 1.0, RuntimeError("boom"))
    entry = manifest.stage_entry("train-gan")
    assert entry["status"] == "failed"
    assert entry["details"]["error"] == "boom"
    assert entry["outputs"][0]["valid"] is False
    assert manifest.verify()["corrupt"] == []


def test_manifest_load_requires_file(tmp_path):
    with pytest.raises(ManifestError):
        RunManifest.load(str(tmp_path / "nowhere"))


def test_manifest_save_leaves_no_temp_files(tmp_path):
    config = load_config(out_root=str(tmp_path / "run"))
    manifest = RunManifest.create(config.out_root, config)
    manifest.save()
    names = os.listdir(config.out_root)
    assert names == ["manifest.json"]


def test_architecture_echo_uses_config_ladder():
    config = load_config()
    echo = architecture_echo(config)
    assert echo["generator_ladder"] == describe_ladder(LadderSpec.desk())
    assert echo["preset"] == "desk"


# ---------------------------------------------------------------------------
# Stage DAG


def test_dependency_table_matches_source():
    config = load_config()
    assert stage_dependencies("corpus", config) == ()
    assert stage_dependencies("train-gan", config) == ("train-cae", "train-encoder")
    assert stage_dependencies("generate", config) == ("train-gan", "train-encoder")
    assert stage_dependencies("gallery-eval", config) == ("generate", "train-encoder")


def test_generate_depends_on_finetune_when_selected(tmp_path):
    path = write_document(tmp_path / "c.json", {"generate": {"source": "finetune"}})
    config = load_config(path)
    assert stage_dependencies("generate", config) == ("finetune", "train-encoder")


def test_unknown_stage_rejected():
    config = load_config()
    with pytest.raises(ValueError, match="unknown stage"):
        stage_dependencies("polish", config)
    with pytest.raises(ValueError, match="unknown stage"):
        run_stage("polish", config)


def test_metrics_before_corpus_is_missing_dependency(tmp_path):
    config = load_config(out_root=str(tmp_path / "run"))
    with pytest.raises(MissingDependency, match="corpus"):
        run_stage("metrics", config)


# ---------------------------------------------------------------------------
# Tiny end-to-end run (shared by the remaining tests)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("pipeline") / "run"
    doc_path = write_document(
        tmp_path_factory.mktemp("config") / "tiny.json", tiny_document(run_dir)
    )
    config = load_config(doc_path)
    for stage in STAGES:
        assert run_stage(stage, config) == "done"
    return config, str(run_dir), doc_path


def test_all_stages_recorded_and_complete(tiny_run):
    _, run_dir, _ = tiny_run
    manifest = RunManifest.load(run_dir)
    for stage in STAGES:
        assert manifest.stage_status(stage) == "done"
    assert manifest.verify() == {"missing": [], "corrupt": [], "unlisted": []}


def test_stage_artifacts_exist(tiny_run):
    _, run_dir, _ = tiny_run
    expected = [
        "corpus/manifest.json",
        "encoder/weights.npz",
        "encoder/log.csv",
        "cae/weights.npz",
        "gan/weights.npz",
        "gan/log.csv",
        "finetune/weights.npz",
        "shards/shard_000.fpgs",
        "shards/shard_001.fpgs",
        "metrics/report.json",
        "metrics/report.csv",
        "gallery/cmc.csv",
        "gallery/fold_ci.csv",
        "gallery/imposter.csv",
        "gallery/summary.json",
        "bench/latency.csv",
        "bench/summary.json",
    ]
    for rel in expected:
        assert os.path.exists(os.path.join(run_dir, rel)), rel


def test_stage_timing_recorded(tiny_run):
    _, run_dir, _ = tiny_run
    manifest = RunManifest.load(run_dir)
    for stage in STAGES:
        assert manifest.stage_entry(stage)["elapsed_s"] >= 0.0
    shards = manifest.stage_entry("generate")["details"]["shards"]
    assert [s["index"] for s in shards] == [0, 1]
    assert all(s["elapsed_s"] >= 0.0 for s in shards)


def test_completed_stage_skips_without_force(tiny_run):
    config, run_dir, _ = tiny_run
    before = RunManifest.load(run_dir).stage_entry("corpus")
    assert run_stage("corpus", config) == "skipped"
    after = RunManifest.load(run_dir).stage_entry("corpus")
    assert before == after


def test_forced_rerun_reproduces_corpus_checksums(tiny_run):
    config, run_dir, _ = tiny_run
    before = {
        r["path"]: r["sha256"]
        for r in RunManifest.load(run_dir).stage_entry("corpus")["outputs"]
    }
    assert run_stage("corpus", config, force=True) == "done"
    after = {
        r["path"]: r["sha256"]
        for r in RunManifest.load(run_dir).stage_entry("corpus")["outputs"]
    }
    assert before == after


def test_forced_rerun_reproduces_shard_bytes(tiny_run):
    config, run_dir, _ = tiny_run
    before = {
        r["path"]: r["sha256"]
        for r in RunManifest.load(run_dir).stage_entry("generate")["outputs"]
    }
    assert run_stage("generate", config, force=True) == "done"
    after = {
        r["path"]: r["sha256"]
        for r in RunManifest.load(run_dir).stage_entry("generate")["outputs"]
    }
    assert before == after


def test_stage_failure_recorded_then_recoverable(tiny_run, tmp_path):
    config, run_dir, doc_path = tiny_run
    doc = tiny_document(run_dir)
    doc["metrics"]["min_prints"] = 10_000
    bad_path = write_document(tmp_path / "bad.json", doc)
    bad_config = load_config(bad_path)
    with pytest.raises(StageFailure, match="metrics"):
        run_stage("metrics", bad_config, force=True)
    entry = RunManifest.load(run_dir).stage_entry("metrics")
    assert entry["status"] == "failed"
    assert "prints" in entry["details"]["error"]
    # a failed stage reruns without force
    assert run_stage("metrics", config) == "done"
    assert RunManifest.load(run_dir).stage_status("metrics") == "done"


# ---------------------------------------------------------------------------
# Reports


def test_reports_emit_csv_and_svg(tiny_run):
    _, run_dir, _ = tiny_run
    for kind in ("fig5-bars", "cmc", "imposter", "bench", "loss-curves"):
        paths = emit_report(kind, run_dir)
        assert [os.path.splitext(p)[1] for p in paths] == [".csv", ".svg"]
        for path in paths:
            assert os.path.getsize(path) > 0
    manifest = RunManifest.load(run_dir)
    assert manifest.stage_status("report-cmc") == "done"
    assert manifest.verify() == {"missing": [], "corrupt": [], "unlisted": []}


def test_indicator_report_has_eight_rows(tiny_run):
    _, run_dir, _ = tiny_run
    emit_report("fig5-bars", run_dir)
    with open(os.path.join(run_dir, "reports", "fig5-bars.csv")) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["indicator", "ref1", "average"]
    assert [r[0] for r in rows[1:]] == list("ABCDEFGH")


def test_imposter_report_carries_moments(tiny_run):
    _, run_dir, _ = tiny_run
    emit_report("imposter", run_dir)
    with open(os.path.join(run_dir, "reports", "imposter.csv")) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["bin_low", "bin_high", "count", "mean", "std"]
    with open(os.path.join(run_dir, "gallery", "summary.json")) as handle:
        summary = json.load(handle)
    means = {row[3] for row in rows[1:]}
    stds = {row[4] for row in rows[1:]}
    assert means == {f"{summary['imposter']['mean']:.6f}"}
    assert stds == {f"{summary['imposter']['std']:.6f}"}
    total = sum(int(row[2]) for row in rows[1:])
    assert total == summary["imposter"]["count"]


def test_cmc_report_matches_stage_output(tiny_run):
    config, run_dir, _ = tiny_run
    emit_report("cmc", run_dir)
    with open(os.path.join(run_dir, "reports", "cmc.csv")) as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:2] == ["rank", "accuracy"]
    assert len(rows) - 1 == config.gallery.n_max
    with open(os.path.join(run_dir, "gallery", "summary.json")) as handle:
        summary = json.load(handle)
    assert float(rows[1][1]) == pytest.approx(summary["rank1"], abs=1e-6)


def test_report_requires_completed_stage(tmp_path):
    config = load_config(out_root=str(tmp_path / "run"))
    RunManifest.create(config.out_root, config)
    with pytest.raises(MissingStage, match="gallery-eval"):
        emit_report("cmc", config.out_root)
    with pytest.raises(MissingStage, match="training"):
        emit_report("loss-curves", config.out_root)


def test_report_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown report kind"):
        emit_report("sparkline", str(tmp_path))


# ---------------------------------------------------------------------------
# Command line


def test_cli_exit_codes(tiny_run, tmp_path, capsys):
    config, run_dir, doc_path = tiny_run
    assert cli_main(["corpus", "--config", doc_path]) == 0
    assert "already done" in capsys.readouterr().out

    bad = tmp_path / "bad.json"
    bad.write_text("{broken", encoding="utf-8")
    assert cli_main(["corpus", "--config", str(bad)]) == 2

    fresh = str(tmp_path / "fresh")
    assert cli_main(["gallery-eval", "--config", doc_path, "--out", fresh]) == 3

    doc = tiny_document(run_dir)
    doc["metrics"]["min_prints"] = 10_000
    bad_metrics = write_document(tmp_path / "badmetrics.json", doc)
    assert cli_main(["metrics", "--config", bad_metrics, "--force"]) == 4
    # restore the good metrics stage for any later consumer
    assert cli_main(["metrics", "--config", doc_path, "--force"]) == 0


def test_cli_report_and_missing_run(tiny_run, tmp_path, capsys):
    _, run_dir, _ = tiny_run
    assert cli_main(["report", "bench", "--run", run_dir]) == 0
    out = capsys.readouterr().out
    assert "bench.csv" in out and "bench.svg" in out
    assert cli_main(["report", "bench", "--run", str(tmp_path / "ghost")]) == 3


def test_cli_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-m", "printforge.pipeline.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    for stage in STAGES:
        assert stage in proc.stdout
    assert "report" in proc.stdout
