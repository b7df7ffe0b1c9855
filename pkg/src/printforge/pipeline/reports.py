"""Report emission: CSV plus SVG renderings of completed stage outputs.

Reports read only what stages already wrote; a report whose source
stage has not completed raises MissingStage rather than recomputing
anything.  Every emitted file lands under ``reports/`` in the run
directory and is recorded in the manifest like any stage output.
"""

from __future__ import annotations

import csv
import json
import os
import time

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "printforge"

import matplotlib.pyplot as plt

from .manifest import RunManifest
from .stages import STAGE_DIRS


class MissingStage(Exception):
    """The stage a report reads from has not completed in this run."""


REPORT_KINDS = ("fig5-bars", "cmc", "imposter", "bench", "loss-curves")


def _require_done(manifest, stage, kind):
    if manifest.stage_status(stage) != "done":
        raise MissingStage(
            f"report {kind!r} needs stage {stage!r} completed in {manifest.run_dir}"
        )


def _reports_dir(run_dir):
    out = os.path.join(run_dir, "reports")
    os.makedirs(out, exist_ok=True)
    return out


def _save_figure(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# Individual report builders


def _report_indicator_bars(run_dir, out_dir):
    source = os.path.join(run_dir, STAGE_DIRS["metrics"], "report.json")
    with open(source, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    rows = doc["rows"]
    n_refs = len(rows[0]["ks"]) if rows else 0

    csv_path = os.path.join(out_dir, "fig5-bars.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["indicator"] + [f"ref{i + 1}" for i in range(n_refs)] + ["average"]
        )
        for row in rows:
            writer.writerow(
                [row["indicator"]]
                + [f"{v:.6f}" for v in row["ks"]]
                + [f"{row['mean']:.6f}"]
            )

    fig, ax = plt.subplots(figsize=(8, 4))
    indicators = [row["indicator"] for row in rows]
    width = 0.8 / (n_refs + 1)
    for i in range(n_refs):
        xs = [j + i * width for j in range(len(rows))]
        ax.bar(xs, [row["ks"][i] for row in rows], width=width,
               label=f"reference {i + 1}")
    xs = [j + n_refs * width for j in range(len(rows))]
    ax.bar(xs, [row["mean"] for row in rows], width=width, color="black",
           label="average")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(rows))])
    ax.set_xticklabels(indicators)
    ax.set_xlabel("indicator")
    ax.set_ylabel("KS statistic")
    ax.set_title("Realism indicators vs references")
    ax.legend(fontsize=8)
    svg_path = os.path.join(out_dir, "fig5-bars.svg")
    _save_figure(fig, svg_path)
    return [csv_path, svg_path]


def _report_cmc(run_dir, out_dir):
    gallery_dir = os.path.join(run_dir, STAGE_DIRS["gallery-eval"])
    _, cmc_rows = _read_csv(os.path.join(gallery_dir, "cmc.csv"))
    _, fold_rows = _read_csv(os.path.join(gallery_dir, "fold_ci.csv"))
    ranks = [int(r[0]) for r in cmc_rows]
    accs = [float(r[1]) for r in cmc_rows]
    fold = {int(r[0]): (float(r[1]), float(r[2]), float(r[3])) for r in fold_rows}

    csv_path = os.path.join(out_dir, "cmc.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rank", "accuracy", "fold_mean", "fold_lower", "fold_upper"])
        for rank, acc in zip(ranks, accs):
            mean, lower, upper = fold.get(rank, (acc, acc, acc))
            writer.writerow(
                [rank, f"{acc:.6f}", f"{mean:.6f}", f"{lower:.6f}", f"{upper:.6f}"]
            )

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ranks, accs, marker="o", markersize=3, label="identification rate")
    if fold:
        fr = sorted(fold)
        ax.fill_between(
            fr,
            [fold[r][1] for r in fr],
            [fold[r][2] for r in fr],
            alpha=0.25,
            label="fold 95% interval",
        )
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Cumulative match characteristic")
    ax.legend(fontsize=8)
    svg_path = os.path.join(out_dir, "cmc.svg")
    _save_figure(fig, svg_path)
    return [csv_path, svg_path]


def _report_imposter(run_dir, out_dir):
    gallery_dir = os.path.join(run_dir, STAGE_DIRS["gallery-eval"])
    _, bins = _read_csv(os.path.join(gallery_dir, "imposter.csv"))
    with open(os.path.join(gallery_dir, "summary.json"), "r", encoding="utf-8") as handle:
        summary = json.load(handle)
    mean = summary["imposter"]["mean"]
    std = summary["imposter"]["std"]

    csv_path = os.path.join(out_dir, "imposter.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_low", "bin_high", "count", "mean", "std"])
        for lo, hi, count in bins:
            writer.writerow([lo, hi, count, f"{mean:.6f}", f"{std:.6f}"])

    fig, ax = plt.subplots(figsize=(6, 4))
    lows = [float(b[0]) for b in bins]
    highs = [float(b[1]) for b in bins]
    counts = [int(b[2]) for b in bins]
    widths = [hi - lo for lo, hi in zip(lows, highs)]
    ax.bar(lows, counts, width=widths, align="edge", edgecolor="white")
    ax.axvline(mean, color="black", linestyle="--",
               label=f"mean {mean:.3f} (std {std:.3f})")
    ax.set_xlabel("imposter score")
    ax.set_ylabel("pair count")
    ax.set_title("Imposter score distribution")
    ax.legend(fontsize=8)
    svg_path = os.path.join(out_dir, "imposter.svg")
    _save_figure(fig, svg_path)
    return [csv_path, svg_path]


def _report_bench(run_dir, out_dir):
    header, rows = _read_csv(
        os.path.join(run_dir, STAGE_DIRS["bench"], "latency.csv")
    )
    csv_path = os.path.join(out_dir, "bench.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)

    parsed = [
        {"size": int(r[0]), "threads": int(r[1]),
         "mean_ms": float(r[2]), "p95_ms": float(r[3])}
        for r in rows
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    for threads in sorted({r["threads"] for r in parsed}):
        sub = [r for r in parsed if r["threads"] == threads]
        sub.sort(key=lambda r: r["size"])
        sizes = [r["size"] for r in sub]
        ax.plot(sizes, [r["mean_ms"] for r in sub], marker="o",
                label=f"{threads} thread{'s' if threads > 1 else ''} (mean)")
        ax.plot(sizes, [r["p95_ms"] for r in sub], linestyle="--", alpha=0.6,
                label=f"{threads} thread{'s' if threads > 1 else ''} (p95)")
    ax.set_xscale("log")
    ax.set_xlabel("gallery size")
    ax.set_ylabel("latency per probe (ms)")
    ax.set_title("Search latency")
    ax.legend(fontsize=8)
    svg_path = os.path.join(out_dir, "bench.svg")
    _save_figure(fig, svg_path)
    return [csv_path, svg_path]


_LOSS_SOURCES = (
    ("train-cae", "cae"),
    ("train-encoder", "encoder"),
    ("train-gan", "gan"),
    ("finetune", "finetune"),
)


def _report_loss_curves(run_dir, manifest, out_dir):
    available = []
    for stage, label in _LOSS_SOURCES:
        if manifest.stage_status(stage) != "done":
            continue
        log_path = os.path.join(run_dir, STAGE_DIRS[stage], "log.csv")
        if os.path.exists(log_path):
            header, rows = _read_csv(log_path)
            available.append((label, header, rows))
    if not available:
        raise MissingStage(
            f"report 'loss-curves' needs at least one completed training stage "
            f"in {run_dir}"
        )

    csv_path = os.path.join(out_dir, "loss-curves.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["stage", "step", "metric", "value"])
        for label, header, rows in available:
            for row in rows:
                for name, value in zip(header[1:], row[1:]):
                    writer.writerow([label, row[0], name, value])

    fig, axes = plt.subplots(
        len(available), 1, figsize=(6, 2.4 * len(available)), squeeze=False
    )
    for ax, (label, header, rows) in zip(axes[:, 0], available):
        steps = [int(r[0]) for r in rows]
        for i, name in enumerate(header[1:], start=1):
            ax.plot(steps, [float(r[i]) for r in rows], label=name, linewidth=1)
        ax.set_ylabel(label)
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("step")
    axes[0, 0].set_title("Training losses")
    fig.tight_layout()
    svg_path = os.path.join(out_dir, "loss-curves.svg")
    _save_figure(fig, svg_path)
    return [csv_path, svg_path]


def emit_report(kind, run_dir):
    """Write one report kind; returns the emitted file paths."""
    if kind not in REPORT_KINDS:
        raise ValueError(
            f"unknown report kind {kind!r}; expected one of {REPORT_KINDS}"
        )
    manifest = RunManifest.load(run_dir)
    out_dir = _reports_dir(run_dir)
    start = time.perf_counter()
    if kind == "fig5-bars":
        _require_done(manifest, "metrics", kind)
        paths = _report_indicator_bars(run_dir, out_dir)
    elif kind == "cmc":
        _require_done(manifest, "gallery-eval", kind)
        paths = _report_cmc(run_dir, out_dir)
    elif kind == "imposter":
        _require_done(manifest, "gallery-eval", kind)
        paths = _report_imposter(run_dir, out_dir)
    elif kind == "bench":
        _require_done(manifest, "bench", kind)
        paths = _report_bench(run_dir, out_dir)
    else:
        paths = _report_loss_curves(run_dir, manifest, out_dir)
    manifest.record_stage(
        f"report-{kind}",
        {"kind": kind},
        paths,
        time.perf_counter() - start,
        {"files": [os.path.basename(p) for p in paths]},
    )
    return paths
