"""Shard format, exact search, CMC/fold protocol, imposter statistics."""

import csv
import struct

import numpy as np
import pytest

from printforge.gallery import (
    CMCCurve,
    DimMismatch,
    DuplicateId,
    EmptyGallery,
    Gallery,
    MissingMate,
    ShardFormatError,
    SingleIdentity,
    TooFewFolds,
    benchmark_throughput,
    build_shard,
    ci_from_fold_accuracies,
    fold_confidence_interval,
    imposter_distribution,
    load_shard,
    mate_ranks,
    rank_n_accuracy,
    save_latency_csv,
    score_statistics,
    search_batch,
    search_topk,
    write_shard,
)


def unit_rows(rng, n, d):
    v = rng.normal(size=(n, d))
    return (v / np.linalg.norm(v, axis=1, keepdims=True)).astype(np.float32)


# ---------------------------------------------------------------------------
# Shard format


def test_shard_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ids = rng.permutation(10_000)[:1000].astype(np.uint64)
    vectors = rng.normal(size=(1000, 24)).astype(np.float32)
    path = tmp_path / "round.fpgs"
    write_shard(path, ids, vectors)
    got_ids, got_vectors = load_shard(path)
    assert got_ids.dtype == np.uint64
    assert got_vectors.dtype == np.float32
    assert np.array_equal(got_ids, ids)
    assert got_vectors.tobytes() == vectors.tobytes()


def test_empty_shard_roundtrip(tmp_path):
    path = tmp_path / "empty.fpgs"
    write_shard(path, np.empty(0, dtype=np.uint64), np.empty((0, 8), dtype=np.float32))
    ids, vectors = load_shard(path)
    assert ids.shape == (0,)
    assert vectors.shape == (0, 8)


def test_shard_rejects_duplicate_ids(tmp_path):
    with pytest.raises(DuplicateId):
        write_shard(
            tmp_path / "dup.fpgs",
            np.array([1, 2, 2], dtype=np.uint64),
            np.zeros((3, 4), dtype=np.float32),
        )


def test_build_shard_rejects_mixed_dims(tmp_path):
    records = [(1, np.zeros(4)), (2, np.zeros(5))]
    with pytest.raises(DimMismatch):
        build_shard(records, tmp_path / "mixed.fpgs")


def test_build_shard_from_records(tmp_path):
    records = [(7, np.array([1.0, 0.0])), (3, np.array([0.0, 1.0]))]
    path = build_shard(records, tmp_path / "rec.fpgs")
    ids, vectors = load_shard(path)
    assert ids.tolist() == [7, 3]
    assert vectors.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_corrupted_payload_is_detected(tmp_path):
    path = tmp_path / "corrupt.fpgs"
    write_shard(
        path,
        np.arange(4, dtype=np.uint64),
        np.ones((4, 3), dtype=np.float32),
    )
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF  # flip one payload byte, leaving the length intact
    path.write_bytes(bytes(raw))
    with pytest.raises(ShardFormatError):
        load_shard(path)


def test_truncated_shard_is_detected(tmp_path):
    path = tmp_path / "trunc.fpgs"
    write_shard(
        path,
        np.arange(4, dtype=np.uint64),
        np.ones((4, 3), dtype=np.float32),
    )
    raw = path.read_bytes()
    path.write_bytes(raw[:-6])
    with pytest.raises(ShardFormatError):
        load_shard(path)


def test_wrong_magic_is_detected(tmp_path):
    path = tmp_path / "magic.fpgs"
    path.write_bytes(struct.pack("<4sHHQ", b"NOPE", 1, 4, 0) + b"\0" * 4)
    with pytest.raises(ShardFormatError):
        load_shard(path)


def test_gallery_from_paths_matches_arrays(tmp_path):
    rng = np.random.default_rng(5)
    parts = []
    paths = []
    for i in range(3):
        ids = np.arange(i * 10, i * 10 + 10, dtype=np.uint64)
        vectors = rng.normal(size=(10, 6)).astype(np.float32)
        parts.append((ids, vectors))
        p = tmp_path / f"s{i}.fpgs"
        write_shard(p, ids, vectors)
        paths.append(p)
    from_disk = Gallery.from_paths(paths)
    from_mem = Gallery.from_arrays(parts)
    probe = rng.normal(size=6)
    assert search_topk(probe, from_disk, 5) == search_topk(probe, from_mem, 5)


# ---------------------------------------------------------------------------
# Exact search


def anchor_gallery():
    ids = np.array([7, 3, 9], dtype=np.uint64)
    vectors = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]], dtype=np.float32)
    return Gallery.from_arrays([(ids, vectors)])


def test_search_anchor_case():
    g = anchor_gallery()
    assert search_topk([1.0, 0.0], g, 1) == [(7, 1.0)]
    top2 = search_topk([1.0, 0.0], g, 2)
    assert top2[0] == (7, 1.0)
    assert top2[1][0] == 9
    assert top2[1][1] == pytest.approx(0.6)


def test_search_breaks_score_ties_by_id():
    ids = np.array([12, 4, 30], dtype=np.uint64)
    vectors = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    g = Gallery.from_arrays([(ids, vectors)])
    result = search_topk([1.0, 0.0], g, 3)
    assert [r[0] for r in result] == [4, 12, 30]


def test_boundary_tie_keeps_smallest_ids():
    # four records tie at the k-th score; the kept set must not depend
    # on partition internals or on how rows are split across shards
    ids = np.array([50, 10, 40, 20, 30, 60], dtype=np.uint64)
    vectors = np.array(
        [[1.0, 0.0]] * 4 + [[0.5, 0.0], [0.0, 1.0]], dtype=np.float32
    )
    whole = Gallery.from_arrays([(ids, vectors)])
    split = Gallery.from_arrays(
        [(ids[:2], vectors[:2]), (ids[2:4], vectors[2:4]), (ids[4:], vectors[4:])]
    )
    for g in (whole, split):
        result = search_topk([1.0, 0.0], g, 2)
        assert [r[0] for r in result] == [10, 20]


def test_sharded_and_threaded_results_are_identical():
    rng = np.random.default_rng(11)
    ids = rng.permutation(5000)[:2000].astype(np.uint64)
    vectors = unit_rows(rng, 2000, 16)
    whole = Gallery.from_arrays([(ids, vectors)])
    split = Gallery.from_arrays(
        [
            (ids[:700], vectors[:700]),
            (ids[700:1100], vectors[700:1100]),
            (ids[1100:], vectors[1100:]),
        ]
    )
    probes = unit_rows(rng, 50, 16)
    for probe in probes:
        serial = search_topk(probe, whole, 10)
        sharded = search_topk(probe, split, 10)
        threaded = search_topk(probe, split, 10, workers=4)
        assert serial == sharded == threaded


def test_full_ranking_matches_sort_oracle():
    rng = np.random.default_rng(21)
    ids = np.arange(300, dtype=np.uint64)
    vectors = unit_rows(rng, 300, 8)
    g = Gallery.from_arrays([(ids[:150], vectors[:150]), (ids[150:], vectors[150:])])
    probe = unit_rows(rng, 1, 8)[0]
    scores = vectors.astype(np.float64) @ probe.astype(np.float64)
    order = np.lexsort((ids, -scores))
    expected = [(int(ids[i]), float(scores[i])) for i in order]
    assert search_topk(probe, g, 300) == expected
    # k beyond the gallery size clamps to the full ranking
    assert search_topk(probe, g, 5000) == expected


def test_search_rejects_empty_and_bad_k():
    g = Gallery.from_arrays(
        [(np.empty(0, dtype=np.uint64), np.empty((0, 4), dtype=np.float32))]
    )
    with pytest.raises(EmptyGallery):
        search_topk([1.0, 0.0, 0.0, 0.0], g, 1)
    with pytest.raises(ValueError):
        search_topk([1.0, 0.0], anchor_gallery(), 0)


def test_search_batch_matches_individual_calls():
    rng = np.random.default_rng(31)
    ids = np.arange(400, dtype=np.uint64)
    vectors = unit_rows(rng, 400, 12)
    g = Gallery.from_arrays([(ids, vectors)])
    probes = unit_rows(rng, 20, 12)
    batch = search_batch(probes, g, 5)
    threaded = search_batch(probes, g, 5, workers=3)
    singles = [search_topk(p, g, 5) for p in probes]
    assert batch == singles
    assert threaded == singles


def test_mixed_shard_dims_rejected():
    with pytest.raises(ValueError):
        Gallery.from_arrays(
            [
                (np.array([1], dtype=np.uint64), np.zeros((1, 4), dtype=np.float32)),
                (np.array([2], dtype=np.uint64), np.zeros((1, 5), dtype=np.float32)),
            ]
        )


# ---------------------------------------------------------------------------
# CMC protocol


def test_identical_probes_rank_first():
    rng = np.random.default_rng(41)
    ids = np.arange(200, dtype=np.uint64)
    vectors = unit_rows(rng, 200, 16)
    g = Gallery.from_arrays([(ids, vectors)])
    probes = vectors[:30]
    curve = rank_n_accuracy(probes, ids[:30], g, 10)
    assert np.all(curve.accuracies == 1.0)
    assert curve.at(1) == 1.0


def test_cmc_matches_score_matrix_oracle():
    rng = np.random.default_rng(43)
    n, d = 120, 10
    ids = np.arange(n, dtype=np.uint64)
    vectors = unit_rows(rng, n, d)
    g = Gallery.from_arrays([(ids[:60], vectors[:60]), (ids[60:], vectors[60:])])
    mates = np.arange(25, dtype=np.uint64)
    probes = unit_rows(rng, 25, d) * 0.2 + vectors[:25] * 0.8
    n_max = 15
    curve = rank_n_accuracy(probes, mates, g, n_max)

    scores = probes.astype(np.float64) @ vectors.astype(np.float64).T
    oracle = np.zeros(n_max)
    for i in range(25):
        order = np.lexsort((ids, -scores[i]))
        where = np.nonzero(ids[order] == mates[i])[0][0] + 1
        if where <= n_max:
            oracle[where - 1 :] += 1
    oracle /= 25
    assert np.allclose(curve.accuracies, oracle)


def test_cmc_is_monotone_and_handles_missing_ranks():
    rng = np.random.default_rng(47)
    ids = np.arange(500, dtype=np.uint64)
    vectors = unit_rows(rng, 500, 8)
    g = Gallery.from_arrays([(ids, vectors)])
    probes = unit_rows(rng, 40, 8)
    curve = rank_n_accuracy(probes, ids[:40], g, 20)
    assert np.all(np.diff(curve.accuracies) >= 0)
    assert np.all(curve.accuracies <= 1.0)


def test_missing_mate_is_rejected():
    g = anchor_gallery()
    with pytest.raises(MissingMate):
        mate_ranks(np.array([[1.0, 0.0]]), [999], g, 2)


def test_more_distractors_never_help():
    rng = np.random.default_rng(53)
    d = 16
    mates = unit_rows(rng, 50, d)
    probes = (mates + 0.6 * unit_rows(rng, 50, d)).astype(np.float32)
    mate_ids = np.arange(50, dtype=np.uint64)
    accs = []
    for extra in (100, 1000, 5000):
        distract = unit_rows(rng, extra, d)
        ids = np.concatenate([mate_ids, np.arange(1000_000, 1000_000 + extra, dtype=np.uint64)])
        vectors = np.concatenate([mates, distract])
        g = Gallery.from_arrays([(ids, vectors)])
        accs.append(rank_n_accuracy(probes, mate_ids, g, 5).at(1))
    assert accs[0] >= accs[1] >= accs[2]


# ---------------------------------------------------------------------------
# Fold confidence intervals


def test_identical_folds_have_zero_width():
    ci = ci_from_fold_accuracies([[0.8, 0.9], [0.8, 0.9], [0.8, 0.9]])
    assert np.allclose(ci.mean, [0.8, 0.9])
    assert np.allclose(ci.lower, ci.mean)
    assert np.allclose(ci.upper, ci.mean)
    assert ci.fold_count == 3


def test_two_fold_interval_anchor():
    ci = ci_from_fold_accuracies([0.9, 1.0])
    assert ci.mean[0] == pytest.approx(0.95)
    assert ci.lower[0] == pytest.approx(0.852, abs=5e-4)
    assert ci.upper[0] == 1.0  # clamped


def test_too_few_folds_rejected():
    with pytest.raises(TooFewFolds):
        ci_from_fold_accuracies([[0.9]])
    with pytest.raises(TooFewFolds):
        fold_confidence_interval(
            np.ones((1, 2), dtype=np.float32),
            [0],
            [
                (
                    np.array([0], dtype=np.uint64),
                    np.ones((1, 2), dtype=np.float32),
                )
            ],
            1,
        )


def test_fold_protocol_end_to_end():
    rng = np.random.default_rng(61)
    d = 8
    mates = unit_rows(rng, 20, d)
    probes = (mates + 0.3 * unit_rows(rng, 20, d)).astype(np.float32)
    mate_ids = np.arange(20, dtype=np.uint64)
    folds = []
    for f in range(4):
        distract = unit_rows(rng, 200, d)
        ids = np.concatenate(
            [mate_ids, np.arange(1000 + f * 500, 1200 + f * 500, dtype=np.uint64)]
        )
        folds.append((ids, np.concatenate([mates, distract])))
    ci = fold_confidence_interval(probes, mate_ids, folds, 5)
    assert ci.fold_count == 4
    assert ci.ranks.tolist() == [1, 2, 3, 4, 5]
    assert np.all(ci.lower <= ci.mean + 1e-12)
    assert np.all(ci.mean <= ci.upper + 1e-12)
    assert np.all((0 <= ci.lower) & (ci.upper <= 1))


# ---------------------------------------------------------------------------
# Imposter statistics


def test_score_statistics_anchors():
    flat = score_statistics([0.0, 0.0, 0.0])
    assert (flat.mean, flat.std) == (0.0, 0.0)
    simple = score_statistics([1.0, 2.0, 3.0])
    assert simple.mean == 2.0
    assert simple.std == 1.0
    assert simple.bin_counts.sum() == 3


def test_imposter_enumeration_matches_manual_pairs():
    rng = np.random.default_rng(71)
    emb = unit_rows(rng, 10, 6).astype(np.float64)
    identities = np.arange(10)
    stats = imposter_distribution(emb, identities, n_pairs=0)
    manual = [
        float(emb[i] @ emb[j]) for i in range(10) for j in range(i + 1, 10)
    ]
    assert stats.count == 45
    assert stats.mean == pytest.approx(np.mean(manual))
    assert stats.std == pytest.approx(np.std(manual, ddof=1))
    assert stats.bin_counts.sum() == 45


def test_imposter_skips_genuine_pairs():
    emb = np.array(
        [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], dtype=np.float64
    )
    identities = np.array([0, 0, 1, 1])
    stats = imposter_distribution(emb, identities, n_pairs=0)
    # only the four cross-identity pairs remain, all orthogonal
    assert stats.count == 4
    assert stats.mean == 0.0


def test_imposter_relabeling_invariance():
    rng = np.random.default_rng(73)
    emb = unit_rows(rng, 12, 5).astype(np.float64)
    identities = np.repeat([0, 1, 2], 4)
    a = imposter_distribution(emb, identities, n_pairs=0)
    b = imposter_distribution(emb, identities + 100, n_pairs=0)
    assert (a.count, a.mean, a.std) == (b.count, b.mean, b.std)


def test_imposter_sampling_mode():
    rng = np.random.default_rng(79)
    emb = unit_rows(rng, 30, 8).astype(np.float64)
    identities = np.repeat(np.arange(10), 3)
    stats = imposter_distribution(emb, identities, n_pairs=500, seed=1)
    assert stats.count == 500
    assert -1.0 - 1e-9 <= stats.mean <= 1.0 + 1e-9
    again = imposter_distribution(emb, identities, n_pairs=500, seed=1)
    assert stats.mean == again.mean


def test_imposter_rejects_single_identity():
    with pytest.raises(SingleIdentity):
        imposter_distribution(np.eye(3), np.zeros(3), n_pairs=0)
    with pytest.raises(ValueError):
        imposter_distribution(np.eye(3), np.zeros(2), n_pairs=0)


# ---------------------------------------------------------------------------
# Reports and benchmarking


def test_csv_writers_roundtrip(tmp_path):
    curve = CMCCurve(accuracies=np.array([0.5, 0.75, 1.0]))
    curve.save_csv(tmp_path / "cmc.csv")
    with open(tmp_path / "cmc.csv") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["rank", "accuracy"]
    assert rows[1] == ["1", "0.500000"]
    assert len(rows) == 4

    ci = ci_from_fold_accuracies([[0.9, 1.0], [1.0, 1.0]])
    ci.save_csv(tmp_path / "ci.csv")
    with open(tmp_path / "ci.csv") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["rank", "mean", "lower", "upper"]

    stats = score_statistics([0.1, 0.2, 0.3])
    stats.save_csv(tmp_path / "imposter.csv")
    with open(tmp_path / "imposter.csv") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["bin_low", "bin_high", "count"]
    assert sum(int(r[2]) for r in rows[1:]) == 3


def test_benchmark_rows_schema(tmp_path):
    rng = np.random.default_rng(83)
    ids = np.arange(256, dtype=np.uint64)
    vectors = unit_rows(rng, 256, 8)
    g = Gallery.from_arrays([(ids, vectors)])
    probes = unit_rows(rng, 3, 8)
    rows = benchmark_throughput(
        g, probes, sizes=(64, 256), repetitions=1, thread_counts=(1,)
    )
    assert len(rows) == 2
    for row in rows:
        assert set(row) == {"size", "threads", "mean_ms", "p95_ms"}
        assert row["mean_ms"] > 0
        assert row["p95_ms"] >= row["mean_ms"] - 1e-9
    assert [r["size"] for r in rows] == [64, 256]
    save_latency_csv(rows, tmp_path / "lat.csv")
    with open(tmp_path / "lat.csv") as handle:
        parsed = list(csv.reader(handle))
    assert parsed[0] == ["size", "threads", "mean_ms", "p95_ms"]
    assert len(parsed) == 3


def test_benchmark_rejects_undersized_gallery():
    rng = np.random.default_rng(89)
    ids = np.arange(32, dtype=np.uint64)
    g = Gallery.from_arrays([(ids, unit_rows(rng, 32, 4))])
    with pytest.raises(ValueError):
        benchmark_throughput(g, unit_rows(rng, 2, 4), sizes=(64,), repetitions=1)
