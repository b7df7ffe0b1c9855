"""Generator stack: latent sampling, architectures, losses, training."""

import numpy as np
import pytest

from printforge.autodiff import (
    AdamState,
    adam_step,
    constant,
    derive,
    evaluate,
    parameter,
)
from printforge.synthesis import (
    ArchitectureMismatch,
    DegenerateBatch,
    InsufficientLabels,
    LadderSpec,
    MlpSpec,
    TrainSchedule,
    batch_spread,
    cae_schedule,
    conv_architecture,
    describe_ladder,
    embed_images,
    finetune_schedule,
    gan_schedule,
    generate_all_shards,
    generate_shard,
    gradient_penalty,
    identity_loss,
    init_generator_from_decoder,
    init_weights,
    mixture_schedule,
    mlp_architecture,
    pairwise_distance_sum,
    parameter_shapes,
    reconstruction_loss,
    sample_latent,
    sample_ring_mixture,
    train_cae,
    train_identity_encoder,
    train_iwgan,
    trainable_names,
    SynthesisJobSpec,
)
from printforge.gallery import load_shard


# ---------------------------------------------------------------------------
# Latent sampling


def test_latent_moments():
    z = sample_latent(7, 200, dim=512)
    assert z.shape == (200, 512)
    assert abs(z.mean()) < 0.02
    assert 0.95 < z.var() < 1.05


def test_latent_deterministic_and_validated():
    assert np.array_equal(sample_latent(3, 10), sample_latent(3, 10))
    assert not np.array_equal(sample_latent(3, 10), sample_latent(4, 10))
    assert sample_latent(0, 0).shape == (0, 512)
    with pytest.raises(ValueError):
        sample_latent(0, -1)
    with pytest.raises(ValueError):
        sample_latent(0, 4, dim=0)


# ---------------------------------------------------------------------------
# Architecture ladder


def test_full_ladder_description():
    rows = describe_ladder(LadderSpec.full())
    assert rows[0] == {"operation": "input", "output_size": [512]}
    assert rows[1] == {"operation": "fully_connected", "output_size": [16384]}
    assert rows[2] == {"operation": "reshape", "output_size": [4, 4, 1024]}
    deconvs = rows[3:]
    sizes = [r["output_size"] for r in deconvs]
    assert sizes == [
        [8, 8, 512],
        [16, 16, 256],
        [32, 32, 128],
        [64, 64, 64],
        [128, 128, 32],
        [256, 256, 16],
        [512, 512, 1],
    ]
    assert all(r["operation"] == "deconvolution" for r in deconvs)
    assert all(r["filter_size"] == [4, 4] for r in deconvs)


def test_ladder_spec_validation():
    with pytest.raises(ValueError):
        LadderSpec(16, 500, 4, 32, (16, 1), 16, 16)  # fc_width mismatch
    with pytest.raises(ValueError):
        LadderSpec(16, 512, 4, 32, (16, 1), 32, 16)  # extent mismatch
    with pytest.raises(ValueError):
        LadderSpec(16, 512, 4, 32, (16, 2), 16, 16)  # last channel not 1


def test_parameter_shapes_cover_both_parts():
    spec = LadderSpec.desk()
    gen = parameter_shapes(spec, "gen")
    dis = parameter_shapes(spec, "dis")
    assert gen["gen/fc/w"] == (64, 4096)
    assert gen["gen/deconv0/k"] == (256, 128, 4, 4)
    assert dis["dis/conv0/k"] == (32, 1, 4, 4)
    assert dis["dis/fc/w"] == (4096, 1)
    # the final generator layer feeds tanh directly, so it has no norm
    assert not any(k.startswith("gen/bn3") for k in gen)
    # the first critic layer sees raw images, so it has no norm either
    assert not any(k.startswith("dis/bn0") for k in dis)


def test_init_weights_statistics_and_determinism():
    spec = LadderSpec.desk()
    shapes = parameter_shapes(spec, "gen")
    w = init_weights(shapes, seed=5)
    again = init_weights(shapes, seed=5)
    assert all(np.array_equal(w[k], again[k]) for k in w)
    kernels = np.concatenate(
        [w[k].ravel() for k in w if k.endswith("/k") or k.endswith("/w")]
    )
    assert kernels.size > 100_000
    assert abs(kernels.std() - 0.02) < 0.0005
    assert abs(kernels.mean()) < 0.0005
    for k in w:
        if k.endswith("/var"):
            assert np.all(w[k] == 1.0)
        if k.endswith("/beta") or k.endswith("/mean"):
            assert np.all(w[k] == 0.0)


def test_trainable_names_drop_running_stats():
    names = ["gen/fc/w", "gen/bn_fc/mean", "gen/bn_fc/var", "gen/bn_fc/gamma"]
    assert trainable_names(names) == ["gen/fc/w", "gen/bn_fc/gamma"]


# ---------------------------------------------------------------------------
# Losses


def brute_force_identity(batch, eps_id=1e-6):
    total = 0.0
    n = len(batch)
    for i in range(n):
        for j in range(i + 1, n):
            total += np.linalg.norm(batch[i] - batch[j])
    return 1.0 / (total + eps_id)


def test_identity_loss_closed_forms():
    two = constant(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert evaluate(identity_loss(two), {}, precision="float64") == pytest.approx(
        1 / np.sqrt(2), abs=1e-6
    )
    three = constant(np.eye(3))
    assert evaluate(identity_loss(three), {}, precision="float64") == pytest.approx(
        1 / (3 * np.sqrt(2)), abs=1e-6
    )
    # with the epsilon removed only the 1e-12 distance lift remains
    assert evaluate(
        identity_loss(two, eps_id=0.0), {}, precision="float64"
    ) == pytest.approx(1 / np.sqrt(2), abs=1e-9)


def test_identity_loss_collapsed_batch():
    col = constant(np.ones((4, 3)))
    got = evaluate(identity_loss(col), {}, precision="float64")
    # six pairs, each lifted to a distance of 1e-6
    assert got == pytest.approx(1.0 / (6e-6 + 1e-6), rel=1e-12)
    assert got > 1e5


def test_identity_loss_matches_pair_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(30):
        n = int(rng.integers(2, 65))
        d = int(rng.integers(1, 16))
        batch = rng.normal(0, 1, size=(n, d))
        got = evaluate(identity_loss(constant(batch)), {}, precision="float64")
        assert got == pytest.approx(brute_force_identity(batch), abs=1e-6)


def test_identity_loss_rejects_single_row():
    with pytest.raises(DegenerateBatch):
        pairwise_distance_sum(constant(np.ones((1, 4))))


def test_identity_loss_gradient_finite_with_duplicate_rows():
    x = parameter("x", (3, 2))
    g = derive(identity_loss(x), x)
    val = evaluate(g, {"x": np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])})
    assert np.all(np.isfinite(val))


def test_identity_gradient_step_spreads_batch():
    rng = np.random.default_rng(1)
    pts = rng.normal(0, 0.01, size=(8, 2))
    x = parameter("x", pts.shape)
    loss = identity_loss(x)
    g = derive(loss, x)
    spread0 = evaluate(pairwise_distance_sum(x), {"x": pts}, precision="float64")
    grad = evaluate(g, {"x": pts}, precision="float64")
    stepped = pts - 1e-8 * grad
    spread1 = evaluate(pairwise_distance_sum(x), {"x": stepped}, precision="float64")
    assert spread1 > spread0


def test_reconstruction_loss_values():
    x = constant(np.full((2, 3), 2.0))
    same = evaluate(reconstruction_loss(x, x), {}, precision="float64")
    assert same == 0.0
    y = constant(np.full((2, 3), 3.0))
    assert evaluate(reconstruction_loss(x, y), {}, precision="float64") == 1.0


def test_gradient_penalty_closed_forms():
    w = np.array([[0.6], [0.8]])

    def unit_critic(x):
        from printforge.autodiff import matmul

        return matmul(x, constant(w))

    batch = np.random.default_rng(0).normal(size=(5, 2))
    node = gradient_penalty(unit_critic, batch, batch + 1.0)
    assert evaluate(node, {}, precision="float64") == pytest.approx(0.0, abs=1e-10)

    def three_critic(x):
        from printforge.autodiff import matmul

        return matmul(x, constant(3.0 * w))

    node3 = gradient_penalty(three_critic, batch, batch + 1.0, weight=10.0)
    assert evaluate(node3, {}, precision="float64") == pytest.approx(40.0, rel=1e-9)


def test_gradient_penalty_second_order_matches_finite_differences():
    rng = np.random.default_rng(9)
    w1 = rng.normal(0, 0.5, size=(3, 8))
    b1 = rng.normal(0, 0.1, size=(8,))
    w2 = rng.normal(0, 0.5, size=(8, 1))
    names = {"w1": w1, "b1": b1, "w2": w2}
    params = {k: parameter(k, v.shape) for k, v in names.items()}

    def critic(x):
        from printforge.autodiff import add, matmul, tanh

        h = tanh(add(matmul(x, params["w1"]), params["b1"]))
        return matmul(h, params["w2"])

    real = rng.normal(size=(4, 3))
    fake = rng.normal(size=(4, 3))
    penalty = gradient_penalty(critic, real, fake, weight=10.0)

    for key in names:
        g = derive(penalty, params[key])
        analytic = evaluate(g, names, precision="float64")
        numeric = np.zeros_like(analytic)
        flat = names[key].ravel()
        for i in range(flat.size):
            for sign in (1.0, -1.0):
                bumped = dict(names)
                arr = names[key].copy()
                arr.ravel()[i] += sign * 1e-6
                bumped[key] = arr
                numeric.ravel()[i] += sign * evaluate(
                    penalty, bumped, precision="float64"
                )
        numeric /= 2e-6
        denom = max(np.abs(numeric).max(), 1e-8)
        assert np.abs(analytic - numeric).max() / denom < 1e-3


# ---------------------------------------------------------------------------
# Schedules


def test_schedule_presets_echo_training_constants():
    cae = cae_schedule("full")
    assert (cae.lr, cae.beta1, cae.beta2) == (0.0002, 0.5, 0.9)
    assert (cae.batch_size, cae.steps) == (128, 39000)
    gan = gan_schedule("full")
    assert (gan.lr, gan.beta1, gan.beta2) == (0.0001, 0.0, 0.9)
    assert (gan.batch_size, gan.steps) == (32, 54000)
    assert finetune_schedule("full").steps == 37000
    assert gan.n_critic == 5
    assert gan.gp_weight == 10.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        TrainSchedule(0.0, 0.5, 0.9, batch_size=4, steps=1)
    with pytest.raises(ValueError):
        TrainSchedule(1e-4, 0.5, 0.9, batch_size=0, steps=1)
    with pytest.raises(ValueError):
        TrainSchedule(1e-4, 0.5, 0.9, batch_size=4, steps=-1)


# ---------------------------------------------------------------------------
# Training loops (compact ladder keeps these fast)


def tiny_corpus(seed=0, count=48, extent=16):
    rng = np.random.default_rng(seed)
    return np.tanh(rng.normal(0, 0.8, size=(count, 1, extent, extent))).astype(
        np.float32
    )


def test_cae_training_reduces_loss():
    tiny = LadderSpec.compact()
    corpus = tiny_corpus()
    sched = TrainSchedule(2e-3, 0.5, 0.9, batch_size=8, steps=60, seed=3)
    weights, rows = train_cae(corpus, tiny, sched)
    assert len(rows) == 60
    first = np.mean([r[1] for r in rows[:10]])
    last = np.mean([r[1] for r in rows[-10:]])
    assert last < 0.75 * first
    assert all(np.isfinite(r[1]) for r in rows)


def test_cae_training_is_deterministic():
    tiny = LadderSpec.compact()
    corpus = tiny_corpus()
    sched = TrainSchedule(2e-3, 0.5, 0.9, batch_size=8, steps=12, seed=3)
    w1, r1 = train_cae(corpus, tiny, sched)
    w2, r2 = train_cae(corpus, tiny, sched)
    assert r1 == r2
    assert all(np.array_equal(w1[k], w2[k]) for k in w1)


def test_decoder_init_copies_generator_weights():
    tiny = LadderSpec.compact()
    sched = TrainSchedule(2e-3, 0.5, 0.9, batch_size=8, steps=15, seed=3)
    cae_weights, _ = train_cae(tiny_corpus(), tiny, sched)
    gen = init_generator_from_decoder(cae_weights, tiny)
    assert set(gen) == set(parameter_shapes(tiny, "gen"))
    assert all(np.array_equal(gen[k], cae_weights[k]) for k in gen)


def test_decoder_init_rejects_wrong_ladder():
    tiny = LadderSpec.compact()
    sched = TrainSchedule(2e-3, 0.5, 0.9, batch_size=8, steps=2, seed=3)
    cae_weights, _ = train_cae(tiny_corpus(), tiny, sched)
    with pytest.raises(ArchitectureMismatch):
        init_generator_from_decoder(cae_weights, LadderSpec.desk())


def test_iwgan_smoke_on_images():
    tiny = LadderSpec.compact()
    arch = conv_architecture(tiny)
    sched = TrainSchedule(1e-4, 0.0, 0.9, batch_size=8, steps=3, n_critic=2, seed=5)
    weights, rows = train_iwgan(tiny_corpus(), arch, sched)
    assert len(rows) == 3
    for step, d_loss, g_loss, gp, id_loss in rows:
        assert np.isfinite(d_loss) and np.isfinite(g_loss)
        assert gp >= 0.0
        assert id_loss == 0.0  # no encoder attached
    assert set(weights) == set(arch.g_shapes) | set(arch.d_shapes)


def test_iwgan_zero_steps_returns_init():
    tiny = LadderSpec.compact()
    arch = conv_architecture(tiny)
    init = init_weights({**arch.g_shapes, **arch.d_shapes}, seed=2)
    sched = TrainSchedule(1e-4, 0.0, 0.9, batch_size=8, steps=0, seed=5)
    weights, rows = train_iwgan(tiny_corpus(), arch, sched, init=init)
    assert rows == []
    assert all(np.array_equal(weights[k], init[k]) for k in init)


def test_iwgan_identity_term_active_with_encoder():
    mspec = MlpSpec()
    arch = mlp_architecture(mspec)
    data = sample_ring_mixture(1, 2048)
    sched = mixture_schedule(steps=5, seed=2, identity_weight=0.1)
    _, rows = train_iwgan(data, arch, sched, encoder_embed=lambda x: x)
    id_losses = [r[4] for r in rows]
    assert all(np.isfinite(v) and v > 0 for v in id_losses)
    # outputs start nearly collapsed, so the early identity term is large
    assert id_losses[0] > id_losses[-1]


def test_identity_encoder_produces_unit_embeddings():
    tiny = LadderSpec.compact()
    corpus = tiny_corpus(count=40)
    labels = np.repeat(np.arange(8), 5)
    sched = TrainSchedule(1e-3, 0.5, 0.9, batch_size=8, steps=25, seed=7)
    weights, rows = train_identity_encoder(corpus, labels, tiny, sched)
    assert rows[-1][1] < rows[0][1]
    emb = embed_images(tiny, weights, corpus[:10])
    assert emb.shape == (10, tiny.d_e)
    assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-5)


def test_identity_encoder_needs_two_classes():
    tiny = LadderSpec.compact()
    corpus = tiny_corpus(count=8)
    sched = TrainSchedule(1e-3, 0.5, 0.9, batch_size=4, steps=2, seed=7)
    with pytest.raises(InsufficientLabels):
        train_identity_encoder(corpus, np.zeros(8, dtype=int), tiny, sched)
    with pytest.raises(InsufficientLabels):
        train_identity_encoder(
            corpus, np.array([0, 0, 0, 0, 0, 0, 0, 1]), tiny, sched
        )


def test_embedding_batch_composition_invariance():
    tiny = LadderSpec.compact()
    corpus = tiny_corpus(count=20)
    labels = np.repeat(np.arange(4), 5)
    sched = TrainSchedule(1e-3, 0.5, 0.9, batch_size=8, steps=5, seed=7)
    weights, _ = train_identity_encoder(corpus, labels, tiny, sched)
    all_at_once = embed_images(tiny, weights, corpus, batch_size=20)
    in_sevens = embed_images(tiny, weights, corpus, batch_size=7)
    assert np.array_equal(all_at_once, in_sevens)


# ---------------------------------------------------------------------------
# Spread measures


def test_batch_spread_square_case():
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    dist, cos = batch_spread(pts)
    # four sides of sqrt(2) and two diagonals of 2 over six pairs
    assert dist == pytest.approx((4 * np.sqrt(2) + 4) / 6)
    assert cos == pytest.approx(-1.0 / 3.0)


def test_batch_spread_collapsed_case():
    pts = np.ones((5, 2))
    dist, cos = batch_spread(pts)
    assert dist == 0.0
    assert cos == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Sharded generation


def trained_pair(tmp_path):
    tiny = LadderSpec.compact()
    corpus = tiny_corpus(count=40)
    cae_w, _ = train_cae(
        corpus, tiny, TrainSchedule(2e-3, 0.5, 0.9, batch_size=8, steps=15, seed=3)
    )
    gen_w = init_generator_from_decoder(cae_w, tiny)
    labels = np.repeat(np.arange(8), 5)
    enc_w, _ = train_identity_encoder(
        corpus, labels, tiny, TrainSchedule(1e-3, 0.5, 0.9, batch_size=8, steps=5, seed=7)
    )
    emb_w = {k: v for k, v in enc_w.items() if k.startswith("emb/")}
    return tiny, gen_w, emb_w


def test_shard_generation_is_deterministic(tmp_path):
    tiny, gen_w, emb_w = trained_pair(tmp_path)
    job_a = SynthesisJobSpec(1, 50, 11, str(tmp_path / "a"), gen_w, emb_w, batch_size=32)
    job_b = SynthesisJobSpec(1, 50, 11, str(tmp_path / "b"), gen_w, emb_w, batch_size=32)
    pa = generate_shard(job_a, 0, tiny)
    pb = generate_shard(job_b, 0, tiny)
    assert pa.read_bytes() == pb.read_bytes()


def test_shard_batch_size_changes_only_float_noise(tmp_path):
    # different batch sizes route through different matmul kernels, so
    # low-order bits may move; the latent stream and values must not
    tiny, gen_w, emb_w = trained_pair(tmp_path)
    job_a = SynthesisJobSpec(1, 50, 11, str(tmp_path / "a"), gen_w, emb_w, batch_size=32)
    job_b = SynthesisJobSpec(1, 50, 11, str(tmp_path / "b"), gen_w, emb_w, batch_size=7)
    ids_a, vec_a = load_shard(generate_shard(job_a, 0, tiny))
    ids_b, vec_b = load_shard(generate_shard(job_b, 0, tiny))
    assert np.array_equal(ids_a, ids_b)
    assert np.allclose(vec_a, vec_b, atol=1e-5)


def test_shard_ids_partition_the_range(tmp_path):
    tiny, gen_w, emb_w = trained_pair(tmp_path)
    job = SynthesisJobSpec(3, 20, 5, str(tmp_path / "s"), gen_w, emb_w)
    paths = generate_all_shards(job, tiny)
    assert len(paths) == 3
    seen = []
    for p in paths:
        ids, vecs = load_shard(p)
        assert vecs.shape == (20, tiny.d_e)
        assert np.allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-4)
        seen.extend(ids.tolist())
    assert sorted(seen) == list(range(60))


def test_shard_workers_do_not_change_bytes(tmp_path):
    tiny, gen_w, emb_w = trained_pair(tmp_path)
    serial = SynthesisJobSpec(2, 25, 9, str(tmp_path / "ser"), gen_w, emb_w)
    threaded = SynthesisJobSpec(2, 25, 9, str(tmp_path / "par"), gen_w, emb_w)
    ps = generate_all_shards(serial, tiny, workers=1)
    pt = generate_all_shards(threaded, tiny, workers=2)
    for a, b in zip(ps, pt):
        assert a.read_bytes() == b.read_bytes()


def test_shard_index_out_of_range(tmp_path):
    tiny, gen_w, emb_w = trained_pair(tmp_path)
    job = SynthesisJobSpec(2, 10, 0, str(tmp_path / "x"), gen_w, emb_w)
    with pytest.raises(ValueError):
        generate_shard(job, 2, tiny)
