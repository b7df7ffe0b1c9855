"""Adversarial and identity loss terms as graph nodes.

The identity term is the reciprocal of the summed pairwise embedding
distances within a batch: negligible while the batch is spread out,
dominant as it collapses.  The penalty term regularizes the critic's
input gradient toward unit norm on real/fake interpolates; since that
gradient is itself a graph, the penalty trains through a second
derivative pass.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    ShapeMismatch,
    add,
    constant,
    derive,
    mul,
    mul_scalar,
    reciprocal,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sqrt,
    square,
    sub,
)


class DegenerateBatch(Exception):
    """Identity loss needs at least two embeddings to form a pair."""


def pairwise_distance_sum(embeddings):
    """Sum of Euclidean distances over unordered row pairs, as a node.

    Differences are formed by broadcasting, so identical rows subtract
    to exact zeros; every squared distance is lifted by 1e-12 before
    the square root (the diagonal by a full unit) so the derivative
    stays finite even when two rows coincide bit for bit.  The lift
    perturbs a unit distance by about 5e-13, far below the tolerance
    any consumer of this term cares about.
    """
    n, d = embeddings.shape
    if n < 2:
        raise DegenerateBatch(f"need at least 2 embeddings, got {n}")
    left = reshape(embeddings, (n, 1, d))
    right = reshape(embeddings, (1, n, d))
    d2 = reduce_sum(square(sub(left, right)), axes=(2,))
    lift = constant(np.eye(n) + 1e-12)
    dists = sqrt(add(relu(d2), lift))
    mask = constant(np.triu(np.ones((n, n)), k=1))
    return reduce_sum(mul(dists, mask))


def identity_loss(embeddings, eps_id=1e-6):
    """Reciprocal of summed pairwise distances, kept finite by eps_id."""
    total = pairwise_distance_sum(embeddings)
    return reciprocal(add(total, constant(np.asarray(float(eps_id)))))


def critic_loss(real_scores, fake_scores):
    """Wasserstein critic objective: mean fake minus mean real score."""
    return sub(reduce_mean(fake_scores), reduce_mean(real_scores))


def generator_adversarial_loss(fake_scores):
    """Negated mean critic score of generated samples."""
    return mul_scalar(reduce_mean(fake_scores), -1.0)


def gradient_penalty_node(scores, interpolates, weight=10.0):
    """weight * mean((||d scores / d interpolates||_2 - 1)^2).

    ``scores`` must be the critic output for ``interpolates``; the
    per-sample gradient norm reduces over every non-batch axis.
    """
    grad = derive(reduce_sum(scores), interpolates)
    axes = tuple(range(1, len(interpolates.shape)))
    sq = reduce_sum(square(grad), axes=axes)
    norm = sqrt(add(sq, constant(np.asarray(1e-12))))
    gap = sub(norm, constant(np.asarray(1.0)))
    return mul_scalar(reduce_mean(square(gap)), float(weight))


def gradient_penalty(critic_apply, real_batch, fake_batch, weight=10.0, u=None, rng=None):
    """Penalty over fresh interpolates of two concrete batches.

    ``critic_apply`` maps an input node to critic scores.  ``u`` fixes
    the per-sample mixing weights; otherwise they are drawn from ``rng``
    (seed 0 by default).
    """
    real = np.asarray(real_batch, dtype=np.float64)
    fake = np.asarray(fake_batch, dtype=np.float64)
    if real.shape != fake.shape:
        raise ShapeMismatch(
            f"real batch {real.shape} vs fake batch {fake.shape}"
        )
    n = real.shape[0]
    if u is None:
        rng = np.random.default_rng(0) if rng is None else rng
        u = rng.uniform(0.0, 1.0, size=n)
    u = np.asarray(u, dtype=np.float64).reshape((n,) + (1,) * (real.ndim - 1))
    interpolates = constant(u * real + (1.0 - u) * fake, name="interpolates")
    scores = critic_apply(interpolates)
    return gradient_penalty_node(scores, interpolates, weight=weight)
