"""Tour of the graph engine: values, derivatives, and derivatives of
derivatives.

Gradients here are ordinary graph nodes, so differentiating a gradient
expression is the same operation as differentiating a loss.  That one
property is what lets the critic's gradient-norm penalty train with the
same machinery as everything else.
"""

import numpy as np

from printforge.autodiff import (
    derive,
    evaluate,
    matmul,
    parameter,
    reduce_mean,
    square,
    tanh,
)
from printforge.synthesis import gradient_penalty


def main():
    rng = np.random.default_rng(0)

    # A two-layer scalar function of a weight matrix.
    x = parameter("x", (5, 3))
    w = parameter("w", (3, 4))
    hidden = tanh(matmul(x, w))
    loss = reduce_mean(square(hidden))

    values = {
        "x": rng.standard_normal((5, 3)),
        "w": 0.5 * rng.standard_normal((3, 4)),
    }
    print("loss          :", float(evaluate(loss, values)))

    # First derivative: derive() returns a new graph, not a number.
    grad_w = derive(loss, w)
    print("dloss/dw shape:", evaluate(grad_w, values).shape)

    # Because grad_w is a graph, it can be differentiated again.
    grad_norm = reduce_mean(square(grad_w))
    curvature = derive(grad_norm, w)
    print("second order  :", evaluate(curvature, values, precision="float64").shape)

    # The same mechanism, packaged: the critic penalty regularizes the
    # critic's input gradient toward unit norm, and its own gradient
    # (used by the optimizer) is a third differentiation pass.
    w1 = parameter("w1", (3, 8))
    w2 = parameter("w2", (8, 1))

    def critic(images):
        return matmul(tanh(matmul(images, w1)), w2)

    real = rng.standard_normal((4, 3))
    fake = rng.standard_normal((4, 3))
    penalty = gradient_penalty(critic, real, fake, weight=10.0)
    critic_values = {
        "w1": 0.5 * rng.standard_normal((3, 8)),
        "w2": 0.5 * rng.standard_normal((8, 1)),
    }
    print("penalty       :", float(evaluate(penalty, critic_values)))
    print("dpenalty/dw1  :", evaluate(derive(penalty, w1), critic_values).shape)

    # Finite-difference spot check of that second-order path.
    h = 1e-6
    probe = dict(critic_values)
    flat = probe["w1"] = probe["w1"].copy()
    analytic = evaluate(derive(penalty, w1), critic_values, precision="float64")
    flat[0, 0] += h
    up = float(evaluate(penalty, probe, precision="float64"))
    flat[0, 0] -= 2 * h
    down = float(evaluate(penalty, probe, precision="float64"))
    numeric = (up - down) / (2 * h)
    print(f"FD check      : analytic {analytic[0, 0]:+.8f} vs numeric {numeric:+.8f}")


if __name__ == "__main__":
    main()
