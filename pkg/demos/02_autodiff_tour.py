"""
The reverse-mode tape in five minutes
=====================================

Every model here trains on a small taped autodiff engine. The tape
records array ops; backward() replays them in reverse. This script fits
a two-layer network to XOR and cross-checks the gradients against
central differences.
"""

import numpy as np

from coldgraph.autodiff import (
    AdamState, Tape, Tensor, activation, adam_step, affine, backward,
    bce_loss, finite_diff_check, parameter,
)

rng = np.random.default_rng(0)
x = Tensor(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float32))
y = np.array([[0], [1], [1], [0]], dtype=np.float32)

# parameter() marks a tensor as a trainable leaf the tape tracks;
# biases start off-zero so no relu sits exactly on its kink below
params = {
    "w1": parameter(rng.normal(0, 0.8, (2, 8))),
    "b1": parameter(rng.normal(0, 0.1, 8)),
    "w2": parameter(rng.normal(0, 0.8, (8, 1))),
    "b2": parameter(rng.normal(0, 0.1, 1)),
}


def forward():
    h = activation(affine(x, params["w1"], params["b1"]), "relu")
    return activation(affine(h, params["w2"], params["b2"]), "sigmoid")


# gradients agree with finite differences before any training
err = finite_diff_check(lambda: bce_loss(forward(), y), params, h=1e-3)
print(f"finite-difference max relative error: {err:.2e}")

state = AdamState(lr=0.05)
for step in range(400):
    with Tape() as tape:
        loss = bce_loss(forward(), y)
    grads = backward(tape, loss)  # keyed by leaf tensor
    named = {name: grads[t] for name, t in params.items() if t in grads}
    adam_step(params, named, state)
    if step % 100 == 0:
        print(f"step {step:3d}  loss {loss.item():.4f}")

print("predictions:", np.round(forward().data.ravel(), 3))
