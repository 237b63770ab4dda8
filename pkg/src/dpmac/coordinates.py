"""Auxiliary coordinates: the per-example layer activations made free.

The alternating trainer replaces the nested objective by a sum of per-layer
penalties coupled through per-example coordinate blocks ``z_k`` (one array of
shape ``(n, d_k)`` per hidden layer):

    E(W, Z) = E_out(z_{K-1}, y; W_K)
              + (mu / (2 n)) sum_{k<K} sum_n ||z_k[n] - f(z_{k-1}[n] @ W_k)||^2

with ``z_0 = x``.  Coordinates only ever touch the examples in the current
batch and are never released, so updating them costs no privacy.  Every block
is kept inside the L2 ball of radius ``bound``; that bound is what the
sensitivity analysis of the weight step leans on, so it is enforced after
initialization and after every update step, not just once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from . import activations, network, optim

MSE = "mse"
XENT = "xent"

TASKS = (MSE, XENT)


def init_coordinates(weights: network.WeightStack, x: np.ndarray,
                     hidden_act: str, bound: float,
                     output_act: str = activations.IDENTITY) -> list:
    """Coordinates from a forward pass, projected onto the bound.

    Returns one array per hidden layer (everything before the output layer);
    an empty list for a single-layer network.
    """
    zs = network.forward(weights, x, hidden_act, output_act)[:-1]
    return [network.project_rows(z, bound) for z in zs]


def project_coordinates(coords: list, bound: float) -> list:
    return [network.project_rows(z, bound) for z in coords]


def _output_profile(u: np.ndarray, y: np.ndarray, task: str, output_act: str):
    """Per-unit value and d(value)/du of the output term, unnormalized.

    Uses the shared doubled convention: every layer term enters the objective
    through a 1/(2 n) prefactor, so the cross-entropy value is
    ``2 (softplus(u) - y u)``.
    """
    if task == MSE:
        f, f1, _ = activations.evaluate(output_act, u)
        resid = f - y
        return resid**2, 2.0 * resid * f1
    if task == XENT:
        vals = 2.0 * (np.logaddexp(0.0, u) - y * u)
        return vals, 2.0 * (expit(u) - y)
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def expanded_objective(weights: network.WeightStack, coords: list,
                       x: np.ndarray, y: np.ndarray, hidden_act: str,
                       task: str, normalizer: float, mu: float = 1.0,
                       output_act: str = activations.IDENTITY) -> float:
    """Value of the decoupled objective at ``(W, Z)``."""
    if len(coords) != len(weights) - 1:
        raise ValueError(
            f"expected {len(weights) - 1} coordinate blocks, got {len(coords)}"
        )
    prev = [x] + list(coords)
    total = 0.0
    for k in range(len(coords)):
        pred = activations.value(hidden_act, prev[k] @ weights[k])
        total += mu * float(np.sum((coords[k] - pred) ** 2))
    u = prev[-1] @ weights[len(weights) - 1]
    vals, _ = _output_profile(u, np.asarray(y, dtype=float), task, output_act)
    total += float(np.sum(vals))
    return total / (2.0 * normalizer)


def coordinate_gradients(weights: network.WeightStack, coords: list,
                         x: np.ndarray, y: np.ndarray, hidden_act: str,
                         task: str, normalizer: float, mu: float = 1.0,
                         output_act: str = activations.IDENTITY) -> list:
    """Gradients of :func:`expanded_objective` w.r.t. each coordinate block.

    Block ``z_k`` appears in its own penalty (as target) and in the next
    layer's penalty (as input); both contributions are accumulated.
    """
    if len(coords) != len(weights) - 1:
        raise ValueError("coordinate block count does not match the network")
    prev = [x] + list(coords)
    grads = []
    for k in range(len(coords)):
        pred = activations.value(hidden_act, prev[k] @ weights[k])
        grads.append(mu * (coords[k] - pred))
    # Contribution of each block through the layer it feeds.
    for k in range(len(coords)):
        w_next = weights[k + 1]
        u = coords[k] @ w_next
        if k + 1 == len(weights) - 1:
            _, dvals = _output_profile(u, np.asarray(y, dtype=float), task,
                                       output_act)
        else:
            f, f1, _ = activations.evaluate(hidden_act, u)
            dvals = mu * 2.0 * (f - coords[k + 1]) * f1
        grads[k] = grads[k] + 0.5 * dvals @ w_next.T
    return [g / normalizer for g in grads]


def update_coordinates(weights: network.WeightStack, coords: list,
                       x: np.ndarray, y: np.ndarray, hidden_act: str,
                       task: str, normalizer: float, bound: float,
                       steps: int, lr: float, optimizer: str = "adam",
                       mu: float = 1.0,
                       output_act: str = activations.IDENTITY) -> list:
    """Run ``steps`` optimizer steps on the coordinate blocks, projecting
    onto the bound after every step.  Returns the updated blocks."""
    if not coords:
        return coords
    opt = optim.make_optimizer(optimizer)
    coords = [z.copy() for z in coords]
    for _ in range(steps):
        grads = coordinate_gradients(weights, coords, x, y, hidden_act, task,
                                     normalizer, mu, output_act)
        coords = opt.step(coords, grads, lr)
        coords = project_coordinates(coords, bound)
    return coords
