"""Noisy clipped-gradient baseline trainer.

Per iteration: Poisson-sample a batch, compute each example's gradient of the
nested objective, clip it to a global L2 bound (one bound across all layers),
average over the nominal batch size and add Gaussian noise with std
``clip_bound * sigma / batch_size`` per coordinate.  Privacy is tracked by
the same accountant as the alternating trainer.

Per-example gradients of a bias-free feedforward net factor into rank-one
outer products ``z_{k-1,n} delta_{k,n}^T``, so per-example norms and the
clipped sum are computed without materializing per-example weight-shaped
arrays; :func:`per_example_gradients` materializes them anyway for tests and
small problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import activations, network, optim
from .accountant import MomentsLedger
from .reporting import MetricsLog, PrivacyReport

MSE = "mse"
XENT = "xent"


@dataclass
class SgdConfig:
    """Hyperparameters of the baseline trainer.

    ``lr_halving_epochs`` (if set) halves the learning rate every that many
    epochs; ``lr_decay`` applies multiplicatively per epoch.  ``sigma = 0``
    disables clipping noise (clipping itself still applies if ``clip_bound``
    is set, matching the algorithm the noise is added to).
    """

    hidden_units: tuple = ()
    task: str = MSE
    hidden_act: str = activations.SOFTPLUS
    output_act: str = activations.IDENTITY
    epochs: int = 1
    batch_size: int = 100
    lr: float = 0.01
    lr_decay: float = 1.0
    lr_halving_epochs: int | None = None
    clip_bound: float | None = None
    sigma: float = 0.0
    delta: float = 1e-5
    optimizer: str = "gd"
    init_scale: float = 1.0

    def __post_init__(self):
        if self.task not in (MSE, XENT):
            raise ValueError(f"unknown task {self.task!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.sigma > 0 and (self.clip_bound is None or self.clip_bound <= 0):
            raise ValueError("private training needs a positive clip_bound")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError("optimizer must be 'gd' or 'adam'")


def _forward_states(weights, x, hidden_act, output_act):
    """Activations and derivative profiles of every layer."""
    zs = [np.asarray(x, dtype=float)]
    slopes = []
    last = len(weights) - 1
    for k, w in enumerate(weights):
        kind = output_act if k == last else hidden_act
        f, f1, _ = activations.evaluate(kind, zs[-1] @ w)
        zs.append(f)
        slopes.append(f1)
    return zs, slopes


def _backward_deltas(weights, x, y, hidden_act, task, output_act):
    """Per-example error signals delta_k = d(loss_n)/d(preactivation_k).

    The per-example loss is ``(1/2)||y - out||^2`` for mse and
    ``sum_h softplus(u_h) - y_h u_h`` for xent, so the mean over examples
    matches the exact normalized objectives.
    """
    zs, slopes = _forward_states(weights, x, hidden_act, output_act)
    y = np.asarray(y, dtype=float)
    if task == MSE:
        delta = (zs[-1] - y) * slopes[-1]
    else:
        u = zs[-2] @ weights[len(weights) - 1]
        delta = expit(u) - y
    deltas = [None] * len(weights)
    deltas[-1] = delta
    for k in range(len(weights) - 2, -1, -1):
        delta = (delta @ weights[k + 1].T) * slopes[k]
        deltas[k] = delta
    return zs, deltas


def per_example_gradients(weights: network.WeightStack, x: np.ndarray,
                          y: np.ndarray, hidden_act: str, task: str,
                          output_act: str = activations.IDENTITY) -> list:
    """Materialized per-example gradients, one ``(n, d_in, d_out)`` per layer."""
    zs, deltas = _backward_deltas(weights, x, y, hidden_act, task, output_act)
    return [np.einsum("ni,nh->nih", zs[k], deltas[k])
            for k in range(len(weights))]


def clipped_gradient_sum(weights, x, y, hidden_act, task, clip_bound,
                         output_act=activations.IDENTITY,
                         per_layer_bounds=None):
    """Sum of per-example gradients after norm clipping, without
    materializing them.

    ``clip_bound`` clips each example's full gradient (all layers, one L2
    norm).  ``per_layer_bounds`` instead clips each layer's per-example
    gradient to its own bound (used by layerwise baselines); exactly one of
    the two may be set, or neither for the raw sum.
    """
    zs, deltas = _backward_deltas(weights, x, y, hidden_act, task, output_act)
    z_sq = [np.sum(z**2, axis=1) for z in zs[:-1]]
    d_sq = [np.sum(d**2, axis=1) for d in deltas]
    if clip_bound is not None and per_layer_bounds is not None:
        raise ValueError("choose global or per-layer clipping, not both")
    if clip_bound is not None:
        norms = np.sqrt(sum(z_sq[k] * d_sq[k] for k in range(len(weights))))
        factors = [np.minimum(1.0, clip_bound / np.maximum(norms, 1e-300))] * len(weights)
    elif per_layer_bounds is not None:
        factors = [
            np.minimum(1.0, b / np.maximum(np.sqrt(z_sq[k] * d_sq[k]), 1e-300))
            for k, b in enumerate(per_layer_bounds)
        ]
    else:
        ones = np.ones(x.shape[0])
        factors = [ones] * len(weights)
    return [
        (zs[k] * factors[k][:, None]).T @ deltas[k]
        for k in range(len(weights))
    ]


def dp_sgd_step(weights: network.WeightStack, xb: np.ndarray, yb: np.ndarray,
                cfg: SgdConfig, rng: np.random.Generator,
                nominal_batch: int) -> list:
    """One noisy clipped mean gradient, ready for an optimizer step."""
    grads = clipped_gradient_sum(weights, xb, yb, cfg.hidden_act, cfg.task,
                                 cfg.clip_bound, cfg.output_act)
    scale = float(nominal_batch)
    out = []
    for g in grads:
        g = g / scale
        if cfg.sigma > 0:
            g = g + rng.normal(0.0, cfg.clip_bound * cfg.sigma / scale,
                               size=g.shape)
        out.append(g)
    return out


def _current_lr(cfg: SgdConfig, epoch: int) -> float:
    lr = cfg.lr * cfg.lr_decay**epoch
    if cfg.lr_halving_epochs:
        lr *= 0.5 ** (epoch // cfg.lr_halving_epochs)
    return lr


def _evaluate(weights, data, cfg: SgdConfig):
    if cfg.task == XENT:
        loss = network.bce_output_loss(weights, data.inputs, data.targets,
                                       cfg.hidden_act)
        labels = np.argmax(data.targets, axis=1)
        acc = network.classification_accuracy(weights, data.inputs, labels,
                                              cfg.hidden_act)
        return loss, acc
    loss = network.nested_mse(weights, data.inputs, data.targets,
                              cfg.hidden_act, cfg.output_act)
    return loss, None


def train_dp_sgd(train: network.Dataset, cfg: SgdConfig, seed=0,
                 test: network.Dataset | None = None,
                 ledger: MomentsLedger | None = None):
    """Run the baseline; returns ``(weights, privacy_report, metrics)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x, y, n = train.inputs, train.targets, train.n
    sizes = [x.shape[1], *cfg.hidden_units, y.shape[1]]
    weights = network.init_weights(sizes, rng, cfg.init_scale)
    opt = optim.make_optimizer("adam" if cfg.optimizer == "adam" else "gd")

    if ledger is None:
        ledger = MomentsLedger()
    batch = min(cfg.batch_size, n)
    q = batch / n
    step_alphas = ledger.step_moments(q, cfg.sigma) if cfg.sigma > 0 else None
    steps_per_epoch = max(1, round(n / batch))
    total_steps = cfg.epochs * steps_per_epoch
    metrics = MetricsLog()

    for t in range(total_steps):
        epoch = t // steps_per_epoch
        mask = rng.random(n) < q
        grads = dp_sgd_step(weights, x[mask], y[mask], cfg, rng, batch)
        if cfg.sigma > 0:
            ledger.record(q, cfg.sigma, 1, step_alphas)
        new = opt.step(list(weights.layers), grads, _current_lr(cfg, epoch))
        for k, w in enumerate(new):
            weights[k] = w

        if (t + 1) % steps_per_epoch == 0:
            train_loss, _ = _evaluate(weights, train, cfg)
            test_loss = test_acc = None
            if test is not None:
                test_loss, test_acc = _evaluate(weights, test, cfg)
            eps = ledger.epsilon(cfg.delta).epsilon if cfg.sigma > 0 else None
            metrics.append(epoch=epoch, step=t + 1, train_loss=train_loss,
                           test_loss=test_loss, test_accuracy=test_acc,
                           epsilon=eps)

    if cfg.sigma > 0:
        spend = ledger.epsilon(cfg.delta)
        report = PrivacyReport(sigma=cfg.sigma, delta=cfg.delta,
                               sampling_rate=q, steps=total_steps,
                               epsilon=spend.epsilon,
                               best_order=spend.best_order)
    else:
        report = PrivacyReport(sigma=0.0, delta=cfg.delta, sampling_rate=q,
                               steps=0, epsilon=None, best_order=None)
    return weights, report, metrics
