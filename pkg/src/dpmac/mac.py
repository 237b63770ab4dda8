"""Alternating coordinate/weight training with privatized weight updates.

One iteration of the trainer:

1. Poisson-sample a batch (each example kept with probability
   ``batch_size / n``), so each iteration is one subsampled release for the
   accountant.
2. Initialize the batch coordinates from a forward pass (or reuse persisted
   rows) and run privacy-free optimizer steps on them, projecting onto the
   coordinate ball after every step.
3. Expand every layer objective to first or second order around the current
   weights, sum the coefficients over the batch, and release them through the
   Gaussian mechanism with per-group sensitivity bounds.
4. Take weight optimizer steps on the perturbed quadratic surrogates.

Only step 3 touches the data through anything that leaves the iteration, so
the accountant records exactly one event per iteration, and ``sigma = 0``
runs are bit-identical to the unperturbed algorithm (the mechanism is
bypassed and no sensitivities are computed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activations, coordinates, network, optim, sensitivity, taylor
from .accountant import MomentsLedger
from .mechanism import PrivacyParams, perturb_coefficients
from .reporting import MetricsLog, PrivacyReport


@dataclass
class MacConfig:
    """Hyperparameters of the alternating trainer."""

    hidden_units: tuple = ()
    task: str = coordinates.MSE
    hidden_act: str = activations.SOFTPLUS
    output_act: str = activations.IDENTITY
    taylor_order: int = 1
    mu: float = 1.0
    coord_bound: float = 1.0
    epochs: int = 1
    batch_size: int = 100
    z_steps: int = 30
    w_steps: int = 1
    z_lr: float = 1e-3
    w_lr: float = 1e-2
    w_lr_decay: float = 1.0
    z_optimizer: str = "adam"
    w_optimizer: str = "adam"
    sensitivity_mode: str = sensitivity.CLIPPED
    grad_clip: float | None = None
    hess_clip: float | None = None
    persist_coords: bool = False
    init_scale: float = 1.0

    def __post_init__(self):
        if self.task not in coordinates.TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        for act in (self.hidden_act, self.output_act):
            if act not in activations.ACTIVATIONS:
                raise activations.UnsupportedActivationError(
                    f"unknown activation {act!r}"
                )
        if self.taylor_order not in (1, 2):
            raise ValueError("taylor_order must be 1 or 2")
        if self.sensitivity_mode not in sensitivity.MODES:
            raise ValueError(f"unknown sensitivity mode {self.sensitivity_mode!r}")
        if min(self.epochs, self.batch_size, self.z_steps) < 0 or self.w_steps < 1:
            raise ValueError("counts must be nonnegative (w_steps >= 1)")
        if self.coord_bound <= 0 or self.mu <= 0 or self.init_scale < 0:
            raise ValueError("coord_bound and mu must be positive")


def _layer_kinds(cfg: MacConfig, n_layers: int):
    """(activation, local-objective kind) per layer, output last."""
    kinds = []
    for k in range(n_layers):
        if k == n_layers - 1:
            if cfg.task == coordinates.XENT:
                kinds.append((activations.SOFTPLUS, taylor.XENT))
            else:
                kinds.append((cfg.output_act, taylor.SQUARED))
        else:
            kinds.append((cfg.hidden_act, taylor.SQUARED))
    return kinds


def _evaluate(weights, data, cfg: MacConfig):
    """(loss, accuracy-or-None) of the exact nested objective on a dataset."""
    if cfg.task == coordinates.XENT:
        loss = network.bce_output_loss(weights, data.inputs, data.targets,
                                       cfg.hidden_act)
        labels = np.argmax(data.targets, axis=1)
        acc = network.classification_accuracy(weights, data.inputs, labels,
                                              cfg.hidden_act)
        return loss, acc
    loss = network.nested_mse(weights, data.inputs, data.targets,
                              cfg.hidden_act, cfg.output_act)
    return loss, None


def train_dp_mac(train: network.Dataset, cfg: MacConfig,
                 privacy: PrivacyParams | None = None, seed=0,
                 test: network.Dataset | None = None,
                 ledger: MomentsLedger | None = None):
    """Run the trainer; returns ``(weights, privacy_report, metrics)``.

    ``privacy=None`` or ``privacy.sigma == 0`` trains without perturbation.
    ``seed`` may be an int or a ``numpy.random.Generator``.  A pre-seeded
    ``ledger`` lets callers compose earlier releases (preprocessing) into the
    reported spend.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sigma = 0.0 if privacy is None else privacy.sigma
    delta = 1e-5 if privacy is None else privacy.delta

    x, y, n = train.inputs, train.targets, train.n
    if cfg.coord_bound != train.norm_bound:
        raise ValueError(
            "config coordinate bound must match the dataset norm bound"
        )
    sizes = [x.shape[1], *cfg.hidden_units, y.shape[1]]
    n_layers = len(sizes) - 1
    kinds = _layer_kinds(cfg, n_layers)

    if sigma > 0 and cfg.sensitivity_mode == sensitivity.CLIPPED:
        if cfg.grad_clip is None or (cfg.taylor_order == 2 and cfg.hess_clip is None):
            raise ValueError(
                "private clipped-mode training needs grad_clip "
                "(and hess_clip for order 2)"
            )
    if sigma > 0 and cfg.sensitivity_mode == sensitivity.ANALYTIC:
        if cfg.task == coordinates.MSE:
            target_norms = np.linalg.norm(y, axis=1)
            if np.any(target_norms > cfg.coord_bound * (1 + 1e-9)):
                raise ValueError(
                    "analytic mode bounds reconstruction targets by the "
                    "coordinate ball; rescale the targets"
                )

    weights = network.init_weights(sizes, rng, cfg.init_scale)
    w_opt = optim.make_optimizer(cfg.w_optimizer)
    if ledger is None:
        ledger = MomentsLedger()
    batch = min(cfg.batch_size, n)
    q = batch / n
    step_alphas = ledger.step_moments(q, sigma) if sigma > 0 else None
    steps_per_epoch = max(1, round(n / batch))
    total_steps = cfg.epochs * steps_per_epoch
    metrics = MetricsLog()

    persisted = None
    if cfg.persist_coords:
        persisted = coordinates.init_coordinates(weights, x, cfg.hidden_act,
                                                 cfg.coord_bound)

    for t in range(total_steps):
        epoch = t // steps_per_epoch
        mask = rng.random(n) < q
        xb, yb = x[mask], y[mask]

        if persisted is not None:
            coords = [z[mask] for z in persisted]
        else:
            coords = coordinates.init_coordinates(weights, xb, cfg.hidden_act,
                                                  cfg.coord_bound)
        coords = coordinates.update_coordinates(
            weights, coords, xb, yb, cfg.hidden_act, cfg.task,
            normalizer=batch, bound=cfg.coord_bound, steps=cfg.z_steps,
            lr=cfg.z_lr, optimizer=cfg.z_optimizer, mu=cfg.mu,
            output_act=cfg.output_act,
        )
        if persisted is not None:
            for z_full, z_batch in zip(persisted, coords):
                z_full[mask] = z_batch

        prevs = [xb] + coords
        layer_targets = coords + [yb]
        coeffs = [
            taylor.assemble_coefficients(
                weights[k], prevs[k], layer_targets[k], kinds[k][0],
                cfg.taylor_order, kind=kinds[k][1],
                grad_bound=cfg.grad_clip, hess_bound=cfg.hess_clip,
            )
            for k in range(n_layers)
        ]
        if sigma > 0:
            bundle = sensitivity.build_bundle(
                [w.copy() for w in weights], cfg.coord_bound,
                cfg.taylor_order, cfg.sensitivity_mode,
                task_kind=("xent" if cfg.task == coordinates.XENT else "mse"),
                batch_size=batch, hidden_act=cfg.hidden_act,
                output_act=kinds[-1][0], grad_bound=cfg.grad_clip,
                hess_bound=cfg.hess_clip,
            )
            coeffs = perturb_coefficients(coeffs, bundle, sigma, rng)
            ledger.record(q, sigma, 1, step_alphas)

        lr = cfg.w_lr * cfg.w_lr_decay**epoch
        for _ in range(cfg.w_steps):
            grads = []
            for k in range(n_layers):
                g = taylor.approx_gradient(weights[k], coeffs[k], batch)
                if k < n_layers - 1:
                    g = cfg.mu * g
                grads.append(g)
            new = w_opt.step(list(weights.layers), grads, lr)
            for k, w in enumerate(new):
                weights[k] = w

        if (t + 1) % steps_per_epoch == 0:
            train_loss, _ = _evaluate(weights, train, cfg)
            test_loss = test_acc = None
            if test is not None:
                test_loss, test_acc = _evaluate(weights, test, cfg)
            eps = ledger.epsilon(delta).epsilon if sigma > 0 else None
            metrics.append(epoch=epoch, step=t + 1, train_loss=train_loss,
                           test_loss=test_loss, test_accuracy=test_acc,
                           epsilon=eps)

    if sigma > 0:
        spend = ledger.epsilon(delta)
        report = PrivacyReport(sigma=sigma, delta=delta, sampling_rate=q,
                               steps=total_steps,
                               epsilon=spend.epsilon,
                               best_order=spend.best_order)
    else:
        report = PrivacyReport(sigma=0.0, delta=delta, sampling_rate=q,
                               steps=0, epsilon=None, best_order=None)
    return weights, report, metrics
