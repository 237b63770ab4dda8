"""Bias-free feedforward networks and their exact training objectives.

Conventions used throughout the package:

* data is row-major: a batch is ``(n, d)`` and layer ``k`` maps ``z_{k-1}`` to
  ``z_k = f(z_{k-1} @ W_k)`` with ``W_k`` of shape ``(d_in, d_out)``;
* there are no bias terms anywhere (inputs can carry a constant column if an
  offset is wanted);
* hidden layers share one activation, the output layer has its own.

The exact objectives here (`nested_mse`, `bce_output_loss`) are the reference
quantities: the alternating trainer only ever approximates them, and tests pin
the approximations back to these.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import activations


@dataclass
class WeightStack:
    """An ordered list of weight matrices with chained shapes.

    ``layers[k]`` has shape ``(d_k, d_{k+1})``; consecutive shapes must chain.
    All entries must be finite.
    """

    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.layers = [np.asarray(w, dtype=float) for w in self.layers]
        for i, w in enumerate(self.layers):
            if w.ndim != 2:
                raise ValueError(f"layer {i} must be a matrix, got ndim={w.ndim}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"layer {i} contains non-finite entries")
        for i in range(len(self.layers) - 1):
            if self.layers[i].shape[1] != self.layers[i + 1].shape[0]:
                raise ValueError(
                    f"shape mismatch between layer {i} {self.layers[i].shape} "
                    f"and layer {i + 1} {self.layers[i + 1].shape}"
                )

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.layers[k]

    def __setitem__(self, k: int, w: np.ndarray) -> None:
        self.layers[k] = np.asarray(w, dtype=float)

    def __iter__(self):
        return iter(self.layers)

    def sizes(self) -> list:
        """Layer widths ``[d_0, d_1, ..., d_K]``."""
        if not self.layers:
            return []
        return [self.layers[0].shape[0]] + [w.shape[1] for w in self.layers]

    def copy(self) -> "WeightStack":
        return WeightStack([w.copy() for w in self.layers])


def init_weights(sizes, rng: np.random.Generator, scale: float = 1.0) -> WeightStack:
    """Standard normal initial weights, entrywise ``scale * N(0, 1)``."""
    mats = [
        scale * rng.standard_normal((sizes[i], sizes[i + 1]))
        for i in range(len(sizes) - 1)
    ]
    return WeightStack(mats)


def project_rows(x: np.ndarray, bound: float) -> np.ndarray:
    """Rescale rows of ``x`` with L2 norm above ``bound`` onto the ball."""
    x = np.asarray(x, dtype=float)
    if bound <= 0:
        raise ValueError("bound must be positive")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    factors = np.where(norms > bound, bound / np.maximum(norms, 1e-300), 1.0)
    return x * factors


@dataclass
class Dataset:
    """A supervised dataset with norm-bounded input rows.

    ``inputs`` rows are projected onto the L2 ball of radius ``norm_bound`` at
    construction; targets are left as given (for reconstruction tasks whose
    targets must also be bounded, pass the already-projected inputs).
    """

    inputs: np.ndarray
    targets: np.ndarray
    norm_bound: float = 1.0

    def __post_init__(self):
        self.inputs = project_rows(np.asarray(self.inputs, dtype=float), self.norm_bound)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-d arrays")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"inputs and targets disagree on n: {self.inputs.shape[0]} "
                f"vs {self.targets.shape[0]}"
            )
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets contain non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def forward(weights: WeightStack, x: np.ndarray, hidden_act: str,
            output_act: str = activations.IDENTITY) -> list:
    """Forward pass returning the activation of every layer.

    Returns ``[z_1, ..., z_K]`` where ``z_k = f_k(z_{k-1} @ W_k)``, ``z_0 = x``.
    All layers but the last use ``hidden_act``; the last uses ``output_act``.
    """
    zs = []
    z = np.asarray(x, dtype=float)
    last = len(weights) - 1
    for k, w in enumerate(weights):
        kind = output_act if k == last else hidden_act
        z = activations.value(kind, z @ w)
        zs.append(z)
    return zs


def predict(weights: WeightStack, x: np.ndarray, hidden_act: str,
            output_act: str = activations.IDENTITY) -> np.ndarray:
    """Network output only."""
    return forward(weights, x, hidden_act, output_act)[-1]


def nested_mse(weights: WeightStack, x: np.ndarray, y: np.ndarray,
               hidden_act: str, output_act: str = activations.IDENTITY,
               normalizer: float | None = None) -> float:
    """Exact squared-error objective ``(1/(2 n)) sum_i ||y_i - net(x_i)||^2``.

    ``normalizer`` overrides the ``n`` in the prefactor (used by minibatch
    code that normalizes by the nominal batch size).
    """
    out = predict(weights, x, hidden_act, output_act)
    n = float(normalizer) if normalizer is not None else float(x.shape[0])
    return float(np.sum((np.asarray(y, dtype=float) - out) ** 2) / (2.0 * n))


def bce_output_logits(weights: WeightStack, x: np.ndarray,
                      hidden_act: str) -> np.ndarray:
    """Pre-activation outputs of the last layer (logits for the CE loss)."""
    z = np.asarray(x, dtype=float)
    for w in weights.layers[:-1]:
        z = activations.value(hidden_act, z @ w)
    return z @ weights.layers[-1]


def bce_output_loss(weights: WeightStack, x: np.ndarray, y: np.ndarray,
                    hidden_act: str, normalizer: float | None = None) -> float:
    """Multi-label cross-entropy ``(1/n) sum_i sum_h [softplus(u) - y u]``.

    ``u`` are the output-layer logits and ``y`` must lie in [0, 1] (one-hot
    rows for classification).  Up to a constant independent of the weights
    this is the negative Bernoulli log-likelihood per example.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("cross-entropy targets must lie in [0, 1]")
    u = bce_output_logits(weights, x, hidden_act)
    n = float(normalizer) if normalizer is not None else float(x.shape[0])
    return float(np.sum(np.logaddexp(0.0, u) - y * u) / n)


def classification_accuracy(weights: WeightStack, x: np.ndarray,
                            labels: np.ndarray, hidden_act: str) -> float:
    """Fraction of argmax-correct predictions; labels are integer classes."""
    u = bce_output_logits(weights, x, hidden_act)
    return float(np.mean(np.argmax(u, axis=1) == np.asarray(labels)))
