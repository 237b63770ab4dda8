"""Gaussian-mechanism release of the expansion coefficients.

One training iteration releases the coefficients of every layer objective.
Treating all released groups as one concatenated vector whose blocks have
individual sensitivities ``delta_i``, scaling each block's noise by
``sqrt(P) * delta_i * sigma`` (``P`` = number of blocks) gives the same
overall ratio of sensitivity to noise as a single release with multiplier
``sigma``; the accountant can then treat the whole iteration as one
sensitivity-1 Gaussian event with that multiplier.

``sigma = 0`` is the explicit non-private switch: coefficients pass through
untouched and the generator is not consumed, so non-private runs are
bit-identical to runs of the unperturbed algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensitivity import SensitivityBundle
from .taylor import TaylorCoefficients


@dataclass
class PrivacyParams:
    """Noise multiplier and failure probability for one training run."""

    sigma: float
    delta: float = 1e-5

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


def gaussian_mechanism(value: np.ndarray, sensitivity: float, sigma: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Add iid ``N(0, (sensitivity * sigma)^2)`` noise to ``value``.

    ``sigma = 0`` returns an unmodified copy without consuming the generator.
    """
    value = np.asarray(value, dtype=float)
    if sensitivity < 0 or not np.isfinite(sensitivity):
        raise ValueError("sensitivity must be finite and nonnegative")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return value.copy()
    return value + rng.normal(0.0, sensitivity * sigma, size=value.shape)


def perturb_coefficients(coeffs: list, bundle: SensitivityBundle, sigma: float,
                         rng: np.random.Generator) -> list:
    """Perturb every released coefficient group of every layer.

    ``coeffs`` holds one :class:`TaylorCoefficients` per layer, aligned with
    ``bundle.layers``.  First-order releases perturb only the linear group;
    second-order releases perturb constant, linear and quadratic groups.  The
    per-group noise std is ``sqrt(bundle.n_partitions) * delta_group * sigma``.
    Groups are processed in a fixed order (layer by layer: constant, linear,
    quadratic) so runs are reproducible for a given generator state.
    """
    if len(coeffs) != bundle.n_layers:
        raise ValueError(
            f"got {len(coeffs)} coefficient sets for {bundle.n_layers} layers"
        )
    if sigma == 0.0:
        return list(coeffs)
    part = float(np.sqrt(bundle.n_partitions))
    out = []
    for c, ls in zip(coeffs, bundle.layers):
        if c.order != bundle.order:
            raise ValueError("coefficient order does not match the bundle")
        if c.order == 1:
            const = c.constant
            linear = gaussian_mechanism(c.linear, part * ls.linear, sigma, rng)
            quad = None
        else:
            if ls.quad is None:
                raise ValueError("second-order release needs a quadratic bound")
            const = float(gaussian_mechanism(np.array(c.constant),
                                             part * ls.const, sigma, rng))
            linear = gaussian_mechanism(c.linear, part * ls.linear, sigma, rng)
            quad = gaussian_mechanism(c.quad, part * ls.quad, sigma, rng)
        out.append(TaylorCoefficients(order=c.order, constant=const,
                                      linear=linear, quad=quad,
                                      expansion_point=c.expansion_point))
    return out
