"""Second-order expansions of the layerwise objectives.

Each layer's local objective is a sum over examples and output units of a
scalar function of the pre-activation ``u = z_prev . w_h``.  Two forms exist:

* squared distance (hidden layers, reconstruction outputs):
  ``T = (z_target - f(u))^2``
* scaled cross entropy (classification outputs):
  ``G = 2 (softplus(u) - y u)``

Both have rank-one derivative structure in ``w_h``:
``dT/dw = g1(u) z_prev`` and ``d2T/dw2 = g2(u) z_prev z_prev^T`` for scalar
profiles ``g1, g2``, which is what makes exact per-example clipping and the
coefficient assembly below cheap.

A quadratic expansion of the summed objective around a point ``W_hat``
collapses into three coefficient groups: a scalar ``a``, a matrix ``b``
(same shape as the weights) and per-unit quadratic forms ``C_h``.  These are
*unnormalized sums* over the batch; normalization is applied only when the
approximate objective or its gradient is evaluated.  They are the only
batch-dependent quantities the weight update consumes, so privatizing them
privatizes the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activations

SQUARED = "squared"
XENT = "xent"


@dataclass
class TaylorCoefficients:
    """Coefficients of one layer's expanded objective.

    ``constant`` is a scalar, ``linear`` has the layer's weight shape
    ``(d_in, d_out)``, ``quad`` is ``(d_out, d_in, d_in)`` or None for a
    first-order expansion.  ``expansion_point`` is a copy of the weights the
    expansion was taken at.  All entries must be finite.
    """

    order: int
    constant: float
    linear: np.ndarray
    quad: np.ndarray | None
    expansion_point: np.ndarray

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        self.linear = np.asarray(self.linear, dtype=float)
        self.expansion_point = np.asarray(self.expansion_point, dtype=float)
        if self.linear.shape != self.expansion_point.shape:
            raise ValueError("linear coefficient and expansion point shapes differ")
        if self.order == 2:
            if self.quad is None:
                raise ValueError("order 2 requires quadratic coefficients")
            self.quad = np.asarray(self.quad, dtype=float)
            d_in, d_out = self.linear.shape
            if self.quad.shape != (d_out, d_in, d_in):
                raise ValueError(
                    f"quad shape {self.quad.shape} incompatible with linear "
                    f"{self.linear.shape}"
                )
        ok = np.isfinite(self.constant) and np.all(np.isfinite(self.linear))
        if self.quad is not None:
            ok = ok and np.all(np.isfinite(self.quad))
        if not ok:
            raise ValueError("coefficients contain non-finite entries")


def taylor_terms(w_hat: np.ndarray, z_prev: np.ndarray, z_target: float,
                 act: str):
    """Value, gradient and Hessian of one unit's squared-distance term.

    For a single example ``z_prev`` (shape ``(d,)``) and scalar target,
    returns ``T(w_hat)``, ``dT/dw`` (shape ``(d,)``) and ``d2T/dw2``
    (shape ``(d, d)``) of ``T(w) = (z_target - f(z_prev . w))^2`` at ``w_hat``.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    z_prev = np.asarray(z_prev, dtype=float)
    u = float(z_prev @ w_hat)
    f, f1, f2 = activations.evaluate(act, np.array(u))
    resid = float(f) - float(z_target)
    g1 = 2.0 * float(f1) * resid
    g2 = 2.0 * (float(f2) * resid + float(f1) ** 2)
    value = resid**2
    return value, g1 * z_prev, g2 * np.outer(z_prev, z_prev)


def local_profiles(w_hat: np.ndarray, z_prev: np.ndarray, z_target: np.ndarray,
                   act: str, kind: str = SQUARED):
    """Batched scalar profiles ``(vals, g1, g2)`` at the expansion point.

    ``z_prev`` is ``(n, d_in)``, ``z_target`` is ``(n, d_out)``.  The
    derivative arrays satisfy ``dT_nh/dw_h = g1[n, h] * z_prev[n]`` and
    ``d2T_nh/dw_h^2 = g2[n, h] * outer(z_prev[n], z_prev[n])``.
    """
    u = np.asarray(z_prev, dtype=float) @ np.asarray(w_hat, dtype=float)
    z_target = np.asarray(z_target, dtype=float)
    if kind == SQUARED:
        f, f1, f2 = activations.evaluate(act, u)
        resid = f - z_target
        vals = resid**2
        g1 = 2.0 * f1 * resid
        g2 = 2.0 * (f2 * resid + f1**2)
    elif kind == XENT:
        # Cross entropy is defined on logits; the activation argument is
        # ignored because softplus is the integral of the sigmoid link.
        f, f1, f2 = activations.evaluate(activations.SOFTPLUS, u)
        vals = 2.0 * (f - z_target * u)
        g1 = 2.0 * (f1 - z_target)
        g2 = 2.0 * f2
    else:
        raise ValueError(f"unknown local objective kind {kind!r}")
    return vals, g1, g2


def clip_profiles(g1: np.ndarray, g2: np.ndarray, z_prev: np.ndarray,
                  grad_bound: float | None, hess_bound: float | None):
    """Rescale per-example derivative stacks onto Frobenius balls.

    The example-``n`` gradient stack over all units is the rank-one matrix
    family ``z_n g1_n^T`` with Frobenius norm ``||g1_n|| ||z_n||``; the
    Hessian stack norm is ``||g2_n|| ||z_n||^2``.  Clipping therefore only
    rescales the profile rows.  Returns clipped copies.
    """
    z_norm = np.linalg.norm(z_prev, axis=1)
    if grad_bound is not None:
        norms = np.linalg.norm(g1, axis=1) * z_norm
        g1 = g1 * np.minimum(1.0, grad_bound / np.maximum(norms, 1e-300))[:, None]
    if hess_bound is not None:
        norms = np.linalg.norm(g2, axis=1) * z_norm**2
        g2 = g2 * np.minimum(1.0, hess_bound / np.maximum(norms, 1e-300))[:, None]
    return g1, g2


def assemble_coefficients(w_hat: np.ndarray, z_prev: np.ndarray,
                          z_target: np.ndarray, act: str, order: int,
                          kind: str = SQUARED,
                          grad_bound: float | None = None,
                          hess_bound: float | None = None) -> TaylorCoefficients:
    """Sum one layer's expansion coefficients over a batch.

    With ``u_n = z_prev[n] @ w_hat`` and profiles ``(vals, g1, g2)``:

    * order 1: ``a = sum (vals - g1 u)``, ``b = sum g1[n, h] z_n``;
    * order 2: ``a = sum (vals - g1 u + g2 u^2 / 2)``,
      ``b_h = sum (g1 - g2 u) z_n``, ``C_h = (1/2) sum g2 z_n z_n^T``.

    Optional ``grad_bound`` / ``hess_bound`` clip each example's derivative
    stacks (Frobenius, over all units of the layer) before summation; the
    value term is never clipped.  Sums are unnormalized.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    z_prev = np.asarray(z_prev, dtype=float)
    vals, g1, g2 = local_profiles(w_hat, z_prev, z_target, act, kind)
    g1, g2 = clip_profiles(g1, g2, z_prev, grad_bound, hess_bound)
    u = z_prev @ w_hat
    if order == 1:
        const = float(np.sum(vals) - np.sum(g1 * u))
        linear = z_prev.T @ g1
        quad = None
    elif order == 2:
        const = float(np.sum(vals) - np.sum(g1 * u) + 0.5 * np.sum(g2 * u**2))
        linear = z_prev.T @ (g1 - g2 * u)
        quad = 0.5 * np.einsum("nh,ni,nj->hij", g2, z_prev, z_prev)
    else:
        raise ValueError("order must be 1 or 2")
    return TaylorCoefficients(order=order, constant=const, linear=linear,
                              quad=quad, expansion_point=w_hat.copy())


def approx_objective(w: np.ndarray, coeffs: TaylorCoefficients,
                     normalizer: float) -> float:
    """Evaluate the expanded objective ``(a + <w, b> + sum_h w_h C_h w_h) / (2 m)``."""
    w = np.asarray(w, dtype=float)
    total = coeffs.constant + float(np.sum(w * coeffs.linear))
    if coeffs.order == 2:
        total += float(np.einsum("hi,hij,hj->", w.T, coeffs.quad, w.T))
    return total / (2.0 * normalizer)


def approx_gradient(w: np.ndarray, coeffs: TaylorCoefficients,
                    normalizer: float) -> np.ndarray:
    """Gradient of :func:`approx_objective` with respect to ``w``.

    First order: ``b / (2 m)`` (constant in ``w``).  Second order:
    ``(b + (C_h + C_h^T) w_h) / (2 m)`` columnwise.
    """
    w = np.asarray(w, dtype=float)
    grad = coeffs.linear.copy()
    if coeffs.order == 2:
        sym = coeffs.quad + np.swapaxes(coeffs.quad, 1, 2)
        grad = grad + np.einsum("hij,jh->ih", sym, w)
    return grad / (2.0 * normalizer)
