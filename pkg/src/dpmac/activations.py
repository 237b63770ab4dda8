"""Elementwise activations with first and second derivatives.

Every activation is exposed through a single entry point, :func:`evaluate`,
returning the triple ``(f(x), f'(x), f''(x))``.  The curvature term is what the
layerwise quadratic expansions consume, so second derivatives are part of the
contract here rather than an afterthought.

Softplus is the only activation with nonzero curvature and is evaluated in an
overflow-safe form: for large positive ``x`` the value is computed as
``x + log1p(exp(-x))`` (via ``logaddexp``), and both derivatives go through the
numerically stable sigmoid.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

SOFTPLUS = "softplus"
RELU = "relu"
IDENTITY = "identity"

ACTIVATIONS = (SOFTPLUS, RELU, IDENTITY)

# Activations with identically zero curvature. Listed explicitly because the
# quadratic expansion degrades to linear for them and analytic sensitivity
# bounds do not apply.
ZERO_CURVATURE = (RELU, IDENTITY)


class UnsupportedActivationError(ValueError):
    """Raised when an activation name is unknown or invalid for a mode."""


def _check_kind(kind: str) -> str:
    if kind not in ACTIVATIONS:
        raise UnsupportedActivationError(
            f"unknown activation {kind!r}; expected one of {ACTIVATIONS}"
        )
    return kind


def evaluate(kind: str, x: np.ndarray):
    """Return ``(f, f1, f2)`` for activation ``kind`` at ``x``, elementwise.

    Parameters
    ----------
    kind : str
        One of ``"softplus"``, ``"relu"``, ``"identity"``.
    x : ndarray
        Any shape; the result arrays match it.

    Returns
    -------
    (f, f1, f2) : tuple of ndarray
        Value, first and second derivative.  For relu the derivative at
        exactly 0 is taken as 0 and the second derivative is 0 everywhere.
    """
    _check_kind(kind)
    x = np.asarray(x, dtype=float)
    if kind == SOFTPLUS:
        f = np.logaddexp(0.0, x)
        s = expit(x)
        # f'' = s(1-s); computing it as expit(x)*expit(-x) keeps precision for
        # large |x| where 1-s underflows.
        f2 = s * expit(-x)
        return f, s, f2
    if kind == RELU:
        pos = x > 0
        return np.where(pos, x, 0.0), pos.astype(float), np.zeros_like(x)
    return x.copy(), np.ones_like(x), np.zeros_like(x)


def value(kind: str, x: np.ndarray) -> np.ndarray:
    """Activation value only (no derivatives)."""
    _check_kind(kind)
    x = np.asarray(x, dtype=float)
    if kind == SOFTPLUS:
        return np.logaddexp(0.0, x)
    if kind == RELU:
        return np.where(x > 0, x, 0.0)
    return x.copy()


def has_curvature(kind: str) -> bool:
    """Whether f'' is not identically zero."""
    _check_kind(kind)
    return kind == SOFTPLUS
