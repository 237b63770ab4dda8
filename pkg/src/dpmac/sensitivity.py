"""Remove-one sensitivity bounds for the released expansion coefficients.

A neighboring pair of batches differs by the presence of one example, so the
sensitivity of each unnormalized coefficient sum is a bound on the largest
contribution a single example can make: ``|a(D) - a(D')|``, ``||b - b'||_F``
and the stacked Frobenius norm for the quadratic group.

Two regimes are provided.

``analytic``
    Closed-form bounds that hold for softplus layers whenever every
    coordinate row lies in the L2 ball of radius ``bound``.  They use the
    envelope values ``alpha_h = f(||w_h|| bound)`` and
    ``beta_h = f'(||w_h|| bound)``, the largest value/slope softplus can
    attain on the reachable pre-activation interval.

``clipped``
    Bounds that follow directly from clipping each example's derivative
    stacks (see :func:`dpmac.taylor.clip_profiles`): they hold for any
    activation and do not depend on the expansion point staying small.

All bounds here are worst-case inequalities; tests attack them with random
remove-one neighbors and require zero violations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activations

ANALYTIC = "analytic"
CLIPPED = "clipped"

MODES = (ANALYTIC, CLIPPED)


@dataclass
class LayerSensitivity:
    """Per-coefficient-group bounds for one layer.

    ``quad`` is None for first-order expansions.  ``const`` may be present
    even when the constant coefficient is not released (perturbation decides
    what to consume).
    """

    const: float
    linear: float
    quad: float | None

    def __post_init__(self):
        vals = [self.const, self.linear] + ([] if self.quad is None else [self.quad])
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError("sensitivities must be finite and nonnegative")


@dataclass
class SensitivityBundle:
    """Bounds for every perturbed layer of a network plus release metadata.

    ``n_groups`` is the number of coefficient groups released per layer
    (1 for first order: only ``b``; 3 for second order: ``a``, ``b``, ``C``).
    The total partition count entering the noise scale is
    ``n_groups * len(layers)``.
    """

    layers: list
    mode: str
    order: int
    coord_bound: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sensitivity mode {self.mode!r}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if not self.layers:
            raise ValueError("bundle must cover at least one layer")

    @property
    def n_groups(self) -> int:
        return 1 if self.order == 1 else 3

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_partitions(self) -> int:
        return self.n_groups * self.n_layers


def clip_rows(stack: np.ndarray, bound: float) -> np.ndarray:
    """Rescale each leading-axis slice of ``stack`` onto the Frobenius ball.

    ``stack`` has shape ``(n, ...)``; slice ``i`` is multiplied by
    ``min(1, bound / ||stack[i]||_F)``.  Returns a new array.
    """
    if bound <= 0:
        raise ValueError("clipping bound must be positive")
    stack = np.asarray(stack, dtype=float)
    flat = stack.reshape(stack.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    factors = np.minimum(1.0, bound / np.maximum(norms, 1e-300))
    return stack * factors.reshape((-1,) + (1,) * (stack.ndim - 1))


def softplus_envelopes(w_hat: np.ndarray, bound: float):
    """Per-unit extremes of softplus and its slope on reachable inputs.

    For ``|u| <= ||w_h|| * bound`` both f and f' are maximized at the right
    endpoint: ``alpha_h = f(||w_h|| bound)``, ``beta_h = f'(||w_h|| bound)``.
    """
    norms = np.linalg.norm(np.asarray(w_hat, dtype=float), axis=0)
    reach = norms * bound
    f, f1, _ = activations.evaluate(activations.SOFTPLUS, reach)
    return f, f1


def analytic_sensitivity_hidden(w_hat: np.ndarray, bound: float,
                                order: int = 2) -> LayerSensitivity:
    """Closed-form bounds for a softplus squared-distance layer.

    Both the layer's input row and its target row are assumed to lie in the
    L2 ball of radius ``bound``.  The constant-group bound sums the value,
    linear-correction and quadratic-correction parts; the linear group uses
    the triangle inequality over the gradient and curvature stacks; the
    quadratic group bounds the stacked Frobenius change directly.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    t = float(bound)
    alpha, beta = softplus_envelopes(w_hat, t)
    col_norms = np.linalg.norm(w_hat, axis=0)
    d_out = w_hat.shape[1]

    a_norm = float(np.linalg.norm(alpha))
    da1 = t**2 + 2.0 * t * a_norm + a_norm**2
    da2 = 2.0 * t * (
        t * float(np.sqrt(np.sum(beta**2 * col_norms**2)))
        + float(np.sum(alpha * beta * col_norms))
    )
    da3 = (t**2 / 4.0) * (
        t * float(np.sqrt(np.sum(col_norms**4)))
        + float(np.sum((4.0 * beta**2 + alpha) * col_norms**2))
    )

    db1_sq = 4.0 * t**2 * (
        float(np.sum((alpha * beta) ** 2))
        + 2.0 * t * min(float(np.sum(alpha)),
                        np.sqrt(d_out) * float(np.max(alpha * beta**2, initial=0.0)))
        + t**2
    )
    db2_sq = (t**4 / 2.0) * (
        t**2 * float(np.sum(col_norms**2))
        + float(np.sum((4.0 * beta**2 + alpha) ** 2 * col_norms**2))
    )

    dc = (t**2 / 2.0) * float(
        np.sqrt(t**2 + np.sum((4.0 * beta**2 + alpha) ** 2))
    )

    if order == 1:
        return LayerSensitivity(const=da1 + da2, linear=float(np.sqrt(db1_sq)),
                                quad=None)
    return LayerSensitivity(const=da1 + da2 + da3,
                            linear=float(np.sqrt(db1_sq)) + float(np.sqrt(db2_sq)),
                            quad=dc)


def analytic_sensitivity_output(w_hat: np.ndarray, bound: float,
                                batch_size: int,
                                order: int = 2) -> LayerSensitivity:
    """Closed-form bounds for a cross-entropy output layer.

    These bound the coefficients of the *normalized, unscaled* per-example
    objective ``(1/(2 S)) sum_s 2 (softplus(u) - y u)`` restated per group as
    ``(1/(2 S)) sum_s [...]``; the training engine releases unnormalized sums
    of the doubled per-example terms and therefore multiplies these by
    ``4 * batch_size`` (the ``1/(2 S)`` cancels, leaving bounds independent
    of the batch size).  Labels are assumed in [0, 1].
    """
    w_hat = np.asarray(w_hat, dtype=float)
    t = float(bound)
    s = float(batch_size)
    if s <= 0:
        raise ValueError("batch_size must be positive")
    alpha, beta = softplus_envelopes(w_hat, t)
    col_norms = np.linalg.norm(w_hat, axis=0)
    d_out = w_hat.shape[1]
    w_fro_sq = float(np.sum(col_norms**2))

    slope_term = float(np.sum(beta * col_norms))
    da = float(np.sum(alpha)) + t * slope_term
    db_inner = d_out + 2.0 * t * slope_term
    if order == 2:
        da += (t**2 / 8.0) * w_fro_sq
        db_inner += (t**2 / 16.0) * w_fro_sq
    da /= 2.0 * s
    db = (t / (2.0 * s)) * float(np.sqrt(db_inner))
    dc = (np.sqrt(d_out) * t**2) / (16.0 * s) if order == 2 else None
    return LayerSensitivity(const=da, linear=db, quad=dc)


def clipped_sensitivity(w_hat: np.ndarray, bound: float, grad_bound: float,
                        hess_bound: float | None, order: int,
                        kind: str = "squared",
                        act: str = activations.SOFTPLUS) -> LayerSensitivity:
    """Bounds implied by per-example clipping of the derivative stacks.

    With the gradient stack clipped to ``grad_bound`` and (order 2) the
    curvature stack to ``hess_bound``, a single example changes

    * the linear group by at most ``grad_bound + hess_bound * max_h ||w_h||``,
    * the quadratic group by at most ``hess_bound / 2``,
    * the constant group by the unclipped value bound plus
      ``grad_bound ||W||_F`` plus ``(hess_bound / 2) sqrt(sum_h ||w_h||^4)``.

    The value term is never clipped, so it is bounded through the coordinate
    bound: softplus values via the envelopes, relu/identity via
    ``|f(u)| <= |u|``.
    """
    if grad_bound is None or grad_bound <= 0:
        raise ValueError("clipped mode requires a positive gradient bound")
    if order == 2 and (hess_bound is None or hess_bound <= 0):
        raise ValueError("order 2 clipped mode requires a curvature bound")
    w_hat = np.asarray(w_hat, dtype=float)
    t = float(bound)
    col_norms = np.linalg.norm(w_hat, axis=0)
    w_fro = float(np.sqrt(np.sum(col_norms**2)))

    if kind == "xent":
        alpha, _ = softplus_envelopes(w_hat, t)
        value_bound = 2.0 * (float(np.sum(alpha)) + t * float(np.sum(col_norms)))
    elif act == activations.SOFTPLUS:
        alpha, _ = softplus_envelopes(w_hat, t)
        value_bound = (t + float(np.linalg.norm(alpha))) ** 2
    else:
        # |f(u)| <= |u| for relu and identity, so ||f|| <= t ||W||_F.
        value_bound = (t + t * w_fro) ** 2

    const = value_bound + grad_bound * w_fro
    linear = grad_bound
    quad = None
    if order == 2:
        const += 0.5 * hess_bound * float(np.sqrt(np.sum(col_norms**4)))
        linear += hess_bound * float(np.max(col_norms, initial=0.0))
        quad = 0.5 * hess_bound
    return LayerSensitivity(const=const, linear=linear, quad=quad)


def build_bundle(w_hats: list, bound: float, order: int, mode: str,
                 task_kind: str, batch_size: int, hidden_act: str,
                 output_act: str, grad_bound: float | None = None,
                 hess_bound: float | None = None) -> SensitivityBundle:
    """Assemble per-layer bounds for every perturbed layer of a network.

    ``w_hats`` are the expansion points, one per layer (hidden layers first,
    output layer last).  In analytic mode every involved activation must be
    softplus; reconstruction outputs reuse the squared-distance bounds (their
    targets live in the same norm ball as the coordinates), cross-entropy
    outputs use the dedicated bounds rescaled to the released sums.
    """
    if mode not in MODES:
        raise ValueError(f"unknown sensitivity mode {mode!r}")
    layers = []
    last = len(w_hats) - 1
    for k, w_hat in enumerate(w_hats):
        is_output = k == last
        kind = "xent" if (is_output and task_kind == "xent") else "squared"
        act = output_act if is_output else hidden_act
        if mode == ANALYTIC:
            if kind == "squared" and act != activations.SOFTPLUS:
                raise activations.UnsupportedActivationError(
                    f"analytic sensitivities require softplus, layer {k} uses "
                    f"{act!r}; use clipped mode for other activations"
                )
            if kind == "xent":
                ls = analytic_sensitivity_output(w_hat, bound, batch_size, order)
                scale = 4.0 * batch_size
                ls = LayerSensitivity(const=scale * ls.const,
                                      linear=scale * ls.linear,
                                      quad=None if ls.quad is None else scale * ls.quad)
            else:
                ls = analytic_sensitivity_hidden(w_hat, bound, order)
        else:
            ls = clipped_sensitivity(w_hat, bound, grad_bound, hess_bound,
                                     order, kind, act)
        layers.append(ls)
    return SensitivityBundle(layers=layers, mode=mode, order=order,
                             coord_bound=bound)
