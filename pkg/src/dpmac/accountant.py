"""Moments accountant for composed subsampled Gaussian releases.

Each training iteration releases a sensitivity-scaled Gaussian perturbation of
statistics computed on a Poisson-sampled batch (sampling rate ``q``, noise
multiplier ``sigma``).  Its privacy cost at moment order ``lambda`` is

    alpha(lambda) = log max(E1, E2),
    E1 = E_{z ~ mix}[ (mix(z) / base(z))^lambda ],
    E2 = E_{z ~ base}[ (base(z) / mix(z))^lambda ],

where ``base = N(0, sigma^2)`` and ``mix = (1-q) base + q N(1, sigma^2)``:
the one-dimensional reduction of the mechanism's worst-case pair.  Both
expectations reduce to the single integral

    I(p) = E_{t ~ N(0,1)}[ ((1-q) + q e^{(2 sigma t - 1)/(2 sigma^2)})^p ]

with ``E1 = I(lambda + 1)`` and ``E2 = I(-lambda)``.  ``I`` is evaluated by
adaptive quadrature on the peak-shifted integrand in log space, so moments
remain representable even when ``E`` itself would overflow; quadrature
failures raise :class:`AccountantError` instead of degrading silently.

Moments compose additively over steps.  The spend at failure probability
``delta`` is ``min_lambda (alpha_total(lambda) + log(1/delta)) / lambda``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

DEFAULT_ORDERS = tuple(range(1, 65))

# Convergence guard for the shifted quadrature (whose total is O(1)).
_QUAD_EPSABS = 1e-12
_MAX_QUAD_ERR = 1e-8


class AccountantError(RuntimeError):
    """Raised when a privacy quantity cannot be computed reliably."""


def _log_mix_ratio(s: np.ndarray, q: float) -> np.ndarray:
    """log((1-q) + q e^s), stable for small q and large |s|."""
    s = np.asarray(s, dtype=float)
    if q == 1.0:
        # exact; the log1p path below loses digits for strongly negative s
        # because expm1(s) rounds to -1 + e^s with absolute (not relative)
        # precision
        return s.copy()
    out = np.empty_like(s)
    mid = np.abs(s) < 30.0
    # 1 + q(e^s - 1) via log1p keeps precision when q e^s is near 0; outside
    # the window expm1 saturates (to -1 or overflow), so switch to the
    # two-term log-sum-exp, which is exact in both tails.
    out[mid] = np.log1p(q * np.expm1(s[mid]))
    if not np.all(mid):
        tail = ~mid
        out[tail] = np.logaddexp(np.log1p(-q), np.log(q) + s[tail])
    return out


def _log_mix_moment(q: float, sigma: float, p: float) -> float:
    """log I(p) for the mixture-ratio moment defined in the module docstring."""

    def log_integrand(t):
        t = np.asarray(t, dtype=float)
        s = (2.0 * sigma * t - 1.0) / (2.0 * sigma**2)
        return -0.5 * t**2 - 0.5 * np.log(2.0 * np.pi) + p * _log_mix_ratio(s, q)

    # The integrand can be bimodal for p > 0 (one lobe near 0, one pushed to
    # t ~ p/sigma by the exponential branch), so locate candidate peaks on a
    # grid wide enough to contain both, then hand them to the quadrature as
    # breakpoints.
    reach = abs(p) / sigma + 12.0
    grid = np.linspace(-reach, reach, 4097)
    vals = log_integrand(grid)
    interior = np.where(
        (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
    )[0] + 1
    peaks = grid[interior] if interior.size else np.array([grid[np.argmax(vals)]])

    refined = []
    step = grid[1] - grid[0]
    for t0 in peaks:
        res = optimize.minimize_scalar(
            lambda t: -log_integrand(t), bracket=None,
            bounds=(t0 - step, t0 + step), method="bounded",
            options={"xatol": 1e-12},
        )
        refined.append((float(res.x), float(-res.fun)))
    shift = max(v for _, v in refined)

    def shifted(t):
        return np.exp(log_integrand(t) - shift)

    # Cut between the peaks, never at them: quad loses several digits when a
    # piece endpoint sits inside the numerically flat top of a lobe.  Each
    # finite piece contains exactly one peak strictly in its interior.
    locs = sorted(t for t, _ in refined)
    merged = [locs[0]]
    for t in locs[1:]:
        if t - merged[-1] > 1e-6:
            merged.append(t)
    cuts = [0.5 * (a + b) for a, b in zip(merged[:-1], merged[1:])]
    cuts = [merged[0] - 10.0] + cuts + [merged[-1] + 10.0]
    edges = [-np.inf] + cuts + [np.inf]
    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        # roundoff advisories at the tolerance floor are expected; the error
        # guard below decides whether the result is usable
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            piece, piece_err = integrate.quad(shifted, a, b,
                                              epsabs=_QUAD_EPSABS,
                                              epsrel=_QUAD_EPSABS, limit=300)
            total += piece
            err += piece_err
    if not np.isfinite(total) or total <= 0.0 or err > _MAX_QUAD_ERR:
        raise AccountantError(
            f"moment quadrature did not converge (q={q}, sigma={sigma}, "
            f"p={p}, integral={total}, err={err})"
        )
    return shift + float(np.log(total))


def log_moment_step(q: float, sigma: float, order: float) -> float:
    """Privacy moment alpha(order) of a single subsampled Gaussian step.

    ``q = 0`` costs nothing; ``q = 1`` admits the closed form
    ``order (order + 1) / (2 sigma^2)`` (recovered here by quadrature, used
    as an oracle in tests).  The result is clamped at 0, the theoretical
    minimum, to absorb quadrature noise on trivially private steps.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("sampling rate q must lie in [0, 1]")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive for accounting")
    if order < 1:
        raise ValueError("moment order must be >= 1")
    if q == 0.0:
        return 0.0
    log_e1 = _log_mix_moment(q, sigma, float(order) + 1.0)
    log_e2 = _log_mix_moment(q, sigma, -float(order))
    return max(log_e1, log_e2, 0.0)


@dataclass
class PrivacySpend:
    """An (epsilon, delta) guarantee with the moment order that won."""

    epsilon: float
    delta: float
    best_order: float


@dataclass
class MomentsLedger:
    """Accumulated log moments across all releases of a training run.

    ``log_moments[i]`` is the total alpha at ``orders[i]``; entries that
    overflow or fail to evaluate are set to +inf (unusable) rather than
    dropped, so they can never fake a tighter epsilon.
    """

    orders: tuple = DEFAULT_ORDERS
    log_moments: np.ndarray = field(default=None)
    steps_recorded: int = 0

    def __post_init__(self):
        orders = tuple(float(o) for o in self.orders)
        if not orders or any(o < 1 for o in orders):
            raise ValueError("orders must be a nonempty collection of values >= 1")
        self.orders = orders
        if self.log_moments is None:
            self.log_moments = np.zeros(len(orders))
        else:
            self.log_moments = np.asarray(self.log_moments, dtype=float)
            if self.log_moments.shape != (len(orders),):
                raise ValueError("log_moments shape does not match orders")

    def step_moments(self, q: float, sigma: float) -> np.ndarray:
        """Per-order alphas for one step; failures become +inf, not errors."""
        out = np.empty(len(self.orders))
        for i, lam in enumerate(self.orders):
            try:
                out[i] = log_moment_step(q, sigma, lam)
            except AccountantError:
                out[i] = np.inf
        if not np.any(np.isfinite(out)):
            raise AccountantError(
                f"no usable moment order for q={q}, sigma={sigma}"
            )
        return out

    def record(self, q: float, sigma: float, n_steps: int = 1,
               step_alphas: np.ndarray | None = None) -> None:
        """Compose ``n_steps`` identical releases into the ledger.

        ``step_alphas`` lets callers reuse a cached :meth:`step_moments`
        result when recording many identical steps one at a time.
        """
        if n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if n_steps == 0:
            return
        alphas = self.step_moments(q, sigma) if step_alphas is None else step_alphas
        self.log_moments = self.log_moments + n_steps * np.asarray(alphas, float)
        self.steps_recorded += n_steps

    def epsilon(self, delta: float) -> PrivacySpend:
        """Best (epsilon, delta) implied by the accumulated moments."""
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        orders = np.asarray(self.orders)
        usable = np.isfinite(self.log_moments)
        if not np.any(usable):
            raise AccountantError("all moment orders are unusable")
        eps = (self.log_moments[usable] + np.log(1.0 / delta)) / orders[usable]
        i = int(np.argmin(eps))
        return PrivacySpend(epsilon=float(eps[i]), delta=delta,
                            best_order=float(orders[usable][i]))


def epsilon_for_steps(q: float, sigma: float, n_steps: int, delta: float,
                      orders=DEFAULT_ORDERS) -> PrivacySpend:
    """Spend of ``n_steps`` identical releases (convenience wrapper)."""
    ledger = MomentsLedger(orders=orders)
    ledger.record(q, sigma, n_steps)
    return ledger.epsilon(delta)


def calibrate_sigma(target_epsilon: float, delta: float, q: float,
                    n_steps: int, orders=DEFAULT_ORDERS,
                    max_iterations: int = 200) -> float:
    """Smallest-practical noise multiplier meeting a target epsilon.

    Bisects the monotone map sigma -> epsilon until the achieved epsilon
    lands in ``[0.99 * target, target]``.  Raises :class:`AccountantError`
    if no bracket can be established.
    """
    if target_epsilon <= 0:
        raise ValueError("target epsilon must be positive")

    def eps_of(sigma: float) -> float:
        return epsilon_for_steps(q, sigma, n_steps, delta, orders).epsilon

    lo, hi = 0.25, 4.0
    for _ in range(80):
        if eps_of(hi) <= target_epsilon:
            break
        hi *= 2.0
        if hi > 1e7:
            raise AccountantError("cannot bracket target epsilon from above")
    for _ in range(80):
        if eps_of(lo) >= target_epsilon:
            break
        lo *= 0.5
        if lo < 1e-7:
            # Even negligible noise beats the target; the loose end is fine.
            return lo
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        e = eps_of(mid)
        if 0.99 * target_epsilon <= e <= target_epsilon:
            return mid
        if e > target_epsilon:
            lo = mid
        else:
            hi = mid
    raise AccountantError("sigma calibration did not converge")
