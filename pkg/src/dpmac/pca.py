"""Differentially private PCA preprocessing.

The released statistic is the second-moment matrix ``sum_i x_i x_i^T`` of
unit-norm-bounded rows.  Removing one example changes it by ``x x^T`` with
``||x x^T||_F = ||x||^2 <= 1``, so the sum has remove-one sensitivity 1 and a
symmetric Gaussian perturbation with per-entry std ``sigma`` is one
sensitivity-1 release (one q = 1 accountant event at multiplier ``sigma``).
The projection consists of the top eigenvectors of the symmetrized noisy
matrix; eigenvectors are unaffected by the 1/n normalization, so the
unnormalized sum is perturbed directly.
"""

from __future__ import annotations

import numpy as np


def dp_pca(x: np.ndarray, n_components: int, noise_std: float,
           rng: np.random.Generator) -> np.ndarray:
    """Projection matrix ``(d, n_components)`` from noisy spectral analysis.

    Rows of ``x`` must have L2 norm at most 1 (rescale first; this is what
    ties the advertised sensitivity to the data).  ``noise_std = 0`` gives
    plain uncentered PCA and does not consume the generator.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("x must be a 2-d array")
    if n_components < 1 or n_components > x.shape[1]:
        raise ValueError("n_components must be in [1, n_features]")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms > 1.0 + 1e-9):
        raise ValueError(
            "dp_pca requires rows with L2 norm <= 1; rescale the data"
        )
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    second_moment = x.T @ x
    if noise_std > 0:
        d = x.shape[1]
        draw = rng.normal(0.0, noise_std, size=(d, d))
        upper = np.triu(draw)
        second_moment = second_moment + upper + np.triu(draw, 1).T
    eigvals, eigvecs = np.linalg.eigh(second_moment)
    order = np.argsort(eigvals)[::-1][:n_components]
    return eigvecs[:, order]
