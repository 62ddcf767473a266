"""Empirical Bayes prediction of the per-individual random effects."""

from __future__ import annotations

import numpy as np


def estimate_random_effects(stats, d_k: np.ndarray, sigma2_k: float,
                            alpha_hat: np.ndarray,
                            inner: np.ndarray | None = None) -> np.ndarray:
    """BLUP of the random-effect vector for one individual.

    beta_k = D_k (sigma_k^2 F_k + D_k)^- L_k (alpha_k - alpha_hat), the
    shrinkage of the individual's OLS deviation toward zero.
    """
    if inner is None:
        from .likelihood import restricted_pinv

        inner = restricted_pinv(sigma2_k * stats.f + d_k)
    return d_k @ inner @ (stats.lmat @ (stats.alpha_k - alpha_hat))


def estimate_random_effects_dense(individual, d: np.ndarray, sigma2_k: float,
                                  alpha_hat: np.ndarray) -> np.ndarray:
    """Reference form D_k Z' Sigma^{-1} (y - X alpha_hat), via the dense inverse."""
    from .likelihood import sigma_inverse_dense
    from .stats import compute_stats

    stats = compute_stats(individual)
    d_k = stats.pz @ d @ stats.pz
    sig_inv = sigma_inverse_dense(individual.z, sigma2_k, d)
    resid = individual.y - individual.x @ alpha_hat
    return d_k @ individual.z.T @ (sig_inv @ resid)
