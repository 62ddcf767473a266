"""REML objective, in two equivalent forms.

reml_full builds each n_k x n_k covariance block explicitly and evaluates
the restricted likelihood directly from the raw data; it costs O(sum n_k^3)
and serves as the reference. reml_reduced evaluates the same number from
the cached per-individual statistics in O(N p^3 + N q^3). Per-individual
terms are accumulated in input order with compensated summation so results
are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import sym_pinv, sym_pseudo_logdet
from .errors import (
    NonPositiveDefiniteSigma,
    NonPositiveDeterminant,
    SingularInformation,
)
from .model import Dataset
from .stats import IndividualStats

LOG_2PI = math.log(2.0 * math.pi)


def _as_sigma2_vector(sigma2, n: int) -> np.ndarray:
    s = np.asarray(sigma2, dtype=float).reshape(-1)
    if s.shape[0] == 1:
        s = np.repeat(s, n)
    if s.shape[0] != n:
        raise ValueError(f"sigma2 has length {s.shape[0]}, expected {n}")
    if np.any(s <= 0):
        raise NonPositiveDefiniteSigma("all sigma_k^2 must be positive")
    return s


def project_d(d: np.ndarray, stats: IndividualStats) -> np.ndarray:
    """Project the dispersion matrix onto the column space of Z'Z."""
    return stats.pz @ d @ stats.pz


def restricted_pinv(s: np.ndarray) -> np.ndarray:
    """Pseudoinverse of sigma^2 F + D_k, whose range lies in M(Z'Z)."""
    return sym_pinv(s)


def m_k(stats: IndividualStats, d_k: np.ndarray, sigma2_k: float,
        inner: np.ndarray | None = None) -> np.ndarray:
    """Per-individual information X' Sigma^{-1} X in reduced form."""
    if inner is None:
        inner = restricted_pinv(sigma2_k * stats.f + d_k)
    lm = stats.lmat
    m = (stats.xtx - lm.T @ stats.ztz @ lm) / sigma2_k + lm.T @ inner @ lm
    return 0.5 * (m + m.T)


def sigma_inverse_dense(z: np.ndarray, sigma2_k: float, d: np.ndarray,
                        tol: float = 1e-8) -> np.ndarray:
    """(sigma^2 I + Z D Z')^{-1} without forming the n_k x n_k inverse directly."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    ztz = z.T @ z
    f = sym_pinv(ztz, tol)
    w, v = np.linalg.eigh(0.5 * (ztz + ztz.T))
    keep = np.abs(w) > np.abs(w).max(initial=0.0) * 1e-10 * max(ztz.shape[0], 1)
    vr = v[:, keep]
    pz = vr @ vr.T
    d_k = pz @ d @ pz
    inner = restricted_pinv(sigma2_k * f + d_k)
    zf = z @ f
    return (np.eye(n) - z @ f @ z.T) / sigma2_k + zf @ inner @ zf.T


def logdet_sigma_k(stats: IndividualStats, d: np.ndarray, sigma2_k: float) -> float:
    """log det Sigma_k via the q x q determinant identity."""
    q = stats.q
    sign, logdet = np.linalg.slogdet(sigma2_k * np.eye(q) + stats.ztz @ d)
    if sign <= 0:
        raise NonPositiveDeterminant(
            f"individual {stats.id!r}: det(sigma^2 I + Z'Z D) is not positive"
        )
    return (stats.n_k - q) * math.log(sigma2_k) + float(logdet)


def gls_alpha(all_stats, all_m_k):
    """Pooled GLS estimate as the M_k-weighted mean of the per-individual OLS fits.

    Returns (alpha_hat, omega) with omega = (sum_k M_k)^{-1}.
    """
    total = sum(all_m_k)
    try:
        np.linalg.cholesky(total)
    except np.linalg.LinAlgError:
        raise SingularInformation("sum of M_k is not positive definite")
    omega = np.linalg.inv(total)
    omega = 0.5 * (omega + omega.T)
    weighted = sum(m @ s.alpha_k for m, s in zip(all_m_k, all_stats))
    return omega @ weighted, omega


def residual_quadratic(stats: IndividualStats, m_k_mat: np.ndarray,
                       alpha_hat: np.ndarray, sigma2_k: float) -> float:
    """Residual quadratic form split into within- and between-individual parts."""
    r = stats.alpha_k - alpha_hat
    return stats.rss / sigma2_k + float(r @ m_k_mat @ r)


@dataclass(frozen=True)
class CovarianceState:
    """Everything that depends on (theta, sigma^2) in the reduced likelihood."""

    d: np.ndarray
    sigma2: np.ndarray
    d_k: tuple
    inner_k: tuple  # (sigma_k^2 F_k + D_k)^- per individual
    m_k: tuple
    omega: np.ndarray
    alpha_hat: np.ndarray


def covariance_state(all_stats, d: np.ndarray, sigma2) -> CovarianceState:
    sigma2 = _as_sigma2_vector(sigma2, len(all_stats))
    d_ks, inners, ms = [], [], []
    for s, s2 in zip(all_stats, sigma2):
        dk = project_d(d, s)
        inner = restricted_pinv(s2 * s.f + dk)
        d_ks.append(dk)
        inners.append(inner)
        ms.append(m_k(s, dk, s2, inner=inner))
    alpha_hat, omega = gls_alpha(all_stats, ms)
    return CovarianceState(
        d=d,
        sigma2=sigma2,
        d_k=tuple(d_ks),
        inner_k=tuple(inners),
        m_k=tuple(ms),
        omega=omega,
        alpha_hat=alpha_hat,
    )


def reml_reduced(all_stats, d: np.ndarray, sigma2,
                 state: CovarianceState | None = None) -> float:
    """Reduced REML objective from cached statistics; O(N p^3 + N q^3)."""
    if state is None:
        state = covariance_state(all_stats, d, sigma2)
    sigma2 = state.sigma2
    p = all_stats[0].p
    n_total = sum(s.n_k for s in all_stats)

    sign, logdet_info = np.linalg.slogdet(sum(state.m_k))
    if sign <= 0:
        raise SingularInformation("sum of M_k has non-positive determinant")

    terms = [-0.5 * (n_total - p) * LOG_2PI, -0.5 * float(logdet_info)]
    for s, s2, mk in zip(all_stats, sigma2, state.m_k):
        terms.append(0.5 * s.plogdet_xtx)
        terms.append(-0.5 * logdet_sigma_k(s, d, s2))
        terms.append(-0.5 * residual_quadratic(s, mk, state.alpha_hat, s2))
    return math.fsum(terms)


def reml_full(dataset: Dataset, d: np.ndarray, sigma2) -> float:
    """Direct REML evaluation from the raw blocks; O(sum n_k^3) reference."""
    sigma2 = _as_sigma2_vector(sigma2, dataset.n_individuals)
    p = dataset.p
    info = np.zeros((p, p))
    rhs = np.zeros(p)
    sig_invs = []
    terms = [-0.5 * (dataset.n_total - p) * LOG_2PI]
    for ind, s2 in zip(dataset.individuals, sigma2):
        n = ind.n_k
        sig = s2 * np.eye(n) + ind.z @ d @ ind.z.T
        try:
            chol = np.linalg.cholesky(sig)
        except np.linalg.LinAlgError:
            raise NonPositiveDefiniteSigma(
                f"individual {ind.id!r}: Sigma_k is not positive definite"
            )
        terms.append(0.5 * sym_pseudo_logdet(ind.x.T @ ind.x))
        terms.append(-math.fsum(math.log(x) for x in np.diag(chol)))
        sig_inv = np.linalg.inv(sig)
        sig_inv = 0.5 * (sig_inv + sig_inv.T)
        sig_invs.append(sig_inv)
        info += ind.x.T @ sig_inv @ ind.x
        rhs += ind.x.T @ (sig_inv @ ind.y)

    sign, logdet_info = np.linalg.slogdet(info)
    if sign <= 0:
        raise SingularInformation("sum of X' Sigma^{-1} X has non-positive determinant")
    terms.append(-0.5 * float(logdet_info))
    alpha_hat = np.linalg.solve(info, rhs)
    for ind, sig_inv in zip(dataset.individuals, sig_invs):
        resid = ind.y - ind.x @ alpha_hat
        terms.append(-0.5 * float(resid @ sig_inv @ resid))
    return math.fsum(terms)


def reml_full_gradient(dataset: Dataset, dspec, theta, sigma2) -> np.ndarray:
    """Dense gradient of the REML objective; O(sum n_k^3) per call.

    Used as an independent oracle for the reduced gradient and as the
    "full" method in the complexity benchmark.
    """
    sigma2 = _as_sigma2_vector(sigma2, dataset.n_individuals)
    d = dspec.d_from_theta(theta)
    p = dataset.p
    r = dspec.n_params
    info = np.zeros((p, p))
    rhs = np.zeros(p)
    sig_invs = []
    for ind, s2 in zip(dataset.individuals, sigma2):
        sig = s2 * np.eye(ind.n_k) + ind.z @ d @ ind.z.T
        sig_inv = np.linalg.inv(sig)
        sig_inv = 0.5 * (sig_inv + sig_inv.T)
        sig_invs.append(sig_inv)
        info += ind.x.T @ sig_inv @ ind.x
        rhs += ind.x.T @ (sig_inv @ ind.y)
    omega = np.linalg.inv(info)
    alpha_hat = omega @ rhs

    grad = np.zeros(r)
    for ind, s2, sig_inv in zip(dataset.individuals, sigma2, sig_invs):
        siz = sig_inv @ ind.z                     # n_k x q
        ztsz = ind.z.T @ siz                      # q x q, Z' Sigma^{-1} Z
        h = ind.x.T @ siz                         # p x q, X' Sigma^{-1} Z
        w = ind.z.T @ (sig_inv @ (ind.y - ind.x @ alpha_hat))
        oh = omega @ h
        for i, b in enumerate(dspec.basis):
            grad[i] += -0.5 * float(np.sum(ztsz * b))
            grad[i] += 0.5 * float(np.sum((h.T @ oh) * b))
            grad[i] += 0.5 * float(w @ b @ w)
    return grad
