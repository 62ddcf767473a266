"""Shared low-level linear algebra helpers.

All symmetric factorizations go through a single eigendecomposition with a
common numerical-rank convention: eigenvalues whose magnitude falls below
max|eig| * RANK_RTOL * dim are treated as zero.
"""

import math

import numpy as np

from .errors import NotSymmetric

RANK_RTOL = 1e-10


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    return m


def check_symmetric(m, tol):
    asym = np.abs(m - m.T).max(initial=0.0)
    scale = 1.0 + np.abs(m).max(initial=0.0)
    if asym > tol * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds tolerance")


def eig_cutoff(eigvals, dim):
    return np.abs(eigvals).max(initial=0.0) * RANK_RTOL * max(dim, 1)


def sym_eig(m, tol=1e-8):
    """Eigendecomposition of a (checked) symmetric matrix.

    Returns (eigvals, eigvecs, keep) where keep flags eigenvalues above the
    numerical-rank cutoff.
    """
    check_symmetric(m, tol)
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    keep = np.abs(w) > eig_cutoff(w, m.shape[0])
    return w, v, keep


def sym_pinv(m, tol=1e-8):
    """Moore-Penrose pseudoinverse of a symmetric matrix."""
    w, v, keep = sym_eig(m, tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


def sym_projector(m, tol=1e-8):
    """Orthogonal projector onto the column space of a symmetric matrix."""
    _, v, keep = sym_eig(m, tol)
    vr = v[:, keep]
    return vr @ vr.T


def sym_rank(m, tol=1e-8):
    _, _, keep = sym_eig(m, tol)
    return int(keep.sum())


def sym_pseudo_logdet(m, tol=1e-8):
    """Sum of logs of the eigenvalues above the rank cutoff (0 for rank 0)."""
    w, _, keep = sym_eig(m, tol)
    return math.fsum(math.log(x) for x in w[keep])


def matrix_rank_svd(a):
    """Numerical rank of a rectangular matrix under the shared convention."""
    if a.size == 0:
        return 0
    sv = np.linalg.svd(a, compute_uv=False)
    cut = sv.max(initial=0.0) * RANK_RTOL * max(a.shape)
    return int((sv > cut).sum())


def orthonormal_range(a):
    """Orthonormal basis of the column space of a rectangular matrix."""
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    cut = sv.max(initial=0.0) * RANK_RTOL * max(a.shape)
    return u[:, sv > cut]
