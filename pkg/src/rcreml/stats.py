"""Per-individual sufficient statistics.

Everything the reduced REML needs from the raw blocks is computed here,
once, before the optimizer starts: Gram matrices and their pseudoinverses,
the per-individual OLS estimate, its residual sum of squares, and the
projector onto the column space of Z'Z. All of it is independent of the
dispersion parameters, which is what makes each scoring step cheap.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._linalg import check_symmetric, sym_eig, sym_pseudo_logdet, sym_rank
from .errors import DegenerateIndividual
from .model import Dataset, Individual


def pseudo_inverse(m, tol: float = 1e-8) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Computed via symmetric eigendecomposition; eigenvalues below the rank
    cutoff are zeroed, so the result is symmetric and satisfies the four
    Penrose conditions to roundoff. Raises NotSymmetric for asymmetric input.
    """
    m = np.asarray(m, dtype=float)
    w, v, keep = sym_eig(m, tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


def projector(m, tol: float = 1e-8) -> np.ndarray:
    """Orthogonal projector onto the column space of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    _, v, keep = sym_eig(m, tol)
    vr = v[:, keep]
    return vr @ vr.T


@dataclass(frozen=True)
class IndividualStats:
    """Cached sufficient statistics for one individual.

    Field names follow the usual mixed-model bookkeeping: e and f are the
    pseudoinverses of X'X and Z'Z, kmat = E X'Z, lmat = F Z'X, alpha_k the
    per-individual OLS estimate and pz the projector onto M(Z'Z).
    sigma2_hat is None when n_k <= p_k (no residual degrees of freedom).
    """

    id: str
    n_k: int
    xtx: np.ndarray
    ztz: np.ndarray
    xtz: np.ndarray
    e: np.ndarray
    f: np.ndarray
    kmat: np.ndarray
    lmat: np.ndarray
    pz: np.ndarray
    alpha_k: np.ndarray
    rss: float
    sigma2_hat: float | None
    p_k: int
    q_k: int
    plogdet_xtx: float

    @property
    def p(self) -> int:
        return self.xtx.shape[0]

    @property
    def q(self) -> int:
        return self.ztz.shape[0]

    def to_dict(self):
        return {
            "id": self.id,
            "n_k": self.n_k,
            "p_k": self.p_k,
            "q_k": self.q_k,
            "alpha_k": self.alpha_k.tolist(),
            "rss": self.rss,
            "sigma2_hat": self.sigma2_hat,
        }


def compute_stats(individual: Individual, tol: float = 1e-8) -> IndividualStats:
    """All theta-independent statistics for one (validated) individual.

    The residual sum of squares is formed as y'y - alpha' X'X alpha (clamped
    at zero) rather than through the n_k x n_k residual projector.
    """
    x, z, y = individual.x, individual.z, individual.y
    xtx = x.T @ x
    ztz = z.T @ z
    xtz = x.T @ z
    check_symmetric(xtx, tol)
    check_symmetric(ztz, tol)

    w, v, keep = sym_eig(xtx, tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    e = (v * inv) @ v.T
    p_k = int(keep.sum())

    wz, vz, keepz = sym_eig(ztz, tol)
    invz = np.zeros_like(wz)
    invz[keepz] = 1.0 / wz[keepz]
    f = (vz * invz) @ vz.T
    vr = vz[:, keepz]
    pz = vr @ vr.T
    q_k = int(keepz.sum())

    alpha_k = e @ (x.T @ y)
    rss = max(float(y @ y - alpha_k @ xtx @ alpha_k), 0.0)
    n_k = individual.n_k
    sigma2_hat = rss / (n_k - p_k) if n_k > p_k else None

    return IndividualStats(
        id=individual.id,
        n_k=n_k,
        xtx=xtx,
        ztz=ztz,
        xtz=xtz,
        e=e,
        f=f,
        kmat=e @ xtz,
        lmat=f @ xtz.T,
        pz=pz,
        alpha_k=alpha_k,
        rss=rss,
        sigma2_hat=sigma2_hat,
        p_k=p_k,
        q_k=q_k,
        plogdet_xtx=sym_pseudo_logdet(xtx, tol),
    )


def compute_all_stats(dataset: Dataset, tol: float = 1e-8, threads: int = 1):
    """Statistics for every individual, assembled in input order."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda ind: compute_stats(ind, tol), dataset.individuals))
    return [compute_stats(ind, tol) for ind in dataset.individuals]


def sigma2_extended(individual: Individual, tol: float = 1e-8) -> float:
    """Within-individual residual variance against the joint span of X and Z.

    Uses the projection perpendicular to the extended column space [X Z];
    under the validated containment condition this coincides with the plain
    OLS estimate from compute_stats.
    """
    w = np.hstack([individual.x, individual.z])
    wtw = w.T @ w
    m_k = sym_rank(wtw, tol)
    n_k = individual.n_k
    if n_k <= m_k:
        raise DegenerateIndividual(
            f"individual {individual.id!r}: n_k = {n_k} <= rank of [X Z] = {m_k}"
        )
    wty = w.T @ individual.y
    rss = max(float(individual.y @ individual.y - wty @ pseudo_inverse(wtw, tol) @ wty), 0.0)
    return rss / (n_k - m_k)
