"""Fisher scoring maximization of the reduced REML objective.

The dispersion matrix is parameterized linearly, theta -> D(theta), so the
gradient and expected information are trace expressions over the constant
basis matrices, each O(N p^3 + N q^3) per evaluation. The iteration starts
at theta = 0, safeguards each step with a halving line search, and keeps
D(theta) in the positive semidefinite cone by eigenvalue clipping after
every accepted step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blup import estimate_random_effects
from .errors import (
    DegenerateIndividual,
    NonPositiveDefiniteSigma,
    NonPositiveDeterminant,
    SingularInformation,
)
from .likelihood import CovarianceState, covariance_state, reml_reduced
from .model import Dataset, DispersionSpec, require_valid
from .stats import compute_all_stats, sigma2_extended


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 100
    grad_tol: float = 1e-6
    step_tol: float = 1e-8
    ridge: float = 0.0
    line_search: bool = True
    sigma_mode: str = "hybrid-ols"  # or "user-fixed"
    max_halvings: int = 30
    validate_tol: float = 1e-8
    threads: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.sigma_mode not in ("hybrid-ols", "user-fixed"):
            raise ValueError(f"unknown sigma_mode {self.sigma_mode!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "FitConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    theta: np.ndarray
    loglik: float
    grad_norm: float
    step_size: float

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "theta": self.theta.tolist(),
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "step_size": self.step_size,
        }


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    d_hat: np.ndarray
    alpha_hat: np.ndarray
    omega: np.ndarray
    sigma2: np.ndarray
    loglik: float
    converged: bool
    stop_reason: str
    trace: tuple
    blups: tuple
    ids: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "d_hat": self.d_hat.tolist(),
            "alpha_hat": self.alpha_hat.tolist(),
            "omega": self.omega.tolist(),
            "sigma2": self.sigma2.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "trace": [rec.to_dict() for rec in self.trace],
            "blups": [b.tolist() for b in self.blups],
            "ids": list(self.ids),
        }


def psd_project(d: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix: clip negative eigenvalues to zero."""
    d = np.asarray(d, dtype=float)
    w, v = np.linalg.eigh(0.5 * (d + d.T))
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def g_k(stats, d_k: np.ndarray, sigma2_k: float,
        inner: np.ndarray | None = None) -> np.ndarray:
    """(sigma_k^2 F_k + D_k)^- L_k, the q x p gain of individual k."""
    if inner is None:
        from .likelihood import restricted_pinv

        inner = restricted_pinv(sigma2_k * stats.f + d_k)
    return inner @ stats.lmat


def _projected_bases(all_stats, dspec: DispersionSpec):
    """dD_k/dtheta_i = P(Z'Z) (dD/dtheta_i) P(Z'Z), per individual and parameter."""
    out = []
    for s in all_stats:
        full_rank = s.q_k == s.q
        if full_rank:
            out.append(list(dspec.basis))
        else:
            out.append([s.pz @ b @ s.pz for b in dspec.basis])
    return out


def gradient(theta, all_stats, sigma2, dspec: DispersionSpec,
             state: CovarianceState | None = None) -> np.ndarray:
    """Score vector of the reduced REML objective at theta."""
    if state is None:
        state = covariance_state(all_stats, dspec.d_from_theta(theta), sigma2)
    bases = _projected_bases(all_stats, dspec)
    per_param = [[] for _ in range(dspec.n_params)]
    for s, inner, dbs in zip(all_stats, state.inner_k, bases):
        gk = inner @ s.lmat
        r = s.alpha_k - state.alpha_hat
        gr = gk @ r
        core = np.outer(gr, gr) + gk @ state.omega @ gk.T - inner
        for i, db in enumerate(dbs):
            per_param[i].append(0.5 * float(np.sum(core * db)))
    return np.array([math.fsum(terms) for terms in per_param])


def expected_information(theta, all_stats, sigma2, dspec: DispersionSpec,
                         state: CovarianceState | None = None) -> np.ndarray:
    """Expected (Fisher) information of the reduced REML objective.

    Evaluates the exact expectation of the negated Hessian via the chain
    rule for the linear parameterization; equals the classical dense trace
    form computed from the stacked design, but in O(N (p^3 + q^3) r^2).
    The result is symmetric positive semidefinite up to roundoff.
    """
    if state is None:
        state = covariance_state(all_stats, dspec.d_from_theta(theta), sigma2)
    bases = _projected_bases(all_stats, dspec)
    r = dspec.n_params
    omega = state.omega

    term1 = np.zeros((r, r))
    mid = np.zeros((r, r))
    a_mats = [np.zeros((omega.shape[0], omega.shape[0])) for _ in range(r)]
    for s, inner, dbs in zip(all_stats, state.inner_k, bases):
        gk = inner @ s.lmat
        h = gk @ omega @ gk.T
        t = [inner @ db for db in dbs]          # S^- dD_i, q x q
        u = [h @ db for db in dbs]              # G Omega G' dD_i, q x q
        for i in range(r):
            a_mats[i] += gk.T @ dbs[i] @ gk
            for j in range(i, r):
                term1[i, j] += float(np.sum(t[i] * t[j].T))
                mid[i, j] += float(np.sum(u[i] * t[j].T))
    third = np.zeros((r, r))
    oa = [omega @ a for a in a_mats]
    for i in range(r):
        for j in range(i, r):
            third[i, j] = float(np.sum(oa[i] * oa[j].T))

    j_mat = 0.5 * (term1 - 2.0 * mid + third)
    j_mat = j_mat + np.triu(j_mat, 1).T
    return 0.5 * (j_mat + j_mat.T)


def _solve_information(j_mat: np.ndarray, grad: np.ndarray, ridge: float) -> np.ndarray:
    try:
        np.linalg.cholesky(j_mat)
        return np.linalg.solve(j_mat, grad)
    except np.linalg.LinAlgError:
        if ridge > 0:
            scale = max(np.abs(j_mat).max(), 1.0)
            try:
                return np.linalg.solve(j_mat + ridge * scale * np.eye(j_mat.shape[0]), grad)
            except np.linalg.LinAlgError:
                pass
        raise SingularInformation("expected information matrix is singular")


def _admissible_theta(theta, dspec: DispersionSpec) -> np.ndarray:
    """Pull theta back to the PSD cone (identity there for PSD D(theta))."""
    return dspec.theta_from_d(psd_project(dspec.d_from_theta(theta)))


def _try_loglik(theta, all_stats, sigma2, dspec):
    try:
        state = covariance_state(all_stats, dspec.d_from_theta(theta), sigma2)
        return reml_reduced(all_stats, dspec.d_from_theta(theta), sigma2, state=state), state
    except (NonPositiveDeterminant, NonPositiveDefiniteSigma, SingularInformation):
        return -math.inf, None


def scoring_step(theta, loglik, all_stats, sigma2, dspec: DispersionSpec,
                 config: FitConfig, state: CovarianceState | None = None):
    """One safeguarded scoring update.

    Returns (new_theta, new_loglik, new_state, step_size, stalled). With the
    line search on, the raw step theta + J^{-1} grad is halved until the
    PSD-projected candidate does not decrease the objective; stalled means
    no such step was found.
    """
    if state is None:
        state = covariance_state(all_stats, dspec.d_from_theta(theta), sigma2)
    grad = gradient(theta, all_stats, sigma2, dspec, state=state)
    j_mat = expected_information(theta, all_stats, sigma2, dspec, state=state)
    direction = _solve_information(j_mat, grad, config.ridge)

    if not config.line_search:
        new_theta = _admissible_theta(theta + direction, dspec)
        new_loglik, new_state = _try_loglik(new_theta, all_stats, sigma2, dspec)
        return new_theta, new_loglik, new_state, 1.0, False

    step = 1.0
    for _ in range(config.max_halvings + 1):
        candidate = _admissible_theta(theta + step * direction, dspec)
        cand_loglik, cand_state = _try_loglik(candidate, all_stats, sigma2, dspec)
        if cand_loglik >= loglik:
            return candidate, cand_loglik, cand_state, step, False
        step *= 0.5
    return theta, loglik, state, 0.0, True


def fit(dataset: Dataset, dspec: DispersionSpec | None = None,
        config: FitConfig | None = None, sigma2=None) -> FitResult:
    """Fit the random coefficient model by Fisher scoring from theta = 0.

    sigma_mode "hybrid-ols" plugs in the within-individual residual
    variances and keeps them fixed; "user-fixed" requires sigma2.
    """
    config = config or FitConfig()
    dspec = dspec or DispersionSpec.full_symmetric(dataset.q)
    if dspec.dim != dataset.q:
        raise ValueError(f"dispersion dimension {dspec.dim} != q = {dataset.q}")
    require_valid(dataset, config.validate_tol)
    all_stats = compute_all_stats(dataset, config.validate_tol, threads=config.threads)

    if config.sigma_mode == "user-fixed":
        if sigma2 is None:
            raise ValueError("sigma_mode 'user-fixed' requires sigma2 values")
        sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
        if sigma2.shape[0] == 1:
            sigma2 = np.repeat(sigma2, dataset.n_individuals)
    else:
        sigma2 = np.array(
            [sigma2_extended(ind, config.validate_tol) for ind in dataset.individuals]
        )
        if np.any(sigma2 <= 0):
            raise DegenerateIndividual(
                "some within-individual variance estimates are zero; "
                "supply sigma2 with sigma_mode 'user-fixed'"
            )

    theta = np.zeros(dspec.n_params)
    loglik, state = _try_loglik(theta, all_stats, sigma2, dspec)
    if state is None:
        raise SingularInformation("REML objective is not evaluable at theta = 0")

    trace = []
    converged = False
    stop_reason = "max_iters"
    for it in range(config.max_iters):
        grad = gradient(theta, all_stats, sigma2, dspec, state=state)
        grad_norm = float(np.abs(grad).max(initial=0.0))
        if grad_norm < config.grad_tol:
            trace.append(IterationRecord(it, theta.copy(), loglik, grad_norm, 0.0))
            converged = True
            stop_reason = "grad_tol"
            break
        new_theta, new_loglik, new_state, step, stalled = scoring_step(
            theta, loglik, all_stats, sigma2, dspec, config, state=state
        )
        trace.append(IterationRecord(it, theta.copy(), loglik, grad_norm, step))
        if stalled:
            converged = True
            stop_reason = "stalled"
            break
        delta = float(np.abs(new_theta - theta).max(initial=0.0))
        theta, loglik, state = new_theta, new_loglik, new_state
        if state is None:
            # line search disabled and bare step landed outside the
            # admissible region
            loglik, state = _try_loglik(theta, all_stats, sigma2, dspec)
            if state is None:
                stop_reason = "inadmissible"
                break
        if delta < config.step_tol:
            converged = True
            stop_reason = "step_tol"
            break

    d_hat = psd_project(dspec.d_from_theta(theta))
    theta = dspec.theta_from_d(d_hat)
    state = covariance_state(all_stats, dspec.d_from_theta(theta), sigma2)
    loglik = reml_reduced(all_stats, dspec.d_from_theta(theta), sigma2, state=state)
    blups = tuple(
        estimate_random_effects(s, dk, s2, state.alpha_hat, inner=inner)
        for s, dk, inner, s2 in zip(all_stats, state.d_k, state.inner_k, sigma2)
    )
    return FitResult(
        theta_hat=theta,
        d_hat=d_hat,
        alpha_hat=state.alpha_hat,
        omega=state.omega,
        sigma2=np.asarray(sigma2, dtype=float),
        loglik=loglik,
        converged=converged,
        stop_reason=stop_reason,
        trace=tuple(trace),
        blups=blups,
        ids=tuple(ind.id for ind in dataset.individuals),
    )
