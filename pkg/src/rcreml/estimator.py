"""Scikit-learn style estimator facade over the scoring machinery."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .model import Dataset, DispersionSpec, Individual
from .scoring import FitConfig, fit as _fit


class RandomCoefficientRegressor(BaseEstimator, RegressorMixin):
    """Mixed-effects regression with per-group random coefficients.

    Fixed effects are shared across groups; the coefficients of the columns
    selected by ``z_columns`` (or of an explicit ``Z``) additionally vary
    randomly per group with covariance D, estimated by restricted maximum
    likelihood via Fisher scoring on per-group sufficient statistics.

    Parameters
    ----------
    dispersion : "full-symmetric" or "diagonal"
        Parameterization of the random-effect covariance.
    z_columns : sequence of int
        Columns of X whose coefficients vary per group; ignored when an
        explicit Z is passed to fit.
    sigma_mode : "hybrid-ols" or "user-fixed"
        Residual variances from per-group OLS, or supplied by the caller.
    """

    def __init__(self, dispersion="full-symmetric", z_columns=(0,),
                 sigma_mode="hybrid-ols", max_iters=100, grad_tol=1e-6,
                 step_tol=1e-8, ridge=0.0, line_search=True):
        self.dispersion = dispersion
        self.z_columns = z_columns
        self.sigma_mode = sigma_mode
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.step_tol = step_tol
        self.ridge = ridge
        self.line_search = line_search

    def _build_dataset(self, X, y, groups, Z):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        groups = np.asarray(groups)
        if Z is not None:
            Z = np.asarray(Z, dtype=float)
        individuals = []
        order = []
        seen = {}
        for g in groups:
            key = str(g)
            if key not in seen:
                seen[key] = True
                order.append(key)
        for key in order:
            mask = np.array([str(g) == key for g in groups])
            xg = X[mask]
            zg = Z[mask] if Z is not None else xg[:, list(self.z_columns)]
            individuals.append(Individual(x=xg, z=zg, y=y[mask], id=key))
        return Dataset(individuals=tuple(individuals))

    def fit(self, X, y, groups=None, Z=None, sigma2=None):
        if groups is None:
            raise ValueError("groups is required: one label per row of X")
        dataset = self._build_dataset(X, y, groups, Z)
        dspec = DispersionSpec.from_kind(self.dispersion, dataset.q)
        config = FitConfig(
            max_iters=self.max_iters,
            grad_tol=self.grad_tol,
            step_tol=self.step_tol,
            ridge=self.ridge,
            line_search=self.line_search,
            sigma_mode=self.sigma_mode,
        )
        result = _fit(dataset, dspec, config, sigma2=sigma2)
        self.result_ = result
        self.alpha_ = result.alpha_hat
        self.d_ = result.d_hat
        self.theta_ = result.theta_hat
        self.omega_ = result.omega
        self.sigma2_ = result.sigma2
        self.loglik_ = result.loglik
        self.converged_ = result.converged
        self.blups_ = dict(zip(result.ids, result.blups))
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def predict(self, X, groups=None, Z=None):
        """Population prediction X alpha, plus Z beta_g for known groups."""
        check_is_fitted(self, "alpha_")
        X = np.asarray(X, dtype=float)
        pred = X @ self.alpha_
        if groups is None:
            return pred
        groups = np.asarray(groups)
        if Z is not None:
            Z = np.asarray(Z, dtype=float)
        for i, g in enumerate(groups):
            beta = self.blups_.get(str(g))
            if beta is None:
                continue
            zrow = Z[i] if Z is not None else X[i, list(self.z_columns)]
            pred[i] += float(zrow @ beta)
        return pred
