import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rcreml.estimator import RandomCoefficientRegressor
from rcreml.simgen import SimConfig, generate


def long_format(dataset):
    xs, ys, gs = [], [], []
    for ind in dataset.individuals:
        xs.append(ind.x)
        ys.append(ind.y)
        gs.extend([ind.id] * ind.n_k)
    return np.vstack(xs), np.concatenate(ys), np.array(gs)


@pytest.fixture(scope="module")
def sim_data():
    cfg = SimConfig(n_individuals=80, n_obs=10, p=2, q=1,
                    true_alpha=[1.0, -0.5], true_d=[[0.5]], seed=21)
    return generate(cfg)


class TestEstimatorApi:
    def test_get_set_params_and_clone(self):
        est = RandomCoefficientRegressor(dispersion="diagonal", max_iters=7)
        params = est.get_params()
        assert params["dispersion"] == "diagonal"
        assert params["max_iters"] == 7
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            RandomCoefficientRegressor().predict(np.ones((2, 2)))

    def test_fit_recovers_parameters(self, sim_data):
        x, y, groups = long_format(sim_data)
        est = RandomCoefficientRegressor().fit(x, y, groups=groups)
        assert est.converged_
        assert np.abs(est.alpha_ - [1.0, -0.5]).max() < 0.3
        assert 0.1 < est.d_[0, 0] < 1.2
        assert set(est.blups_) == {ind.id for ind in sim_data.individuals}

    def test_group_predictions_beat_population(self, sim_data):
        x, y, groups = long_format(sim_data)
        est = RandomCoefficientRegressor().fit(x, y, groups=groups)
        pop = est.predict(x)
        grp = est.predict(x, groups=groups)
        assert np.mean((y - grp) ** 2) < np.mean((y - pop) ** 2)

    def test_unknown_group_falls_back_to_population(self, sim_data):
        x, y, groups = long_format(sim_data)
        est = RandomCoefficientRegressor().fit(x, y, groups=groups)
        xnew = np.array([[1.0, 0.3]])
        assert est.predict(xnew, groups=["nope"])[0] == pytest.approx(
            float(xnew[0] @ est.alpha_)
        )

    def test_requires_groups(self, sim_data):
        x, y, _ = long_format(sim_data)
        with pytest.raises(ValueError):
            RandomCoefficientRegressor().fit(x, y)

    def test_explicit_z(self, sim_data):
        x, y, groups = long_format(sim_data)
        z = x[:, :1]
        est = RandomCoefficientRegressor().fit(x, y, groups=groups, Z=z)
        ref = RandomCoefficientRegressor().fit(x, y, groups=groups)
        assert np.allclose(est.alpha_, ref.alpha_)
        assert np.allclose(est.d_, ref.d_)
