import numpy as np
import pytest
from conftest import rel_err
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rgntensor.estimators import TensorCompletion, TensorSVD, TuckerRegression
from rgntensor.measurement import gaussian_ensemble
from rgntensor.tensor import multi_mode_product
from rgntensor.tucker import random_tucker


@pytest.fixture
def regression_data():
    rng = np.random.default_rng(0)
    truth = random_tucker((8, 8, 8), (2, 2, 2), rng).to_dense()
    X = rng.standard_normal((400, 8, 8, 8))
    y = np.einsum("nijk,ijk->n", X, truth)
    return X, y, truth


class TestTuckerRegression:
    def test_fit_predict(self, regression_data):
        X, y, truth = regression_data
        model = TuckerRegression(rank=2).fit(X, y)
        assert rel_err(model.coef_, truth) < 1e-10
        assert model.n_iter_ == model.trace_.iterations >= 1
        np.testing.assert_allclose(model.predict(X[:5]), y[:5], atol=1e-8 * np.abs(y).max())
        assert model.score(X, y) > 1 - 1e-12

    def test_ensemble_input(self, rng):
        truth = random_tucker((6, 6, 6), (2, 2, 2), rng).to_dense()
        ens = gaussian_ensemble(300, truth.shape, seed=rng)
        model = TuckerRegression(rank=(2, 2, 2)).fit(ens, ens.apply(truth))
        assert rel_err(model.coef_, truth) < 1e-10

    def test_params_and_clone(self):
        model = TuckerRegression(rank=3, max_iter=7, random_state=1)
        params = model.get_params()
        assert params["rank"] == 3 and params["max_iter"] == 7 and params["ls_solver"] == "qr"
        twin = clone(model)
        assert twin.get_params() == params and twin is not model
        model.set_params(tol=1e-6)
        assert model.tol == 1e-6

    def test_errors(self, regression_data):
        X, y, _ = regression_data
        with pytest.raises(NotFittedError):
            TuckerRegression().predict(X)
        with pytest.raises(ValueError):
            TuckerRegression(rank=2).fit(X, y[:-1])
        with pytest.raises(ValueError):
            TuckerRegression(init="zeros").fit(X, y)
        with pytest.raises(ValueError):
            TuckerRegression(rank=2).fit(np.ones(5), np.ones(5))
        model = TuckerRegression(rank=2, max_iter=2).fit(X, y)
        with pytest.raises(ValueError):
            model.predict(np.ones((3, 8, 8, 7)))


class TestTensorCompletion:
    def test_fill_missing(self):
        rng = np.random.default_rng(1)
        truth = random_tucker((20, 20, 20), (2, 2, 2), rng).to_dense()
        X = truth.copy()
        X[rng.random(X.shape) > 0.3] = np.nan
        model = TensorCompletion(rank=2).fit(X)
        assert rel_err(model.completed_, truth) < 1e-10
        filled = model.fit_transform(X)
        assert not np.isnan(filled).any()
        observed = ~np.isnan(X)
        np.testing.assert_array_equal(filled[observed], X[observed])
        assert rel_err(filled, truth) < 1e-10

    def test_errors(self):
        with pytest.raises(NotFittedError):
            TensorCompletion().transform(np.ones((2, 2)))
        with pytest.raises(ValueError):
            TensorCompletion().fit(np.full((3, 3), np.nan))
        with pytest.raises(ValueError):
            TensorCompletion().fit(np.ones(4))
        model = TensorCompletion(rank=1).fit(np.outer(np.arange(1.0, 5), np.arange(1.0, 4)))
        with pytest.raises(ValueError):
            model.transform(np.ones((3, 3)))


class TestTensorSVD:
    def test_denoise_and_coordinates(self):
        rng = np.random.default_rng(2)
        truth = random_tucker((15, 15, 15), (2, 2, 2), rng, core_scale=50.0).to_dense()
        Y = truth + 0.1 * rng.standard_normal(truth.shape)
        model = TensorSVD(rank=2, max_iter=10).fit(Y)
        assert len(model.components_) == 3 and model.core_.shape == (2, 2, 2)
        for u in model.components_:
            np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-12)
        assert rel_err(model.tucker_.to_dense(), truth) < rel_err(Y, truth)
        S = model.transform(Y)
        np.testing.assert_allclose(S, multi_mode_product(Y, model.components_, transpose=True))
        back = model.inverse_transform(S)
        np.testing.assert_allclose(model.transform(back), S, atol=1e-10)

    def test_exact_input(self, rng):
        truth = random_tucker((6, 7, 5), (2, 3, 2), rng).to_dense()
        model = TensorSVD(rank=(2, 3, 2)).fit(truth)
        assert rel_err(model.tucker_.to_dense(), truth) <= 1e-12
        assert model.n_iter_ <= 2

    def test_errors(self):
        with pytest.raises(NotFittedError):
            TensorSVD().transform(np.ones((2, 2)))
        model = TensorSVD(rank=1).fit(np.ones((3, 4)))
        with pytest.raises(ValueError):
            model.transform(np.ones((4, 3)))
        with pytest.raises(ValueError):
            model.inverse_transform(np.ones((2, 2)))
        with pytest.raises(ValueError):
            TensorSVD().fit(np.array([1.0, np.nan]))
