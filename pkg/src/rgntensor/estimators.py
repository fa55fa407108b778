"""scikit-learn style wrappers around the functional solvers.

* :class:`TuckerRegression` -- ``fit(X, y)`` with ``X`` of shape
  ``(n, p_1, ..., p_d)`` (or any :class:`~rgntensor.measurement.MeasurementEnsemble`),
  ``predict(X)``.
* :class:`TensorCompletion` -- ``fit(X)`` with ``NaN`` marking missing entries,
  ``transform(X)`` fills them.
* :class:`TensorSVD` -- ``fit(Y)``, ``transform(Y)`` to core coordinates,
  ``inverse_transform(S)`` back to the ambient space.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .initialization import (
    completion_init,
    random_init,
    spectral_init_regression,
    spectral_init_svd,
)
from .measurement import Completion, GeneralDense, MeasurementEnsemble
from .rgn import RgnConfig, rgn_solve, rgn_svd_solve
from .tensor import multi_mode_product
from .tucker import check_rank

__all__ = ["TuckerRegression", "TensorCompletion", "TensorSVD"]


def _rank_for(rank, shape):
    if isinstance(rank, (int, np.integer)):
        rank = (int(rank),) * len(shape)
    return check_rank(rank, shape)


class _RgnParams:
    """Shared constructor parameters and config building."""

    def _config(self) -> RgnConfig:
        return RgnConfig(max_iter=self.max_iter, tol=self.tol, retraction=self.retraction,
                         ls_solver=getattr(self, "ls_solver", "qr"), record_timing=True)

    def _check_init(self):
        if self.init not in ("spectral", "random"):
            raise ValueError(f"init must be 'spectral' or 'random', got {self.init!r}")

    def _store(self, x, trace):
        self.tucker_ = x
        self.trace_ = trace
        self.n_iter_ = trace.iterations
        return self


class TuckerRegression(_RgnParams, RegressorMixin, BaseEstimator):
    """Low Tucker rank linear regression ``y_i = <A_i, X> + noise`` solved by RGN.

    Parameters
    ----------
    rank : int or tuple of int
        Tucker rank of the coefficient tensor; an int is used for every mode.
    init : {'spectral', 'random'}
    max_iter, tol, retraction, ls_solver
        Solver settings, see :class:`~rgntensor.rgn.RgnConfig`. Without a
        known truth ``tol`` bounds the relative residual.
    random_state : int, Generator or None
        Only used by ``init='random'``.

    Attributes
    ----------
    coef_ : ndarray of shape (p_1, ..., p_d)
    tucker_ : TuckerTensor
    trace_ : IterationTrace
    n_iter_ : int
    """

    def __init__(self, rank=1, init="spectral", max_iter=300, tol=1e-14,
                 retraction="st_hosvd", ls_solver="qr", random_state=None):
        self.rank = rank
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.retraction = retraction
        self.ls_solver = ls_solver
        self.random_state = random_state

    def _ensemble(self, X, fitting: bool) -> MeasurementEnsemble:
        if isinstance(X, MeasurementEnsemble):
            ens = X
        else:
            X = check_array(X, allow_nd=True, dtype=np.float64)
            if X.ndim < 2:
                raise ValueError("X must have shape (n_samples, p_1, ..., p_d)")
            ens = GeneralDense(X)
        if not fitting and ens.shape != self.shape_:
            raise ValueError(f"X has tensor shape {ens.shape}, the model was fit on {self.shape_}")
        return ens

    def fit(self, X, y):
        self._check_init()
        ens = self._ensemble(X, fitting=True)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        if y.shape != (ens.n,):
            raise ValueError(f"y has shape {y.shape}, expected ({ens.n},)")
        self.shape_ = ens.shape
        rank = _rank_for(self.rank, ens.shape)
        if self.init == "spectral":
            x0 = spectral_init_regression(y, ens, rank)
        else:
            x0 = random_init(ens.shape, rank, seed=self.random_state)
        x, trace = rgn_solve(y, ens, rank, x0, self._config())
        self.coef_ = x.to_dense()
        return self._store(x, trace)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self._ensemble(X, fitting=False).apply(self.coef_)


class TensorCompletion(_RgnParams, TransformerMixin, BaseEstimator):
    """Fill the ``NaN`` entries of a low Tucker rank tensor by RGN.

    Attributes
    ----------
    completed_ : ndarray
        The fitted low-rank tensor.
    tucker_, trace_, n_iter_
        As in :class:`TuckerRegression`.
    """

    def __init__(self, rank=1, init="spectral", max_iter=300, tol=1e-14,
                 retraction="st_hosvd", ls_solver="qr", random_state=None):
        self.rank = rank
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.retraction = retraction
        self.ls_solver = ls_solver
        self.random_state = random_state

    @staticmethod
    def _validate(X) -> np.ndarray:
        X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64,
                        ensure_all_finite="allow-nan")
        if X.ndim < 2:
            raise ValueError("X must be a tensor of order at least 2")
        return X

    def fit(self, X, y=None):
        self._check_init()
        X = self._validate(X)
        observed = ~np.isnan(X)
        if not observed.any():
            raise ValueError("X has no observed entries")
        ens = Completion(np.argwhere(observed), X.shape)
        values = ens.apply(np.where(observed, X, 0.0))
        rank = _rank_for(self.rank, X.shape)
        if self.init == "spectral":
            x0 = completion_init(ens, values, rank)
        else:
            x0 = random_init(X.shape, rank, seed=self.random_state)
        x, trace = rgn_solve(values, ens, rank, x0, self._config())
        self.shape_ = X.shape
        self.completed_ = x.to_dense()
        return self._store(x, trace)

    def transform(self, X):
        """Copy of ``X`` with its ``NaN`` entries replaced by the fitted values."""
        check_is_fitted(self, "completed_")
        X = self._validate(X)
        if X.shape != self.shape_:
            raise ValueError(f"X has shape {X.shape}, the model was fit on {self.shape_}")
        return np.where(np.isnan(X), self.completed_, X)


class TensorSVD(_RgnParams, TransformerMixin, BaseEstimator):
    """Low Tucker rank denoising ``Y = X + E`` by RGN from the T-HOSVD start.

    Attributes
    ----------
    components_ : list of ndarray
        Orthonormal factors ``U_k`` of shape ``(p_k, r_k)``.
    core_ : ndarray
    tucker_, trace_, n_iter_
    """

    def __init__(self, rank=1, init="spectral", max_iter=300, tol=1e-14,
                 retraction="st_hosvd", random_state=None):
        self.rank = rank
        self.init = init
        self.max_iter = max_iter
        self.tol = tol
        self.retraction = retraction
        self.random_state = random_state

    def fit(self, Y, y=None):
        self._check_init()
        Y = check_array(Y, allow_nd=True, ensure_2d=False, dtype=np.float64)
        if Y.ndim < 2:
            raise ValueError("Y must be a tensor of order at least 2")
        rank = _rank_for(self.rank, Y.shape)
        if self.init == "spectral":
            x0 = spectral_init_svd(Y, rank)
        else:
            x0 = random_init(Y.shape, rank, seed=self.random_state)
        x, trace = rgn_svd_solve(Y, rank, x0, self._config())
        self.shape_ = Y.shape
        self.components_ = list(x.factors)
        self.core_ = x.core
        return self._store(x, trace)

    def transform(self, Y):
        """Core coordinates ``Y x_k U_k^T``."""
        check_is_fitted(self, "components_")
        Y = check_array(Y, allow_nd=True, ensure_2d=False, dtype=np.float64)
        if Y.shape != self.shape_:
            raise ValueError(f"Y has shape {Y.shape}, the model was fit on {self.shape_}")
        return multi_mode_product(Y, self.components_, transpose=True)

    def inverse_transform(self, S):
        """``S x_k U_k``."""
        check_is_fitted(self, "components_")
        S = np.asarray(S, dtype=np.float64)
        if S.shape != self.tucker_.rank:
            raise ValueError(f"S has shape {S.shape}, expected {self.tucker_.rank}")
        return multi_mode_product(S, self.components_)
