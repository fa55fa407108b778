"""Starting points for the solvers."""

from __future__ import annotations

import warnings

import numpy as np

from .measurement import Completion, MeasurementEnsemble
from .tensor import as_tensor, matricize, multi_mode_product, normalize_signs
from .tucker import TuckerTensor, check_rank, t_hosvd

__all__ = [
    "spectral_init_regression",
    "spectral_init_svd",
    "completion_init",
    "random_init",
]


def spectral_init_regression(y, ensemble: MeasurementEnsemble, rank) -> TuckerTensor:
    """T-HOSVD of the back-projection ``A^*(y)``.

    The back-projection is divided by :meth:`~MeasurementEnsemble.energy_scale`
    so the initial point lives on the scale of the unknown for both the unit
    and the ``1/n`` variance conventions. The rescaling does not change the
    subspaces, hence not the RGN iterates either.
    """
    z = ensemble.adjoint(np.asarray(y, dtype=np.float64)) / ensemble.energy_scale()
    if not np.any(z):
        warnings.warn("zero back-projection; the initial point is rank deficient", RuntimeWarning,
                      stacklevel=2)
    return t_hosvd(z, rank)


def spectral_init_svd(Y, rank) -> TuckerTensor:
    """``Y x_k P_{U_k}`` with ``U_k`` the leading left singular vectors of ``unfold(Y, k)``."""
    return t_hosvd(as_tensor(Y), rank)


def completion_init(ensemble: Completion, values, rank, rho=None) -> TuckerTensor:
    """Spectral start for tensor completion with the Gram diagonal removed.

    ``U_k`` spans the leading ``r_k`` singular vectors (eigenvectors of
    largest magnitude) of ``G_k = unfold(Y_omega, k) unfold(Y_omega, k)^T``
    with its diagonal zeroed; the start is ``(Y_omega / rho) x_k P_{U_k}``.
    """
    if not isinstance(ensemble, Completion):
        raise TypeError("completion_init needs a Completion ensemble")
    rank = check_rank(rank, ensemble.shape)
    rho = ensemble.sampling_ratio if rho is None else float(rho)
    if not 0 < rho <= 1:
        raise ValueError(f"sampling ratio must be in (0, 1], got {rho}")
    filled = ensemble.fill(values)
    factors = []
    for k, r in enumerate(rank):
        m = matricize(filled, k)
        g = m @ m.T
        np.fill_diagonal(g, 0.0)
        w, vecs = np.linalg.eigh(g)
        order = np.argsort(-np.abs(w), kind="stable")[:r]
        factors.append(normalize_signs(vecs[:, order])[0])
    core = multi_mode_product(filled / rho, factors, transpose=True)
    return TuckerTensor(core, factors)


def random_init(shape, rank, seed=None) -> TuckerTensor:
    """I.i.d. standard Gaussian tensor truncated to rank ``rank`` by T-HOSVD."""
    rng = np.random.default_rng(seed)
    shape = tuple(int(p) for p in shape)
    return t_hosvd(rng.standard_normal(shape), check_rank(rank, shape))
