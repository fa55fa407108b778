"""Riemannian Gauss-Newton on the fixed-Tucker-rank manifold, plus an IHT baseline.

One RGN step at ``X^t``:

1. build the tangent frames at ``X^t``,
2. sketch the measurements against them (an ``n x dim`` design),
3. solve the unconstrained least squares for the tangent coordinates,
4. truncate the resulting tangent-space point back to rank ``r``.

There is no step size, damping, or line search.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .manifold import (
    DegenerateRankError,
    TangentVector,
    contract,
    retract,
    tangent_basis,
)
from .measurement import MeasurementEnsemble, SketchedCovariates
from .tensor import as_tensor, hs_norm
from .tucker import TuckerTensor, check_rank, hosvd, t_hosvd

__all__ = [
    "RgnConfig",
    "IterationTrace",
    "SolverError",
    "DivergenceError",
    "RankDeficientDesignWarning",
    "solve_tangent_ls",
    "rgn_solve",
    "rgn_svd_solve",
    "iht_solve",
]

LS_RANK_TOL = 1e-12


class SolverError(RuntimeError):
    """A solve aborted; ``iteration`` and the partial ``trace`` are attached."""

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


class DivergenceError(SolverError):
    pass


class RankDeficientDesignWarning(RuntimeWarning):
    pass


@dataclass
class RgnConfig:
    """Solver settings shared by RGN and IHT.

    ``tol`` applies to the relative error against a supplied truth; without
    a truth it applies to ``||y - A(x)|| / ||y||``. Either way the run also
    stops on residual stagnation (relative residual change below
    ``stagnation_tol`` for ``stagnation_window`` consecutive iterations) or
    at ``max_iter``.
    """

    max_iter: int = 300
    tol: float = 1e-14
    retraction: str = "st_hosvd"
    ls_solver: str = "qr"
    record_timing: bool = True
    stagnation_tol: float = 1e-15
    stagnation_window: int = 3
    fast_retraction: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        self.retraction = self.retraction.lower().replace("-", "_")
        if self.retraction not in ("st_hosvd", "t_hosvd"):
            raise ValueError(f"unknown retraction {self.retraction!r}")
        if self.ls_solver not in ("qr", "cg"):
            raise ValueError(f"unknown least-squares solver {self.ls_solver!r}")


@dataclass
class IterationTrace:
    """Per-iteration record; index 0 is the initial point."""

    rel_rmse: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    ls_condition: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    rank_deficient: list = field(default_factory=list)
    status: str = "running"

    def __len__(self):
        return len(self.residual)

    @property
    def iterations(self) -> int:
        return max(len(self) - 1, 0)

    def record(self, residual, rel_rmse=None, cond=None, wall=0.0, deficient=False):
        self.residual.append(float(residual))
        self.rel_rmse.append(None if rel_rmse is None else float(rel_rmse))
        # None when unknown (initial point, CG) or unbounded, so the trace stays valid JSON
        self.ls_condition.append(float(cond) if cond is not None and np.isfinite(cond) else None)
        self.wall_time.append(float(wall))
        self.rank_deficient.append(bool(deficient))

    def first_below(self, level: float) -> Optional[int]:
        """First iteration whose relative error is below ``level``."""
        for t, e in enumerate(self.rel_rmse):
            if e is not None and e < level:
                return t
        return None

    def to_dict(self) -> dict:
        return asdict(self)


# -- least squares ------------------------------------------------------------


def _lstsq(design: np.ndarray, y: np.ndarray, solver: str):
    """Return ``(theta, condition_estimate, rank_deficient)``."""
    n, dim = design.shape
    if n < dim:
        warnings.warn(
            f"underdetermined tangent least squares (n={n} < dim={dim}); "
            "using the minimum-norm solution",
            RankDeficientDesignWarning,
            stacklevel=3,
        )
    if solver == "cg":
        return _lstsq_cg(design, y)
    if n >= dim:
        # Q is applied implicitly; forming it would double the cost
        qty, r = scipy.linalg.qr_multiply(design, y, mode="right")
        diag = np.abs(np.diag(r))
        if diag.size and diag.min() > LS_RANK_TOL * diag.max():
            theta = scipy.linalg.solve_triangular(r, qty, check_finite=False)
            return theta, float(diag.max() / diag.min()), False
    theta, _, rank, sv = scipy.linalg.lstsq(design, y, cond=LS_RANK_TOL, check_finite=False)
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else float("inf")
    deficient = rank < dim
    if deficient and n >= dim:
        warnings.warn(
            f"tangent least-squares design is rank deficient (rank {rank} < {dim})",
            RankDeficientDesignWarning,
            stacklevel=3,
        )
    return theta, cond, deficient


def _lstsq_cg(design, y):
    dim = design.shape[1]
    gram = LinearOperator((dim, dim), matvec=lambda v: design.T @ (design @ v), dtype=np.float64)
    rhs = design.T @ y
    theta, info = cg(gram, rhs, rtol=1e-15, atol=0.0, maxiter=20 * dim)
    if info != 0:
        warnings.warn(f"CG on the normal equations stopped early (info={info})",
                      RankDeficientDesignWarning, stacklevel=3)
    return theta, None, info != 0


def solve_tangent_ls(cov: SketchedCovariates, y, solver: str = "qr", return_info: bool = False):
    """Minimize ``||y - design @ theta||`` over the stacked tangent coordinates.

    Returns the minimizer as a :class:`TangentVector` on the sketch basis; with
    ``return_info=True`` also ``(condition_estimate, rank_deficient)``.
    Rank-deficient designs get the minimum-norm solution and a
    :class:`RankDeficientDesignWarning`.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (cov.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({cov.n},)")
    theta, cond, deficient = _lstsq(cov.design, y, solver)
    v = TangentVector.from_vector(cov.basis, theta)
    if return_info:
        return v, cond, deficient
    return v


# -- solvers ------------------------------------------------------------------


class _Monitor:
    """Shared bookkeeping for the iterative solvers: trace, metrics, stopping."""

    def __init__(self, cfg: RgnConfig, truth, residual_fn, data_norm: float = 0.0):
        self.cfg = cfg
        self.data_norm = float(data_norm)
        self.truth = None if truth is None else as_tensor(truth)
        self.truth_norm = None if truth is None else hs_norm(self.truth)
        if self.truth_norm == 0:
            raise ValueError("the truth tensor is zero")
        self.residual_fn = residual_fn
        self.trace = IterationTrace()
        self._clock = time.perf_counter()
        self._stagnant = 0

    def error(self, x_dense):
        if self.truth is None:
            return None
        return hs_norm(x_dense - self.truth) / self.truth_norm

    def record(self, x: TuckerTensor, cond=None, deficient=False) -> np.ndarray:
        x_dense = x.to_dense()
        if not np.all(np.isfinite(x_dense)):
            self.trace.status = "non-finite"
            raise SolverError("non-finite iterate", iteration=self.trace.iterations, trace=self.trace)
        now = time.perf_counter()
        wall = now - self._clock if self.cfg.record_timing else 0.0
        self._clock = now
        self.trace.record(self.residual_fn(x_dense), self.error(x_dense), cond, wall, deficient)
        return x_dense

    def should_stop(self) -> bool:
        tr = self.trace
        err = tr.rel_rmse[-1]
        if err is not None and err < self.cfg.tol:
            tr.status = "converged"
            return True
        if err is None and tr.residual[-1] <= self.cfg.tol * self.data_norm:
            # truth-free exact fit; stagnation cannot fire on a rounding-level residual
            tr.status = "converged"
            return True
        if len(tr) >= 2:
            prev, cur = tr.residual[-2], tr.residual[-1]
            change = abs(prev - cur) / prev if prev > 0 else 0.0
            self._stagnant = self._stagnant + 1 if change < self.cfg.stagnation_tol else 0
            if self._stagnant >= self.cfg.stagnation_window:
                tr.status = "stagnated"
                return True
        if tr.iterations >= self.cfg.max_iter:
            tr.status = "max_iter"
            return True
        return False


def _check_start(x0: TuckerTensor, rank, shape):
    rank = check_rank(rank, shape)
    if x0.shape != tuple(shape):
        raise ValueError(f"initial point has shape {x0.shape}, expected {tuple(shape)}")
    if x0.rank != rank:
        raise ValueError(f"initial point has rank {x0.rank}, expected {rank}")
    return rank


def rgn_solve(y, ensemble: MeasurementEnsemble, rank, x0: TuckerTensor,
              config: Optional[RgnConfig] = None, truth=None):
    """Riemannian Gauss-Newton for ``y = A(X) + noise`` with ``X`` of Tucker rank ``rank``.

    Parameters
    ----------
    y : ndarray of shape (n,)
    ensemble : MeasurementEnsemble
    rank : sequence of int
    x0 : TuckerTensor
        Starting point of Tucker rank exactly ``rank``.
    config : RgnConfig, optional
    truth : ndarray, optional
        When given, the relative error is traced and used for stopping.

    Returns
    -------
    x : TuckerTensor
    trace : IterationTrace

    Raises
    ------
    SolverError
        On a degenerate iterate (the tangent space is undefined) or a
        non-finite value; the partial trace is attached.
    """
    cfg = config or RgnConfig()
    y = np.asarray(y, dtype=np.float64)
    rank = _check_start(x0, rank, ensemble.shape)
    mon = _Monitor(cfg, truth, lambda xd: float(np.linalg.norm(y - ensemble.apply(xd))),
                   float(np.linalg.norm(y)))
    x = x0
    mon.record(x)
    if mon.should_stop():
        return x, mon.trace
    while True:
        t = mon.trace.iterations
        try:
            basis = tangent_basis(x)
            cov = ensemble.sketch(basis)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RankDeficientDesignWarning)
                v, cond, deficient = solve_tangent_ls(cov, y, cfg.ls_solver, return_info=True)
            if not np.all(np.isfinite(v.to_vector())):
                raise SolverError("non-finite least-squares solution", iteration=t, trace=mon.trace)
            x = retract(basis, v, rank, cfg.retraction, fast=cfg.fast_retraction)
        except DegenerateRankError as exc:
            mon.trace.status = "degenerate"
            raise SolverError(f"iterate left the manifold at iteration {t}: {exc}",
                              iteration=t, trace=mon.trace) from exc
        mon.record(x, cond, deficient)
        if mon.should_stop():
            return x, mon.trace


def rgn_svd_solve(Y, rank, x0: Optional[TuckerTensor] = None,
                  config: Optional[RgnConfig] = None, truth=None):
    """RGN for the tensor SVD model ``Y = X + E``.

    The least squares has the closed form ``contract(basis, Y)``, so each step
    is ``X <- H_r(P_T(Y))`` and no design matrix is formed. Defaults to the
    T-HOSVD initialization.
    """
    cfg = config or RgnConfig()
    Y = as_tensor(Y)
    rank = check_rank(rank, Y.shape)
    x = t_hosvd(Y, rank) if x0 is None else x0
    _check_start(x, rank, Y.shape)
    mon = _Monitor(cfg, truth, lambda xd: hs_norm(Y - xd), hs_norm(Y))
    mon.record(x)
    if mon.should_stop():
        return x, mon.trace
    while True:
        t = mon.trace.iterations
        try:
            basis = tangent_basis(x)
            x = retract(basis, contract(basis, Y), rank, cfg.retraction, fast=cfg.fast_retraction)
        except DegenerateRankError as exc:
            mon.trace.status = "degenerate"
            raise SolverError(f"iterate left the manifold at iteration {t}: {exc}",
                              iteration=t, trace=mon.trace) from exc
        mon.record(x, cond=1.0)
        if mon.should_stop():
            return x, mon.trace


def iht_solve(y, ensemble: MeasurementEnsemble, rank, x0: TuckerTensor, step: float,
              config: Optional[RgnConfig] = None, truth=None):
    """Projected gradient (iterative hard thresholding) baseline.

    ``X <- H_r(X - step * A^*(A(X) - y))``. Stops like :func:`rgn_solve`;
    raises :class:`DivergenceError` once the error (relative error when
    ``truth`` is given, residual otherwise) exceeds 10x its initial value.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    cfg = config or RgnConfig()
    y = np.asarray(y, dtype=np.float64)
    rank = _check_start(x0, rank, ensemble.shape)
    mon = _Monitor(cfg, truth, lambda xd: float(np.linalg.norm(y - ensemble.apply(xd))),
                   float(np.linalg.norm(y)))
    x = x0
    xd = mon.record(x)
    if mon.should_stop():
        return x, mon.trace

    def err():
        e = mon.trace.rel_rmse[-1]
        return mon.trace.residual[-1] if e is None else e

    start = err()
    while True:
        grad = ensemble.adjoint(ensemble.apply(xd) - y)
        x = hosvd(xd - step * grad, rank, cfg.retraction)
        xd = mon.record(x)
        if err() > 10 * start:
            mon.trace.status = "diverged"
            raise DivergenceError(
                f"IHT diverged at iteration {mon.trace.iterations} (step={step})",
                iteration=mon.trace.iterations, trace=mon.trace,
            )
        if mon.should_stop():
            return x, mon.trace
