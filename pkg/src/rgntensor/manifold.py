"""Geometry of the manifold of fixed-Tucker-rank tensors.

A point ``X = S x_1 U_1 ... x_d U_d`` gets, per mode ``k``,

* ``U_perp[k]``: an orthonormal complement of ``U_k``,
* ``V[k] = Q(unfold(S, k)^T)``: orthonormal basis of the row space of the core unfolding,
* ``W[k] = (U_d kron .. U_{k+1} kron U_{k-1} .. kron U_1) V[k]``: the row space of ``unfold(X, k)``.

Tangent vectors are stored in the minimal coordinates ``(B, D_1..D_d)`` with
``B`` of shape ``rank`` and ``D_k`` of shape ``(p_k - r_k, r_k)``; ``extend``
maps them into the ambient space and ``contract`` is its adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import (
    as_tensor,
    hs_norm,
    kron_except,
    matricize,
    multi_mode_product,
    orthonormal_complement,
    qr_q,
    tensorize,
    vec,
)
from .tucker import TuckerTensor, check_rank, fix_factor_signs, hosvd

__all__ = [
    "DegenerateRankError",
    "TangentBasis",
    "TangentVector",
    "tangent_basis",
    "extend",
    "contract",
    "project_tangent",
    "riemannian_gradient",
    "retract",
    "gauss_newton_residual",
]

RANK_TOL = 1e-12


class DegenerateRankError(ValueError):
    """A tensor that should have Tucker rank ``r`` has a smaller mode rank."""


@dataclass(frozen=True, eq=False)
class TangentBasis:
    base: TuckerTensor
    U_perp: tuple
    V: tuple
    W: tuple

    @property
    def factors(self):
        return self.base.factors

    @property
    def shape(self):
        return self.base.shape

    @property
    def rank(self):
        return self.base.rank

    @property
    def d_shapes(self):
        return tuple((p - r, r) for p, r in zip(self.shape, self.rank))

    @property
    def dim(self) -> int:
        """Manifold dimension ``prod r_k + sum r_k (p_k - r_k)``."""
        return int(np.prod(self.rank)) + sum(a * b for a, b in self.d_shapes)

    def zero(self) -> "TangentVector":
        return TangentVector(np.zeros(self.rank), [np.zeros(s) for s in self.d_shapes], self)


@dataclass(eq=False)
class TangentVector:
    """Coordinates ``(B, D)`` of a tangent vector living in ``basis``."""

    B: np.ndarray
    D: list
    basis: TangentBasis = field(repr=False)

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=np.float64)
        self.D = [np.asarray(d, dtype=np.float64) for d in self.D]
        if self.B.shape != self.basis.rank:
            raise ValueError(f"B has shape {self.B.shape}, expected {self.basis.rank}")
        if len(self.D) != len(self.basis.rank):
            raise ValueError("one D block per mode is required")
        for k, (d, s) in enumerate(zip(self.D, self.basis.d_shapes)):
            if d.shape != s:
                raise ValueError(f"D[{k}] has shape {d.shape}, expected {s}")

    def to_vector(self) -> np.ndarray:
        """Stacked coordinates ``(vec B, vec D_1, ..., vec D_d)``."""
        return np.concatenate([vec(self.B)] + [vec(d) for d in self.D])

    @classmethod
    def from_vector(cls, basis: TangentBasis, theta) -> "TangentVector":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (basis.dim,):
            raise ValueError(f"expected {basis.dim} coordinates, got {theta.shape}")
        nb = int(np.prod(basis.rank))
        B = theta[:nb].reshape(basis.rank, order="F")
        D, pos = [], nb
        for s in basis.d_shapes:
            size = s[0] * s[1]
            D.append(theta[pos:pos + size].reshape(s, order="F"))
            pos += size
        return cls(B, D, basis)

    def _check(self, other: "TangentVector"):
        if not isinstance(other, TangentVector):
            return NotImplemented
        if other.basis is not self.basis:
            raise ValueError("tangent vectors live in different tangent spaces")
        return other

    def inner(self, other: "TangentVector") -> float:
        self._check(other)
        return float(np.vdot(self.B, other.B) + sum(np.vdot(a, b) for a, b in zip(self.D, other.D)))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TangentVector(self.B + other.B, [a + b for a, b in zip(self.D, other.D)], self.basis)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return TangentVector(self.B - other.B, [a - b for a, b in zip(self.D, other.D)], self.basis)

    def __mul__(self, c):
        c = float(c)
        return TangentVector(c * self.B, [c * d for d in self.D], self.basis)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def tangent_basis(x: TuckerTensor, tol: float = RANK_TOL) -> TangentBasis:
    """Frames ``U_perp``, ``V``, ``W`` of the tangent space at ``x``.

    Raises
    ------
    DegenerateRankError
        If some core unfolding has ``sigma_{r_k} <= tol * sigma_1``, i.e. ``x``
        is not a point of the fixed-rank manifold.
    """
    core = x.core
    U_perp, V, W = [], [], []
    for k, u in enumerate(x.factors):
        mk = matricize(core, k)
        r = core.shape[k]
        if mk.shape[1] < r:
            raise DegenerateRankError(
                f"core shape {core.shape} cannot have full rank in mode {k}"
            )
        s = np.linalg.svd(mk, compute_uv=False)
        if not s[0] > 0 or s[r - 1] <= tol * s[0]:
            raise DegenerateRankError(
                f"core unfolding {k} is rank deficient (sigma_r / sigma_1 = "
                f"{(s[r - 1] / s[0]) if s[0] > 0 else 0.0:.2e})"
            )
        v = qr_q(mk.T)
        V.append(v)
        W.append(kron_except(x.factors, k) @ v)
        U_perp.append(orthonormal_complement(u))
    return TangentBasis(x, tuple(U_perp), tuple(V), tuple(W))


def extend(v: TangentVector) -> np.ndarray:
    """Ambient tensor ``B x_k U_k + sum_k T_k(U_perp_k D_k W_k^T)``."""
    basis = v.basis
    out = multi_mode_product(v.B, basis.factors)
    for k in range(len(basis.rank)):
        if v.D[k].size:
            out = out + tensorize(basis.U_perp[k] @ v.D[k] @ basis.W[k].T, k, basis.shape)
    return out


def contract(basis: TangentBasis, z: np.ndarray) -> TangentVector:
    """Adjoint of :func:`extend`: ``(z x_k U_k^T, U_perp_k^T unfold(z, k) W_k)``."""
    z = as_tensor(z)
    if z.shape != basis.shape:
        raise ValueError(f"tensor shape {z.shape} does not match the manifold {basis.shape}")
    B = multi_mode_product(z, basis.factors, transpose=True)
    D = [basis.U_perp[k].T @ (matricize(z, k) @ basis.W[k]) for k in range(z.ndim)]
    return TangentVector(B, D, basis)


def project_tangent(basis: TangentBasis, z: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``z`` onto the tangent space."""
    return extend(contract(basis, z))


def riemannian_gradient(basis: TangentBasis, ensemble, y, x_dense: Optional[np.ndarray] = None) -> TangentVector:
    """Gradient of ``0.5 * ||y - A(x)||^2`` at the base point, in tangent coordinates."""
    x = basis.base.to_dense() if x_dense is None else as_tensor(x_dense)
    residual = ensemble.apply(x) - np.asarray(y, dtype=np.float64)
    return contract(basis, ensemble.adjoint(residual))


def _rank2_representation(v: TangentVector):
    """Write ``extend(v)`` as ``G x_k F_k`` with orthonormal frames of width <= 2 r_k."""
    basis = v.basis
    rank = basis.rank
    frames, tails = [], []
    for k in range(len(rank)):
        # QR in the complement coordinates keeps the new columns inside span(U_perp_k)
        if v.D[k].shape[0] == 0:
            q, r = np.zeros((0, 0)), np.zeros((0, rank[k]))
        else:
            q, r = np.linalg.qr(v.D[k])
        frames.append(np.hstack([basis.factors[k], basis.U_perp[k] @ q]))
        tails.append(r)
    widths = tuple(f.shape[1] for f in frames)
    core = np.zeros(widths)
    core[tuple(slice(0, r) for r in rank)] = v.B
    for k, tail in enumerate(tails):
        if tail.shape[0] == 0:
            continue
        block_shape = list(rank)
        block_shape[k] = tail.shape[0]
        block = tensorize(tail @ basis.V[k].T, k, block_shape)
        index = [slice(0, r) for r in rank]
        index[k] = slice(rank[k], widths[k])
        core[tuple(index)] = block
    return core, frames


def retract(
    basis: TangentBasis,
    v: TangentVector,
    rank=None,
    method: str = "st_hosvd",
    fast: bool = True,
    tol: float = RANK_TOL,
) -> TuckerTensor:
    """Map the tangent-space point ``extend(v)`` back to the manifold.

    ``v`` holds the coordinates of the whole candidate point (not of an
    increment), so retracting ``contract(basis, dense(base))`` returns the
    base point. With ``fast=True`` the truncation runs on the small core of a
    rank-``2r`` representation of the candidate; the dense tensor is never
    formed.

    Raises
    ------
    DegenerateRankError
        If the candidate has some mode rank below the target rank.
    """
    if v.basis is not basis:
        raise ValueError("tangent vector does not belong to this basis")
    rank = basis.rank if rank is None else check_rank(rank, basis.shape)
    if not fast:
        z = extend(v)
        _check_mode_ranks(z, rank, tol)
        return hosvd(z, rank, method)
    core, frames = _rank2_representation(v)
    if any(c < r for c, r in zip(core.shape, rank)):
        # complement too narrow to host the target rank
        return retract(basis, v, rank, method, fast=False, tol=tol)
    _check_mode_ranks(core, rank, tol)
    small = hosvd(core, rank, method)
    factors = [f @ u for f, u in zip(frames, small.factors)]
    return fix_factor_signs(small.core, factors)


def _check_mode_ranks(t: np.ndarray, rank, tol: float) -> None:
    for k, r in enumerate(rank):
        s = np.linalg.svd(matricize(t, k), compute_uv=False)
        if len(s) < r or not s[0] > 0 or s[r - 1] <= tol * s[0]:
            raise DegenerateRankError(f"candidate has mode-{k} rank below {r}")


def gauss_newton_residual(basis: TangentBasis, ensemble, y, x_half: np.ndarray) -> float:
    """``||P_T(A^*(A(x_half) - y))||``; zero when ``x_half`` solves the Gauss-Newton equation."""
    residual = ensemble.apply(as_tensor(x_half)) - np.asarray(y, dtype=np.float64)
    return hs_norm(project_tangent(basis, ensemble.adjoint(residual)))
