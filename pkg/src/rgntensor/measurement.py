"""Linear measurement maps ``A: R^{p_1 x ... x p_d} -> R^n``.

Four designs share one interface (:meth:`apply`, :meth:`adjoint`,
:meth:`sketch`):

* :class:`GeneralDense` -- arbitrary measurement tensors ``A_i``,
* :class:`RankOne` -- ``A_i = a_1^(i) o ... o a_d^(i)``,
* :class:`Completion` -- one-hot tensors, i.e. observed entries,
* :class:`Identity` -- ``A(x) = vec(x)`` (the tensor SVD model).

``sketch`` builds the per-iteration least-squares design: row ``i`` of
``phi_B`` is ``vec(A_i x_k U_k^T)`` and row ``i`` of ``phi_D[k]`` is
``vec(U_perp_k^T unfold(A_i, k) W_k)``, all vectorized colexicographically so
that the stacked columns line up with :meth:`TangentVector.to_vector`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .manifold import TangentBasis, TangentVector
from .tensor import PathOrFile, as_tensor, format_tensor, parse_tensor, unvec, vec
from .tucker import random_tucker

__all__ = [
    "DEFAULT_MAX_ENTRIES",
    "SketchedCovariates",
    "MeasurementEnsemble",
    "GeneralDense",
    "RankOne",
    "Completion",
    "Identity",
    "gaussian_ensemble",
    "rank1_ensemble",
    "completion_sample",
    "trip_probe",
    "format_ensemble",
    "parse_ensemble",
    "save_ensemble",
    "load_ensemble",
]

#: Largest ``n * prod(p_k)`` a dense design may hold (float64 entries).
DEFAULT_MAX_ENTRIES = 250_000_000


@dataclass(eq=False)
class SketchedCovariates:
    phi_B: np.ndarray
    phi_D: list
    basis: TangentBasis

    @property
    def n(self) -> int:
        return self.phi_B.shape[0]

    @property
    def design(self) -> np.ndarray:
        """The stacked ``n x dim`` least-squares design."""
        return np.hstack([self.phi_B] + list(self.phi_D))

    def apply(self, v: TangentVector) -> np.ndarray:
        """``A(extend(v))`` evaluated through the sketch."""
        return self.design @ v.to_vector()


def _rowwise_kron(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product ``mats[-1] kron ... kron mats[0]`` (first varies fastest)."""
    n = mats[0].shape[0]

    def step(acc, m):
        return (m[:, :, None] * acc[:, None, :]).reshape(n, -1)

    return reduce(step, mats[1:], mats[0])


def _rank_one_sketch(c: list, e: list, basis: TangentBasis) -> SketchedCovariates:
    """Sketch of rank-one designs from ``c_k = a_k U_k`` and ``e_k = a_k U_perp_k``."""
    phi_B = _rowwise_kron(c)
    phi_D = []
    for k in range(len(c)):
        others = [cj for j, cj in enumerate(c) if j != k]
        g = _rowwise_kron(others) @ basis.V[k] if others else np.tile(basis.V[k].T, (c[k].shape[0], 1))
        phi_D.append(_rowwise_kron([e[k], g]))
    return SketchedCovariates(phi_B, phi_D, basis)


class MeasurementEnsemble:
    """Common interface; subclasses implement the design-specific kernels."""

    shape: tuple
    n: int

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def _check_x(self, x) -> np.ndarray:
        x = as_tensor(x)
        if x.shape != self.shape:
            raise ValueError(f"tensor shape {x.shape} does not match ensemble shape {self.shape}")
        return x

    def _check_v(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {v.shape}")
        return v

    def _check_basis(self, basis: TangentBasis) -> None:
        if basis.shape != self.shape:
            raise ValueError(f"basis shape {basis.shape} does not match ensemble shape {self.shape}")

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, v) -> np.ndarray:
        raise NotImplementedError

    def sketch(self, basis: TangentBasis) -> SketchedCovariates:
        raise NotImplementedError

    def densify(self, max_entries: int = DEFAULT_MAX_ENTRIES) -> "GeneralDense":
        """Equivalent :class:`GeneralDense` ensemble (for cross-checks on small problems)."""
        raise NotImplementedError

    def energy_scale(self) -> float:
        """``sum_i ||A_i||^2 / prod(p_k)``.

        For isotropic designs ``E[A^* A] = energy_scale * I``, so dividing
        ``A^*(y)`` by it gives an unbiased back-projection.
        """
        raise NotImplementedError


class GeneralDense(MeasurementEnsemble):
    """Dense measurement tensors.

    Parameters
    ----------
    tensors : array of shape (n, p_1, ..., p_d)
    max_entries : int
        Refuse designs with more than this many stored entries.
    """

    def __init__(self, tensors, max_entries: int = DEFAULT_MAX_ENTRIES):
        tensors = np.asarray(tensors, dtype=np.float64)
        if tensors.ndim < 2:
            raise ValueError("expected an array of shape (n, p_1, ..., p_d)")
        self._init(tensors.shape[1:], tensors.shape[0], max_entries)
        rows = np.empty((self.n, self.size))
        for i in range(self.n):
            rows[i] = vec(tensors[i])
        self._rows = rows

    @classmethod
    def from_rows(cls, rows, shape, max_entries: int = DEFAULT_MAX_ENTRIES) -> "GeneralDense":
        """Build from an ``n x prod(p)`` matrix whose rows are ``vec(A_i)``.

        The matrix is used without copying when it is already C-contiguous float64.
        """
        self = cls.__new__(cls)
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        shape = tuple(int(p) for p in shape)
        if rows.ndim != 2 or rows.shape[1] != int(np.prod(shape)):
            raise ValueError(f"rows of shape {rows.shape} do not match tensor shape {shape}")
        self._init(shape, rows.shape[0], max_entries)
        self._rows = rows
        return self

    def _init(self, shape, n, max_entries):
        self.shape = tuple(int(p) for p in shape)
        self.n = int(n)
        if self.n < 1:
            raise ValueError("at least one measurement is required")
        if self.n * self.size > max_entries:
            raise MemoryError(
                f"dense design with n={self.n} and shape {self.shape} needs "
                f"{self.n * self.size} entries, above the cap of {max_entries}"
            )

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def tensors(self) -> np.ndarray:
        """View of shape ``(n, p_1, ..., p_d)``."""
        rev = self._rows.reshape((self.n,) + self.shape[::-1])
        return rev.transpose((0,) + tuple(range(self.order, 0, -1)))

    def apply(self, x) -> np.ndarray:
        return self._rows @ vec(self._check_x(x))

    def adjoint(self, v) -> np.ndarray:
        return unvec(self._rows.T @ self._check_v(v), self.shape)

    def energy_scale(self) -> float:
        return float(np.einsum("ij,ij->", self._rows, self._rows)) / self.size

    def densify(self, max_entries: int = DEFAULT_MAX_ENTRIES) -> "GeneralDense":
        return self

    def sketch(self, basis: TangentBasis) -> SketchedCovariates:
        self._check_basis(basis)
        d = self.order
        U = basis.factors
        # reversed layout: axis 0 is the measurement, axis 1 + (d-1-k) is mode k
        rev = self._rows.reshape((self.n,) + self.shape[::-1])

        def ax(k):
            return 1 + (d - 1 - k)

        if d == 1:
            partial_all = {0: rev}
        else:
            first = _contract(rev, ax(0), U[0])
            last = _contract(rev, ax(d - 1), U[d - 1])
            partial_all = {}
            for k in range(d):
                t = last if k == 0 else first
                done = {d - 1} if k == 0 else {0}
                for j in range(d):
                    if j != k and j not in done:
                        t = _contract(t, ax(j), U[j])
                partial_all[k] = t
        # partial_all[k] = A x_{j != k} U_j^T in reversed layout
        phi_B = _contract(partial_all[0], ax(0), U[0]).reshape(self.n, -1)
        phi_D = []
        for k in range(d):
            t = np.moveaxis(partial_all[k], ax(k), -1)
            mt = t.reshape(self.n, -1, self.shape[k])  # unfold(Y_i, k)^T
            g = np.matmul(basis.V[k].T, mt)  # V_k^T unfold(Y_i, k)^T
            phi_D.append((g @ basis.U_perp[k]).reshape(self.n, -1))
        return SketchedCovariates(np.ascontiguousarray(phi_B), phi_D, basis)


def _contract(t: np.ndarray, axis: int, m: np.ndarray) -> np.ndarray:
    """Contract ``axis`` of ``t`` with the rows of ``m`` (``t x_axis m^T``), keeping axis order."""
    t = np.ascontiguousarray(t)
    shape = t.shape
    pre = int(np.prod(shape[:axis]))
    post = int(np.prod(shape[axis + 1:]))
    if post == 1:
        out = t.reshape(pre, shape[axis]) @ m
    else:
        out = np.matmul(m.T, t.reshape(pre, shape[axis], post))
    return out.reshape(shape[:axis] + (m.shape[1],) + shape[axis + 1:])


class RankOne(MeasurementEnsemble):
    """Rank-one projections; ``vectors[k]`` has shape ``(n, p_k)``."""

    def __init__(self, vectors: Sequence[np.ndarray]):
        vectors = [np.ascontiguousarray(a, dtype=np.float64) for a in vectors]
        if not vectors or any(a.ndim != 2 for a in vectors):
            raise ValueError("expected one (n, p_k) matrix per mode")
        n = vectors[0].shape[0]
        if any(a.shape[0] != n for a in vectors):
            raise ValueError("all modes need the same number of measurements")
        self.vectors = vectors
        self.shape = tuple(a.shape[1] for a in vectors)
        self.n = n

    def apply(self, x) -> np.ndarray:
        x = self._check_x(x)
        t = np.tensordot(self.vectors[0], x, axes=(1, 0))
        for a in self.vectors[1:]:
            t = np.einsum("ij...,ij->i...", t, a)
        return t

    def adjoint(self, v) -> np.ndarray:
        v = self._check_v(v)
        head = self.vectors[0] * v[:, None]
        if self.order == 1:
            return head.sum(axis=0)
        tail = _rowwise_kron(self.vectors[1:])
        return unvec(vec(head.T @ tail), self.shape)

    def sketch(self, basis: TangentBasis) -> SketchedCovariates:
        self._check_basis(basis)
        c = [a @ u for a, u in zip(self.vectors, basis.factors)]
        e = [a @ up for a, up in zip(self.vectors, basis.U_perp)]
        return _rank_one_sketch(c, e, basis)

    def energy_scale(self) -> float:
        sq = [np.einsum("ij,ij->i", a, a) for a in self.vectors]
        return float(np.sum(np.prod(sq, axis=0))) / self.size

    def densify(self, max_entries: int = DEFAULT_MAX_ENTRIES) -> GeneralDense:
        if self.n * self.size > max_entries:
            raise MemoryError("densified rank-one design exceeds the entry cap")
        return GeneralDense.from_rows(_rowwise_kron(self.vectors), self.shape, max_entries)


class Completion(MeasurementEnsemble):
    """Observed entries ``omega`` (0-based index tuples), stored sorted by linear index."""

    def __init__(self, indices, shape):
        shape = tuple(int(p) for p in shape)
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != len(shape):
            raise ValueError(f"indices must have shape (n, {len(shape)})")
        if idx.shape[0] < 1:
            raise ValueError("the observation set is empty")
        if np.any(idx < 0) or np.any(idx >= np.asarray(shape)):
            raise ValueError("index out of range")
        linear = np.ravel_multi_index(tuple(idx.T), shape, order="F")
        order = np.argsort(linear, kind="stable")
        linear = linear[order]
        if np.any(np.diff(linear) == 0):
            raise ValueError("duplicate indices in the observation set")
        self.shape = shape
        self.n = idx.shape[0]
        self.indices = idx[order]
        self.linear_indices = linear

    def apply(self, x) -> np.ndarray:
        return self._check_x(x)[tuple(self.indices.T)]

    def adjoint(self, v) -> np.ndarray:
        v = self._check_v(v)
        out = np.zeros(self.shape)
        out[tuple(self.indices.T)] = v
        return out

    def sketch(self, basis: TangentBasis) -> SketchedCovariates:
        self._check_basis(basis)
        cols = self.indices.T
        c = [u[i] for u, i in zip(basis.factors, cols)]
        e = [up[i] for up, i in zip(basis.U_perp, cols)]
        return _rank_one_sketch(c, e, basis)

    def energy_scale(self) -> float:
        return self.n / self.size

    @property
    def sampling_ratio(self) -> float:
        return self.n / self.size

    def fill(self, values) -> np.ndarray:
        """Zero-filled tensor carrying ``values`` on the observed entries."""
        return self.adjoint(values)

    def densify(self, max_entries: int = DEFAULT_MAX_ENTRIES) -> GeneralDense:
        if self.n * self.size > max_entries:
            raise MemoryError("densified completion design exceeds the entry cap")
        rows = np.zeros((self.n, self.size))
        rows[np.arange(self.n), self.linear_indices] = 1.0
        return GeneralDense.from_rows(rows, self.shape, max_entries)


class Identity(MeasurementEnsemble):
    """``A(x) = vec(x)``; ``n = prod(p_k)``."""

    def __init__(self, shape):
        self.shape = tuple(int(p) for p in shape)
        if not self.shape or any(p < 1 for p in self.shape):
            raise ValueError(f"bad shape {self.shape}")
        self.n = self.size

    def apply(self, x) -> np.ndarray:
        return vec(self._check_x(x)).copy()

    def adjoint(self, v) -> np.ndarray:
        return unvec(self._check_v(v), self.shape).copy()

    def sketch(self, basis: TangentBasis) -> SketchedCovariates:
        self._check_basis(basis)
        all_indices = np.stack(np.unravel_index(np.arange(self.n), self.shape, order="F"), axis=1)
        return Completion(all_indices, self.shape).sketch(basis)

    def energy_scale(self) -> float:
        return 1.0

    def densify(self, max_entries: int = DEFAULT_MAX_ENTRIES) -> GeneralDense:
        if self.n * self.size > max_entries:
            raise MemoryError("densified identity design exceeds the entry cap")
        return GeneralDense.from_rows(np.eye(self.n), self.shape, max_entries)


# -- generators ---------------------------------------------------------------


def gaussian_ensemble(n: int, shape, variance: float = 1.0, seed=None,
                      max_entries: int = DEFAULT_MAX_ENTRIES) -> GeneralDense:
    """Measurement tensors with i.i.d. ``N(0, variance)`` entries."""
    shape = tuple(int(p) for p in shape)
    size = int(np.prod(shape))
    if n * size > max_entries:
        raise MemoryError(
            f"dense design with n={n} and shape {shape} needs {n * size} entries, "
            f"above the cap of {max_entries}"
        )
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, size))
    if variance != 1.0:
        rows *= np.sqrt(variance)
    return GeneralDense.from_rows(rows, shape, max_entries)


def rank1_ensemble(n: int, shape, seed=None, variance: float = 1.0) -> RankOne:
    """Rank-one projections with Gaussian vectors.

    ``variance`` is the variance of each entry of ``A_i``; it is split evenly
    over the ``d`` vectors (each gets ``variance ** (1/d)``).
    """
    shape = tuple(int(p) for p in shape)
    rng = np.random.default_rng(seed)
    std = variance ** (0.5 / len(shape))
    return RankOne([std * rng.standard_normal((n, p)) for p in shape])


def completion_sample(count: int, shape, seed=None) -> Completion:
    """``count`` distinct entries drawn uniformly at random without replacement."""
    shape = tuple(int(p) for p in shape)
    size = int(np.prod(shape))
    if not 1 <= count <= size:
        raise ValueError(f"cannot sample {count} distinct entries from {size}")
    rng = np.random.default_rng(seed)
    linear = np.sort(rng.choice(size, size=count, replace=False))
    return Completion(np.stack(np.unravel_index(linear, shape, order="F"), axis=1), shape)


def trip_probe(ensemble: MeasurementEnsemble, rank, trials: int = 100, seed=None):
    """Empirical range of ``||A(Z)||^2`` over random unit-norm Tucker rank-``rank`` tensors.

    A Monte-Carlo bracket on ``1 -/+ R_r``, not a certificate.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    ratios = np.empty(trials)
    for t in range(trials):
        z = random_tucker(ensemble.shape, rank, rng).to_dense()
        az = ensemble.apply(z)
        zv = vec(z)
        # same reduction on both sides, so an isometry gives exactly 1
        ratios[t] = float(np.dot(az, az) / np.dot(zv, zv))
    return float(ratios.min()), float(ratios.max())


# -- text format --------------------------------------------------------------


def format_ensemble(e: MeasurementEnsemble) -> str:
    """Text form: ``kind:``, ``dims:`` and ``n:`` header lines, then the design."""
    kinds = {Completion: "completion", RankOne: "rank1", GeneralDense: "dense", Identity: "identity"}
    kind = kinds[type(e)]
    lines = [f"kind: {kind}", "dims: " + " ".join(map(str, e.shape)), f"n: {e.n}"]
    if kind == "completion":
        lines += [" ".join(map(str, row)) for row in e.indices]
    elif kind == "rank1":
        for i in range(e.n):
            lines += [" ".join(repr(float(x)) for x in a[i]) for a in e.vectors]
    elif kind == "dense":
        for i in range(e.n):
            lines.append("measurement:")
            lines.append(format_tensor(unvec(e.rows[i], e.shape)).rstrip("\n"))
    return "\n".join(lines) + "\n"


def parse_ensemble(text: str) -> MeasurementEnsemble:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    header = {}
    for ln in lines[:3]:
        key, _, val = ln.partition(":")
        header[key.strip()] = val.strip()
    try:
        kind = header["kind"]
        shape = tuple(int(p) for p in header["dims"].split())
        n = int(header["n"])
    except (KeyError, ValueError) as exc:
        raise ValueError("ensemble text needs 'kind:', 'dims:' and 'n:' header lines") from exc
    body = lines[3:]
    if kind == "identity":
        e = Identity(shape)
        if e.n != n:
            raise ValueError("identity ensemble size does not match its dims")
        return e
    if kind == "completion":
        idx = np.array([ln.split() for ln in body], dtype=np.int64).reshape(-1, len(shape))
        if idx.shape[0] != n:
            raise ValueError(f"expected {n} indices, found {idx.shape[0]}")
        return Completion(idx, shape)
    if kind == "rank1":
        if len(body) != n * len(shape):
            raise ValueError(f"expected {n * len(shape)} vector lines, found {len(body)}")
        vectors = [np.empty((n, p)) for p in shape]
        for i in range(n):
            for k, p in enumerate(shape):
                row = np.array(body[i * len(shape) + k].split(), dtype=np.float64)
                if row.size != p:
                    raise ValueError(f"vector {i}/{k} has {row.size} entries, expected {p}")
                vectors[k][i] = row
        return RankOne(vectors)
    if kind == "dense":
        chunks, current = [], None
        for ln in body:
            if ln == "measurement:":
                current = []
                chunks.append(current)
            elif current is None:
                raise ValueError("content before the first 'measurement:' line")
            else:
                current.append(ln)
        if len(chunks) != n:
            raise ValueError(f"expected {n} measurements, found {len(chunks)}")
        tensors = [parse_tensor("\n".join(c)) for c in chunks]
        if any(t.shape != shape for t in tensors):
            raise ValueError("measurement tensor shape does not match dims")
        return GeneralDense(np.stack(tensors))
    raise ValueError(f"unknown ensemble kind {kind!r}")


def save_ensemble(target: PathOrFile, e: MeasurementEnsemble) -> None:
    text = format_ensemble(e)
    if isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def load_ensemble(source: PathOrFile) -> MeasurementEnsemble:
    if isinstance(source, io.TextIOBase):
        return parse_ensemble(source.read())
    with open(source) as fh:
        return parse_ensemble(fh.read())
