"""Dense tensor algebra.

Tensors are plain :class:`numpy.ndarray` objects of shape ``(p_1, ..., p_d)``.
Whenever a tensor is flattened the *colexicographic* (Fortran) order is used:
entry ``(i_1, ..., i_d)`` (0-based) sits at ``sum_l i_l * prod_{m<l} p_m``.
With that convention the mode-k unfolding below is exactly the classical
Kolda-Bader unfolding and

    unfold(S x_1 U_1 ... x_d U_d, k)
        = U_k unfold(S, k) (U_d kron ... U_{k+1} kron U_{k-1} ... kron U_1)^T

holds without any index translation.

Modes are 0-based throughout the package.
"""

from __future__ import annotations

import io
import os
from functools import reduce
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "as_tensor",
    "check_mode",
    "vec",
    "unvec",
    "matricize",
    "tensorize",
    "mode_product",
    "multi_mode_product",
    "kron_except",
    "inner",
    "hs_norm",
    "svd_leading",
    "qr_q",
    "orthonormal_complement",
    "normalize_signs",
    "format_tensor",
    "parse_tensor",
    "write_tensor",
    "read_tensor",
]

PathOrFile = Union[str, os.PathLike, io.TextIOBase]


def as_tensor(t, copy=False) -> np.ndarray:
    """Validate ``t`` as a dense real tensor and return it as float64."""
    arr = np.array(t, dtype=np.float64, copy=copy) if copy else np.asarray(t, dtype=np.float64)
    if arr.ndim < 1:
        raise ValueError("a tensor needs at least one mode")
    if any(p < 1 for p in arr.shape):
        raise ValueError(f"all dimensions must be positive, got {arr.shape}")
    if np.prod(arr.shape, dtype=object) > np.iinfo(np.intp).max:
        raise OverflowError(f"tensor of shape {arr.shape} exceeds the index range")
    return arr


def check_mode(k: int, order: int) -> int:
    if not 0 <= k < order:
        raise ValueError(f"mode {k} out of range for an order-{order} tensor")
    return k


def vec(t: np.ndarray) -> np.ndarray:
    """Colexicographic vectorization."""
    return np.asarray(t).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size != int(np.prod(shape)):
        raise ValueError(f"cannot fold {v.size} values into shape {tuple(shape)}")
    return v.reshape(tuple(shape), order="F")


def matricize(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-k unfolding, a ``p_k x prod_{j != k} p_j`` matrix.

    Column ``j`` of the unfolding enumerates the remaining modes in ascending
    order with the lowest mode varying fastest.
    """
    t = np.asarray(t)
    check_mode(k, t.ndim)
    return np.moveaxis(t, k, 0).reshape(t.shape[k], -1, order="F")


def tensorize(m: np.ndarray, k: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    m = np.asarray(m)
    shape = tuple(int(p) for p in shape)
    check_mode(k, len(shape))
    rest = int(np.prod(shape)) // shape[k]
    if m.ndim != 2 or m.shape != (shape[k], rest):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be the mode-{k} unfolding of {shape}"
        )
    moved = (shape[k],) + shape[:k] + shape[k + 1:]
    return np.moveaxis(m.reshape(moved, order="F"), 0, k)


def mode_product(t: np.ndarray, k: int, b: np.ndarray) -> np.ndarray:
    """Mode-k product ``t x_k b``; ``b`` has shape ``(q, p_k)``."""
    t = np.asarray(t)
    b = np.asarray(b)
    check_mode(k, t.ndim)
    if b.ndim != 2 or b.shape[1] != t.shape[k]:
        raise ValueError(
            f"matrix of shape {b.shape} does not act on mode {k} of size {t.shape[k]}"
        )
    return np.moveaxis(np.tensordot(b, t, axes=(1, k)), 0, k)


def multi_mode_product(
    t: np.ndarray,
    mats: Sequence[Optional[np.ndarray]],
    transpose: bool = False,
    skip: Optional[int] = None,
) -> np.ndarray:
    """Apply ``t x_1 mats[0] x_2 ... x_d mats[d-1]`` in ascending mode order.

    ``None`` entries and the mode ``skip`` are left untouched, which covers the
    "all modes except k" product. With ``transpose=True`` each matrix is
    transposed first, i.e. ``t x_k mats[k]^T``.
    """
    t = np.asarray(t)
    if len(mats) != t.ndim:
        raise ValueError(f"expected {t.ndim} matrices, got {len(mats)}")
    for k, m in enumerate(mats):
        if m is None or k == skip:
            continue
        t = mode_product(t, k, m.T if transpose else m)
    return t


def kron_except(mats: Sequence[np.ndarray], k: Optional[int] = None) -> np.ndarray:
    """``mats[d-1] kron ... kron mats[0]`` with mode ``k`` left out."""
    chosen = [m for j, m in enumerate(mats) if j != k]
    if not chosen:
        return np.ones((1, 1))
    return reduce(np.kron, chosen[::-1])


def inner(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def hs_norm(a: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(a).ravel()))


def normalize_signs(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties go to the lowest row index. Returns the flipped matrix and the
    applied signs so callers can compensate elsewhere (e.g. in a core).
    """
    u = np.asarray(u)
    if u.shape[1] == 0:
        return u.copy(), np.ones(0)
    rows = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[rows, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, signs


def svd_leading(m: np.ndarray, r: int) -> np.ndarray:
    """Leading ``r`` left singular vectors of ``m`` with deterministic signs."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("svd_leading expects a matrix")
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} out of range for a {m.shape} matrix")
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    return normalize_signs(u[:, :r])[0]


def qr_q(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Q factor of a thin QR with the convention ``diag(R) > 0``.

    Raises
    ------
    ValueError
        If ``m`` is wide or numerically rank deficient
        (``|R_ii| < tol * ||m||_F`` for some ``i``).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise ValueError(f"qr_q needs a tall matrix, got shape {m.shape}")
    q, r = np.linalg.qr(m)
    d = np.diag(r)
    if np.any(np.abs(d) < tol * np.linalg.norm(m)) or not np.all(np.isfinite(d)):
        raise ValueError("matrix is numerically rank deficient")
    return q * np.sign(d)


def orthonormal_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(u)``.

    ``u`` must have orthonormal columns. The complement comes from the full
    Householder QR of ``u``, so it is a deterministic function of ``u``.
    """
    u = np.asarray(u, dtype=np.float64)
    p, r = u.shape
    if r >= p:
        return np.zeros((p, 0))
    q, _ = np.linalg.qr(u, mode="complete")
    return normalize_signs(q[:, r:])[0]


# -- text format --------------------------------------------------------------


def format_tensor(t: np.ndarray) -> str:
    """Serialize a tensor as ``dims: ...`` followed by its colex entries."""
    t = as_tensor(t)
    head = "dims: " + " ".join(str(p) for p in t.shape)
    body = "\n".join(repr(float(x)) for x in vec(t))
    return head + "\n" + body + "\n"


def parse_tensor(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("dims:"):
        raise ValueError("tensor text must start with a 'dims:' line")
    try:
        dims = tuple(int(x) for x in lines[0][len("dims:"):].split())
    except ValueError as exc:
        raise ValueError(f"bad dims line: {lines[0]!r}") from exc
    if not dims or any(p < 1 for p in dims):
        raise ValueError(f"bad dims: {dims}")
    values = np.array(" ".join(lines[1:]).split(), dtype=np.float64)
    expected = int(np.prod(dims))
    if values.size != expected:
        raise ValueError(f"expected {expected} entries for dims {dims}, found {values.size}")
    return unvec(values, dims)


def write_tensor(target: PathOrFile, t: np.ndarray) -> None:
    text = format_tensor(t)
    if isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def read_tensor(source: PathOrFile) -> np.ndarray:
    if isinstance(source, io.TextIOBase):
        return parse_tensor(source.read())
    with open(source) as fh:
        return parse_tensor(fh.read())
