"""Tucker-format tensors and the HOSVD family of quasi-projections."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import (
    PathOrFile,
    as_tensor,
    format_tensor,
    hs_norm,
    matricize,
    multi_mode_product,
    normalize_signs,
    parse_tensor,
    qr_q,
    svd_leading,
)

__all__ = [
    "TuckerTensor",
    "check_rank",
    "dense",
    "random_tucker",
    "t_hosvd",
    "st_hosvd",
    "hosvd",
    "hooi",
    "tucker_rank",
    "format_tucker",
    "parse_tucker",
    "write_tucker",
    "read_tucker",
]

ORTHO_TOL = 1e-10


def check_rank(rank: Sequence[int], shape: Sequence[int]) -> tuple[int, ...]:
    """Validate a Tucker rank against a tensor shape and return it as a tuple."""
    rank = tuple(int(r) for r in rank)
    shape = tuple(shape)
    if len(rank) != len(shape):
        raise ValueError(f"rank {rank} has {len(rank)} entries for an order-{len(shape)} tensor")
    for k, (r, p) in enumerate(zip(rank, shape)):
        if not 1 <= r <= p:
            raise ValueError(f"rank {r} exceeds dimension {p} in mode {k}")
    return rank


@dataclass(frozen=True, eq=False)
class TuckerTensor:
    """A point ``core x_1 U_1 ... x_d U_d`` with orthonormal factors.

    Parameters
    ----------
    core : ndarray of shape (r_1, ..., r_d)
    factors : sequence of ndarrays, factor ``k`` of shape (p_k, r_k)
    check : bool
        Verify factor orthonormality (to 1e-10).
    """

    core: np.ndarray
    factors: tuple
    check: bool = True

    def __post_init__(self):
        core = as_tensor(self.core)
        factors = tuple(np.asarray(u, dtype=np.float64) for u in self.factors)
        if len(factors) != core.ndim:
            raise ValueError(f"{len(factors)} factors for an order-{core.ndim} core")
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise ValueError(
                    f"factor {k} has shape {u.shape}, core mode {k} has size {core.shape[k]}"
                )
            if u.shape[0] < u.shape[1]:
                raise ValueError(f"factor {k} is wide: {u.shape}")
            if self.check:
                err = np.abs(u.T @ u - np.eye(u.shape[1])).max()
                if err > ORTHO_TOL:
                    raise ValueError(f"factor {k} is not orthonormal (error {err:.2e})")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def order(self) -> int:
        return self.core.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def rank(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    def to_dense(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)

    def __repr__(self):
        return f"TuckerTensor(shape={self.shape}, rank={self.rank})"


def dense(x: TuckerTensor) -> np.ndarray:
    return x.to_dense()


def random_tucker(shape, rank, rng=None, core_scale: float = 1.0) -> TuckerTensor:
    """Haar-random orthonormal factors and an i.i.d. N(0, core_scale^2) core."""
    rng = np.random.default_rng(rng)
    rank = check_rank(rank, shape)
    factors = [qr_q(rng.standard_normal((p, r))) for p, r in zip(shape, rank)]
    core = core_scale * rng.standard_normal(rank)
    return TuckerTensor(core, factors)


def _from_factors(t: np.ndarray, factors) -> TuckerTensor:
    core = multi_mode_product(t, factors, transpose=True)
    return TuckerTensor(core, factors)


def t_hosvd(t: np.ndarray, rank) -> TuckerTensor:
    """Truncated HOSVD: per-mode leading singular subspaces, computed independently."""
    t = as_tensor(t)
    rank = check_rank(rank, t.shape)
    factors = [svd_leading(matricize(t, k), r) for k, r in enumerate(rank)]
    return _from_factors(t, factors)


def st_hosvd(t: np.ndarray, rank) -> TuckerTensor:
    """Sequentially truncated HOSVD with the fixed truncation order 0, 1, ..., d-1.

    After mode ``k`` is truncated the working tensor is compressed to
    ``t x_0 U_0^T ... x_k U_k^T``; the next unfolding then has the same left
    singular vectors as the unfolding of ``t x_{l<=k} P_{U_l}``.
    """
    t = as_tensor(t)
    rank = check_rank(rank, t.shape)
    work = t
    factors = []
    for k, r in enumerate(rank):
        u = svd_leading(matricize(work, k), r)
        factors.append(u)
        work = multi_mode_product(work, [u.T if j == k else None for j in range(t.ndim)])
    # ``work`` is now the core
    return TuckerTensor(work, factors)


def hosvd(t: np.ndarray, rank, method: str = "st_hosvd") -> TuckerTensor:
    """Dispatch to :func:`st_hosvd` or :func:`t_hosvd`."""
    method = method.lower().replace("-", "_")
    if method == "st_hosvd":
        return st_hosvd(t, rank)
    if method == "t_hosvd":
        return t_hosvd(t, rank)
    raise ValueError(f"unknown truncation method {method!r}")


def hooi(t: np.ndarray, rank, sweeps: int = 50, tol: float = 1e-13, return_history: bool = False):
    """Higher-order orthogonal iteration started from ST-HOSVD.

    Only used as a reference rank-``rank`` competitor in tests. Each sweep
    cannot increase the residual ``||t - X||``. Iteration stops after
    ``sweeps`` sweeps or once the relative residual change drops below ``tol``.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    t = as_tensor(t)
    x = st_hosvd(t, rank)
    factors = list(x.factors)
    history = [hs_norm(t - x.to_dense())]
    for _ in range(sweeps):
        for k in range(t.ndim):
            partial = multi_mode_product(t, factors, transpose=True, skip=k)
            factors[k] = svd_leading(matricize(partial, k), x.rank[k])
        x = _from_factors(t, factors)
        history.append(hs_norm(t - x.to_dense()))
        prev, cur = history[-2], history[-1]
        if prev == 0 or abs(prev - cur) <= tol * max(prev, hs_norm(t)):
            break
    if return_history:
        return x, history
    return x


def tucker_rank(t: np.ndarray, tol: float = 1e-10) -> tuple[int, ...]:
    """Numerical Tucker rank: per mode, count singular values above ``tol * sigma_1``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    t = as_tensor(t)
    ranks = []
    for k in range(t.ndim):
        s = np.linalg.svd(matricize(t, k), compute_uv=False)
        ranks.append(int(np.sum(s > tol * s[0])) if s[0] > 0 else 0)
    return tuple(ranks)


def fix_factor_signs(core: np.ndarray, factors) -> TuckerTensor:
    """Apply the global sign convention to factor columns, compensating in the core."""
    core = np.array(core, dtype=np.float64)
    fixed = []
    for k, u in enumerate(factors):
        u, signs = normalize_signs(u)
        fixed.append(u)
        shape = [1] * core.ndim
        shape[k] = -1
        core = core * signs.reshape(shape)
    return TuckerTensor(core, fixed)


# -- text format --------------------------------------------------------------

_SECTION = re.compile(r"^(core|factor\s+(\d+)):\s*$")


def format_tucker(x: TuckerTensor) -> str:
    parts = ["core:\n" + format_tensor(x.core)]
    for k, u in enumerate(x.factors):
        parts.append(f"factor {k}:\n" + format_tensor(u))
    return "".join(parts)


def parse_tucker(text: str, check: bool = True) -> TuckerTensor:
    sections: dict = {}
    current = None
    for line in text.splitlines():
        m = _SECTION.match(line.strip())
        if m:
            current = "core" if m.group(2) is None else int(m.group(2))
            if current in sections:
                raise ValueError(f"duplicate section {line.strip()!r}")
            sections[current] = []
        elif current is None:
            if line.strip():
                raise ValueError("content before the first section header")
        else:
            sections[current].append(line)
    if "core" not in sections:
        raise ValueError("missing 'core:' section")
    core = parse_tensor("\n".join(sections.pop("core")))
    if sorted(sections) != list(range(core.ndim)):
        raise ValueError(f"expected factor sections 0..{core.ndim - 1}, found {sorted(sections)}")
    factors = []
    for k in range(core.ndim):
        u = parse_tensor("\n".join(sections[k]))
        if u.ndim != 2:
            raise ValueError(f"factor {k} must be a matrix")
        factors.append(u)
    return TuckerTensor(core, factors, check=check)


def write_tucker(target: PathOrFile, x: TuckerTensor) -> None:
    text = format_tucker(x)
    if isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def read_tucker(source: PathOrFile, check: bool = True) -> TuckerTensor:
    if isinstance(source, io.TextIOBase):
        return parse_tucker(source.read(), check=check)
    with open(source) as fh:
        return parse_tucker(fh.read(), check=check)
