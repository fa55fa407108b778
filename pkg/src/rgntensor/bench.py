"""Synthetic experiment harness: problem generation, solver dispatch, CSV/JSON output.

CSV schema (one row per trial and iteration, iteration 0 is the start)::

    trial,iter,rel_rmse,residual,wall_ms

Floats are written with ``repr`` so identical runs give identical bytes
(apart from ``wall_ms``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from . import __version__
from .initialization import (
    completion_init,
    random_init,
    spectral_init_regression,
    spectral_init_svd,
)
from .measurement import (
    Identity,
    MeasurementEnsemble,
    completion_sample,
    gaussian_ensemble,
    rank1_ensemble,
)
from .rgn import (
    IterationTrace,
    RgnConfig,
    SolverError,
    iht_solve,
    rgn_solve,
    rgn_svd_solve,
)
from .tensor import as_tensor, hs_norm, matricize, unvec
from .tucker import TuckerTensor, check_rank, random_tucker

__all__ = [
    "PROBLEMS",
    "ExperimentConfig",
    "Problem",
    "TrialResult",
    "ExperimentReport",
    "trial_rng",
    "generate_problem",
    "rel_rmse",
    "run_trial",
    "run",
    "trace_csv",
    "report_json",
    "load_report",
    "emit",
]

PROBLEMS = ("regression", "rank1", "completion", "svd")
SCALINGS = ("paper7", "paper41")


def _as_tuple(value, order: int) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * order
    return tuple(int(v) for v in value)


@dataclass
class ExperimentConfig:
    """Settings of one batch of seeded trials.

    ``p`` and ``r`` accept an int (repeated ``order`` times) or a per-mode
    sequence. ``n`` defaults to ``5 * p^{3/2} * r`` (max over modes) for the
    regression problems; completion takes either ``n`` or ``sampling``.
    ``scaling="paper7"`` draws unit-variance designs and ``N(0, sigma^2)``
    noise; ``"paper41"`` divides both variances by ``n``.
    """

    problem: str = "regression"
    p: object = 30
    r: object = 3
    order: int = 3
    n: Optional[int] = None
    sampling: Optional[float] = None
    sigma: float = 0.0
    lambda_min: Optional[float] = None
    init: str = "spectral"
    solver: str = "rgn"
    step: Optional[float] = None
    seed: int = 0
    trials: int = 1
    max_iter: int = 300
    tol: float = 1e-14
    retraction: str = "st_hosvd"
    ls_solver: str = "qr"
    scaling: str = "paper7"
    record_timing: bool = True
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        self.validate()

    @property
    def shape(self) -> tuple[int, ...]:
        return _as_tuple(self.p, self.order)

    @property
    def rank(self) -> tuple[int, ...]:
        return _as_tuple(self.r, len(self.shape))

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        shape = self.shape
        if not shape or any(p < 1 for p in shape):
            raise ValueError(f"bad shape {shape}")
        check_rank(self.rank, shape)
        if self.init not in ("spectral", "random"):
            raise ValueError(f"init must be 'spectral' or 'random', got {self.init!r}")
        if self.solver not in ("rgn", "iht"):
            raise ValueError(f"solver must be 'rgn' or 'iht', got {self.solver!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.trials < 1 or self.workers < 1:
            raise ValueError("trials and workers must be at least 1")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        size = int(np.prod(shape))
        if self.problem == "completion":
            if self.n is None and self.sampling is None:
                raise ValueError("completion needs n or sampling")
            if self.sampling is not None and not 0 < self.sampling <= 1:
                raise ValueError("sampling must be in (0, 1]")
            if not 1 <= self.sample_size <= size:
                raise ValueError(f"cannot observe {self.sample_size} of {size} entries")
        elif self.problem == "svd":
            if self.lambda_min is None or not self.lambda_min > 0:
                raise ValueError("svd needs a positive lambda_min")
        elif self.n is not None and self.n < 1:
            raise ValueError("n must be positive")
        RgnConfig(max_iter=self.max_iter, tol=self.tol, retraction=self.retraction,
                  ls_solver=self.ls_solver)

    @property
    def sample_size(self) -> int:
        shape, rank = self.shape, self.rank
        if self.problem == "svd":
            return int(np.prod(shape))
        if self.n is not None:
            return int(self.n)
        if self.problem == "completion":
            return int(round(self.sampling * np.prod(shape)))
        return int(round(5 * max(shape) ** 1.5 * max(rank)))

    def rgn_config(self) -> RgnConfig:
        return RgnConfig(max_iter=self.max_iter, tol=self.tol, retraction=self.retraction,
                         ls_solver=self.ls_solver, record_timing=self.record_timing)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("p", "r"):
            if not isinstance(out[key], int):
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


class Problem(NamedTuple):
    truth: TuckerTensor
    ensemble: MeasurementEnsemble
    y: np.ndarray


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for trial ``trial`` of a batch seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def generate_problem(cfg: ExperimentConfig, rng=None) -> Problem:
    """Draw ``(truth, ensemble, y)`` for one trial.

    Factors are Haar-distributed orthonormal frames and the core is i.i.d.
    ``N(0, 1)``; for ``svd`` the core is rescaled so that the smallest of
    the ``r_k``-th singular values of the unfoldings equals ``lambda_min``.
    """
    rng = np.random.default_rng(rng)
    shape, rank = cfg.shape, cfg.rank
    truth = random_tucker(shape, rank, rng)
    if cfg.problem == "svd":
        x = truth.to_dense()
        lam = min(np.linalg.svd(matricize(x, k), compute_uv=False)[r - 1] for k, r in enumerate(rank))
        truth = TuckerTensor(truth.core * (cfg.lambda_min / lam), truth.factors)
    x = truth.to_dense()
    n = cfg.sample_size
    noise_var = cfg.sigma ** 2
    if cfg.problem == "regression":
        variance = 1.0 / n if cfg.scaling == "paper41" else 1.0
        ensemble = gaussian_ensemble(n, shape, variance=variance, seed=rng)
    elif cfg.problem == "rank1":
        variance = 1.0 / n if cfg.scaling == "paper41" else 1.0
        ensemble = rank1_ensemble(n, shape, seed=rng, variance=variance)
    elif cfg.problem == "completion":
        ensemble = completion_sample(n, shape, seed=rng)
    else:
        ensemble = Identity(shape)
    if cfg.scaling == "paper41" and cfg.problem in ("regression", "rank1"):
        noise_var /= n
    y = ensemble.apply(x)
    if cfg.sigma > 0:
        y = y + math.sqrt(noise_var) * rng.standard_normal(ensemble.n)
    return Problem(truth, ensemble, y)


def rel_rmse(x, truth) -> float:
    """``||x - truth|| / ||truth||``."""
    x = as_tensor(x)
    truth = as_tensor(truth)
    if x.shape != truth.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {truth.shape}")
    norm = hs_norm(truth)
    if norm == 0:
        raise ValueError("relative error against a zero tensor is undefined")
    return hs_norm(x - truth) / norm


def _initial_point(cfg: ExperimentConfig, prob: Problem, rng) -> TuckerTensor:
    rank = cfg.rank
    if cfg.init == "random":
        return random_init(cfg.shape, rank, seed=rng)
    if cfg.problem == "svd":
        return spectral_init_svd(unvec(prob.y, cfg.shape), rank)
    if cfg.problem == "completion":
        return completion_init(prob.ensemble, prob.y, rank)
    return spectral_init_regression(prob.y, prob.ensemble, rank)


@dataclass
class TrialResult:
    trial: int
    status: str
    iterations: int
    final_rel_rmse: Optional[float]
    wall_time: float
    trace: IterationTrace = field(repr=False)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trace"] = self.trace.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrialResult":
        data = dict(data)
        data["trace"] = IterationTrace(**data["trace"])
        return cls(**data)


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    """Generate, initialize and solve one trial; solver aborts are captured, not raised."""
    rng = trial_rng(cfg.seed, trial)
    start = time.perf_counter()
    prob = generate_problem(cfg, rng)
    truth = prob.truth.to_dense()
    solver_cfg = cfg.rgn_config()
    error = None
    try:
        x0 = _initial_point(cfg, prob, rng)
        if cfg.solver == "rgn" and cfg.problem == "svd":
            _, trace = rgn_svd_solve(unvec(prob.y, cfg.shape), cfg.rank, x0, solver_cfg, truth)
        elif cfg.solver == "rgn":
            _, trace = rgn_solve(prob.y, prob.ensemble, cfg.rank, x0, solver_cfg, truth)
        else:
            step = cfg.step if cfg.step is not None else 1.0 / prob.ensemble.energy_scale()
            _, trace = iht_solve(prob.y, prob.ensemble, cfg.rank, x0, step, solver_cfg, truth)
    except SolverError as exc:
        trace = exc.trace if exc.trace is not None else IterationTrace(status="failed")
        error = str(exc)
    except (ValueError, np.linalg.LinAlgError) as exc:
        trace = IterationTrace(status="failed")
        error = f"{type(exc).__name__}: {exc}"
    final = trace.rel_rmse[-1] if len(trace) else None
    return TrialResult(trial, trace.status, trace.iterations, final,
                       time.perf_counter() - start, trace, error)


def _run_trial_args(args):
    return run_trial(*args)


@dataclass
class ExperimentReport:
    config: dict
    trials: list
    version: str = __version__

    @property
    def aggregate(self) -> dict:
        finals = [t.final_rel_rmse for t in self.trials if t.final_rel_rmse is not None]
        iters = [t.iterations for t in self.trials]
        return {
            "trials": len(self.trials),
            "median_final_rel_rmse": float(np.median(finals)) if finals else None,
            "median_iterations": float(np.median(iters)) if iters else None,
            "total_wall_time": float(sum(t.wall_time for t in self.trials)),
            "median_wall_time": float(np.median([t.wall_time for t in self.trials])) if self.trials else None,
            "failures": sum(t.error is not None for t in self.trials),
            "status_counts": {s: sum(t.status == s for t in self.trials)
                              for s in sorted({t.status for t in self.trials})},
        }

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "aggregate": self.aggregate,
            "trials": [t.to_dict() for t in self.trials],
        }


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Run ``cfg.trials`` seeded trials, in parallel when ``cfg.workers > 1``."""
    cfg.validate()
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_trial_args, jobs))
    else:
        results = [run_trial(*job) for job in jobs]
    return ExperimentReport(cfg.to_dict(), results)


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def trace_csv(report: ExperimentReport, timing: bool = True) -> str:
    """The per-iteration CSV; ``timing=False`` drops the ``wall_ms`` column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["trial", "iter", "rel_rmse", "residual"] + (["wall_ms"] if timing else [])
    writer.writerow(header)
    for tr in report.trials:
        trace = tr.trace
        for it in range(len(trace)):
            row = [tr.trial, it, _fmt(trace.rel_rmse[it]), _fmt(trace.residual[it])]
            if timing:
                row.append(_fmt(1000.0 * trace.wall_time[it]))
            writer.writerow(row)
    return buf.getvalue()


def report_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=True)


def load_report(text: str) -> ExperimentReport:
    data = json.loads(text)
    return ExperimentReport(data["config"], [TrialResult.from_dict(t) for t in data["trials"]],
                            data.get("version", __version__))


def emit(report: ExperimentReport, out: Optional[str] = None, fmt: str = "both") -> dict:
    """Write ``<out>.csv`` and/or ``<out>.json``; return the texts keyed by format."""
    texts = {}
    if fmt in ("csv", "both"):
        texts["csv"] = trace_csv(report)
    if fmt in ("json", "both"):
        texts["json"] = report_json(report)
    if not texts:
        raise ValueError(f"unknown output format {fmt!r}")
    if out:
        for ext, text in texts.items():
            with open(f"{out}.{ext}", "w") as fh:
                fh.write(text)
    return texts
