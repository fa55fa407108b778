"""Command line entry point.

Examples
--------
::

    rgntensor regression --p 30 --r 3 --trials 10 --out runs/reg
    rgntensor svd --p 100 --r 3 --sigma 1 --lambda-min 416 --max-iter 10
    rgntensor completion --p 50 --r 3 --sampling 0.35 --config base.cfg
    rgntensor decompose --input x.txt --r 2,2,2 --method hooi
    rgntensor probe-trip --p 8 --r 1 --n 500

A ``--config`` file holds ``key = value`` lines (``#`` starts a comment);
keys are the long flag names with dashes or underscores. Flags given on
the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench import PROBLEMS, ExperimentConfig, emit, run
from .measurement import Identity, gaussian_ensemble, rank1_ensemble, trip_probe
from .tensor import read_tensor
from .tucker import hooi, hosvd, write_tucker

EXIT_CONFIG = 2
EXIT_FAILED = 1


class ConfigError(ValueError):
    pass


def _int_list(text: str):
    parts = [int(s) for s in str(text).replace(" ", "").split(",") if s]
    if not parts:
        raise argparse.ArgumentTypeError(f"expected an int or a comma list, got {text!r}")
    return parts[0] if len(parts) == 1 else tuple(parts)


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# flag name -> (type, help); the dest is the ExperimentConfig field
_EXPERIMENT_FLAGS = {
    "p": (_int_list, "mode sizes: an int (repeated --order times) or a comma list"),
    "r": (_int_list, "Tucker rank: an int or a comma list"),
    "order": (int, "tensor order when --p is a single int (default 3)"),
    "n": (int, "number of measurements"),
    "sampling": (float, "fraction of observed entries (completion)"),
    "sigma": (float, "noise level"),
    "lambda-min": (float, "smallest mode-wise singular value of the truth (svd)"),
    "init": (str, "spectral | random"),
    "solver": (str, "rgn | iht"),
    "step": (float, "IHT step size (default 1 / energy scale)"),
    "seed": (int, "base seed; trial t uses the stream (seed, t)"),
    "trials": (int, "number of seeded repetitions"),
    "max-iter": (int, "iteration cap"),
    "tol": (float, "stop once the relative error is below this"),
    "retraction": (str, "st_hosvd | t_hosvd"),
    "ls-solver": (str, "qr | cg"),
    "scaling": (str, "paper7: unit-variance design and noise; paper41: both scaled by 1/n"),
    "record-timing": (_bool, "record per-iteration wall time"),
    "workers": (int, "parallel worker processes"),
    "out": (str, "output prefix; writes <out>.csv and <out>.json"),
}


def _key(name: str) -> str:
    return name.strip().replace("-", "_")


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines into raw strings keyed by field name."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{num}: expected key = value")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        out[_key(key)] = value
    return out


def _typed(key: str, raw: str):
    flag = key.replace("_", "-")
    if flag not in _EXPERIMENT_FLAGS:
        raise ConfigError(f"unknown config key {key!r}")
    conv = _EXPERIMENT_FLAGS[flag][0]
    try:
        return conv(raw)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def build_config(problem: str, args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the optional config file and explicit flags."""
    values = {}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key == "problem":
                if raw != problem:
                    raise ConfigError(f"config file is for {raw!r}, not {problem!r}")
                continue
            values[key] = _typed(key, raw)
    for flag in _EXPERIMENT_FLAGS:
        key = _key(flag)
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    try:
        return ExperimentConfig(problem=problem, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    for flag, (conv, helptext) in _EXPERIMENT_FLAGS.items():
        parser.add_argument(f"--{flag}", type=conv, default=None, help=helptext)
    parser.add_argument("--config", help="key = value file; flags override it")
    parser.add_argument("--quiet", action="store_true", help="do not print the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgntensor",
        description="Riemannian Gauss-Newton for low Tucker rank tensor estimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for problem in PROBLEMS:
        sp = sub.add_parser(problem, help=f"run a seeded {problem} experiment")
        _add_experiment_flags(sp)

    dp = sub.add_parser("decompose", help="Tucker-decompose a tensor file")
    dp.add_argument("--input", help="tensor text file (dims line, then values); "
                                     "omitted: a Gaussian tensor from --p and --seed")
    dp.add_argument("--p", type=_int_list, default=10)
    dp.add_argument("--order", type=int, default=3)
    dp.add_argument("--r", type=_int_list, required=True)
    dp.add_argument("--method", choices=("t_hosvd", "st_hosvd", "hooi"), default="st_hosvd")
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--out", help="write the decomposition here (default: stdout)")

    tp = sub.add_parser("probe-trip", help="Monte-Carlo range of ||A(Z)||^2 over unit rank-r tensors")
    tp.add_argument("--ensemble", choices=("gaussian", "rank1", "identity"), default="gaussian")
    tp.add_argument("--p", type=_int_list, default=8)
    tp.add_argument("--order", type=int, default=3)
    tp.add_argument("--r", type=_int_list, default=1)
    tp.add_argument("--n", type=int, default=500)
    tp.add_argument("--trials", type=int, default=100, help="random test tensors")
    tp.add_argument("--seed", type=int, default=0)
    return parser


def _shape(p, order):
    return (p,) * order if isinstance(p, int) else tuple(p)


def _cmd_experiment(problem: str, args) -> int:
    cfg = build_config(problem, args)
    report = run(cfg)
    if cfg.out:
        emit(report, cfg.out, "both")
    if not args.quiet:
        summary = {"problem": problem, **report.aggregate}
        if cfg.out:
            summary["outputs"] = [f"{cfg.out}.csv", f"{cfg.out}.json"]
        print(json.dumps(summary, indent=2))
    return 0


def _cmd_decompose(args) -> int:
    if args.input:
        try:
            t = read_tensor(args.input)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {args.input}: {exc}") from exc
    else:
        t = np.random.default_rng(args.seed).standard_normal(_shape(args.p, args.order))
    rank = _shape(args.r, t.ndim)
    try:
        x = hooi(t, rank) if args.method == "hooi" else hosvd(t, rank, args.method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    err = float(np.linalg.norm(x.to_dense() - t) / max(np.linalg.norm(t), np.finfo(float).tiny))
    write_tucker(args.out if args.out else sys.stdout, x)
    print(f"relative error {err!r}", file=sys.stderr)
    return 0


def _cmd_probe(args) -> int:
    shape = _shape(args.p, args.order)
    rank = _shape(args.r, len(shape))
    if args.n < 1 or args.trials < 1:
        raise ConfigError("n and trials must be positive")
    rng = np.random.default_rng(args.seed)
    if args.ensemble == "identity":
        ens = Identity(shape)
    elif args.ensemble == "gaussian":
        ens = gaussian_ensemble(args.n, shape, variance=1.0 / args.n, seed=rng)
    else:
        ens = rank1_ensemble(args.n, shape, seed=rng, variance=1.0 / args.n)
    try:
        lo, hi = trip_probe(ens, rank, trials=args.trials, seed=rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps({"ensemble": args.ensemble, "n": ens.n, "min": lo, "max": hi,
                      "spread": hi - lo}))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in PROBLEMS:
            return _cmd_experiment(args.command, args)
        if args.command == "decompose":
            return _cmd_decompose(args)
        return _cmd_probe(args)
    except ConfigError as exc:
        print(f"rgntensor: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MemoryError) as exc:
        print(f"rgntensor: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
