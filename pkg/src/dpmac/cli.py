"""Command line entry points.

Subcommands: ``train-mac``, ``train-dpsgd``, ``accountant``, ``emit-curves``,
``gen-synthetic``.  Training commands read a ``key = value`` config file;
any config key can also be passed as ``--key value`` to override the file.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data
from .accountant import AccountantError, MomentsLedger
from .config import (ConfigError, _FIELD_TYPES, config_from_mapping,
                     parse_assignments, serialize_config)
from .experiments import emit_curves, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    for key in _FIELD_TYPES:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            metavar="V", help=argparse.SUPPRESS)


def _merged_config(args: argparse.Namespace, algorithm: str):
    mapping = {}
    if args.config:
        with open(args.config) as fh:
            mapping.update(parse_assignments(fh.read()))
    for key in _FIELD_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    mapping["algorithm"] = algorithm
    return config_from_mapping(mapping)


def _cmd_train(args, algorithm: str) -> int:
    cfg = _merged_config(args, algorithm)
    report, metrics = run_experiment(cfg)
    last = metrics.last()
    eps = "inf" if report.epsilon is None else f"{report.epsilon:.6g}"
    print(f"finished: train_loss={last['train_loss']:.6g} epsilon={eps} "
          f"artifacts={cfg.output_dir}")
    return EXIT_OK


def _cmd_accountant(args) -> int:
    orders = tuple(range(1, args.max_order + 1))
    ledger = MomentsLedger(orders=orders)
    ledger.record(args.q, args.sigma, args.steps)
    spend = ledger.epsilon(args.delta)
    print(f"epsilon = {spend.epsilon:.10g}")
    print(f"best_order = {spend.best_order:g}")
    print("order,log_moment")
    for lam, alpha in zip(ledger.orders, ledger.log_moments):
        print(f"{lam:g},{float(alpha)!r}")
    return EXIT_OK


def _cmd_emit_curves(args) -> int:
    emit_curves(args.inputs, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_gen_synthetic(args) -> int:
    rng = np.random.default_rng([args.seed, 0])
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.task == "classifier":
        train, test = data.synthetic_classification_split(
            args.n_train, args.n_test, args.dim, args.n_classes, rng)
        for name, ds in (("train", train), ("test", test)):
            np.savetxt(outdir / f"{name}_inputs.csv", ds.inputs, delimiter=",")
            labels = np.argmax(ds.targets, axis=1)
            np.savetxt(outdir / f"{name}_targets.csv", labels[:, None],
                       delimiter=",", fmt="%d")
    else:
        train, test = data.synthetic_reconstruction_split(
            args.n_train, args.n_test, args.dim, args.latent, rng)
        for name, ds in (("train", train), ("test", test)):
            np.savetxt(outdir / f"{name}_inputs.csv", ds.inputs, delimiter=",")
    print(f"wrote synthetic {args.task} data to {outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmac",
        description="Differentially private network training and accounting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-mac", help="alternating trainer")
    _add_config_overrides(p)
    p.set_defaults(func=lambda a: _cmd_train(a, "mac"))

    p = sub.add_parser("train-dpsgd", help="noisy clipped-gradient baseline")
    _add_config_overrides(p)
    p.set_defaults(func=lambda a: _cmd_train(a, "dpsgd"))

    p = sub.add_parser("accountant", help="query the moments accountant")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--max-order", type=int, default=64)
    p.set_defaults(func=_cmd_accountant)

    p = sub.add_parser("emit-curves", help="aggregate metrics files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_emit_curves)

    p = sub.add_parser("gen-synthetic", help="write offline datasets")
    p.add_argument("--task", choices=("classifier", "autoencoder"),
                   default="classifier")
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-classes", type=int, default=4)
    p.add_argument("--latent", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("show-config", help="print the effective configuration")
    _add_config_overrides(p)
    p.set_defaults(func=lambda a: _cmd_show_config(a))
    return parser


def _cmd_show_config(args) -> int:
    cfg = _merged_config(args, getattr(args, "algorithm", None) or "mac")
    sys.stdout.write(serialize_config(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AccountantError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
