"""Command-line entry point.

Usage examples::

    poscal run --out-dir runs/blobs --mode mle,l1,poscal --lambda 1 --u 5
    poscal run --data reviews.tsv --label-column label --featurizer hashed_bow --bow-dim 2048
    poscal run --preset study --out-dir runs/study
    poscal generate --out blobs.csv --n 2000 --k 3 --overlap 0.5 --noise 0.2

Exit codes: 0 success, 2 configuration error, 3 ingestion error,
4 training diverged (partial results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .core import BinningConfig, ConfigError, IngestionError, InvalidInputError
from .data import Featurizer, SyntheticSpec, generate_synthetic, write_dataset
from .experiment import ExperimentConfig, FileSource, default_study, run_experiment
from .metrics import METRICS
from .train import Mode, TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_DIVERGED = 0, 2, 3, 4


def _add_synthetic_args(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("synthetic data")
    g.add_argument("--generator", default="gaussian_blobs", choices=["gaussian_blobs", "noisy_moons_like"])
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--overlap", type=float, default=0.5)
    g.add_argument("--noise", type=float, default=0.2, help="label-noise rate")
    g.add_argument("--data-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poscal", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train, post-calibrate, evaluate and write reports")
    run.add_argument("--preset", choices=["study"], help="start from the default synthetic study")
    run.add_argument("--data", help="CSV/TSV/JSONL file; synthetic data is used when omitted")
    run.add_argument("--format", choices=["csv", "tsv", "jsonl"])
    run.add_argument("--label-column", default="label")
    run.add_argument("--featurizer", choices=["numeric", "hashed_bow"], default="numeric")
    run.add_argument("--text-column", default="text")
    run.add_argument("--bow-dim", type=int, default=1024)
    _add_synthetic_args(run)

    run.add_argument("--mode", default="mle,l1,poscal", help="comma-separated subset of mle,l1,poscal")
    run.add_argument("--arch", choices=["logreg", "mlp"], default=None)
    run.add_argument("--hidden", type=int, default=None)
    run.add_argument("--lambda", dest="lam", type=float, default=None)
    run.add_argument("--u", type=int, default=None, help="Q refreshes per epoch")
    run.add_argument("--bins", type=int, default=None)
    run.add_argument("--distance", choices=["kl", "mse"], default=None)
    run.add_argument("--epochs", type=int, default=None)
    run.add_argument("--lr", type=float, default=None)
    run.add_argument("--batch-size", type=int, default=None)
    run.add_argument("--l1-weight", type=float, default=None)
    run.add_argument("--eval-every", type=int, default=None)
    run.add_argument("--patience", type=int, default=None)
    run.add_argument("--no-early-stopping", action="store_true")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--num-seeds", type=int, default=None, help="run seeds seed..seed+N-1")
    run.add_argument("--val-frac", type=float, default=0.1)
    run.add_argument("--test-frac", type=float, default=0.2)
    run.add_argument("--metric", choices=list(METRICS), default="accuracy")
    run.add_argument("--out-dir", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset to disk")
    _add_synthetic_args(gen)
    gen.add_argument("--format", choices=["csv", "tsv", "jsonl"], default="csv")
    gen.add_argument("--out", required=True)
    return ap


def _synthetic_spec(args) -> SyntheticSpec:
    return SyntheticSpec(generator=args.generator, n=args.n, p=args.p, k=args.k,
                         overlap=args.overlap, label_noise=args.noise, seed=args.data_seed)


def config_from_args(args) -> ExperimentConfig:
    base = default_study() if args.preset == "study" else ExperimentConfig()
    if args.data:
        source = FileSource(args.data, args.format, args.label_column,
                            Featurizer(args.featurizer, args.bow_dim, args.text_column))
    elif args.preset == "study":
        source = base.source
    else:
        source = _synthetic_spec(args)

    t = base.train
    overrides = {
        "architecture": args.arch, "hidden_width": args.hidden, "lam": args.lam,
        "q_updates_per_epoch": args.u, "distance": args.distance, "epochs": args.epochs,
        "learning_rate": args.lr, "batch_size": args.batch_size, "l1_weight": args.l1_weight,
        "eval_every_steps": args.eval_every, "patience": args.patience,
    }
    t = replace(t, **{k: v for k, v in overrides.items() if v is not None})
    if args.bins is not None:
        t = replace(t, binning=BinningConfig(num_bins=args.bins))
    if args.no_early_stopping:
        t = replace(t, early_stopping=False)

    num_seeds = args.num_seeds if args.num_seeds is not None else len(base.seeds)
    if num_seeds < 1:
        raise ConfigError("--num-seeds must be >= 1")
    modes = tuple(Mode(m.strip()) for m in args.mode.split(",") if m.strip())
    return ExperimentConfig(source=source, train=t, modes=modes, val_frac=args.val_frac,
                            test_frac=args.test_frac, metric=args.metric,
                            seeds=tuple(range(args.seed, args.seed + num_seeds)),
                            out_dir=args.out_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            data = generate_synthetic(_synthetic_spec(args))
            write_dataset(data, args.out, args.format)
            return EXIT_OK
        cfg = config_from_args(args)
        report = run_experiment(cfg)
    except (ConfigError, InvalidInputError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST

    print(json.dumps(report["aggregate"], indent=2, sort_keys=True))
    if report["errors"]:
        for err in report["errors"]:
            print(f"training diverged: mode={err['mode']} seed={err['seed']} step={err['step']}",
                  file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
