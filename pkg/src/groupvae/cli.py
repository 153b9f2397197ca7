"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import build_config, parse_config_file
from .data import load_csv
from .errors import ConfigError, DataError, NumericError
from .workflows import (
    dataset_info,
    eval_workflow,
    export_workflow,
    mask_workflow,
    sweep_workflow,
    synth_workflow,
    tc_workflow,
    train_workflow,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_dataset_args(parser):
    parser.add_argument("--data", required=True, help="input CSV path")
    parser.add_argument("--label", default="label", help="label column name")


def _add_config_args(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument(
        "--opt",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    for flag, key in _ERGONOMIC_FLAGS:
        parser.add_argument(flag, dest=f"cfg_{key}", default=None)
    parser.add_argument("--supervised", action="store_true", default=False)


_ERGONOMIC_FLAGS = [
    ("--seed", "seed"),
    ("--groups", "groups"),
    ("--latent-dim", "latent_dim"),
    ("--beta-max", "beta_max"),
    ("--batch-size", "batch_size"),
    ("--max-epochs", "max_epochs"),
    ("--patience", "patience"),
    ("--folds", "folds"),
    ("--elbo-mode", "elbo_mode"),
    ("--train-samples", "train_samples"),
]


def _collect_config(args) -> "TrainConfig":
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {}
    for _, key in _ERGONOMIC_FLAGS:
        value = getattr(args, f"cfg_{key}")
        if value is not None:
            overrides[key] = value
    if args.supervised:
        overrides["supervised"] = "true"
    for item in args.opt:
        if "=" not in item:
            raise ConfigError(f"--opt expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return build_config(file_values, overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="groupvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit a synthetic wide-table CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100, help="sample count")
    p.add_argument("--d", type=int, default=1000, help="feature count")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--latent-true", type=int, default=8)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", default="label")

    p = sub.add_parser("train", help="cross-validated training, checkpoints + report")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("eval", help="downstream classifier protocol on checkpoints")
    _add_dataset_args(p)
    p.add_argument("--models", required=True, help="training output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--clf-seeds", type=int, default=None)

    p = sub.add_parser("tc", help="total correlation of checkpoint latents")
    _add_dataset_args(p)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", choices=["mean", "sample"], default="mean")
    p.add_argument("--split", choices=["all", "train", "valid", "test"], default="all")

    p = sub.add_parser("mask-eval", help="accuracy under dropped feature groups")
    _add_dataset_args(p)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clf-seeds", type=int, default=None)
    p.add_argument(
        "--reduction", choices=["poe_full", "mixture_mean"], default="poe_full",
        help="how available groups summarize into one latent",
    )

    p = sub.add_parser("export-latents", help="latent CSVs for external plotting")
    _add_dataset_args(p)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-experts", help="train+eval across expert counts")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--experts", default="2,4,6,8", help="comma-separated counts")
    _add_config_args(p)

    return parser


def _load_dataset(args):
    dataset = load_csv(args.data, args.label)
    return dataset, dataset_info(dataset, args.data, args.label)


def _dispatch(args) -> int:
    if args.command == "synth":
        dataset = synth_workflow(
            args.out, args.n, args.d, args.classes, args.latent_true,
            args.noise_sd, args.seed, args.label,
        )
        print(
            f"wrote {args.out} ({dataset.sample_count} rows, "
            f"{dataset.feature_count} features, {dataset.class_count} classes)"
        )
        return 0

    if args.command == "train":
        dataset, info = _load_dataset(args)
        cfg = _collect_config(args)
        payload = train_workflow(dataset, cfg, args.out, info)
        summary = payload["summary"]
        print(
            f"trained {len(payload['folds'])} folds "
            f"(best valid loss {summary['best_valid_loss_mean']:.4f} "
            f"± {summary['best_valid_loss_std']:.4f}); report in {args.out}"
        )
        return 0

    if args.command == "eval":
        dataset, info = _load_dataset(args)
        payload = eval_workflow(args.models, dataset, args.out, info, args.clf_seeds)
        summary = payload["summary"]
        print(
            f"balanced accuracy {summary['mean']:.4f} ± {summary['std']:.4f} "
            f"over {summary['runs']} runs; report in {args.out}"
        )
        return 0

    if args.command == "tc":
        dataset, info = _load_dataset(args)
        payload = tc_workflow(args.models, dataset, args.out, info, args.source, args.split)
        summary = payload["summary"]
        print(f"total correlation {summary['mean']:.4f} ± {summary['std']:.4f}; report in {args.out}")
        return 0

    if args.command == "mask-eval":
        dataset, info = _load_dataset(args)
        payload = mask_workflow(
            args.models, dataset, args.out, info, args.clf_seeds, args.reduction
        )
        for row in payload["rows"]:
            print(f"dropped {row['dropped']}: {row['mean']:.4f} ± {row['std']:.4f}")
        print(f"report in {args.out}")
        return 0

    if args.command == "export-latents":
        dataset, info = _load_dataset(args)
        written = export_workflow(args.models, dataset, args.out)
        print(f"wrote {len(written)} latent CSVs to {args.out}")
        return 0

    if args.command == "sweep-experts":
        dataset, info = _load_dataset(args)
        cfg = _collect_config(args)
        try:
            counts = tuple(int(part) for part in args.experts.split(","))
        except ValueError:
            raise ConfigError(f"--experts expects comma-separated integers, got {args.experts!r}")
        payload = sweep_workflow(dataset, cfg, args.out, info, counts)
        base = payload["baseline"]
        print(f"baseline (1 expert): {base['mean']:.4f} ± {base['std']:.4f}")
        for entry in payload["entries"]:
            print(
                f"experts {entry['experts']}: {entry['mean']:.4f} "
                f"± {entry['std']:.4f} (improvement {entry['improvement']:+.4f})"
            )
        return 0

    raise _UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
