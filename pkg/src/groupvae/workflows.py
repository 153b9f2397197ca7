"""End-to-end command workflows: train/eval/tc/mask/export/sweep.

Each workflow writes a deterministic ``report.json``, a ``report.csv`` table,
a rendered figure, and (where wall-clock matters) a ``timing.json`` sidecar
into its output directory, returning the report payload.
"""

from __future__ import annotations

import time
from dataclasses import replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import Dataset, export_latents_csv, synthetic_hdlss, write_csv
from .downstream import ClassifierConfig, classifier_accuracy, fit_downstream_classifiers
from .errors import DataError
from .metrics import LatentTable, balanced_accuracy, estimate_tc
from .plots import (
    plot_expert_sweep,
    plot_fold_accuracies,
    plot_histories,
    plot_masking_curve,
    plot_tc_per_fold,
)
from .reports import clamp_tc, mean_std, write_jsonl, write_report, write_table
from .rng import derive_rng, derive_seed
from .training import cross_validate
from . import gaussians


def dataset_info(dataset: Dataset, path, label_column: str) -> dict:
    return {
        "path": str(path),
        "label": label_column,
        "samples": dataset.sample_count,
        "features": dataset.feature_count,
        "classes": dataset.class_count,
        "class_names": dataset.class_names,
        "class_sizes": dataset.class_sizes(),
    }


def synth_workflow(path, sample_count, feature_count, class_count, latent_true,
                   noise_sd, seed, label_column="label") -> Dataset:
    dataset = synthetic_hdlss(
        sample_count, feature_count, latent_true=latent_true,
        class_count=class_count, noise_sd=noise_sd, seed=seed,
    )
    write_csv(dataset, path, label_column)
    return dataset


def train_workflow(dataset: Dataset, cfg: TrainConfig, outdir, info: dict) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = cross_validate(dataset, cfg)

    fold_records = []
    for result in results:
        name = f"fold{result.fold}.npz"
        save_checkpoint(
            outdir / name,
            result.model,
            result.scaler,
            result.plan,
            extra_meta={"config": cfg.to_dict(), "dataset": info},
        )
        history_name = f"fold{result.fold}_history.csv"
        result.history.write_csv(outdir / history_name)
        record = {
            "fold": result.fold,
            "epochs_run": result.history.epochs_run,
            "best_epoch": result.history.best_epoch,
            "best_valid_loss": min(result.history.valid_loss),
            "final_train_loss": result.history.train_loss[-1],
            "train_size": len(result.plan.train),
            "valid_size": len(result.plan.valid),
            "test_size": len(result.plan.test),
            "checkpoint": name,
            "history_csv": history_name,
        }
        if cfg.supervised:
            scaled = result.scaler.transform(dataset.features)
            logits, _ = result.model.supervised_forward(scaled[result.plan.test])
            record["head_test_accuracy"] = balanced_accuracy(
                dataset.labels[result.plan.test], logits.argmax(axis=1)
            )
        fold_records.append(record)

    valid_mean, valid_std = mean_std(r["best_valid_loss"] for r in fold_records)
    summary = {"best_valid_loss_mean": valid_mean, "best_valid_loss_std": valid_std}
    if cfg.supervised:
        head_mean, head_std = mean_std(r["head_test_accuracy"] for r in fold_records)
        summary["head_test_accuracy_mean"] = head_mean
        summary["head_test_accuracy_std"] = head_std
    payload = {
        "command": "train",
        "config": cfg.to_dict(),
        "dataset": info,
        "folds": fold_records,
        "summary": summary,
        "artifacts": {"figure": "history.png", "folds_jsonl": "folds.jsonl"},
    }
    write_jsonl(outdir / "folds.jsonl", fold_records)
    write_table(
        outdir / "report.csv",
        ["fold", "epochs_run", "best_epoch", "best_valid_loss", "final_train_loss"],
        [
            (r["fold"], r["epochs_run"], r["best_epoch"], r["best_valid_loss"], r["final_train_loss"])
            for r in fold_records
        ],
    )
    plot_histories([(r.fold, r.history) for r in results], outdir / "history.png")
    timing = {
        "total_seconds": sum(r.history.wall_seconds for r in results),
        "per_fold_seconds": [r.history.wall_seconds for r in results],
    }
    write_report(outdir, payload, timing)
    return payload


def load_models(models_dir):
    """Fold checkpoints from a training output directory, sorted by fold."""
    models_dir = Path(models_dir)
    paths = sorted(models_dir.glob("fold*.npz"))
    if not paths:
        raise DataError(f"no fold checkpoints under {models_dir}")
    loaded = [load_checkpoint(p) for p in paths]
    return loaded


def check_dataset_matches(dataset: Dataset, extra: dict) -> None:
    stored = extra.get("dataset", {})
    mismatches = [
        name
        for name, actual in (
            ("samples", dataset.sample_count),
            ("features", dataset.feature_count),
            ("classes", dataset.class_count),
        )
        if stored.get(name) not in (None, actual)
    ]
    if mismatches:
        raise DataError(
            "dataset does not match the one the checkpoints were trained on "
            f"(differs in {', '.join(mismatches)})"
        )


def _classifier_setup(extra: dict, clf_seeds: int | None):
    stored = extra.get("config", {})
    cfg = ClassifierConfig(
        max_epochs=int(stored.get("clf_max_epochs", 10_000)),
        patience=int(stored.get("clf_patience", 100)),
    )
    seeds = clf_seeds if clf_seeds is not None else int(stored.get("clf_seeds", 5))
    base_seed = int(stored.get("seed", 0))
    return cfg, seeds, base_seed


def eval_workflow(models_dir, dataset: Dataset, outdir, info: dict,
                  clf_seeds: int | None = None) -> dict:
    """Downstream-classifier protocol over all fold checkpoints."""
    started = time.perf_counter()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fold_records = []
    all_accuracies = []
    clf_echo = None
    for model, scaler, plan, extra in load_models(models_dir):
        check_dataset_matches(dataset, extra)
        cfg, seeds, base_seed = _classifier_setup(extra, clf_seeds)
        clf_echo = {
            "seeds": seeds,
            "hidden": list(cfg.hidden),
            "max_epochs": cfg.max_epochs,
            "patience": cfg.patience,
        }
        scaled = scaler.transform(dataset.features)
        latents, classifiers = fit_downstream_classifiers(
            model, scaled, dataset.labels, plan, cfg, seeds,
            derive_seed(base_seed, "eval", plan.fold),
        )
        accs = [
            classifier_accuracy(clf, latents[plan.test], dataset.labels[plan.test])
            for clf in classifiers
        ]
        mean, std = mean_std(accs)
        fold_records.append(
            {"fold": plan.fold, "accuracies": accs, "mean": mean, "std": std}
        )
        all_accuracies.extend(accs)

    mean, std = mean_std(all_accuracies)
    payload = {
        "command": "eval",
        "dataset": info,
        "classifier": clf_echo,
        "folds": fold_records,
        "summary": {
            "mean": mean,
            "std": std,
            "runs": len(all_accuracies),
            "accuracies": all_accuracies,
        },
    }
    write_table(
        outdir / "report.csv",
        ["fold", "mean", "std"] ,
        [(r["fold"], r["mean"], r["std"]) for r in fold_records],
    )
    plot_fold_accuracies(
        [(r["fold"], r["accuracies"]) for r in fold_records], outdir / "accuracy.png"
    )
    payload["artifacts"] = {"figure": "accuracy.png"}
    write_report(outdir, payload, {"total_seconds": time.perf_counter() - started})
    return payload


def tc_workflow(models_dir, dataset: Dataset, outdir, info: dict,
                source: str = "mean", split: str = "all") -> dict:
    """Fitted-Gaussian total correlation of each fold model's latents."""
    if split not in ("all", "train", "valid", "test"):
        raise DataError(f"unknown split filter {split!r}")
    started = time.perf_counter()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fold_records = []
    for model, scaler, plan, extra in load_models(models_dir):
        check_dataset_matches(dataset, extra)
        base_seed = int(extra.get("config", {}).get("seed", 0))
        scaled = scaler.transform(dataset.features)
        rows = {
            "all": np.arange(dataset.sample_count),
            "train": plan.train,
            "valid": plan.valid,
            "test": plan.test,
        }[split]
        latent = model.infer_latent(scaled[rows])
        if source == "sample":
            rng = derive_rng(base_seed, "tc-sample", plan.fold)
            values, _ = gaussians.reparam_sample(latent, rng)
        else:
            values = latent.mean
        raw = estimate_tc(LatentTable(values, source))
        fold_records.append(
            {"fold": plan.fold, "tc": clamp_tc(raw), "tc_raw": raw, "rows": len(rows)}
        )
    mean, std = mean_std(r["tc"] for r in fold_records)
    payload = {
        "command": "tc",
        "dataset": info,
        "source": source,
        "split": split,
        "folds": fold_records,
        "summary": {"mean": mean, "std": std},
        "artifacts": {"figure": "tc.png"},
    }
    write_table(
        outdir / "report.csv",
        ["fold", "tc", "tc_raw"],
        [(r["fold"], r["tc"], r["tc_raw"]) for r in fold_records],
    )
    plot_tc_per_fold(
        [r["fold"] for r in fold_records], [r["tc"] for r in fold_records],
        outdir / "tc.png",
    )
    write_report(outdir, payload, {"total_seconds": time.perf_counter() - started})
    return payload


def mask_workflow(models_dir, dataset: Dataset, outdir, info: dict,
                  clf_seeds: int | None = None, reduction: str = "poe_full") -> dict:
    """Accuracy with groups dropped: for every drop count, the balanced
    accuracy of the eval classifiers on masked-latent test rows, averaged over
    every group combination of that size (exhaustive up to eight groups).

    ``reduction`` picks how the available groups summarize into one latent:
    a product of the available experts, or the moment-matched mixture over
    their subsets.
    """
    started = time.perf_counter()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    per_run = []
    group_count = None
    for model, scaler, plan, extra in load_models(models_dir):
        check_dataset_matches(dataset, extra)
        cfg, seeds, base_seed = _classifier_setup(extra, clf_seeds)
        group_count = model.group_count
        scaled = scaler.transform(dataset.features)
        latents, classifiers = fit_downstream_classifiers(
            model, scaled, dataset.labels, plan, cfg, seeds,
            derive_seed(base_seed, "eval", plan.fold),
        )
        test_x = scaled[plan.test]
        test_y = dataset.labels[plan.test]
        masked_latents = {}
        for dropped in range(group_count):
            keep_size = group_count - dropped
            for members in combinations(range(group_count), keep_size):
                masked_latents[members] = model.latent_means(
                    test_x, available=members, reduction=reduction
                )
        for s, clf in enumerate(classifiers):
            by_drop = []
            for dropped in range(group_count):
                keep_size = group_count - dropped
                masks = list(combinations(range(group_count), keep_size))
                accs = [
                    classifier_accuracy(clf, masked_latents[members], test_y)
                    for members in masks
                ]
                by_drop.append(float(np.mean(accs)))
            per_run.append(
                {"fold": plan.fold, "seed": s, "accuracy_by_drop": by_drop}
            )

    rows = []
    for dropped in range(group_count):
        values = [run["accuracy_by_drop"][dropped] for run in per_run]
        mean, std = mean_std(values)
        rows.append(
            {
                "dropped": dropped,
                "combinations": len(list(combinations(range(group_count), group_count - dropped))),
                "mean": mean,
                "std": std,
            }
        )
    payload = {
        "command": "mask-eval",
        "dataset": info,
        "groups": group_count,
        "reduction": reduction,
        "rows": rows,
        "per_run": per_run,
        "artifacts": {"figure": "masking.png"},
    }
    write_table(
        outdir / "report.csv",
        ["dropped", "combinations", "mean", "std"],
        [(r["dropped"], r["combinations"], r["mean"], r["std"]) for r in rows],
    )
    plot_masking_curve(
        [r["dropped"] for r in rows],
        [r["mean"] for r in rows],
        [r["std"] for r in rows],
        outdir / "masking.png",
    )
    write_report(outdir, payload, {"total_seconds": time.perf_counter() - started})
    return payload


def export_workflow(models_dir, dataset: Dataset, outdir) -> list[Path]:
    """Latent means of every sample, one CSV per fold model."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for model, scaler, plan, extra in load_models(models_dir):
        check_dataset_matches(dataset, extra)
        scaled = scaler.transform(dataset.features)
        latents = model.latent_means(scaled)
        path = outdir / f"latents_fold{plan.fold}.csv"
        export_latents_csv(
            path, np.arange(dataset.sample_count), dataset.labels,
            dataset.class_names, latents,
        )
        written.append(path)
    return written


def sweep_workflow(dataset: Dataset, cfg: TrainConfig, outdir, info: dict,
                   expert_counts: tuple[int, ...] = (2, 4, 6, 8)) -> dict:
    """Train and evaluate at several expert counts against the single-network
    baseline (one group, no prior expert: a plain VAE)."""
    started = time.perf_counter()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    def run_one(k: int, include_prior: bool):
        sub = outdir / f"experts{k}"
        run_cfg = replace(cfg, groups=k, include_prior=include_prior, elbo_mode="auto").validate()
        train_workflow(dataset, run_cfg, sub, info)
        return eval_workflow(sub, dataset, sub / "eval", info)

    baseline = run_one(1, include_prior=False)
    entries = []
    for k in expert_counts:
        result = run_one(k, include_prior=cfg.include_prior)
        entries.append(
            {
                "experts": k,
                "mean": result["summary"]["mean"],
                "std": result["summary"]["std"],
                "improvement": result["summary"]["mean"] - baseline["summary"]["mean"],
            }
        )
    payload = {
        "command": "sweep-experts",
        "dataset": info,
        "config": cfg.to_dict(),
        "baseline": {
            "experts": 1,
            "mean": baseline["summary"]["mean"],
            "std": baseline["summary"]["std"],
        },
        "entries": entries,
        "artifacts": {"figure": "sweep.png"},
    }
    write_table(
        outdir / "report.csv",
        ["experts", "mean", "std", "improvement"],
        [(e["experts"], e["mean"], e["std"], e["improvement"]) for e in entries],
    )
    plot_expert_sweep(
        [e["experts"] for e in entries],
        [e["mean"] for e in entries],
        [e["std"] for e in entries],
        baseline["summary"]["mean"],
        outdir / "sweep.png",
    )
    write_report(outdir, payload, {"total_seconds": time.perf_counter() - started})
    return payload
