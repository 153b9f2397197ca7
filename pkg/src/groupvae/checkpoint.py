"""Self-describing model checkpoints.

A checkpoint is a single compressed npz holding every float64 array (weights,
batch-norm state, grouping assignment, scaler statistics, split indices) plus
one JSON metadata string describing network shapes and model flags. Arrays
round-trip bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .data import MinMaxScaler, SplitPlan
from .errors import DataError
from .grouping import FeatureGrouping
from .model import GroupedVAE
from .nn import BatchNorm, DenseLayer, Mlp

FORMAT_NAME = "groupvae-checkpoint"
FORMAT_VERSION = 1


def _mlp_spec(mlp: Mlp) -> list[dict]:
    return [
        {
            "in": layer.fan_in,
            "out": layer.fan_out,
            "activation": layer.activation,
            "batch_norm": layer.batch_norm is not None,
            "dropout": layer.dropout,
        }
        for layer in mlp.layers
    ]


def _mlp_arrays(prefix: str, mlp: Mlp) -> dict[str, np.ndarray]:
    arrays = {}
    for i, layer in enumerate(mlp.layers):
        arrays[f"{prefix}.l{i}.weight"] = layer.weight
        arrays[f"{prefix}.l{i}.bias"] = layer.bias
        if layer.batch_norm is not None:
            bn = layer.batch_norm
            arrays[f"{prefix}.l{i}.bn_scale"] = bn.scale
            arrays[f"{prefix}.l{i}.bn_shift"] = bn.shift
            arrays[f"{prefix}.l{i}.bn_mean"] = bn.running_mean
            arrays[f"{prefix}.l{i}.bn_var"] = bn.running_var
    return arrays


def _rebuild_mlp(prefix: str, spec: list[dict], arrays) -> Mlp:
    layers = []
    for i, entry in enumerate(spec):
        bn = None
        if entry["batch_norm"]:
            bn = BatchNorm(
                scale=arrays[f"{prefix}.l{i}.bn_scale"],
                shift=arrays[f"{prefix}.l{i}.bn_shift"],
                running_mean=arrays[f"{prefix}.l{i}.bn_mean"],
                running_var=arrays[f"{prefix}.l{i}.bn_var"],
            )
        layers.append(
            DenseLayer(
                weight=arrays[f"{prefix}.l{i}.weight"],
                bias=arrays[f"{prefix}.l{i}.bias"],
                activation=entry["activation"],
                batch_norm=bn,
                dropout=entry["dropout"],
            )
        )
    return Mlp(layers)


def save_checkpoint(
    path,
    model: GroupedVAE,
    scaler: MinMaxScaler | None = None,
    plan: SplitPlan | None = None,
    extra_meta: dict | None = None,
) -> None:
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "feature_count": model.feature_count,
        "group_count": model.group_count,
        "latent_dim": model.latent_dim,
        "beta": model.beta,
        "include_prior": model.include_prior,
        "elbo_mode": model.elbo_mode,
        "subset_samples": model.subset_samples,
        "grouping_seed": model.grouping.seed,
        "encoders": [_mlp_spec(e) for e in model.encoders],
        "decoders": [_mlp_spec(d) for d in model.decoders],
        "classifier": _mlp_spec(model.classifier) if model.classifier else None,
        "has_scaler": scaler is not None,
        "has_plan": plan is not None,
        "extra": extra_meta or {},
    }
    arrays: dict[str, np.ndarray] = {"grouping.assignment": model.grouping.assignment}
    for g, (enc, dec) in enumerate(zip(model.encoders, model.decoders)):
        arrays.update(_mlp_arrays(f"enc{g}", enc))
        arrays.update(_mlp_arrays(f"dec{g}", dec))
    if model.classifier is not None:
        arrays.update(_mlp_arrays("clf", model.classifier))
    if scaler is not None:
        arrays["scaler.mins"] = scaler.mins
        arrays["scaler.ranges"] = scaler.ranges
    if plan is not None:
        arrays["plan.train"] = plan.train
        arrays["plan.valid"] = plan.valid
        arrays["plan.test"] = plan.test
        meta["plan_fold"] = plan.fold
        meta["plan_seed"] = plan.seed
    np.savez_compressed(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Returns (model, scaler or None, plan or None, extra metadata dict)."""
    try:
        archive = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive:
        try:
            meta = json.loads(str(archive["meta"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{path} is not a model checkpoint") from exc
        if meta.get("format") != FORMAT_NAME:
            raise DataError(f"{path} is not a model checkpoint")
        arrays = {key: archive[key] for key in archive.files if key != "meta"}

    grouping = FeatureGrouping(
        meta["feature_count"],
        meta["group_count"],
        arrays["grouping.assignment"],
        meta["grouping_seed"],
    )
    encoders = [
        _rebuild_mlp(f"enc{g}", spec, arrays) for g, spec in enumerate(meta["encoders"])
    ]
    decoders = [
        _rebuild_mlp(f"dec{g}", spec, arrays) for g, spec in enumerate(meta["decoders"])
    ]
    classifier = (
        _rebuild_mlp("clf", meta["classifier"], arrays) if meta["classifier"] else None
    )
    model = GroupedVAE(
        grouping,
        meta["latent_dim"],
        encoders,
        decoders,
        beta=meta["beta"],
        include_prior=meta["include_prior"],
        elbo_mode=meta["elbo_mode"],
        subset_samples=meta["subset_samples"],
        classifier=classifier,
    )
    scaler = None
    if meta["has_scaler"]:
        scaler = MinMaxScaler(mins=arrays["scaler.mins"], ranges=arrays["scaler.ranges"])
    plan = None
    if meta["has_plan"]:
        plan = SplitPlan(
            arrays["plan.train"],
            arrays["plan.valid"],
            arrays["plan.test"],
            fold=meta["plan_fold"],
            seed=meta["plan_seed"],
        )
    return model, scaler, plan, meta["extra"]
