"""Mini-batch training with warm-up, early stopping, and cross-validation."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .config import TrainConfig
from .data import Dataset, MinMaxScaler, SplitPlan, fit_scaler, stratified_kfold_plans, subsample_train
from .errors import NumericError
from .model import GroupedVAE
from .optim import AdamState, adam_step, clip_global_norm
from .rng import derive_rng, derive_seed


@dataclass
class TrainHistory:
    train_loss: list[float]
    valid_loss: list[float]
    beta: list[float]
    best_epoch: int
    wall_seconds: float

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def rows(self):
        return [
            (epoch, self.train_loss[epoch], self.valid_loss[epoch], self.beta[epoch])
            for epoch in range(self.epochs_run)
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "train_loss", "valid_loss", "beta"])
            for epoch, train, valid, beta in self.rows():
                writer.writerow([epoch, repr(train), repr(valid), repr(beta)])


def beta_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Linear warm-up from zero to beta_max over beta_warmup_epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch >= cfg.beta_warmup_epochs:
        return cfg.beta_max
    return cfg.beta_max * epoch / cfg.beta_warmup_epochs


def validation_loss(model: GroupedVAE, x, beta: float, labels=None, seed: int = 0) -> float:
    """Eval-mode loss with zero posterior noise (reconstruction from the
    posterior mean). Subset draws in mixture mode come from a fixed derived
    stream so the value is comparable across epochs."""
    loss, _ = model.elbo_loss(
        x,
        beta_effective=beta,
        rng=derive_rng(seed, "validation"),
        train=False,
        want_grads=False,
        zero_noise=True,
        labels=labels,
    )
    return loss


def iterate_batches(order: np.ndarray, batch_size: int, skip_singletons: bool):
    """Contiguous mini-batch index slices over a shuffled order.

    A trailing batch of one row is dropped when batch norm is in play, which
    cannot normalize a single-row batch.
    """
    for start in range(0, len(order), batch_size):
        batch = order[start : start + batch_size]
        if skip_singletons and len(batch) == 1:
            continue
        yield batch


def train(
    model: GroupedVAE,
    train_x: np.ndarray,
    valid_x: np.ndarray,
    cfg: TrainConfig,
    train_labels: np.ndarray | None = None,
    valid_labels: np.ndarray | None = None,
) -> TrainHistory:
    """Optimize the model in place and restore its best-validation weights.

    Per batch: loss and gradients, global-norm clipping, one Adam step. Per
    epoch: eval-mode validation loss at the full regularization weight (so
    epochs stay comparable during warm-up). Stops once validation has not
    strictly improved for ``cfg.patience`` epochs.
    """
    started = time.perf_counter()
    supervised = train_labels is not None
    params = model.parameters(include_classifier=supervised)
    state = AdamState.for_params(params)
    batch_rng = derive_rng(cfg.seed, "batches")
    noise_rng = derive_rng(cfg.seed, "noise")
    uses_batch_norm = any(
        layer.batch_norm is not None
        for mlp in model.encoders + model.decoders
        for layer in mlp.layers
    )

    history = TrainHistory([], [], [], best_epoch=0, wall_seconds=0.0)
    best_loss = np.inf
    best_weights = model.snapshot()
    since_best = 0

    for epoch in range(cfg.max_epochs):
        beta = beta_at_epoch(cfg, epoch)
        order = batch_rng.permutation(len(train_x))
        total, seen = 0.0, 0
        for batch in iterate_batches(order, cfg.batch_size, uses_batch_norm):
            labels = train_labels[batch] if supervised else None
            try:
                loss, grads = model.elbo_loss(
                    train_x[batch], beta, rng=noise_rng, train=True, labels=labels
                )
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from exc
            clip_global_norm(grads, cfg.clip)
            adam_step(params, grads, state, cfg.lr, cfg.beta1, cfg.beta2)
            total += loss * len(batch)
            seen += len(batch)

        try:
            valid = validation_loss(
                model, valid_x, cfg.beta_max, labels=valid_labels, seed=cfg.seed
            )
        except NumericError as exc:
            raise NumericError(f"epoch {epoch} validation: {exc}") from exc
        history.train_loss.append(total / max(seen, 1))
        history.valid_loss.append(valid)
        history.beta.append(beta)

        if valid < best_loss:
            best_loss = valid
            best_weights = model.snapshot()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    model.restore(best_weights)
    history.wall_seconds = time.perf_counter() - started
    return history


@dataclass
class FoldResult:
    fold: int
    plan: SplitPlan
    scaler: MinMaxScaler
    model: GroupedVAE
    history: TrainHistory


def build_model_for(cfg: TrainConfig, feature_count: int, class_count: int, seed: int) -> GroupedVAE:
    return GroupedVAE.build(
        feature_count,
        cfg.groups,
        latent_dim=cfg.latent_dim,
        seed=seed,
        beta=cfg.beta_max,
        include_prior=cfg.include_prior,
        elbo_mode=cfg.elbo_mode,
        subset_samples=cfg.subset_samples,
        hidden=cfg.hidden,
        dropout=cfg.dropout,
        batch_norm=cfg.batch_norm,
        class_count=class_count if cfg.supervised else None,
    )


def cross_validate(dataset: Dataset, cfg: TrainConfig, folds: int | None = None) -> list[FoldResult]:
    """Train one model per stratified fold.

    The held-out fold is the test set; validation takes 8% of the full
    dataset from the remainder and training the rest, mirroring a 72/8/20
    convention at five folds. Scaling is fit on each fold's training rows
    only. An optional stratified reduction of the training split
    (``cfg.train_samples``) leaves test sets untouched.
    """
    folds = cfg.folds if folds is None else folds
    plans = stratified_kfold_plans(dataset, folds, seed=derive_seed(cfg.seed, "cv"))
    results = []
    for plan in plans:
        if cfg.train_samples:
            plan = subsample_train(
                plan, dataset.labels, cfg.train_samples,
                seed=derive_seed(cfg.seed, "subsample", plan.fold),
            )
        scaling_rows = (
            np.arange(dataset.sample_count) if cfg.scale_on_all else plan.train
        )
        scaler = fit_scaler(dataset.features, scaling_rows)
        scaled = scaler.transform(dataset.features)
        fold_seed = derive_seed(cfg.seed, "fold", plan.fold)
        model = build_model_for(cfg, dataset.feature_count, dataset.class_count, fold_seed)
        history = train(
            model,
            scaled[plan.train],
            scaled[plan.valid],
            replace(cfg, seed=fold_seed),
            train_labels=dataset.labels[plan.train] if cfg.supervised else None,
            valid_labels=dataset.labels[plan.valid] if cfg.supervised else None,
        )
        results.append(FoldResult(plan.fold, plan, scaler, model, history))
    return results
