"""Frozen-representation evaluation: train small classifiers on extracted
latent means and score test balanced accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SplitPlan
from .metrics import balanced_accuracy
from .model import GroupedVAE, cross_entropy
from .nn import Mlp, build_mlp
from .optim import AdamState, adam_step, clip_global_norm
from .rng import derive_rng, derive_seed
from .training import iterate_batches


@dataclass
class ClassifierConfig:
    """The evaluation classifier: two 64-wide ReLU layers with batch norm and
    dropout 0.5, trained like every other model (Adam, clipping, early stop
    on validation cross-entropy)."""

    hidden: tuple[int, ...] = (64, 64)
    dropout: float = 0.5
    batch_norm: bool = True
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 10_000
    patience: int = 100
    clip: float = 2.5


def train_classifier(
    train_z: np.ndarray,
    train_y: np.ndarray,
    valid_z: np.ndarray,
    valid_y: np.ndarray,
    class_count: int,
    cfg: ClassifierConfig,
    seed: int,
) -> Mlp:
    """Fit an MLP classifier, returning the best-validation weights."""
    if len(np.unique(train_y)) < 2:
        raise ValueError("training labels collapse to a single class")
    net = build_mlp(
        [train_z.shape[1], *cfg.hidden, class_count],
        derive_rng(seed, "clf-init"),
        batch_norm=cfg.batch_norm,
        dropout=cfg.dropout,
    )
    params = net.parameters()
    state = AdamState.for_params(params)
    batch_rng = derive_rng(seed, "clf-batches")
    noise_rng = derive_rng(seed, "clf-noise")

    best_loss = np.inf
    best_weights = net.snapshot()
    since_best = 0
    for _ in range(cfg.max_epochs):
        order = batch_rng.permutation(len(train_z))
        for batch in iterate_batches(order, cfg.batch_size, cfg.batch_norm):
            logits, cache = net.forward(
                train_z[batch], train=True, rng=noise_rng, want_cache=True
            )
            _, d_logits = cross_entropy(logits, train_y[batch])
            grads, _ = net.backward(cache, d_logits)
            clip_global_norm(grads, cfg.clip)
            adam_step(params, grads, state, cfg.lr)

        valid_logits = net.forward(valid_z, train=False)
        valid_loss, _ = cross_entropy(valid_logits, valid_y)
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_weights = net.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    net.restore(best_weights)
    return net


def classifier_predict(net: Mlp, z: np.ndarray) -> np.ndarray:
    return net.forward(z, train=False).argmax(axis=1)


def classifier_accuracy(net: Mlp, z: np.ndarray, y: np.ndarray) -> float:
    return balanced_accuracy(y, classifier_predict(net, z))


def fit_downstream_classifiers(
    model: GroupedVAE,
    scaled_features: np.ndarray,
    labels: np.ndarray,
    plan: SplitPlan,
    cfg: ClassifierConfig,
    n_seeds: int,
    base_seed: int,
) -> tuple[np.ndarray, list[Mlp]]:
    """Extract latent means for all rows and train one classifier per seed on
    the training split. Returns (latents, classifiers)."""
    latents = model.latent_means(scaled_features)
    classifiers = [
        train_classifier(
            latents[plan.train],
            labels[plan.train],
            latents[plan.valid],
            labels[plan.valid],
            int(labels.max()) + 1,
            cfg,
            derive_seed(base_seed, "classifier", s),
        )
        for s in range(n_seeds)
    ]
    return latents, classifiers


def eval_downstream(
    model: GroupedVAE,
    scaled_features: np.ndarray,
    labels: np.ndarray,
    plan: SplitPlan,
    cfg: ClassifierConfig | None = None,
    n_seeds: int = 5,
    base_seed: int = 0,
) -> list[float]:
    """Test balanced accuracy of ``n_seeds`` classifiers trained on the
    frozen model's latent means."""
    cfg = cfg or ClassifierConfig()
    latents, classifiers = fit_downstream_classifiers(
        model, scaled_features, labels, plan, cfg, n_seeds, base_seed
    )
    return [
        classifier_accuracy(clf, latents[plan.test], labels[plan.test])
        for clf in classifiers
    ]
