"""Ensemble VAE over disjoint feature groups.

Each group owns one encoder (group features -> mean and log-variance of a
shared latent) and one decoder (latent -> group features). The posterior for
any set of groups is the precision-weighted product of the member posteriors,
optionally joined by the standard-normal prior; the joint posterior is the
uniform mixture of those products over all non-empty group subsets.

The training loss reconstructs the full feature vector from every subset's
posterior (exact enumeration) or from uniformly drawn subsets (the stochastic
estimator), plus the uniform average of the closed-form subset KLs scaled by
the regularization weight. Gradients are assembled by hand: decoder and
encoder backward passes from :mod:`groupvae.nn`, with explicit derivatives
through the reparameterized sample and the precision-weighted fusion.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import ConfigError, NumericError
from .gaussians import LOG_VAR_BOUND, DiagGaussian, UniformMixture, poe_combine
from .grouping import FeatureGrouping, expert_widths_for_budget, make_grouping
from .nn import Mlp, as_matrix, build_mlp
from .rng import derive_rng

MAX_ENUM_GROUPS = 8

ELBO_MODES = ("full_enumeration", "mixture_sample")


def resolve_elbo_mode(mode: str, group_count: int) -> str:
    """Resolve "auto" and reject enumeration beyond MAX_ENUM_GROUPS."""
    if mode == "auto":
        return "full_enumeration" if group_count <= 4 else "mixture_sample"
    if mode not in ELBO_MODES:
        raise ConfigError(f"unknown elbo mode {mode!r}")
    if mode == "full_enumeration" and group_count > MAX_ENUM_GROUPS:
        raise ConfigError(
            f"full enumeration over {group_count} groups means "
            f"2^{group_count}-1 = {2**group_count - 1} subset terms per batch; "
            f"use mixture_sample for more than {MAX_ENUM_GROUPS} groups"
        )
    return mode


def subsets_of(members: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All non-empty subsets, ordered by size then lexicographically."""
    out: list[tuple[int, ...]] = []
    for size in range(1, len(members) + 1):
        out.extend(combinations(members, size))
    return out


def subset_mask(members: tuple[int, ...]) -> int:
    return sum(1 << i for i in members)


def subset_posteriors(
    group_posteriors: list[DiagGaussian],
    available: tuple[int, ...] | None = None,
    include_prior: bool = True,
) -> dict[int, DiagGaussian]:
    """Fused posterior for every non-empty subset of the available groups,
    keyed by bitmask over group indices."""
    if available is None:
        available = tuple(range(len(group_posteriors)))
    available = tuple(sorted(available))
    if not available:
        raise ValueError("no groups available")
    table: dict[int, DiagGaussian] = {}
    for members in subsets_of(available):
        table[subset_mask(members)] = poe_combine(
            [group_posteriors[i] for i in members], include_prior
        )
    return table


def joint_posterior(subsets: dict[int, DiagGaussian]) -> UniformMixture:
    """Uniform mixture over the stored subset posteriors (key order)."""
    return UniformMixture(tuple(subsets[k] for k in sorted(subsets)))


class GroupedVAE:
    """Per-group encoders and decoders around one shared latent space."""

    def __init__(
        self,
        grouping: FeatureGrouping,
        latent_dim: int,
        encoders: list[Mlp],
        decoders: list[Mlp],
        beta: float = 1.0,
        include_prior: bool = True,
        elbo_mode: str = "auto",
        subset_samples: int = 1,
        classifier: Mlp | None = None,
    ):
        m = grouping.group_count
        if len(encoders) != m or len(decoders) != m:
            raise ValueError("need one encoder and one decoder per group")
        for i, (enc, dec) in enumerate(zip(encoders, decoders)):
            size = grouping.group_sizes[i]
            if enc.in_width != size:
                raise ValueError(f"encoder {i} input width != group size {size}")
            if enc.out_width != 2 * latent_dim:
                raise ValueError(f"encoder {i} must emit mean and log-variance")
            if dec.in_width != latent_dim or dec.out_width != size:
                raise ValueError(f"decoder {i} widths do not match group {i}")
        if beta < 0:
            raise ValueError("beta must be non-negative")
        if subset_samples < 1:
            raise ValueError("subset_samples must be at least 1")
        self.grouping = grouping
        self.latent_dim = latent_dim
        self.encoders = encoders
        self.decoders = decoders
        self.beta = beta
        self.include_prior = include_prior
        self.elbo_mode = resolve_elbo_mode(elbo_mode, m)
        self.subset_samples = subset_samples
        self.classifier = classifier

    @classmethod
    def build(
        cls,
        feature_count: int,
        group_count: int,
        latent_dim: int = 16,
        seed: int = 0,
        beta: float = 1.0,
        include_prior: bool = True,
        elbo_mode: str = "auto",
        subset_samples: int = 1,
        hidden: tuple[int, ...] | None = None,
        dropout: float = 0.5,
        batch_norm: bool = True,
        class_count: int | None = None,
        classifier_hidden: tuple[int, ...] = (64, 64),
    ) -> "GroupedVAE":
        """Construct with a fresh random grouping and Glorot-initialized nets.

        When ``hidden`` is omitted, expert widths are chosen so the whole
        ensemble matches the parameter budget of a single 128-128 network.
        """
        grouping = make_grouping(feature_count, group_count, seed)
        if hidden is None:
            hidden = expert_widths_for_budget(
                feature_count, latent_dim, group_count, batch_norm=batch_norm
            )
        init = derive_rng(seed, "init")
        encoders, decoders = [], []
        for size in grouping.group_sizes:
            encoders.append(
                build_mlp([size, *hidden, 2 * latent_dim], init, batch_norm, dropout)
            )
            decoders.append(
                build_mlp([latent_dim, *hidden, size], init, batch_norm, dropout)
            )
        classifier = None
        if class_count is not None:
            classifier = build_mlp(
                [latent_dim, *classifier_hidden, class_count], init, batch_norm, dropout
            )
        return cls(
            grouping,
            latent_dim,
            encoders,
            decoders,
            beta=beta,
            include_prior=include_prior,
            elbo_mode=elbo_mode,
            subset_samples=subset_samples,
            classifier=classifier,
        )

    @property
    def group_count(self) -> int:
        return self.grouping.group_count

    @property
    def feature_count(self) -> int:
        return self.grouping.feature_count

    def parameters(self, include_classifier: bool = True) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for mlp in self.encoders + self.decoders:
            params.extend(mlp.parameters())
        if include_classifier and self.classifier is not None:
            params.extend(self.classifier.parameters())
        return params

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, s in zip(self.parameters(), snapshot, strict=True):
            p[...] = s

    # ----------------------------------------------------------- encoding

    def _encode_raw(self, x, group: int, train, rng, want_cache):
        """Forward one group's encoder; split and clamp the stats row."""
        sliced = self.grouping.slice_group(x, group)
        result = self.encoders[group].forward(
            sliced, train=train, rng=rng, want_cache=want_cache
        )
        out, cache = result if want_cache else (result, None)
        mean = out[:, : self.latent_dim]
        raw = out[:, self.latent_dim :]
        log_var = np.clip(raw, -LOG_VAR_BOUND, LOG_VAR_BOUND)
        pass_mask = (raw >= -LOG_VAR_BOUND) & (raw <= LOG_VAR_BOUND)
        return {
            "mean": mean,
            "log_var": log_var,
            "precision": np.exp(-log_var),
            "pass_mask": pass_mask,
            "cache": cache,
        }

    def encode_groups(
        self,
        x,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> list[DiagGaussian]:
        """Per-group posteriors for a batch (batched DiagGaussians)."""
        x = self._check_batch(x)
        return [
            DiagGaussian(enc["mean"], enc["log_var"])
            for enc in (
                self._encode_raw(x, g, train, rng, want_cache=False)
                for g in range(self.group_count)
            )
        ]

    def decode_all(
        self,
        z,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Reconstruct all features from a latent batch (columns scattered
        back to their original positions)."""
        z = as_matrix(z)
        if z.shape[1] != self.latent_dim:
            raise ValueError(f"latent batch must have {self.latent_dim} columns")
        blocks = [dec.forward(z, train=train, rng=rng) for dec in self.decoders]
        return self.grouping.scatter(blocks)

    def _check_batch(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.feature_count:
            raise ValueError(
                f"batch has {x.shape[1]} columns, model expects {self.feature_count}"
            )
        return x

    # --------------------------------------------------------------- loss

    def _fuse(self, enc, members: tuple[int, ...]):
        """Precision-weighted product over member groups (plus prior)."""
        if len(members) == 1 and not self.include_prior:
            g = members[0]
            return enc[g]["mean"], enc[g]["log_var"], None
        precision = np.zeros_like(enc[members[0]]["mean"])
        weighted = np.zeros_like(precision)
        for g in members:
            precision += enc[g]["precision"]
            weighted += enc[g]["precision"] * enc[g]["mean"]
        if self.include_prior:
            precision += 1.0
        return weighted / precision, -np.log(precision), precision

    def _fusion_backward(self, enc, members, fused, d_mean, d_log_var, d_mu_acc, d_lv_acc):
        """Route subset-posterior gradients back to the member posteriors."""
        mean_f, _, precision_f = fused
        if precision_f is None:  # single expert, no prior: identity fusion
            g = members[0]
            d_mu_acc[g] += d_mean
            d_lv_acc[g] += d_log_var
            return
        for g in members:
            share = enc[g]["precision"] / precision_f
            d_mu_acc[g] += d_mean * share
            d_lv_acc[g] += (
                d_mean * share * (mean_f - enc[g]["mean"]) + d_log_var * share
            )

    def _draw_subsets(self, rng, count):
        """Uniform non-empty subsets: by index when enumerable, by rejection
        on i.i.d. membership bits otherwise (conditioning on non-empty keeps
        the distribution uniform)."""
        m = self.group_count
        if m <= MAX_ENUM_GROUPS:
            all_subsets = subsets_of(tuple(range(m)))
            return [all_subsets[int(rng.integers(len(all_subsets)))] for _ in range(count)]
        draws = []
        for _ in range(count):
            members: tuple[int, ...] = ()
            while not members:
                bits = rng.random(m) < 0.5
                members = tuple(int(i) for i in np.flatnonzero(bits))
            draws.append(members)
        return draws

    def elbo_loss(
        self,
        x,
        beta_effective: float | None = None,
        rng: np.random.Generator | None = None,
        train: bool = True,
        want_grads: bool | None = None,
        zero_noise: bool = False,
        labels: np.ndarray | None = None,
        details: bool = False,
    ):
        """Loss over a batch, optionally with gradients.

        Reconstruction is squared error summed over features and averaged
        over the batch; the KL term is the uniform average of subset KLs.
        With ``labels`` and a classifier head, adds the cross-entropy of the
        head applied to a sample from the all-groups posterior (its mean when
        ``zero_noise``); gradients then cover the head as well.

        Returns ``(loss, grads)``, or ``(loss, grads, info)`` with per-subset
        values when ``details`` is set. ``grads`` matches
        ``parameters(include_classifier=labels is not None)`` and is None
        when gradients are not requested.
        """
        x = self._check_batch(x)
        if beta_effective is None:
            beta_effective = self.beta
        if want_grads is None:
            want_grads = train
        if want_grads and not train:
            raise ValueError("gradients require a train-mode forward")
        if labels is not None and self.classifier is None:
            raise ValueError("labels given but model has no classifier head")
        batch = x.shape[0]
        m = self.group_count

        enc = [
            self._encode_raw(x, g, train, rng, want_cache=want_grads)
            for g in range(m)
        ]

        if self.elbo_mode == "full_enumeration":
            recon_sets = subsets_of(tuple(range(m)))
            kl_sets = recon_sets
        else:
            if rng is None:
                raise ValueError("mixture_sample mode needs an rng for subset draws")
            recon_sets = self._draw_subsets(rng, self.subset_samples)
            # The averaged-KL surrogate is exact while enumeration is
            # affordable; beyond that the drawn subsets estimate it.
            if m <= MAX_ENUM_GROUPS:
                kl_sets = subsets_of(tuple(range(m)))
            else:
                kl_sets = recon_sets
        w_recon = 1.0 / len(recon_sets)
        w_kl = 1.0 / len(kl_sets)

        fused: dict[tuple[int, ...], tuple] = {}

        def fuse(members):
            if members not in fused:
                fused[members] = self._fuse(enc, members)
            return fused[members]

        d_mean_acc: dict[tuple[int, ...], np.ndarray] = {}
        d_lv_acc: dict[tuple[int, ...], np.ndarray] = {}

        def acc(members, d_mean, d_log_var):
            if members not in d_mean_acc:
                d_mean_acc[members] = np.zeros((batch, self.latent_dim))
                d_lv_acc[members] = np.zeros((batch, self.latent_dim))
            d_mean_acc[members] += d_mean
            d_lv_acc[members] += d_log_var

        info: dict = {"recon": {}, "kl": {}, "eps": {}, "subsets": []}

        kl_total = 0.0
        for members in kl_sets:
            mean_f, lv_f, _ = fuse(members)
            kl = 0.5 * float(
                np.sum(mean_f**2 + np.exp(lv_f) - 1.0 - lv_f)
            ) / batch
            if not np.isfinite(kl):
                raise NumericError(
                    f"non-finite KL for subset {subset_mask(members)}"
                )
            kl_total += w_kl * kl
            info["kl"][members] = kl
            if want_grads and beta_effective != 0.0:
                coef = beta_effective * w_kl / batch
                acc(
                    members,
                    coef * mean_f,
                    coef * 0.5 * (np.exp(lv_f) - 1.0),
                )

        dec_grads = None
        recon_total = 0.0
        for members in recon_sets:
            mean_f, lv_f, _ = fuse(members)
            if zero_noise:
                eps = np.zeros((batch, self.latent_dim))
            else:
                if rng is None:
                    raise ValueError("sampling the posterior needs an rng")
                eps = rng.standard_normal((batch, self.latent_dim))
            sigma = np.exp(0.5 * lv_f)
            z = mean_f + sigma * eps

            blocks, caches = [], []
            for dec in self.decoders:
                result = dec.forward(z, train=train, rng=rng, want_cache=want_grads)
                out, cache = result if want_grads else (result, None)
                blocks.append(out)
                caches.append(cache)
            xhat = self.grouping.scatter(blocks)
            residual = xhat - x
            recon = float(np.sum(residual**2)) / batch
            if not np.isfinite(recon):
                raise NumericError(
                    f"non-finite reconstruction for subset {subset_mask(members)}"
                )
            recon_total += w_recon * recon
            info["recon"][members] = recon
            info["eps"][members] = eps
            info["subsets"].append(members)

            if want_grads:
                d_xhat = (2.0 * w_recon / batch) * residual
                dz = np.zeros_like(z)
                if dec_grads is None:
                    dec_grads = [None] * m
                for g, (dec, cache) in enumerate(zip(self.decoders, caches)):
                    pg, d_in = dec.backward(
                        cache, d_xhat[:, self.grouping.group_indices[g]]
                    )
                    if dec_grads[g] is None:
                        dec_grads[g] = pg
                    else:
                        for acc_g, new_g in zip(dec_grads[g], pg):
                            acc_g += new_g
                    dz += d_in
                acc(members, dz, dz * 0.5 * sigma * eps)

        loss = recon_total + beta_effective * kl_total
        clf_grads: list[np.ndarray] | None = None
        if labels is not None:
            full = tuple(range(m))
            mean_f, lv_f, _ = fuse(full)
            if zero_noise:
                eps_c = np.zeros((batch, self.latent_dim))
            else:
                eps_c = rng.standard_normal((batch, self.latent_dim))
            sigma_c = np.exp(0.5 * lv_f)
            z_c = mean_f + sigma_c * eps_c
            result = self.classifier.forward(
                z_c, train=train, rng=rng, want_cache=want_grads
            )
            logits, clf_cache = result if want_grads else (result, None)
            ce, d_logits = cross_entropy(logits, labels)
            loss += ce
            info["cross_entropy"] = ce
            if want_grads:
                clf_grads, dz_c = self.classifier.backward(clf_cache, d_logits)
                acc(full, dz_c, dz_c * 0.5 * sigma_c * eps_c)

        grads = None
        if want_grads:
            # route subset gradients to group posteriors
            d_mu_groups = [np.zeros((batch, self.latent_dim)) for _ in range(m)]
            d_lv_groups = [np.zeros((batch, self.latent_dim)) for _ in range(m)]
            for members in d_mean_acc:
                self._fusion_backward(
                    enc,
                    members,
                    fused[members],
                    d_mean_acc[members],
                    d_lv_acc[members],
                    d_mu_groups,
                    d_lv_groups,
                )
            grads = []
            for g in range(m):
                grad_out = np.hstack(
                    [d_mu_groups[g], d_lv_groups[g] * enc[g]["pass_mask"]]
                )
                pg, _ = self.encoders[g].backward(enc[g]["cache"], grad_out)
                grads.extend(pg)
            if dec_grads is None:
                dec_grads = [
                    [np.zeros_like(p) for p in dec.parameters()]
                    for dec in self.decoders
                ]
            for pg in dec_grads:
                grads.extend(pg)
            if labels is not None:
                grads.extend(clf_grads)

        if not np.isfinite(loss):
            raise NumericError("non-finite loss")
        if details:
            return loss, grads, info
        return loss, grads

    # ---------------------------------------------------------- inference

    def infer_latent(
        self,
        x,
        available: tuple[int, ...] | None = None,
        reduction: str = "poe_full",
    ) -> DiagGaussian:
        """Posterior over the latent from the available groups only.

        ``poe_full`` fuses all available experts (plus the prior when
        configured); ``mixture_mean`` moment-matches the uniform mixture over
        all non-empty subsets of the available groups. Masked groups are
        never read. Runs in eval mode.
        """
        x = self._check_batch(x)
        if available is None:
            available = tuple(range(self.group_count))
        available = tuple(sorted(set(int(g) for g in available)))
        if any(g < 0 or g >= self.group_count for g in available):
            raise ValueError("availability mask names an unknown group")
        if not available:
            if not self.include_prior:
                raise ValueError("no groups available and the prior is disabled")
            shape = (x.shape[0], self.latent_dim)
            return DiagGaussian(np.zeros(shape), np.zeros(shape))
        posts = [
            DiagGaussian(e["mean"], e["log_var"])
            for e in (
                self._encode_raw(x, g, train=False, rng=None, want_cache=False)
                for g in available
            )
        ]
        if reduction == "poe_full":
            return poe_combine(posts, self.include_prior)
        if reduction == "mixture_mean":
            components = tuple(
                poe_combine([posts[available.index(g)] for g in members], self.include_prior)
                for members in subsets_of(available)
            )
            return UniformMixture(components).moment_match()
        raise ValueError(f"unknown reduction {reduction!r}")

    def latent_means(
        self,
        x,
        available: tuple[int, ...] | None = None,
        reduction: str = "poe_full",
    ) -> np.ndarray:
        return self.infer_latent(x, available, reduction).mean

    def supervised_forward(
        self,
        x,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ):
        """Class logits plus the all-groups posterior.

        The head consumes a reparameterized sample in train mode and the
        posterior mean in eval mode.
        """
        if self.classifier is None:
            raise ValueError("model has no classifier head")
        latent = self.infer_latent(x)
        if train:
            if rng is None:
                raise ValueError("train-mode supervised forward needs an rng")
            z = latent.mean + latent.std * rng.standard_normal(latent.mean.shape)
        else:
            z = latent.mean
        logits = self.classifier.forward(z, train=train, rng=rng)
        return logits, latent


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = as_matrix(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels must be one class index per row")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    batch = logits.shape[0]
    loss = -float(log_probs[np.arange(batch), labels].sum()) / batch
    d_logits = np.exp(log_probs)
    d_logits[np.arange(batch), labels] -= 1.0
    return loss, d_logits / batch
