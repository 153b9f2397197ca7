"""Diagonal-Gaussian algebra: precision-weighted fusion, uniform mixtures,
closed-form KL to the standard normal, and reparameterized sampling.

Arrays may carry leading batch axes; the last axis is the event dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_VAR_BOUND = 10.0


@dataclass(frozen=True)
class DiagGaussian:
    """Mean and log-variance of an axis-aligned Gaussian.

    Log-variances are clamped to [-LOG_VAR_BOUND, LOG_VAR_BOUND] at
    construction so precisions stay representable under fusion.
    """

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        log_var = np.asarray(self.log_var, dtype=np.float64)
        if mean.shape != log_var.shape:
            raise ValueError(
                f"mean shape {mean.shape} != log_var shape {log_var.shape}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(log_var)):
            raise ValueError("non-finite Gaussian parameters")
        log_var = np.clip(log_var, -LOG_VAR_BOUND, LOG_VAR_BOUND)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


@dataclass(frozen=True)
class UniformMixture:
    """Equal-weight mixture of DiagGaussians sharing one event shape."""

    components: tuple[DiagGaussian, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        shape = comps[0].mean.shape
        for c in comps:
            if c.mean.shape != shape:
                raise ValueError("mixture components must share one shape")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    def moment_match(self) -> DiagGaussian:
        """Single Gaussian with the mixture's exact mean and variance."""
        means = np.stack([c.mean for c in self.components])
        variances = np.stack([c.var for c in self.components])
        mean = means.mean(axis=0)
        second = (variances + means**2).mean(axis=0)
        var = np.maximum(second - mean**2, np.exp(-LOG_VAR_BOUND))
        return DiagGaussian(mean, np.log(var))


def poe_combine(
    experts,
    include_prior: bool = True,
    shape: tuple[int, ...] | None = None,
) -> DiagGaussian:
    """Product of Gaussian experts, optionally joined by a standard-normal one.

    Precisions add: with T_i = exp(-log_var_i) and T = sum T_i (+1 per
    dimension when the prior participates), the product has variance 1/T and
    mean (sum T_i mu_i) / T. A single expert without prior is returned
    unchanged. ``shape`` is only consulted when ``experts`` is empty, in which
    case the prior alone (a standard normal of that shape) is returned.
    """
    experts = list(experts)
    if not experts:
        if not include_prior:
            raise ValueError("product of zero experts without a prior")
        if shape is None:
            raise ValueError("need a shape to build the prior-only product")
        return DiagGaussian(np.zeros(shape), np.zeros(shape))
    if len(experts) == 1 and not include_prior:
        return experts[0]

    precision = np.zeros_like(experts[0].mean)
    weighted = np.zeros_like(experts[0].mean)
    for q in experts:
        t = np.exp(-q.log_var)
        precision += t
        weighted += t * q.mean
    if include_prior:
        precision += 1.0
    return DiagGaussian(weighted / precision, -np.log(precision))


def kl_std_normal(q: DiagGaussian):
    """KL(q || N(0, I)) summed over the event axis.

    Closed form 0.5 * sum(mu^2 + var - 1 - log var). Returns a float for a
    single distribution, an array over any leading batch axes. Tiny negative
    round-off is clipped to zero.
    """
    per_dim = 0.5 * (q.mean**2 + np.exp(q.log_var) - 1.0 - q.log_var)
    total = np.maximum(per_dim.sum(axis=-1), 0.0)
    if total.ndim == 0:
        return float(total)
    return total


def reparam_sample(q: DiagGaussian, rng: np.random.Generator):
    """Draw z = mu + sigma * eps with standard-normal eps; returns (z, eps)."""
    eps = rng.standard_normal(q.mean.shape)
    return q.mean + q.std * eps, eps


def mixture_sample(mix: UniformMixture, rng: np.random.Generator):
    """Pick a component uniformly, then sample it; returns (index, z)."""
    index = int(rng.integers(len(mix)))
    z, _ = reparam_sample(mix.components[index], rng)
    return index, z
