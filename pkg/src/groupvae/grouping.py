"""Random partition of features into near-equal groups, and the matching
per-expert width search that keeps the ensemble's parameter count close to a
single-network baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import mlp_param_count
from .rng import derive_rng

BASELINE_HIDDEN = (128, 128)
BUDGET_TOLERANCE = 0.10


@dataclass(frozen=True)
class FeatureGrouping:
    """Partition of ``feature_count`` feature indices into disjoint groups.

    ``assignment[j]`` is the group owning feature j; ``group_indices[g]``
    lists the features of group g in slice order. Group sizes differ by at
    most one.
    """

    feature_count: int
    group_count: int
    assignment: np.ndarray
    seed: int
    group_indices: tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64)
        if assignment.shape != (self.feature_count,):
            raise ValueError("assignment length must equal feature_count")
        groups = []
        for g in range(self.group_count):
            members = np.flatnonzero(assignment == g)
            if members.size == 0:
                raise ValueError(f"group {g} is empty")
            groups.append(members)
        sizes = [len(g) for g in groups]
        if max(sizes) - min(sizes) > 1:
            raise ValueError("group sizes differ by more than one")
        if sum(sizes) != self.feature_count:
            raise ValueError("assignment is not a partition")
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "group_indices", tuple(groups))

    @property
    def group_sizes(self) -> list[int]:
        return [len(g) for g in self.group_indices]

    def slice_group(self, x: np.ndarray, group: int) -> np.ndarray:
        return x[:, self.group_indices[group]]

    def scatter(self, blocks: list[np.ndarray]) -> np.ndarray:
        """Inverse of per-group slicing: place group columns back."""
        rows = blocks[0].shape[0]
        out = np.empty((rows, self.feature_count))
        for idx, block in zip(self.group_indices, blocks):
            out[:, idx] = block
        return out


def near_equal_sizes(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + 1 if i < extra else base for i in range(parts)]


def make_grouping(feature_count: int, group_count: int, seed: int) -> FeatureGrouping:
    """Shuffle feature indices and cut them into near-equal contiguous blocks."""
    if group_count < 1 or group_count > feature_count:
        raise ConfigError(
            f"group count must be in [1, {feature_count}], got {group_count}"
        )
    perm = derive_rng(seed, "grouping").permutation(feature_count)
    assignment = np.empty(feature_count, dtype=np.int64)
    start = 0
    for g, size in enumerate(near_equal_sizes(feature_count, group_count)):
        assignment[perm[start : start + size]] = g
        start += size
    return FeatureGrouping(feature_count, group_count, assignment, seed)


def ensemble_param_count(
    feature_count: int,
    latent_dim: int,
    group_sizes: list[int],
    hidden: tuple[int, ...],
    batch_norm: bool = True,
) -> int:
    """Parameters of all per-group encoders (d_i -> hidden -> 2L) plus
    decoders (L -> hidden -> d_i)."""
    total = 0
    for size in group_sizes:
        total += mlp_param_count([size, *hidden, 2 * latent_dim], batch_norm)
        total += mlp_param_count([latent_dim, *hidden, size], batch_norm)
    return total


def expert_widths_for_budget(
    feature_count: int,
    latent_dim: int,
    group_count: int,
    baseline_hidden: tuple[int, ...] = BASELINE_HIDDEN,
    batch_norm: bool = True,
) -> tuple[int, ...]:
    """Hidden widths for each expert so the ensemble's total parameter count
    stays within +/-10% of the single-network baseline.

    Searches one shared width h over [4, 1024] (all experts and both hidden
    layers use h) and returns the best match.
    """
    if group_count < 1:
        raise ConfigError("group count must be at least 1")
    target = ensemble_param_count(
        feature_count,
        latent_dim,
        [feature_count],
        tuple(baseline_hidden),
        batch_norm,
    )
    sizes = near_equal_sizes(feature_count, group_count)
    depth = len(baseline_hidden)

    best_width, best_diff = None, None
    for h in range(4, 1025):
        count = ensemble_param_count(
            feature_count, latent_dim, sizes, (h,) * depth, batch_norm
        )
        diff = abs(count - target)
        if best_diff is None or diff < best_diff:
            best_width, best_diff = h, diff
    assert best_width is not None
    achieved = ensemble_param_count(
        feature_count, latent_dim, sizes, (best_width,) * depth, batch_norm
    )
    if abs(achieved - target) > BUDGET_TOLERANCE * target:
        raise ConfigError(
            f"no hidden width in [4, 1024] puts {group_count} experts within "
            f"10% of the {target}-parameter baseline (closest: {achieved})"
        )
    return (best_width,) * depth
