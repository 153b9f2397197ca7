"""Tabular dataset handling: CSV ingestion, min-max scaling fit on training
rows, stratified splitting with largest-remainder rounding, training-set
subsampling, and a synthetic generator for wide, small-sample tasks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import derive_rng


@dataclass
class Dataset:
    """Feature matrix with dense integer class labels."""

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64
    feature_names: list[str]
    class_names: list[str]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("one label per row required")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature values")
        present = np.unique(self.labels)
        expected = np.arange(len(self.class_names))
        if not np.array_equal(present, expected):
            raise DataError("class indices must densely cover 0..C-1")

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def class_sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.class_count).tolist()


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/valid/test row indices."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    fold: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.int64)
            )
        sets = [set(self.train.tolist()), set(self.valid.tolist()), set(self.test.tolist())]
        if (
            sets[0] & sets[1]
            or sets[0] & sets[2]
            or sets[1] & sets[2]
        ):
            raise DataError("split index sets overlap")


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-feature affine map of the fitted range onto [0, 1].

    Constant features map to zero; values outside the fitted range are not
    clipped.
    """

    mins: np.ndarray
    ranges: np.ndarray

    def transform(self, features: np.ndarray) -> np.ndarray:
        safe = np.where(self.ranges > 0.0, self.ranges, 1.0)
        scaled = (features - self.mins) / safe
        return np.where(self.ranges > 0.0, scaled, 0.0)


def fit_scaler(features: np.ndarray, train_indices) -> MinMaxScaler:
    rows = features[np.asarray(train_indices, dtype=np.int64)]
    if rows.shape[0] == 0:
        raise DataError("cannot fit a scaler on zero rows")
    mins = rows.min(axis=0)
    return MinMaxScaler(mins=mins, ranges=rows.max(axis=0) - mins)


def load_csv(path, label_column: str) -> Dataset:
    """Read a headered CSV with one label column and numeric features.

    Labels are mapped to dense indices in sorted order of their string
    values; any unparsable or NaN feature cell is an error naming the row
    and column.
    """
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header")
        label_pos = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_pos]

        rows: list[np.ndarray] = []
        raw_labels: list[str] = []
        for row_number, row in enumerate(reader):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_number} has {len(row)} cells, header has {len(header)}"
                )
            raw_labels.append(row[label_pos])
            cells = row[:label_pos] + row[label_pos + 1 :]
            try:
                values = np.array(cells, dtype=np.float64)
            except ValueError:
                values = None
            if values is None or not np.all(np.isfinite(values)):
                for name, cell in zip(feature_names, cells):
                    try:
                        parsed = float(cell)
                    except ValueError:
                        raise DataError(
                            f"row {row_number}, column {name!r}: "
                            f"non-numeric value {cell!r}"
                        ) from None
                    if not math.isfinite(parsed):
                        raise DataError(
                            f"row {row_number}, column {name!r}: non-finite value"
                        )
            rows.append(values)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")

    class_names = sorted(set(raw_labels))
    index_of = {name: i for i, name in enumerate(class_names)}
    labels = np.array([index_of[v] for v in raw_labels], dtype=np.int64)
    return Dataset(np.vstack(rows), labels, feature_names, class_names)


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Inverse of :func:`load_csv`; features use full float64 precision."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(dataset.feature_names + [label_column])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow(
                [repr(float(v)) for v in row] + [dataset.class_names[label]]
            )


def largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation summing to ``total`` that rounds the real-valued
    ``quotas`` by largest fractional remainder."""
    base = np.floor(quotas).astype(np.int64)
    remainder = int(total - base.sum())
    if remainder > 0:
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
    return base


def _per_class_indices(labels, pool):
    pool = np.asarray(pool, dtype=np.int64)
    return [pool[labels[pool] == c] for c in range(int(labels.max()) + 1)]


def stratified_split(
    dataset: Dataset,
    fractions: tuple[float, float, float] = (0.72, 0.08, 0.20),
    seed: int = 0,
) -> SplitPlan:
    """One train/valid/test plan with per-class proportional allocation.

    Each class's members are shuffled and dealt out by largest-remainder
    counts; classes always contribute at least one training row.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError("split fractions must sum to 1")
    sizes = dataset.class_sizes()
    if min(sizes) < 3:
        raise DataError("every class needs at least 3 samples to split")
    rng = derive_rng(seed, "split")
    train, valid, test = [], [], []
    for c, members in enumerate(
        _per_class_indices(dataset.labels, np.arange(dataset.sample_count))
    ):
        members = rng.permutation(members)
        n = len(members)
        counts = largest_remainder(np.array(fractions) * n, n)
        if counts[0] == 0:
            counts[int(np.argmax(counts[1:])) + 1] -= 1
            counts[0] = 1
        train.extend(members[: counts[0]])
        valid.extend(members[counts[0] : counts[0] + counts[1]])
        test.extend(members[counts[0] + counts[1] :])
    return SplitPlan(np.sort(train), np.sort(valid), np.sort(test), fold=0, seed=seed)


def stratified_kfold_plans(
    dataset: Dataset,
    folds: int = 5,
    valid_fraction: float = 0.08,
    seed: int = 0,
) -> list[SplitPlan]:
    """Cross-validation plans whose test sets partition the data.

    Each class is shuffled once and dealt round-robin into ``folds`` test
    chunks; within a fold the remaining rows are split into validation
    (``valid_fraction`` of the full dataset, stratified) and training.
    """
    sizes = dataset.class_sizes()
    if min(sizes) < folds:
        raise DataError(
            f"smallest class has {min(sizes)} samples, fewer than {folds} folds"
        )
    rng = derive_rng(seed, "folds")
    per_class = [
        rng.permutation(members)
        for members in _per_class_indices(dataset.labels, np.arange(dataset.sample_count))
    ]
    test_sets: list[list[int]] = [[] for _ in range(folds)]
    for members in per_class:
        for i, idx in enumerate(members):
            test_sets[i % folds].append(int(idx))

    plans = []
    valid_total = int(round(valid_fraction * dataset.sample_count))
    for fold in range(folds):
        test = np.sort(np.array(test_sets[fold], dtype=np.int64))
        rest = np.setdiff1d(np.arange(dataset.sample_count), test)
        rest_by_class = _per_class_indices(dataset.labels, rest)
        class_counts = np.array([len(m) for m in rest_by_class], dtype=np.float64)
        take = largest_remainder(
            class_counts * valid_total / max(class_counts.sum(), 1.0), valid_total
        )
        take = np.minimum(take, class_counts.astype(np.int64))
        fold_rng = derive_rng(seed, "valid", fold)
        valid = []
        for members, k in zip(rest_by_class, take):
            valid.extend(fold_rng.permutation(members)[: int(k)])
        valid = np.sort(np.array(valid, dtype=np.int64))
        train = np.setdiff1d(rest, valid)
        plans.append(SplitPlan(train, valid, test, fold=fold, seed=seed))
    return plans


def subsample_train(plan: SplitPlan, labels, n_target: int, seed: int = 0) -> SplitPlan:
    """Stratified reduction of the training set to ``n_target`` rows, with the
    validation set shrunk by the same factor; the test set is untouched."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_target > len(plan.train):
        raise DataError("subsample target exceeds current training size")
    if n_target == len(plan.train):
        return plan
    class_ids = np.unique(labels[plan.train])
    if n_target < len(class_ids):
        raise DataError(
            f"subsample target {n_target} is smaller than the class count"
        )
    factor = n_target / len(plan.train)
    rng = derive_rng(seed, "subsample")

    def shrink(indices, target, keep_every_class):
        by_class = [indices[labels[indices] == c] for c in class_ids]
        counts = np.array([len(m) for m in by_class], dtype=np.float64)
        take = largest_remainder(counts * target / max(counts.sum(), 1.0), target)
        if keep_every_class:
            # steal from the largest allocations so no class disappears
            while np.any((take == 0) & (counts > 0)):
                needy = int(np.argmax((take == 0) & (counts > 0)))
                take[int(np.argmax(take))] -= 1
                take[needy] = 1
        take = np.minimum(take, counts.astype(np.int64))
        kept = []
        for members, k in zip(by_class, take):
            kept.extend(rng.permutation(members)[: int(k)])
        return np.sort(np.array(kept, dtype=np.int64))

    new_train = shrink(plan.train, n_target, keep_every_class=True)
    valid_target = max(1, int(round(len(plan.valid) * factor))) if len(plan.valid) else 0
    new_valid = shrink(plan.valid, valid_target, keep_every_class=False)
    return SplitPlan(new_train, new_valid, plan.test, fold=plan.fold, seed=plan.seed)


def synthetic_hdlss(
    sample_count: int,
    feature_count: int,
    latent_true: int = 8,
    class_count: int = 4,
    noise_sd: float = 0.1,
    seed: int = 0,
    mixing: np.ndarray | None = None,
    offset: np.ndarray | None = None,
) -> Dataset:
    """Wide, small-sample classification task with linear latent structure.

    Latents are standard normal; the class is the argmax of ``class_count``
    random unit-norm linear scores of the latent; features are a random
    unit-row linear mix of the latent plus Gaussian noise. The generating
    quantities are kept in ``extras`` for oracle checks. ``mixing`` and
    ``offset`` override the random mix for controlled tests.
    """
    if latent_true > feature_count:
        raise DataError("true latent width cannot exceed the feature count")
    if class_count < 2:
        raise DataError("need at least two classes")
    rng = derive_rng(seed, "synthetic")
    z = rng.standard_normal((sample_count, latent_true))
    score_vectors = rng.standard_normal((class_count, latent_true))
    score_vectors /= np.linalg.norm(score_vectors, axis=1, keepdims=True)
    labels = np.argmax(z @ score_vectors.T, axis=1)

    if mixing is None:
        mixing = rng.standard_normal((feature_count, latent_true))
        mixing /= np.linalg.norm(mixing, axis=1, keepdims=True)
    if offset is None:
        offset = rng.standard_normal(feature_count)
    noise = rng.standard_normal((sample_count, feature_count)) * noise_sd
    features = z @ mixing.T + offset + noise

    # relabel to dense indices in case argmax never picks some score vector
    present = np.unique(labels)
    remap = {int(c): i for i, c in enumerate(present)}
    labels = np.array([remap[int(c)] for c in labels], dtype=np.int64)
    names = [f"c{i}" for i in range(len(present))]
    return Dataset(
        features,
        labels,
        [f"f{i}" for i in range(feature_count)],
        names,
        extras={
            "latents": z,
            "mixing": mixing,
            "offset": offset,
            "score_vectors": score_vectors,
            "noise_sd": noise_sd,
            "seed": seed,
        },
    )


def export_latents_csv(path, indices, labels, class_names, latents) -> None:
    """Latent rows as ``sample_index,label,z_0..z_{L-1}``."""
    latents = np.asarray(latents, dtype=np.float64)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["sample_index", "label"] + [f"z_{j}" for j in range(latents.shape[1])]
        )
        for idx, label, row in zip(indices, labels, latents):
            writer.writerow(
                [int(idx), class_names[int(label)]] + [repr(float(v)) for v in row]
            )
