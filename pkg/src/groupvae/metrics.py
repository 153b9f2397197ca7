"""Balanced accuracy and the fitted-Gaussian total-correlation estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

TC_JITTER = 1e-6


@dataclass(frozen=True)
class LatentTable:
    """Latent rows used for total-correlation estimation."""

    values: np.ndarray  # (N, L)
    source: str = "mean"  # "mean" or "sample"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("latent table must be a 2-D array")
        if self.source not in ("mean", "sample"):
            raise ValueError(f"unknown latent source {self.source!r}")
        object.__setattr__(self, "values", values)


def balanced_accuracy(y_true, y_pred, class_count: int | None = None) -> float:
    """Unweighted mean of per-class recall."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("labels and predictions must be equal-length vectors")
    classes = np.unique(y_true)
    if class_count is not None:
        missing = sorted(set(range(class_count)) - set(classes.tolist()))
        if missing:
            raise ValueError(f"classes {missing} have no true samples")
        classes = np.arange(class_count)
    recalls = [
        float(np.mean(y_pred[y_true == c] == c)) for c in classes
    ]
    return float(np.mean(recalls))


def covariance_logdet(cov: np.ndarray, jitter: float = TC_JITTER):
    """Log-determinant of a covariance matrix plus its per-dimension log
    variances, both taken after symmetrizing and adding ``jitter * I``.

    Uses a Cholesky factorization; raises NumericError (with the smallest
    eigenvalue as context) if the jittered matrix still is not positive
    definite.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    sym = 0.5 * (cov + cov.T) + jitter * np.eye(cov.shape[0])
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(sym)[0])
        raise NumericError(
            f"covariance not positive definite after jitter "
            f"(smallest eigenvalue {smallest:.3e})"
        ) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return logdet, np.log(np.diag(sym))


def estimate_tc(latents: LatentTable | np.ndarray, jitter: float = TC_JITTER) -> float:
    """Total correlation of a fitted Gaussian:
    0.5 * (sum of marginal log variances - joint log determinant).

    Fits the sample mean and unbiased covariance of the rows. Mathematically
    non-negative (Hadamard); round-off may leave values above -1e-10, and
    report writers clamp at zero.
    """
    if isinstance(latents, LatentTable):
        values = latents.values
    else:
        values = LatentTable(np.asarray(latents)).values
    n, dim = values.shape
    if n < dim + 1:
        raise ValueError(
            f"need at least {dim + 1} rows to fit a rank-{dim} covariance, got {n}"
        )
    cov = np.cov(values, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    logdet, log_diag = covariance_logdet(cov, jitter)
    return 0.5 * (float(log_diag.sum()) - logdet)
