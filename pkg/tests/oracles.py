"""Independent oracles used by the test suite.

These deliberately avoid the code paths they check: finite differences for
gradients, grid quadrature for Gaussian products, Monte Carlo for KL, and
cofactor expansion for determinants.
"""

import numpy as np


def finite_difference(loss_fn, arrays, h=1e-5):
    """Central finite differences of the scalar ``loss_fn()`` with respect to
    every entry of ``arrays`` (perturbed in place and restored)."""
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat, grad_flat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = loss_fn()
            flat[i] = orig - h
            minus = loss_fn()
            flat[i] = orig
            grad_flat[i] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


def max_rel_error(analytic, numeric, floor=1e-5):
    """Worst-case elementwise relative error.

    The floor makes near-zero gradients compare absolutely: central
    differences on losses of order 1-100 resolve nothing below ~1e-10
    (float64 cancellation over 2h), and batch norm creates directions whose
    true gradient is exactly zero (its output is invariant to radial scaling
    of the upstream layer)."""
    worst = 0.0
    for a, n in zip(analytic, numeric, strict=True):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst


def min_relu_preactivation(net, cache):
    """Smallest |pre-activation| feeding a ReLU, recomputed from the forward
    cache. Finite differences are only trustworthy when this comfortably
    exceeds the step size (the kink breaks the central-difference estimate)."""
    closest = np.inf
    for layer, entry in zip(net.layers, cache):
        if layer.activation == "relu":
            pre = entry["x"] @ layer.weight + layer.bias
            closest = min(closest, float(np.min(np.abs(pre))))
    return closest


def grid_product_moments(mean_a, var_a, mean_b, var_b, points=20001, lo=-12.0, hi=12.0):
    """Mean and variance of the renormalized pointwise product of two 1-D
    Gaussian densities, by quadrature on a uniform grid."""
    x = np.linspace(lo, hi, points)
    dens = np.exp(
        -0.5 * (x - mean_a) ** 2 / var_a - 0.5 * (x - mean_b) ** 2 / var_b
    )
    total = dens.sum()
    mean = float((x * dens).sum() / total)
    var = float(((x - mean) ** 2 * dens).sum() / total)
    return mean, var


def monte_carlo_kl_std_normal(mean, log_var, rng, n=200_000):
    """Sample estimate of KL(q || N(0, I)) with its standard error."""
    mean = np.asarray(mean, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    std = np.exp(0.5 * log_var)
    z = mean + std * rng.standard_normal((n, mean.size))
    log_q = (-0.5 * ((z - mean) / std) ** 2 - 0.5 * log_var - 0.5 * np.log(2 * np.pi)).sum(
        axis=1
    )
    log_p = (-0.5 * z**2 - 0.5 * np.log(2 * np.pi)).sum(axis=1)
    diffs = log_q - log_p
    return float(diffs.mean()), float(diffs.std(ddof=1) / np.sqrt(n))


def cofactor_determinant(matrix):
    """Determinant by Laplace expansion; exponential, fine for tiny matrices."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if n == 1:
        return float(matrix[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(matrix, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * matrix[0, j] * cofactor_determinant(minor)
    return total
