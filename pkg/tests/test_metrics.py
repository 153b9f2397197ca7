import numpy as np
import pytest

from groupvae.errors import NumericError
from groupvae.metrics import LatentTable, balanced_accuracy, covariance_logdet, estimate_tc
from groupvae.rng import make_rng

from oracles import cofactor_determinant


class TestBalancedAccuracy:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 1, 0])
        assert balanced_accuracy(y, y) == 1.0

    def test_always_majority_class_is_half_for_binary(self):
        y_true = np.array([0, 0, 0, 1])
        y_pred = np.zeros(4, dtype=int)
        assert balanced_accuracy(y_true, y_pred) == 0.5

    def test_mean_of_recalls(self):
        # class 0 recall 0.8 (4/5), class 1 recall 0.6 (3/5)
        y_true = np.array([0] * 5 + [1] * 5)
        y_pred = np.array([0, 0, 0, 0, 1, 1, 1, 1, 0, 0])
        assert balanced_accuracy(y_true, y_pred) == pytest.approx(0.7)

    def test_missing_class_rejected(self):
        with pytest.raises(ValueError, match="no true samples"):
            balanced_accuracy(np.array([0, 0]), np.array([0, 1]), class_count=2)

    def test_invariant_under_consistent_relabeling(self):
        rng = make_rng(1)
        y_true = rng.integers(0, 4, 60)
        y_pred = rng.integers(0, 4, 60)
        perm = rng.permutation(4)
        base = balanced_accuracy(y_true, y_pred)
        relabeled = balanced_accuracy(perm[y_true], perm[y_pred])
        assert base == pytest.approx(relabeled, abs=1e-12)

    def test_matches_sklearn(self):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        rng = make_rng(2)
        for _ in range(10):
            y_true = rng.integers(0, 3, 50)
            y_pred = rng.integers(0, 3, 50)
            if len(np.unique(y_true)) < 3:
                continue
            assert balanced_accuracy(y_true, y_pred) == pytest.approx(
                sklearn_metrics.balanced_accuracy_score(y_true, y_pred)
            )


class TestCovarianceLogdet:
    def test_identity(self):
        logdet, log_diag = covariance_logdet(np.eye(4), jitter=0.0)
        assert logdet == pytest.approx(0.0)
        np.testing.assert_allclose(log_diag, 0.0)

    def test_diagonal(self):
        logdet, _ = covariance_logdet(np.diag([1.0, 4.0]), jitter=0.0)
        assert logdet == pytest.approx(np.log(4.0))

    def test_matches_cofactor_expansion(self):
        rng = make_rng(3)
        for _ in range(10):
            a = rng.standard_normal((5, 5))
            spd = a.T @ a + np.eye(5)
            logdet, _ = covariance_logdet(spd, jitter=0.0)
            assert logdet == pytest.approx(np.log(cofactor_determinant(spd)), abs=1e-8)

    def test_indefinite_matrix_reports_eigenvalue(self):
        with pytest.raises(NumericError, match="eigenvalue"):
            covariance_logdet(np.diag([1.0, -2.0]), jitter=1e-6)


class TestEstimateTc:
    def test_independent_columns_have_near_zero_tc(self):
        z = make_rng(4).standard_normal((10_000, 2))
        assert estimate_tc(z) < 0.01

    def test_diagonal_covariance_exactly_zero(self):
        # jitter-free check straight on a diagonal covariance
        logdet, log_diag = covariance_logdet(np.diag([0.5, 2.0, 3.0]), jitter=0.0)
        assert 0.5 * (log_diag.sum() - logdet) == pytest.approx(0.0, abs=1e-10)

    def test_bivariate_correlated_gaussian(self):
        # closed form: -0.5 * ln(1 - rho^2) with rho = 0.5
        rho = 0.5
        cov = np.array([[1.0, rho], [rho, 1.0]])
        rng = make_rng(5)
        z = rng.multivariate_normal(np.zeros(2), cov, size=10_000)
        expected = -0.5 * np.log(1.0 - rho**2)
        assert abs(estimate_tc(z) - expected) < 0.02

    def test_duplicated_column_is_flagged_or_huge(self):
        col = make_rng(6).standard_normal(500)
        z = np.column_stack([col, col])
        try:
            value = estimate_tc(z)
        except NumericError:
            return
        assert value > 5.0

    def test_affine_rescaling_invariance(self):
        rng = make_rng(7)
        z = rng.multivariate_normal([0, 0, 0], np.eye(3) + 0.4, size=500)
        base = estimate_tc(z, jitter=0.0)
        scaled = z * np.array([2.0, -0.5, 3.0]) + np.array([1.0, 2.0, -4.0])
        assert abs(estimate_tc(scaled, jitter=0.0) - base) < 1e-8

    def test_never_meaningfully_negative(self):
        rng = make_rng(8)
        for _ in range(20):
            n = int(rng.integers(10, 60))
            dim = int(rng.integers(2, min(8, n - 1)))
            z = rng.standard_normal((n, dim))
            assert estimate_tc(z) >= -1e-10

    def test_insufficient_rows_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            estimate_tc(np.zeros((4, 4)))

    def test_latent_table_validation(self):
        with pytest.raises(ValueError):
            LatentTable(np.zeros((3, 2)), source="posterior")
