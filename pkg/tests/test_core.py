import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddle_core import (AugmentedView, Dataset, LossKind, augmented_column, fenchel_residual, fold,
                         geometry_from, mixed_norm)
from saddle_exceptions import InvalidProblemError

from conftest import random_dataset


def test_dataset_builds_one_hot_labels():
    dataset = Dataset(X=np.ones((3, 2)), y=np.array([2, 0, 1]), k=3)
    assert dataset.n == 3 and dataset.d == 2 and dataset.k == 3
    np.testing.assert_array_equal(dataset.Y, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    assert not dataset.X.flags.writeable


@pytest.mark.parametrize("X, y, k", [
    (np.ones((2, 2)), np.array([0, 3]), 3),
    (np.ones((2, 2)), np.array([0, -1]), 3),
    (np.ones((2, 2)), np.array([0]), 3),
    (np.ones((0, 2)), np.array([], dtype=int), 3),
    (np.ones((2, 2)), np.array([0.5, 1.0]), 3),
])
def test_dataset_rejects_bad_input(X, y, k):
    with pytest.raises(InvalidProblemError):
        Dataset(X=X, y=y, k=k)


def test_from_labels_infers_class_count():
    assert Dataset.from_labels(np.ones((3, 1)), [0, 4, 1]).k == 5


def test_loss_kind_parse():
    assert LossKind.parse("Hinge") is LossKind.HINGE
    assert LossKind.parse(LossKind.SOFTMAX) is LossKind.SOFTMAX
    with pytest.raises(InvalidProblemError):
        LossKind.parse("logistic")


@pytest.mark.parametrize("A, p, q, expected", [
    (np.eye(2), math.inf, 2, 1.0),
    (np.array([[3.0, 4.0]]), 1, math.inf, 4.0),
    (np.array([[1.0, -2.0], [3.0, 4.0]]), 2, 1, math.sqrt(58.0)),
])
def test_mixed_norm_examples(A, p, q, expected):
    assert mixed_norm(A, p, q) == pytest.approx(expected, rel=1e-15)


def test_mixed_norm_rejects_unsupported_orders():
    with pytest.raises(InvalidProblemError):
        mixed_norm(np.eye(2), 3, 1)


def test_mixed_norm_propagates_nan():
    assert math.isnan(mixed_norm(np.array([[np.nan, 1.0]]), 1, 1))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(-10, 10),
       p=st.sampled_from([1, 2, math.inf]), q=st.sampled_from([1, 2, math.inf]))
def test_mixed_norm_is_absolutely_homogeneous(seed, c, p, q):
    A = np.random.default_rng(seed).standard_normal((4, 3))
    assert mixed_norm(c * A, p, q) == pytest.approx(abs(c) * mixed_norm(A, p, q), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_column_norm_max_matches_transposed_mixed_norm(seed):
    X = np.random.default_rng(seed).standard_normal((6, 4))
    assert mixed_norm(X.T, math.inf, 2) == pytest.approx(np.linalg.norm(X, axis=0).max(), rel=1e-14)


def test_augmented_column_examples():
    view = AugmentedView(Dataset(X=np.array([[1.0, 2.0]]), y=[0], k=1))
    # 0-based: columns 0, 2, 3 are the 1st, 3rd and 4th augmented columns
    np.testing.assert_array_equal(augmented_column(view, 0), [1.0])
    np.testing.assert_array_equal(augmented_column(view, 2), [-1.0])
    np.testing.assert_array_equal(augmented_column(view, 3), [-2.0])
    with pytest.raises(InvalidProblemError):
        augmented_column(view, 4)


def test_augmented_columns_cancel(rng):
    dataset = random_dataset(rng, 5, 4, 3)
    view = AugmentedView(dataset)
    for i in range(dataset.d):
        np.testing.assert_array_equal(view.column(i) + view.column(i + dataset.d), 0.0)


def test_augmented_products_match_explicit_matrix(rng):
    dataset = random_dataset(rng, 5, 4, 3)
    view = AugmentedView(dataset)
    X_hat = np.hstack((dataset.X, -dataset.X))
    U = rng.random((8, 3))
    M = rng.standard_normal((5, 3))
    np.testing.assert_allclose(view.matmul(U), X_hat @ U, atol=1e-14)
    np.testing.assert_allclose(view.rmatmul(M), X_hat.T @ M, atol=1e-14)
    np.testing.assert_allclose(view.column_norms(), np.linalg.norm(X_hat, axis=0))
    np.testing.assert_allclose(view.row_norms_inf(), np.abs(X_hat).max(axis=1))
    np.testing.assert_array_equal(view.row(2), X_hat[2])


def test_fold_subtracts_halves():
    U = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(fold(U), U[:2] - U[2:])


def test_geometry_of_identity():
    n = 4
    dataset = Dataset(X=np.eye(n), y=np.arange(n), k=n)
    geometry = geometry_from(dataset, 1.0, 0.0)
    assert geometry.colnorm2_max == 1.0
    assert geometry.lipschitz == pytest.approx(1.0 / n)
    assert geometry.omega_U == pytest.approx(math.log(2 * n * n))
    assert geometry.omega_V == pytest.approx(n * math.log(n))


def test_variance_bounds_of_two_by_two_identity():
    dataset = Dataset(X=np.eye(2), y=np.array([0, 1]), k=2)
    geometry = geometry_from(dataset, 1.0, 0.0)
    assert geometry.sigma2_U_bar == pytest.approx(1.0)
    # ||X||_{1 x inf} = 2, so 8/2 + 8 * 4 / 4
    assert geometry.sigma2_V_bar == pytest.approx(12.0)


def test_geometry_invariants(rng):
    dataset = random_dataset(rng, 6, 3, 4)
    geometry = geometry_from(dataset, 2.5, 0.1)
    assert geometry.omega_U >= geometry.radius ** 2
    assert geometry.omega_V >= dataset.n
    assert geometry.sigma2_U_bar >= 0 and geometry.sigma2_V_bar >= 0
    assert geometry.log_dim == pytest.approx(math.log(2 * 3 * 4))


@pytest.mark.parametrize("radius, lam", [(0.0, 0.1), (-1.0, 0.1), (1.0, -0.5)])
def test_geometry_rejects_bad_constants(tiny_dataset, radius, lam):
    with pytest.raises(InvalidProblemError):
        geometry_from(tiny_dataset, radius, lam)


def test_fenchel_residuals():
    assert fenchel_residual(LossKind.HINGE, 5) == 0.0
    assert fenchel_residual(LossKind.SOFTMAX, 5) == pytest.approx(0.0, abs=1e-12)


def _lipschitz_by_enumeration(X, k):
    """sup over vertices +-e_il of the unit l1 ball of ||X U||_{2 x inf} / n."""
    n, d = X.shape
    best = 0.0
    for i, l, sign in itertools.product(range(d), range(k), (1.0, -1.0)):
        U = np.zeros((d, k))
        U[i, l] = sign
        best = max(best, mixed_norm((X @ U).T, math.inf, 2) / n)
    return best


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 6), d=st.integers(1, 8), k=st.integers(2, 8))
def test_lipschitz_matches_extreme_point_enumeration(seed, n, d, k):
    rng = np.random.default_rng(seed)
    dataset = random_dataset(rng, n, d, k)
    geometry = geometry_from(dataset, 1.0, 0.0)
    assert geometry.lipschitz == pytest.approx(_lipschitz_by_enumeration(dataset.X, k), rel=1e-12)


@pytest.mark.parametrize("k", range(2, 9))
def test_lipschitz_enumeration_for_each_class_count(rng, k):
    d = 64 // k
    dataset = random_dataset(rng, 5, d, k)
    geometry = geometry_from(dataset, 1.0, 0.0)
    assert geometry.lipschitz == pytest.approx(_lipschitz_by_enumeration(dataset.X, k), rel=1e-12)
