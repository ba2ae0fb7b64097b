import math

import numpy as np
import pytest

from saddle_core import AugmentedView, geometry_from, mixed_norm
from saddle_exceptions import InvalidProblemError
from saddle_sampling import (DATA_STREAM, INDEX_STREAM, DrawStream, ImportanceSampler, RankOneEstimate, draw_full,
                             draw_partial, full_distributions, partial_distributions, sample_index, variance_bounds)

from conftest import random_dataset, random_dual, random_primal


@pytest.fixture
def problem(rng):
    dataset = random_dataset(rng, 5, 4, 3)
    U = random_primal(rng, dataset.d, dataset.k, 2.0)
    V = random_dual(rng, dataset.n, dataset.k)
    return dataset, U, V


def _xi_norm(A):
    return mixed_norm(A, 2, math.inf)


def _eta_norm(A):
    return float(np.abs(A).max())


# --- DrawStream / sample_index --------------------------------------------

def test_draw_stream_is_reproducible():
    a, b = DrawStream(7), DrawStream(7)
    assert [a.uniform() for _ in range(20)] == [b.uniform() for _ in range(20)]


def test_draw_streams_are_independent():
    assert DrawStream(7, INDEX_STREAM).uniform() != DrawStream(7, DATA_STREAM).uniform()
    assert DrawStream(7).uniform() != DrawStream(8).uniform()


def test_draw_stream_uniforms_in_unit_interval():
    stream = DrawStream(3)
    values = [stream.uniform() for _ in range(1000)]
    assert min(values) >= 0.0 and max(values) < 1.0


@pytest.mark.parametrize("seed", [-1, 2 ** 64])
def test_draw_stream_rejects_bad_seed(seed):
    with pytest.raises(InvalidProblemError):
        DrawStream(seed)


def test_sample_index_never_returns_zero_weight():
    weights = np.array([0.0, 2.0, 0.0, 1.0, 0.0])
    for u in np.linspace(0.0, 1.0, 101):
        assert sample_index(weights, u) in (1, 3)
    assert sample_index(weights, 0.0) == 1
    assert sample_index(weights, 0.999999) == 3
    assert sample_index(weights, 1.0) == 3


def test_sample_index_follows_weights():
    weights = np.array([1.0, 3.0])
    assert sample_index(weights, 0.2) == 0
    assert sample_index(weights, 0.3) == 1


# --- distributions ----------------------------------------------------------

def test_distributions_are_normalised(problem):
    dataset, U, V = problem
    p, q = partial_distributions(dataset, U, V)
    assert p.sum() == pytest.approx(1.0) and q.sum() == pytest.approx(1.0)
    p, P, q, Q = full_distributions(dataset, U, V)
    assert p.sum() == pytest.approx(1.0) and q.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(Q.sum(axis=1), 1.0)


def test_full_conditionals_follow_entries(problem):
    dataset, U, V = problem
    _, P, _, Q = full_distributions(dataset, U, V)
    np.testing.assert_allclose(P, U / U.sum(axis=1, keepdims=True))
    residual = np.abs(V - dataset.Y)
    np.testing.assert_allclose(Q, residual / residual.sum(axis=1, keepdims=True))


def test_partial_estimates_are_unbiased(problem):
    dataset, U, V = problem
    sampler = ImportanceSampler(dataset)
    view = AugmentedView(dataset)
    p, q = sampler.partial_distributions(U, V)

    xi_mean = sum(p[i] * sampler.xi_partial_estimate(U, i, p[i]).materialize() for i in range(2 * dataset.d))
    eta_mean = sum(q[j] * sampler.eta_partial_estimate(V, j, q[j]).materialize() for j in range(dataset.n))
    np.testing.assert_allclose(xi_mean, view.matmul(U), rtol=0, atol=1e-12)
    np.testing.assert_allclose(eta_mean, view.rmatmul(V - dataset.Y), rtol=0, atol=1e-12)


def test_full_estimates_are_unbiased(problem):
    dataset, U, V = problem
    sampler = ImportanceSampler(dataset)
    view = AugmentedView(dataset)
    p, P, q, Q = sampler.full_distributions(U, V)

    xi_mean = np.zeros((dataset.n, dataset.k))
    for i in range(2 * dataset.d):
        for l in range(dataset.k):
            xi_mean += p[i] * P[i, l] * sampler.xi_full_estimate(U, i, l, p[i], P[i, l]).materialize()
    eta_mean = np.zeros((2 * dataset.d, dataset.k))
    for j in range(dataset.n):
        for l in range(dataset.k):
            if Q[j, l] > 0:
                eta_mean += q[j] * Q[j, l] * sampler.eta_full_estimate(V, j, l, q[j], Q[j, l]).materialize()
    np.testing.assert_allclose(xi_mean, view.matmul(U), rtol=0, atol=1e-12)
    np.testing.assert_allclose(eta_mean, view.rmatmul(V - dataset.Y), rtol=0, atol=1e-12)


def _second_moment(norms, probabilities):
    """E ||estimate||^2 given the estimate norms at unit probability."""
    mask = norms > 0
    return float(np.sum(norms[mask] ** 2 / probabilities[mask]))


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    dataset = random_dataset(rng, 5, 4, 3)
    U = random_primal(rng, dataset.d, dataset.k, 2.0)
    V = random_dual(rng, dataset.n, dataset.k)
    return dataset, U, V


ALTERNATIVES = 200


@pytest.mark.parametrize("seed", range(20))
def test_optimal_partial_distributions_minimise_second_moment(seed):
    dataset, U, V = _random_instance(seed)
    sampler = ImportanceSampler(dataset)
    p, q = sampler.partial_distributions(U, V)
    xi_norms = np.array([_xi_norm(sampler.xi_partial_estimate(U, i, 1.0).materialize())
                         for i in range(2 * dataset.d)])
    eta_norms = np.array([_eta_norm(sampler.eta_partial_estimate(V, j, 1.0).materialize())
                          for j in range(dataset.n)])
    best_xi, best_eta = _second_moment(xi_norms, p), _second_moment(eta_norms, q)

    other = np.random.default_rng(1000 + seed)
    for _ in range(ALTERNATIVES):
        assert best_xi <= _second_moment(xi_norms, other.dirichlet(np.ones(len(p)))) * (1 + 1e-12)
        assert best_eta <= _second_moment(eta_norms, other.dirichlet(np.ones(len(q)))) * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_optimal_full_distributions_minimise_second_moment(seed):
    dataset, U, V = _random_instance(seed)
    sampler = ImportanceSampler(dataset)
    p, P, q, Q = sampler.full_distributions(U, V)
    k = dataset.k
    xi_norms = np.array([[_xi_norm(sampler.xi_full_estimate(U, i, l, 1.0, 1.0).materialize()) for l in range(k)]
                         for i in range(2 * dataset.d)])
    eta_norms = np.array([[_eta_norm(sampler.eta_full_estimate(V, j, l, 1.0, 1.0).materialize()) for l in range(k)]
                          for j in range(dataset.n)])
    best_xi = _second_moment(xi_norms, p[:, None] * P)
    best_eta = _second_moment(eta_norms, q[:, None] * Q)

    other = np.random.default_rng(1000 + seed)
    for _ in range(ALTERNATIVES):
        p_rand = other.dirichlet(np.ones(P.shape[0]))
        P_rand = other.dirichlet(np.ones(k), size=P.shape[0])
        q_rand = other.dirichlet(np.ones(Q.shape[0]))
        Q_rand = other.dirichlet(np.ones(k), size=Q.shape[0])
        assert best_xi <= _second_moment(xi_norms, p_rand[:, None] * P_rand) * (1 + 1e-12)
        assert best_eta <= _second_moment(eta_norms, q_rand[:, None] * Q_rand) * (1 + 1e-12)


@pytest.mark.parametrize("scheme", ["partial", "full"])
def test_variance_stays_below_proxy_bounds(rng, scheme):
    dataset = random_dataset(rng, 6, 4, 3)
    geometry = geometry_from(dataset, 2.0, 0.0)
    sigma2_U_bar, sigma2_V_bar = variance_bounds(geometry)
    sampler = ImportanceSampler(dataset)
    view = AugmentedView(dataset)
    n = dataset.n

    for _ in range(5):
        U = random_primal(rng, dataset.d, dataset.k, geometry.radius)
        V = random_dual(rng, n, dataset.k)
        xi_mean, eta_mean = view.matmul(U), view.rmatmul(V - dataset.Y)
        xi_var = eta_var = 0.0
        if scheme == "partial":
            p, q = sampler.partial_distributions(U, V)
            for i in range(2 * dataset.d):
                xi_var += p[i] * _xi_norm(sampler.xi_partial_estimate(U, i, p[i]).materialize() - xi_mean) ** 2
            for j in range(n):
                eta_var += q[j] * _eta_norm(sampler.eta_partial_estimate(V, j, q[j]).materialize() - eta_mean) ** 2
        else:
            p, P, q, Q = sampler.full_distributions(U, V)
            for i in range(2 * dataset.d):
                for l in range(dataset.k):
                    estimate = sampler.xi_full_estimate(U, i, l, p[i], P[i, l]).materialize()
                    xi_var += p[i] * P[i, l] * _xi_norm(estimate - xi_mean) ** 2
            for j in range(n):
                for l in range(dataset.k):
                    estimate = sampler.eta_full_estimate(V, j, l, q[j], Q[j, l]).materialize()
                    eta_var += q[j] * Q[j, l] * _eta_norm(estimate - eta_mean) ** 2
        assert xi_var / n ** 2 <= sigma2_U_bar
        assert eta_var / n ** 2 <= sigma2_V_bar


# --- draws ------------------------------------------------------------------

def test_partial_draw_matches_distributions(problem):
    dataset, U, V = problem
    draw = draw_partial(dataset, U, V, DrawStream(11))
    p, q = partial_distributions(dataset, U, V)
    assert draw.xi.probability == pytest.approx(p[draw.xi.index])
    assert draw.eta.probability == pytest.approx(q[draw.eta.index])
    expected = ImportanceSampler(dataset).xi_partial_estimate(U, draw.xi.index, p[draw.xi.index])
    np.testing.assert_allclose(draw.xi.estimate.materialize(), expected.materialize())


def test_full_draw_has_single_column(problem):
    dataset, U, V = problem
    stream = DrawStream(5)
    for _ in range(10):
        draw = draw_full(dataset, U, V, stream)
        for side in (draw.xi, draw.eta):
            dense = side.estimate.materialize()
            nonzero = np.flatnonzero(np.abs(dense).sum(axis=0))
            assert set(nonzero) <= {side.cls}


def test_draws_are_deterministic(problem):
    dataset, U, V = problem
    a = [draw_full(dataset, U, V, DrawStream(9)) for _ in range(3)]
    b = [draw_full(dataset, U, V, DrawStream(9)) for _ in range(3)]
    for left, right in zip(a, b):
        assert (left.xi.index, left.xi.cls, left.eta.index, left.eta.cls) == \
               (right.xi.index, right.xi.cls, right.eta.index, right.eta.cls)


@pytest.mark.parametrize("scheme, per_draw", [("partial", 2), ("full", 4)])
def test_zero_residual_takes_zero_path_and_keeps_stream_aligned(problem, scheme, per_draw):
    dataset, U, _ = problem
    stream = DrawStream(4)
    draw = (draw_partial if scheme == "partial" else draw_full)(dataset, U, dataset.Y.copy(), stream)
    assert draw.eta.index == -1
    assert draw.eta.estimate.is_zero
    assert not draw.eta.estimate.materialize().any()

    reference = DrawStream(4)
    for _ in range(per_draw):
        reference.uniform()
    assert stream.uniform() == reference.uniform()


def test_rank_one_zero():
    estimate = RankOneEstimate.zero(3, 2)
    assert estimate.is_zero
    assert estimate.materialize().shape == (3, 2)
