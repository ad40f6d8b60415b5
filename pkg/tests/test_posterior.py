import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from ebnpmle.errors import InvalidArgumentError
from ebnpmle.mixture import MixingDistribution, mixture_log_density
from ebnpmle.posterior import (
    posterior_law,
    posterior_mean,
    posterior_mean_difference,
    posterior_means,
    predictive_log_density,
    predictive_log_density_matrix,
)


@pytest.fixture(scope="module")
def normal_grid_prior():
    atoms = np.linspace(-6, 6, 401)
    w = norm.pdf(atoms)
    return MixingDistribution(atoms, w / math.fsum(w))


def test_point_mass_prior():
    prior = MixingDistribution.point_mass(1.3)
    for xbar, n in [(-4.0, 1), (1.3, 25), (50.0, 4)]:
        law = posterior_law(prior, xbar, n)
        np.testing.assert_array_equal(law.weights, [1.0])
        assert posterior_mean(prior, xbar, n) == 1.3
        assert predictive_log_density(prior, xbar, n, 0.2) == pytest.approx(norm.logpdf(0.2 - 1.3), abs=1e-14)


def test_symmetric_two_atom_posterior():
    law = posterior_law(MixingDistribution([-1.0, 1.0], [0.5, 0.5]), 0.0, 1)
    np.testing.assert_allclose(law.weights, [0.5, 0.5], rtol=1e-15)
    for n in (1, 7, 100):
        assert posterior_mean(MixingDistribution([-1.0, 1.0], [0.5, 0.5]), 0.0, n) == 0.0


def test_two_atom_posterior_weights():
    law = posterior_law(MixingDistribution([0.0, 1.0], [0.5, 0.5]), 1.0, 4)
    # phi(2) / (phi(2) + phi(0))
    expected = norm.pdf(2) / (norm.pdf(2) + norm.pdf(0))
    np.testing.assert_allclose(law.weights, [expected, 1 - expected], rtol=1e-12)
    np.testing.assert_allclose(law.weights, [0.1192, 0.8808], atol=5e-5)


def test_predictive_normalizes():
    prior = MixingDistribution(np.linspace(-2, 2, 9), np.full(9, 1 / 9))
    val, _ = quad(lambda x: math.exp(predictive_log_density(prior, 0.0, 25, x)), -12, 12, points=[-2, 0, 2], limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_predictive_matches_conjugate_normal(normal_grid_prior):
    # mu ~ N(0,1), xbar | mu ~ N(mu, 1): mu | xbar ~ N(xbar/2, 1/2); x | xbar ~ N(xbar/2, 3/2)
    got = predictive_log_density(normal_grid_prior, 1.0, 1, 0.0)
    assert got == pytest.approx(norm.logpdf(0.0, 0.5, math.sqrt(1.5)), abs=2e-3)


def test_posterior_mean_matches_conjugate_shrinkage(normal_grid_prior):
    assert posterior_mean(normal_grid_prior, 2.0, 1) == pytest.approx(1.0, abs=5e-3)
    assert posterior_mean(normal_grid_prior, 2.0, 3) == pytest.approx(1.5, abs=5e-3)


def test_posterior_mean_difference_examples(normal_grid_prior):
    pm0 = MixingDistribution.point_mass(0.0)
    assert posterior_mean_difference(pm0, pm0, -3.0, 7.0, 5, 9) == 0.0
    assert posterior_mean_difference(pm0, MixingDistribution.point_mass(2.5), 1.0, 1.0, 3, 3) == 2.5
    d = posterior_mean_difference(normal_grid_prior, normal_grid_prior, 0.0, 2.0, 1, 1)
    assert d == pytest.approx(1.0, abs=1e-2)


def test_predictive_equals_mixture_density_of_posterior():
    prior = MixingDistribution([-2.0, 0.0, 1.0, 3.0], [0.1, 0.4, 0.3, 0.2])
    law = posterior_law(prior, 0.7, 9)
    for x in (-3.0, 0.0, 2.5):
        assert predictive_log_density(prior, 0.7, 9, x) == pytest.approx(mixture_log_density(law.as_mixture(), x), abs=1e-12)


def test_degenerate_normalizer_falls_back_to_nearest_atom():
    prior = MixingDistribution([0.0, 1e159], [0.5, 0.5])
    # squared standardized distance overflows, so every term is -inf
    law = posterior_law(prior, 1e160, 10000)
    assert law.degenerate
    np.testing.assert_array_equal(law.weights, [0.0, 1.0])
    assert posterior_mean(prior, -1e160, 10000) == 0.0
    assert math.isfinite(predictive_log_density(prior, 1e160, 10000, 1e159))


def test_far_xbar_stays_finite_in_log_domain():
    prior = MixingDistribution([0.0, 1.0], [0.5, 0.5])
    law = posterior_law(prior, 30.0, 25)
    assert not law.degenerate
    assert law.weights[1] == pytest.approx(1.0, abs=1e-300)


@pytest.mark.parametrize("n", [0, -1, 2.5])
def test_bad_group_size(n):
    with pytest.raises(InvalidArgumentError):
        posterior_law(MixingDistribution.point_mass(0.0), 0.0, n)


def test_consistency_as_n_grows():
    prior = MixingDistribution(np.linspace(-2, 2, 9), np.full(9, 1 / 9))
    a = prior.atoms[6]
    w = [posterior_law(prior, a, n).weights[6] for n in (1, 4, 16, 64, 256)]
    assert all(x < y for x, y in zip(w, w[1:]))
    assert w[-1] > 0.99


@given(st.floats(-3, 3), st.integers(1, 4), st.sampled_from([0.5, 1.0, 2.0]), st.integers(1, 50))
def test_predictive_symmetry(c, half, t, n):
    offs = np.linspace(0.3, 2.0, half)
    atoms = np.concatenate([c - offs[::-1], [c], c + offs])
    w = np.concatenate([np.arange(half, 0, -1), [half + 1], np.arange(1, half + 1)]).astype(float)
    prior = MixingDistribution(atoms, w / w.sum())
    left = predictive_log_density(prior, c, n, c - t)
    right = predictive_log_density(prior, c, n, c + t)
    assert left == pytest.approx(right, abs=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(-20, 20), st.integers(1, 100))
def test_posterior_normalized_and_mean_in_range(seed, xbar, n):
    r = np.random.default_rng(seed)
    G = int(r.integers(2, 12))
    prior = MixingDistribution(np.sort(r.choice(np.linspace(-5, 5, 41), G, replace=False)), r.dirichlet(np.ones(G)))
    law = posterior_law(prior, xbar, n)
    assert math.fsum(law.weights) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_array_equal(law.atoms, prior.atoms)
    m = posterior_mean(prior, xbar, n)
    assert prior.atoms[0] <= m <= prior.atoms[-1]
    if xbar > prior.atoms[-1] or xbar < prior.atoms[0]:
        assert abs(m - xbar) > 0


def test_vectorized_forms_agree():
    r = np.random.default_rng(8)
    prior = MixingDistribution([-1.0, 0.0, 2.0], [0.2, 0.5, 0.3])
    xbar = r.normal(0, 2, 6)
    X = r.normal(0, 2, (4, 6))
    M = predictive_log_density_matrix(prior, xbar, 16, X)
    for t in range(4):
        for j in range(6):
            assert M[t, j] == pytest.approx(predictive_log_density(prior, xbar[j], 16, X[t, j]), abs=1e-12)
    pm = posterior_means(prior, xbar, 0.25)
    np.testing.assert_allclose(pm, [posterior_mean(prior, x, 16) for x in xbar], atol=1e-14)
    with pytest.raises(InvalidArgumentError):
        predictive_log_density_matrix(prior, xbar, 16, X[:, :5])
