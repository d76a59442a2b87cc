import math

import numpy as np
import pytest
from scipy import integrate

from segflow.errors import DegenerateInputError, InputError
from segflow.kernels import (MNIWParams, RngStream, log_density, sample_beta, sample_categorical,
                             sample_categorical_rows, sample_dirichlet, sample_gamma, sample_inverse_wishart,
                             sample_matrix_normal_inverse_wishart, sample_polya_gamma, sample_polya_gamma_array,
                             slice_sample)
from segflow.verify import pg_mean, pg_series_moments


def test_same_seed_and_stream_replays_draws():
    a, b = RngStream(11, stream_id=3), RngStream(11, stream_id=3)
    assert np.array_equal(sample_gamma(2.0, 1.0, a, size=50), sample_gamma(2.0, 1.0, b, size=50))
    assert np.array_equal(sample_polya_gamma_array(np.linspace(-3, 3, 20), a),
                          sample_polya_gamma_array(np.linspace(-3, 3, 20), b))


def test_distinct_streams_differ():
    a, b = RngStream(11, stream_id=0), RngStream(11, stream_id=1)
    assert not np.array_equal(a.normal(20), b.normal(20))
    assert a.spawn(1).normal(5).tolist() == RngStream(11, 1).normal(5).tolist()


def test_stream_state_round_trip():
    rng = RngStream(5)
    rng.normal(7)
    restored = RngStream.from_state_dict(rng.state_dict())
    assert np.array_equal(rng.normal(10), restored.normal(10))


def test_seed_must_fit_64_bits():
    with pytest.raises(InputError):
        RngStream(2**64)
    with pytest.raises(InputError):
        RngStream(-1)


def test_polya_gamma_sign_symmetry():
    a, b = RngStream(3), RngStream(3)
    left = [sample_polya_gamma(2.5, a).omega for _ in range(20)]
    right = [sample_polya_gamma(-2.5, b).omega for _ in range(20)]
    assert left == right
    assert all(omega > 0 for omega in left)


def test_polya_gamma_rejects_non_finite_tilt(rng):
    with pytest.raises(InputError):
        sample_polya_gamma(math.inf, rng)
    with pytest.raises(InputError):
        sample_polya_gamma_array([0.0, math.nan], rng)


@pytest.mark.parametrize('c', [0.0, 2.0])
def test_polya_gamma_mean(rng, c):
    draws = sample_polya_gamma_array(np.full(1_000_000, c), rng)
    assert abs(draws.mean() - pg_mean(c)) < 0.002


def test_series_oracle_matches_closed_form_mean():
    for c in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0):
        mean, var = pg_series_moments(c)
        assert mean == pytest.approx(pg_mean(c), rel=1e-4)
        assert var > 0
    assert pg_mean(2.0) == pytest.approx(math.tanh(1.0) / 4)


def test_dirichlet_concentrated(rng):
    draw = sample_dirichlet([1e6, 1e6], rng)
    assert np.all(np.abs(draw - 0.5) < 0.01)


def test_dirichlet_single_entry(rng):
    assert sample_dirichlet([0.3], rng).tolist() == [1.0]


def test_dirichlet_mean_and_simplex(rng):
    draws = sample_dirichlet(np.tile([2.0, 1.0, 1.0], (100_000, 1)), rng)
    assert np.all(np.abs(draws.sum(axis=1) - 1.0) < 1e-12)
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, 0.25, 0.25], atol=0.01)


def test_dirichlet_tiny_concentration_stays_on_simplex(rng):
    draws = sample_dirichlet(np.full((100, 5), 1e-3), rng)
    assert np.all(np.isfinite(draws))
    assert np.all(np.abs(draws.sum(axis=1) - 1.0) < 1e-12)


@pytest.mark.parametrize('bad', [[1.0, 0.0], [1.0, -2.0], [math.nan, 1.0]])
def test_dirichlet_rejects_invalid(rng, bad):
    with pytest.raises(InputError):
        sample_dirichlet(bad, rng)


def test_categorical_point_mass(rng):
    assert {sample_categorical([0.0, 5.0, 0.0], rng) for _ in range(200)} == {1}


def test_categorical_all_zero(rng):
    with pytest.raises(DegenerateInputError):
        sample_categorical([0.0, 0.0], rng)
    with pytest.raises(InputError):
        sample_categorical([1.0, -1.0], rng)


def test_categorical_rows_frequencies(rng):
    weights = np.tile([1.0, 3.0, 0.0], (200_000, 1))
    draws = sample_categorical_rows(weights, rng)
    assert set(np.unique(draws)) <= {0, 1}
    assert abs(draws.mean() - 0.75) < 0.005


def test_beta_and_gamma_means(rng):
    assert abs(sample_beta(np.ones(100_000), 1.0, rng).mean() - 0.5) < 0.005
    assert abs(sample_gamma(2.0, 1.0, rng, size=100_000).mean() - 2.0) < 0.02


def test_beta_gamma_reject_invalid(rng):
    with pytest.raises(InputError):
        sample_beta(0.0, 1.0, rng)
    with pytest.raises(InputError):
        sample_gamma(1.0, -1.0, rng)


def test_inverse_wishart_concentrates(rng):
    n0 = 10_000.0
    draws = np.stack([sample_inverse_wishart(n0 * np.eye(2), n0, rng) for _ in range(200)])
    np.testing.assert_allclose(draws.mean(axis=0), np.eye(2), atol=0.02)
    for draw in draws[:20]:
        np.linalg.cholesky(draw)


def test_mniw_mean_of_A(rng):
    prior = MNIWParams(M=2.0 * np.eye(2), V=0.1 * np.eye(2), S0=np.eye(2), n0=6.0)
    draws = np.stack([sample_matrix_normal_inverse_wishart(prior, rng)[0] for _ in range(10_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 2.0 * np.eye(2), atol=0.05)


def test_mniw_rejects_singular_V(rng):
    prior = MNIWParams(M=np.eye(2), V=np.zeros((2, 2)), S0=np.eye(2), n0=4.0)
    with pytest.raises(InputError):
        sample_matrix_normal_inverse_wishart(prior, rng)


def test_log_density_examples():
    assert log_density('normal', {'mean': 0.0, 'sd': 1.0}, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert log_density('categorical', {'p': [0.2, 0.8]}, 1) == pytest.approx(math.log(0.8))
    assert log_density('categorical', {'p': [0.2, 0.8]}, 2) == -math.inf
    expected = -math.log(2 * math.pi) - 0.5 * math.log(4.0) - 0.5
    assert log_density('mvn', {'mean': [0, 0], 'cov': np.diag([1.0, 4.0])}, [0.0, 2.0]) == pytest.approx(expected)
    assert expected == pytest.approx(-3.0303, abs=1e-3)


def test_log_density_errors():
    with pytest.raises(InputError):
        log_density('cauchy', {}, 0.0)
    with pytest.raises(InputError):
        log_density('beta', {'a': 1.0}, 0.5)
    with pytest.raises(InputError):
        log_density('gamma', {'shape': -1.0, 'rate': 1.0}, 1.0)


@pytest.mark.parametrize('family, params, lower, upper', [
    ('normal', {'mean': 1.0, 'sd': 2.0}, -np.inf, np.inf),
    ('beta', {'a': 2.0, 'b': 3.0}, 0.0, 1.0),
    ('gamma', {'shape': 2.0, 'rate': 0.5}, 0.0, np.inf),
])
def test_scalar_densities_integrate_to_one(family, params, lower, upper):
    total, _ = integrate.quad(lambda x: math.exp(log_density(family, params, x)), lower, upper)
    assert abs(total - 1.0) < 1e-3


def test_slice_sample_standard_normal(rng):
    x, draws = 0.0, []
    for _ in range(20_000):
        x = slice_sample(lambda v: -0.5 * v * v, x, rng)
        draws.append(x)
    draws = np.asarray(draws)
    assert abs(draws.mean()) < 0.05
    assert abs(draws.var() - 1.0) < 0.05
