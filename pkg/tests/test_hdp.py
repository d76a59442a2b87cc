import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from segflow import hdp
from segflow.errors import ConsistencyError, InputError
from segflow.hdp import GammaPrior, HyperParams, RhoGrid, TransitionCounts


def test_stick_breaking_sums_to_one(rng):
    for gamma in (0.1, 1.0, 50.0):
        beta = hdp.stick_breaking(gamma, 8, rng)
        assert beta.shape == (9,)
        assert np.all(beta >= 0)
        assert abs(beta.sum() - 1.0) < 1e-12


def test_stick_breaking_tiny_gamma_puts_mass_first(rng):
    first = np.array([hdp.stick_breaking(1e-8, 3, rng)[0] for _ in range(2000)])
    assert np.mean(first >= 1 - 1e-6) >= 0.999


def test_stick_breaking_first_weight_mean(rng):
    first = np.array([hdp.stick_breaking(1.0, 1, rng)[0] for _ in range(100_000)])
    assert abs(first.mean() - 0.5) < 0.005


def test_stick_breaking_rejects_bad_gamma(rng):
    with pytest.raises(InputError):
        hdp.stick_breaking(0.0, 3, rng)
    with pytest.raises(InputError):
        hdp.stick_breaking(1.0, 0, rng)


def test_transition_counts_skip_sticks():
    z = [0, 0, 1, 1, 0]
    w = [0, 1, 0, 0, 0]
    counts = hdp.transition_counts(z, w, 2)
    assert counts.tolist() == [[0, 1], [1, 1]]
    with_initial = hdp.transition_counts(z, w, 2, initial_row=True)
    assert with_initial.tolist() == [[1, 0], [0, 1], [1, 1]]


def test_table_counts_edge_cases(rng):
    n = np.array([[0, 1], [1, 0]])
    m = hdp.sample_table_counts(n, 2.0, [0.5, 0.5], rng)
    assert m.tolist() == [[0, 1], [1, 0]]


def test_table_counts_expectation(rng):
    reps = 100_000
    m = hdp.sample_table_counts(np.full((reps, 1), 5), 1.0, [1.0], rng)
    assert abs(m.mean() - (1 + 1 / 2 + 1 / 3 + 1 / 4 + 1 / 5)) < 0.02


@pytest.mark.parametrize('n, conc', [(2, 0.3), (7, 2.0), (20, 5.0)])
def test_table_counts_match_harmonic_sum(rng, n, conc):
    reps = 100_000
    m = hdp.sample_table_counts(np.full((reps, 1), n), conc, [1.0], rng)
    exact = sum(conc / (i + conc) for i in range(n))
    assert abs(m.mean() - exact) < 3 * m.std() / math.sqrt(reps) + 1e-12
    assert TransitionCounts(np.full((reps, 1), n), m).validate()


def test_table_counts_sticky_mass_raises_diagonal(rng):
    n = np.full((3, 3), 30)
    plain = np.mean([hdp.sample_table_counts(n, 1.0, np.full(3, 1 / 3), rng) for _ in range(300)], axis=0)
    sticky = np.mean([hdp.sample_table_counts(n, 1.0, np.full(3, 1 / 3), rng, kappa=20.0) for _ in range(300)],
                     axis=0)
    assert np.all(np.diag(sticky) > np.diag(plain) + 1.0)
    assert abs(sticky[0, 1] - plain[0, 1]) < 0.3


def test_override_thinning_bounds(rng):
    m = np.array([[5, 1], [0, 3]])
    m_bar, overrides = hdp.apply_override(m, 0.9, [0.5, 0.5], rng)
    assert np.all(overrides <= np.diag(m))
    assert np.array_equal(np.diag(m_bar) + overrides, np.diag(m))
    assert m_bar[0, 1] == 1
    _, none = hdp.apply_override(m, 0.0, [0.5, 0.5], rng)
    assert none.tolist() == [0, 0]


def test_beta_weaklimit_means(rng):
    draws = np.array([hdp.resample_beta_weaklimit(np.zeros((2, 2)), 2.0, 2, rng).beta for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, 0.5], atol=0.01)
    m = np.array([[60, 0], [40, 0]])
    draws = np.array([hdp.resample_beta_weaklimit(m, 1.0, 2, rng).beta[0] for _ in range(20_000)])
    assert abs(draws.mean() - 100.5 / 101.0) < 0.01
    with pytest.raises(InputError):
        hdp.resample_beta_weaklimit(m, 1.0, 0, rng)


def test_beta_direct(rng):
    draws = np.array([hdp.resample_beta_direct([[3]], 1.0, 1, rng).beta for _ in range(50_000)])
    assert abs(draws[:, 0].mean() - 0.75) < 0.01
    assert np.allclose(draws.sum(axis=1), 1.0)
    assert hdp.resample_beta_direct(np.zeros((0, 0)), 1.0, 0, rng).beta.tolist() == [1.0]
    with pytest.raises(ConsistencyError):
        hdp.resample_beta_direct([[2, 0], [1, 0]], 1.0, 2, rng)


def test_pi_bar_rows(rng):
    beta = np.array([0.2, 0.3, 0.5])
    rows = np.array([hdp.resample_pi_bar(np.zeros((1, 3)), 5.0, beta, rng).pi_bar[0] for _ in range(50_000)])
    np.testing.assert_allclose(rows.mean(axis=0), beta, atol=0.01)
    swamped = hdp.resample_pi_bar(np.array([[0, 10**7, 0]]), 1.0, beta, rng).validate()
    assert swamped.pi_bar[0, 1] > 0.999
    with pytest.raises(InputError):
        hdp.resample_pi_bar(np.zeros((2, 2)), 1.0, beta, rng)


def test_alpha_gamma_prior_invariance_without_data(rng):
    alpha_prior, gamma_prior = GammaPrior(1.0, 0.01), GammaPrior(2.0, 1.0)
    counts = TransitionCounts(np.zeros((3, 3)))
    hyper = HyperParams()
    alphas, gammas = [], []
    for _ in range(20_000):
        hyper = hdp.resample_alpha_gamma(counts, hyper, alpha_prior, gamma_prior, rng)
        alphas.append(hyper.alpha)
        gammas.append(hyper.gamma)
    assert hyper.kappa_sticky == 0.0
    assert abs(np.mean(alphas) - 100.0) < 5.0
    assert stats.kstest(alphas, stats.gamma(1.0, scale=100.0).cdf).pvalue > 0.01
    assert stats.kstest(gammas, stats.gamma(2.0, scale=1.0).cdf).pvalue > 0.01


def test_alpha_ignores_initial_row(rng):
    n = np.zeros((3, 2), dtype=np.int64)
    n[0, 0] = 1
    counts = TransitionCounts(n, n.copy())
    hyper = HyperParams()
    alphas = []
    for _ in range(20_000):
        hyper = hdp.resample_alpha_gamma(counts, hyper, GammaPrior(1.0, 0.01), GammaPrior(2.0, 1.0), rng)
        alphas.append(hyper.alpha)
    assert stats.kstest(alphas, stats.gamma(1.0, scale=100.0).cdf).pvalue > 0.01


def test_sticky_split_returns_new_params(rng):
    n = np.array([[1, 0], [40, 2], [3, 30]])
    m = np.array([[1, 0], [6, 1], [2, 5]])
    overrides = np.array([[0, 0], [4, 0], [0, 3]])
    hyper = HyperParams(alpha=2.0, kappa_sticky=8.0)
    new = hdp.resample_alpha_gamma(TransitionCounts(n, m), hyper, GammaPrior(1.0, 0.01), GammaPrior(2.0, 1.0),
                                   rng, m_bar=m - overrides, overrides=overrides)
    assert new.alpha > 0 and new.kappa_sticky > 0
    assert (hyper.alpha, hyper.kappa_sticky) == (2.0, 8.0)
    assert (new.rho1, new.rho2) == (hyper.rho1, hyper.rho2)


def test_weak_limit_gamma_uses_beta(rng):
    counts = TransitionCounts(np.zeros((4, 3)))
    beta = np.array([0.5, 0.3, 0.2])
    gammas = [hdp.resample_alpha_gamma(counts, HyperParams(gamma=g), GammaPrior(1.0, 0.01), GammaPrior(2.0, 1.0),
                                       rng, beta=beta).gamma for g in (0.5, 1.0, 4.0)]
    assert all(g > 0 for g in gammas)


def test_concentration_posterior_matches_quadrature(rng):
    prior = GammaPrior(2.0, 1.0)
    n, m = 10, 3

    def unnormalized(a):
        if a <= 0:
            return 0.0
        log_lik = m * math.log(a) + special.gammaln(a) - special.gammaln(a + n)
        return math.exp(log_lik + stats.gamma(prior.shape, scale=1 / prior.rate).logpdf(a))

    mass, _ = integrate.quad(unnormalized, 0, np.inf)
    first, _ = integrate.quad(lambda a: a * unnormalized(a), 0, np.inf)
    alpha, draws = 1.0, []
    for _ in range(60_000):
        alpha = hdp.resample_concentration([n], m, alpha, prior, rng)
        draws.append(alpha)
    assert np.mean(draws[1000:]) == pytest.approx(first / mass, rel=0.02)


def test_gamma_single_stays_positive(rng):
    values = [hdp.resample_gamma_single(12, 4, 1.0, GammaPrior(2.0, 1.0), rng) for _ in range(500)]
    assert min(values) > 0


def test_gamma_weaklimit_slice_refresh_targets_posterior(rng):
    prior = GammaPrior(2.0, 1.0)
    beta = np.array([0.6, 0.3, 0.05, 0.05])

    def density(g):
        return math.exp(hdp.gamma_log_posterior_weaklimit(g, beta, prior))

    mass, _ = integrate.quad(density, 0, np.inf)
    first, _ = integrate.quad(lambda g: g * density(g), 0, np.inf)
    gamma, draws = 1.0, []
    for _ in range(30_000):
        gamma = hdp.resample_gamma_weaklimit(beta, gamma, prior, rng)
        draws.append(gamma)
    assert np.mean(draws) == pytest.approx(first / mass, rel=0.03)


def test_rho_grid_roundtrip():
    rho1, rho2 = np.array([0.3, 5.0, 120.0]), np.array([2.0, 0.7, 3.0])
    back = hdp.grid_to_rho(*hdp.rho_to_grid(rho1, rho2))
    np.testing.assert_allclose(back[0], rho1, rtol=1e-12)
    np.testing.assert_allclose(back[1], rho2, rtol=1e-12)


def test_rho_grid_uniform_without_likelihood(rng):
    grid = RhoGrid()
    assert abs(np.exp(hdp.rho_grid_log_posterior(grid)).sum() - 1.0) < 1e-10
    phis = []
    for _ in range(20_000):
        rho1, rho2 = hdp.resample_rho_grid(rng, grid)
        phis.append(rho1 / (rho1 + rho2))
    assert abs(np.mean(phis) - 0.5) < 0.01


def test_rho_grid_follows_persistent_states():
    grid = RhoGrid()
    log_post = hdp.rho_grid_log_posterior(grid, kappa_initials=np.full(50, 0.9))
    phi_mean = float((np.exp(log_post).sum(axis=1) * grid.phi).sum())
    assert phi_mean > 0.7
    log_post = hdp.rho_grid_log_posterior(grid, stick_successes=[90, 80], stick_failures=[10, 20])
    assert float((np.exp(log_post).sum(axis=1) * grid.phi).sum()) > 0.7


def test_rho_grid_rejects_empty_grid():
    with pytest.raises(InputError):
        RhoGrid(n_phi=0)


def test_sticky_ratio_follows_overrides(rng):
    draws = [hdp.resample_sticky_ratio(90, 100, rng) for _ in range(2000)]
    assert 0.85 < np.mean(draws) < 0.92
    uniform = [hdp.resample_sticky_ratio(0, 0, rng) for _ in range(20_000)]
    assert abs(np.mean(uniform) - 0.5) < 0.01
