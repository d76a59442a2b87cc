#!/usr/bin/env python3

"""Property suites behind `segflow verify`.

Every suite returns a list of `Check`s comparing a measured quantity against
an acceptance threshold. `run_suite` prints the report and raises
`VerificationError` if any check failed.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

import segflow.output as sfout
from segflow.emissions import AutoRegressiveEmission, GaussianEmission
from segflow.errors import ConfigError, VerificationError
from segflow.forward_backward import backward_messages, log_joint, log_marginal_enumeration, sample_latent
from segflow.geweke import GewekeConfig, geweke_test
from segflow.kernels import MNIWParams, RngStream, sample_inverse_wishart, sample_polya_gamma_array
from segflow.log import get_logger
from segflow.recurrence import KappaSchedule

logger = get_logger(__name__)

PG_TILTS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
"""Tilts at which the Polya-Gamma moments are checked."""

SERIES_TERMS = 10_000


@dataclass
class Check:
    name: str
    measured: float
    threshold: str
    passed: bool


# Polya-Gamma

def pg_mean(c: float) -> float:
    """E[PG(1, c)] = tanh(c/2) / (2c), 1/4 at c = 0."""
    return 0.25 if c == 0 else math.tanh(c / 2) / (2 * c)


def pg_series_moments(c: float, n_terms: int = SERIES_TERMS) -> Tuple[float, float]:
    """Mean and variance of the truncated sum-of-exponentials representation.

    PG(1, c) is `1/(2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2/(4 pi^2))` with
    `g_k ~ Exp(1)`.
    """
    k = np.arange(1, n_terms + 1)
    denominators = (k - 0.5) ** 2 + c ** 2 / (4 * math.pi ** 2)
    mean = (1.0 / denominators).sum() / (2 * math.pi ** 2)
    var = (1.0 / denominators ** 2).sum() / (4 * math.pi ** 4)
    return float(mean), float(var)


def pg_checks(rng: RngStream, n_samples: int = 1_000_000, tilts=PG_TILTS) -> List[Check]:
    """Empirical PG(1, c) mean within 3 SE and variance within 5% of the oracles."""
    checks = []
    for c in tilts:
        draws = sample_polya_gamma_array(np.full(n_samples, c), rng)
        se = draws.std(ddof=1) / math.sqrt(n_samples)
        z = (draws.mean() - pg_mean(c)) / se
        checks.append(Check(f'pg mean c={c:g} (z)', float(z), '|z| < 3', abs(z) < 3))
        _, var = pg_series_moments(c)
        rel = abs(draws.var(ddof=1) - var) / var
        checks.append(Check(f'pg variance c={c:g} (rel. error)', float(rel), '< 0.05', rel < 0.05))
    return checks


# Conjugacy

def conjugacy_checks(rng: RngStream, n_points: int = 100_000, n_draws: int = 20_000) -> List[Check]:
    """MNIW posterior against OLS, zero-data posteriors and prior moments."""
    checks = []

    A_true = np.array([[0.9, 0.1], [-0.2, 0.8]])
    noise = np.linalg.cholesky(np.array([[0.1, 0.02], [0.02, 0.05]]))
    y = np.zeros((n_points, 2))
    for t in range(1, n_points):
        y[t] = A_true @ y[t - 1] + noise @ rng.normal(2)
    ar = AutoRegressiveEmission(MNIWParams(M=np.zeros((2, 2)), V=np.eye(2), S0=np.eye(2), n0=4.0))
    stats = ar.suffstats(y, np.zeros(n_points, dtype=np.int64), 1)
    ols = stats.Syx[0] @ np.linalg.inv(stats.Sxx[0])
    distance = np.linalg.norm(ar.posterior(stats).Mn[0] - ols)
    checks.append(Check('ar1 posterior mean vs OLS (Frobenius)', float(distance), '< 0.01', distance < 0.01))

    prior = MNIWParams(M=np.array([[0.5, -0.3]]), V=np.diag([2.0, 0.5]), S0=np.array([[1.5]]), n0=9.0)
    ar = AutoRegressiveEmission(prior)
    post = ar.posterior(ar.empty_stats(1))
    gap = max(np.abs(post.Mn[0] - prior.M).max(), np.abs(post.Vn[0] - prior.V).max(),
              np.abs(post.Sn[0] - prior.S0).max(), abs(post.nn[0] - prior.n0))
    checks.append(Check('zero-data posterior equals prior (max gap)', float(gap), '< 1e-10', gap < 1e-10))

    gaussian = GaussianEmission(MNIWParams(M=np.array([[1.0], [-2.0]]), V=np.array([[0.5]]),
                                           S0=np.array([[2.0, 0.3], [0.3, 1.0]]), n0=10.0))
    theta = gaussian.sample_prior(n_draws, rng)
    means = theta.A[:, :, 0]
    z = (means.mean(axis=0) - gaussian.prior.M[:, 0]) / (means.std(axis=0, ddof=1) / math.sqrt(n_draws))
    worst = float(np.abs(z).max())
    checks.append(Check('prior mean draws (max |z|)', worst, '< 3', worst < 3))

    S0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    n0 = 10.0
    draws = np.stack([sample_inverse_wishart(S0, n0, rng) for _ in range(n_draws)])
    expected = S0 / (n0 - 2 - 1)
    z = (draws.mean(axis=0) - expected) / (draws.std(axis=0, ddof=1) / math.sqrt(n_draws))
    worst = float(np.abs(z).max())
    checks.append(Check('inverse-Wishart mean (max |z|)', worst, '< 3', worst < 3))
    return checks


# Forward-backward against enumeration

def enumerate_trajectories(T: int, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """Every legal `(z, w)` pair: a stick never changes the state."""
    zs, ws = [], []
    for z in itertools.product(range(L), repeat=T):
        for w in itertools.product((0, 1), repeat=T - 1):
            if all(not stick or z[t + 1] == z[t] for t, stick in enumerate(w)):
                zs.append(z)
                ws.append((0,) + w)
    return np.array(zs, dtype=np.int64).reshape(-1, T), np.array(ws, dtype=np.int64).reshape(-1, T)


def _trajectory_keys(z: np.ndarray, w: np.ndarray, L: int) -> np.ndarray:
    T = z.shape[1]
    return (z @ L ** np.arange(T)) * 2 ** T + w @ 2 ** np.arange(T)


def random_instance(rng: RngStream, T: int, L: int):
    """Random emissions, weights and schedule of one enumeration instance."""
    generator = rng.generator
    log_lik = 2.0 * generator.standard_normal((T, L))
    beta = generator.dirichlet(np.ones(L))
    pi_bar = generator.dirichlet(np.full(L, 0.5), size=L)
    schedule = KappaSchedule(generator.normal(0.0, 1.5, size=(L, T)))
    return log_lik, beta, pi_bar, schedule


def fb_oracle_checks(rng: RngStream, n_instances: int = 50, max_T: int = 6, max_L: int = 3,
                     n_draws: int = 1_000_000) -> List[Check]:
    """Message log-marginals and sampled trajectories against brute force."""
    checks = []
    for i in range(n_instances):
        T = int(rng.generator.integers(1, max_T + 1))
        L = int(rng.generator.integers(1, max_L + 1))
        log_lik, beta, pi_bar, schedule = random_instance(rng, T, L)
        trajectories = enumerate_trajectories(T, L)

        messages = backward_messages(log_lik, beta, pi_bar, schedule)
        exact = log_marginal_enumeration(log_lik, beta, pi_bar, schedule, trajectories)
        gap = abs(messages.log_marginal - exact)
        checks.append(Check(f'instance {i} T={T} L={L} log-marginal gap', gap, '< 1e-10', gap < 1e-10))

        probs = np.exp([log_joint(z, w, log_lik, beta, pi_bar, schedule) - exact for z, w in zip(*trajectories)])
        keys = _trajectory_keys(*trajectories, L)
        z, w = sample_latent(messages, beta, pi_bar, schedule, rng, n_draws=n_draws)
        sampled, counts = np.unique(_trajectory_keys(z, w, L), return_counts=True)
        order = np.argsort(keys)
        index = np.minimum(np.searchsorted(keys[order], sampled), keys.size - 1)
        known = keys[order][index] == sampled
        empirical = np.zeros(keys.size)
        empirical[order[index[known]]] = counts[known] / n_draws
        tv = 0.5 * (np.abs(empirical - probs).sum() + counts[~known].sum() / n_draws)
        checks.append(Check(f'instance {i} T={T} L={L} total variation', float(tv), '< 0.01', tv < 0.01))
    return checks


# Joint-distribution test

def geweke_checks(rng: RngStream, variant: str = 'rs-hdp', sampler: str = 'weak-limit',
                  n_samples: int = 100_000, threshold: float = 4.0) -> List[Check]:
    config = GewekeConfig(variant=variant, sampler=sampler, n_samples=n_samples)

    def progress(step):
        logger.debug(f'successive-conditional step {step} of {config.burnin + n_samples}')

    report = geweke_test(config, rng, progress=progress)
    return [Check(f'{variant}/{sampler} {s.name} (z)', s.z, f'|z| < {threshold:g}', abs(s.z) < threshold)
            for s in report.statistics]


SUITES: Dict[str, Callable[..., List[Check]]] = {
    'pg': pg_checks,
    'conjugacy': conjugacy_checks,
    'fb-oracle': fb_oracle_checks,
    'geweke': geweke_checks,
}
"""Suites runnable through `segflow verify`."""


def run_suite(name: str, seed: int = 0, **kwargs) -> List[Check]:
    """Run one suite, print its report and fail loudly.

    Args:
        name (str): One of `SUITES`.
        seed (int): Seed of the suite's random stream.
        **kwargs: Passed on to the suite, e.g. `n_samples`.

    Raises:
        ConfigError: On an unknown suite.
        VerificationError: If at least one check failed.
    """
    if name not in SUITES:
        raise ConfigError(f'unknown suite "{name}", expected one of {tuple(SUITES)}')
    sfout.small_banner(f'Verifying "{name}"')
    checks = SUITES[name](RngStream(seed), **kwargs)
    for check in checks:
        sfout.check(check.name, check.measured, check.threshold, check.passed)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise VerificationError(f'{len(failed)} of {len(checks)} checks failed: {", ".join(failed)}')
    sfout.info(f'All {len(checks)} checks passed.')
    return checks
