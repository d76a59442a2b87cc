#!/usr/bin/env python3

"""Joint-distribution test of the samplers.

Two simulators target the same joint distribution of parameters, latent
states and data:

* marginal-conditional: draw everything from the prior, then simulate data;
* successive-conditional: alternate one sampler sweep with a fresh draw of
  `(z, w, y)` given the parameters.

If every Gibbs step is correct the two sets of summary statistics agree in
distribution; each statistic is compared with a z-score whose successive side
uses batch-means standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import special

from segflow import hdp
from segflow.chain import sample_hyperparameters, sample_recurrence_prior, sweep
from segflow.emissions import EmissionState, EmissionTheta, make_emission
from segflow.errors import ConfigError
from segflow.kernels import MNIWParams, RngStream, sample_beta, sample_categorical, sample_dirichlet
from segflow.log import get_logger
from segflow.model import ChainState, LatentTrajectory, Model, ModelSettings, RecurrenceState, TransitionState
from segflow.recurrence import PGAuxiliaries, RecurrenceParams, resample_kappa_initial, sample_regression_prior

logger = get_logger(__name__)

GEWEKE_PRIOR = MNIWParams(M=np.zeros((1, 1)), V=np.eye(1), S0=5.0 * np.eye(1), n0=7.0)
"""Proper one-dimensional emission prior with finite fourth moments of the data."""


@dataclass
class GewekeConfig:
    """Tiny problem the harness runs on.

    Attributes:
        variant (str): Model variant.
        sampler (str): `'weak-limit'` or `'direct'`.
        T (int): Sequence length.
        n_states (int): Weak-limit truncation L.
        n_samples (int): Draws on each side.
        burnin (int): Successive-conditional sweeps discarded first.
        n_batches (int): Batches of the batch-means standard error.
        prior_var (float): Prior variance of the recurrence weights, wider
            than the fitting default so their updates are visible.
        family (str): Emission family.
        skip_steps (tuple): Sweep steps to leave out (mutation checks).
    """
    variant: str = 'rs-hdp'
    sampler: str = 'weak-limit'
    T: int = 20
    n_states: int = 3
    n_samples: int = 100_000
    burnin: int = 100
    n_batches: int = 50
    prior_var: float = 1.0
    family: str = 'gaussian'
    skip_steps: Tuple[str, ...] = ()

    def validate(self) -> GewekeConfig:
        if not 1 <= self.T <= 20:
            raise ConfigError('the joint-distribution test runs on 1 <= T <= 20')
        if not 1 <= self.n_states <= 3:
            raise ConfigError('the joint-distribution test runs on 1 <= n_states <= 3')
        if self.n_samples < 2 * self.n_batches:
            raise ConfigError('need at least two samples per batch')
        return self

    def model(self) -> Model:
        settings = ModelSettings(variant=self.variant, sampler=self.sampler, n_states=self.n_states,
                                 prior_var=self.prior_var, kappa_initial_update='prior',
                                 skip_steps=frozenset(self.skip_steps))
        return Model(settings, make_emission(self.family, GEWEKE_PRIOR))


@dataclass
class GewekeStatistic:
    name: str
    prior_mean: float
    prior_se: float
    gibbs_mean: float
    gibbs_se: float

    @property
    def z(self) -> float:
        scale = np.hypot(self.prior_se, self.gibbs_se)
        return float((self.prior_mean - self.gibbs_mean) / scale) if scale > 0 else 0.0


@dataclass
class GewekeReport:
    config: GewekeConfig
    statistics: List[GewekeStatistic] = field(default_factory=list)

    def z_scores(self) -> Dict[str, float]:
        return {s.name: s.z for s in self.statistics}

    def passed(self, threshold: float = 4.0) -> bool:
        return all(abs(s.z) < threshold for s in self.statistics)


# Forward simulation

def _next_input(observations: np.ndarray, t: int, mode: str) -> np.ndarray:
    """Regression input `x_t` from the observations simulated so far."""
    if mode == 'raw':
        return observations[t]
    if t == 0:
        return np.zeros(observations.shape[1])
    return observations[t] - observations[t - 1]


def _stick_logit(model: Model, params: RecurrenceParams, kappa_initial: np.ndarray, j: int,
                 x_prev: np.ndarray) -> float:
    settings = model.settings
    if settings.recurrent:
        return float(params.R[j] @ x_prev + params.r[j])
    if settings.disentangled:
        return float(kappa_initial[j])
    return -np.inf


def _draw_stick(logit: float, rng: RngStream) -> int:
    return int(rng.generator.random() < special.expit(logit))


def simulate_weak_limit(state: ChainState, model: Model, T: int, rng: RngStream) -> np.ndarray:
    """Draw `(z, w, y)` given the weak-limit parameters; writes `z, w` into `state`."""
    emission = model.emission
    theta = state.emission.theta
    rec = state.recurrence
    beta = state.transition.beta.beta
    pi_bar = state.transition.pi_bar.pi_bar
    z = np.zeros(T, dtype=np.int64)
    w = np.zeros(T, dtype=np.int64)
    y = np.zeros((T, emission.d))
    for t in range(T):
        if t == 0:
            z[t] = sample_categorical(beta, rng)
        else:
            prev = z[t - 1]
            x_prev = _next_input(y, t - 1, model.settings.input_mode)
            w[t] = _draw_stick(_stick_logit(model, rec.params, rec.kappa_initial, prev, x_prev), rng)
            z[t] = prev if w[t] else sample_categorical(pi_bar[prev], rng)
        k = z[t]
        y[t] = emission.sample_observation(theta.A[k], theta.Sigma[k], y[t - 1] if t else None, rng)
    state.latent = LatentTrajectory(z, w)
    return y


def simulate_direct(state: ChainState, model: Model, T: int, rng: RngStream) -> np.ndarray:
    """Draw `(z, w, y)` given the direct-assignment state.

    Transition rows stay integrated out, so switches follow the franchise
    predictive counts of the draws made so far. A draw of the unused slot
    creates a state exactly as the sweep does; states left without timesteps
    are dropped at the end and their weight returns to the remainder.
    """
    settings = model.settings
    emission = model.emission
    hyper = state.hyper
    rec = state.recurrence
    beta = state.transition.beta.beta.copy()
    params, kappa_initial = rec.params, rec.kappa_initial.copy()
    A, Sigma = state.emission.theta.A, state.emission.theta.Sigma
    K = beta.size - 1
    N = np.zeros((K + 1, K + 1))
    q = params.R.shape[1]

    def create():
        nonlocal beta, N, A, Sigma, params, kappa_initial, K
        b = float(sample_beta(1.0, hyper.gamma, rng))
        beta = np.append(beta[:-1], [b * beta[-1], (1.0 - b) * beta[-1]])
        N = np.pad(N, ((0, 1), (0, 1)))
        new = emission.sample_prior(1, rng)
        A, Sigma = np.concatenate([A, new.A]), np.concatenate([Sigma, new.Sigma])
        R_new, r_new = sample_regression_prior(q, settings.prior_var, rng) if settings.recurrent \
            else (np.zeros(q), 0.0)
        kappa_new = resample_kappa_initial(np.zeros(1), np.zeros(1), hyper.rho1, hyper.rho2, rng)[0] \
            if settings.disentangled else 0.0
        params = params.append(R_new, r_new)
        kappa_initial = np.append(kappa_initial, kappa_new)
        K += 1

    def switch_to(prev: Optional[int]) -> int:
        if prev is None:
            weights = beta
        else:
            weights = hyper.alpha * beta + N[prev]
            weights[prev] += hyper.kappa_sticky
        k = sample_categorical(weights, rng)
        if k == K:
            create()
        if prev is not None:
            N[prev, k] += 1
        return k

    z = np.zeros(T, dtype=np.int64)
    w = np.zeros(T, dtype=np.int64)
    y = np.zeros((T, emission.d))
    for t in range(T):
        if t == 0:
            z[t] = switch_to(None)
        else:
            prev = z[t - 1]
            x_prev = _next_input(y, t - 1, settings.input_mode)
            w[t] = _draw_stick(_stick_logit(model, params, kappa_initial, prev, x_prev), rng)
            z[t] = prev if w[t] else switch_to(prev)
        k = z[t]
        y[t] = emission.sample_observation(A[k], Sigma[k], y[t - 1] if t else None, rng)

    used = np.unique(z)
    unused = np.setdiff1d(np.arange(K), used)
    keep = np.append(used, K)
    beta[-1] += beta[unused].sum()
    relabel = np.zeros(K, dtype=np.int64)
    relabel[used] = np.arange(used.size)
    state.latent = LatentTrajectory(relabel[z], w)
    state.transition = TransitionState(hdp.GlobalWeights(beta[keep]), None, state.transition.counts)
    rec.params = params.take(keep)
    rec.kappa_initial = kappa_initial[keep]
    rec.eta = PGAuxiliaries(np.full((keep.size, max(T - 1, 0)), 0.25))
    state.emission.theta = EmissionTheta(A[used], Sigma[used])
    return y


def _sync(state: ChainState, model: Model, observations: np.ndarray) -> ChainState:
    """Recompute everything derived from the data and the labels."""
    rec = state.recurrence
    z, w = state.latent.z, state.latent.w
    n_states = state.n_states
    rec.schedule = model.schedule(rec.params, rec.kappa_initial, model.inputs(observations))
    state.emission.stats = model.emission.suffstats(observations, z, n_states)
    state.transition.counts = hdp.TransitionCounts(hdp.transition_counts(z, w, n_states, initial_row=True))
    return state


def sample_joint(model: Model, T: int, rng: RngStream) -> Tuple[ChainState, np.ndarray]:
    """Exact draw of the full state and data from the prior."""
    settings = model.settings
    emission = model.emission
    if settings.standardize:
        raise ConfigError('standardized regression inputs cannot be simulated forward')
    hyper = sample_hyperparameters(settings, rng)
    q = emission.d
    if settings.sampler == 'weak-limit':
        L = settings.n_states
        beta = sample_dirichlet(np.full(L, hyper.gamma / L), rng)
        pi_bar = hdp.resample_pi_bar(np.zeros((L, L)), hyper.alpha, beta, rng, kappa=hyper.kappa_sticky)
        n_slots = L
        theta = emission.sample_prior(L, rng)
    else:
        L = 0
        beta = np.ones(1)
        pi_bar = None
        n_slots = 1
        theta = emission.new_state(0).theta
    params, kappa_initial = sample_recurrence_prior(settings, hyper, n_slots, q, rng)
    state = ChainState(
        latent=LatentTrajectory(np.zeros(T), np.zeros(T)),
        transition=TransitionState(hdp.GlobalWeights(beta), pi_bar, hdp.TransitionCounts(np.zeros((L + 1, L)))),
        recurrence=RecurrenceState(params, kappa_initial, None,
                                   PGAuxiliaries(np.full((n_slots, max(T - 1, 0)), 0.25))),
        emission=EmissionState(emission.family, theta, emission.empty_stats(L)),
        hyper=hyper,
        rng=rng,
    )
    return state, regenerate(state, model, T)


def regenerate(state: ChainState, model: Model, T: int) -> np.ndarray:
    """Fresh `(z, w, y)` given the parameters in `state`."""
    if model.settings.sampler == 'weak-limit':
        observations = simulate_weak_limit(state, model, T, state.rng)
    else:
        observations = simulate_direct(state, model, T, state.rng)
    _sync(state, model, observations)
    return observations


# Statistics

def _entropy(z: np.ndarray) -> float:
    p = np.bincount(z) / z.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def joint_statistics(state: ChainState, model: Model, observations: np.ndarray) -> Dict[str, float]:
    """Summary statistics compared between the two simulators."""
    settings = model.settings
    hyper = state.hyper
    K = state.n_states
    stats = {'alpha': hyper.alpha, 'gamma': hyper.gamma,
             'occupancy_entropy': _entropy(state.latent.z),
             'data_mean': float(observations.mean()), 'data_var': float(observations.var())}
    if settings.sticky:
        stats['kappa_sticky'] = hyper.kappa_sticky
    if settings.disentangled:
        stats['mean_kappa_initial'] = float(special.expit(state.recurrence.kappa_initial[:K]).mean())
        stats['rho_mean'] = hyper.rho1 / (hyper.rho1 + hyper.rho2)
    if settings.recurrent:
        stats['mean_R'] = float(state.recurrence.params.R[:K].mean())
        stats['mean_r'] = float(state.recurrence.params.r[:K].mean())
        stats['mean_R_sq'] = float((state.recurrence.params.R[:K]**2).mean())
        stats['mean_r_sq'] = float((state.recurrence.params.r[:K]**2).mean())
    if settings.sampler == 'direct':
        stats['n_states'] = float(K)
    return stats


def _batch_means_se(values: np.ndarray, n_batches: int) -> float:
    usable = values[:values.size - values.size % n_batches]
    means = usable.reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def geweke_test(config: GewekeConfig, rng: RngStream,
                progress: Optional[Callable[[int], None]] = None) -> GewekeReport:
    """Compare both simulators on the tracked statistics.

    Args:
        config (GewekeConfig): Tiny problem and sample sizes.
        rng (RngStream): Stream for both simulators.
        progress (callable, optional): Called with the number of finished
            successive-conditional steps every 1000 steps.

    Returns:
        GewekeReport: Means, standard errors and z-scores per statistic.
    """
    config.validate()
    model = config.model()

    prior_draws: Dict[str, List[float]] = {}
    for _ in range(config.n_samples):
        state, observations = sample_joint(model, config.T, rng)
        for name, value in joint_statistics(state, model, observations).items():
            prior_draws.setdefault(name, []).append(value)

    gibbs_draws: Dict[str, List[float]] = {}
    state, observations = sample_joint(model, config.T, rng)
    for step in range(config.burnin + config.n_samples):
        state, _ = sweep(state, model, observations)
        observations = regenerate(state, model, config.T)
        if step >= config.burnin:
            for name, value in joint_statistics(state, model, observations).items():
                gibbs_draws.setdefault(name, []).append(value)
        if progress is not None and (step + 1) % 1000 == 0:
            progress(step + 1)

    report = GewekeReport(config)
    for name, values in prior_draws.items():
        prior = np.asarray(values)
        gibbs = np.asarray(gibbs_draws[name])
        report.statistics.append(GewekeStatistic(
            name=name,
            prior_mean=float(prior.mean()),
            prior_se=float(prior.std(ddof=1) / np.sqrt(prior.size)),
            gibbs_mean=float(gibbs.mean()),
            gibbs_se=_batch_means_se(gibbs, config.n_batches),
        ))
    logger.info(f'joint-distribution test of {config.variant}/{config.sampler}: '
                f'max |z| = {max(abs(s.z) for s in report.statistics):.2f}')
    return report
