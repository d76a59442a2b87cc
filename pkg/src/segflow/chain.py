#!/usr/bin/env python3

"""Chain initialization and the sweep loop with burn-in and thinning."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from segflow import hdp
from segflow.direct_assignment import direct_assignment_sweep
from segflow.emissions import EmissionState
from segflow.errors import ConfigError, InputError
from segflow.kernels import RngStream, sample_dirichlet, sample_gamma
from segflow.log import get_logger
from segflow.metrics import align_labels
from segflow.model import (ChainState, LatentTrajectory, Model, ModelSettings, RecurrenceState, SweepDiagnostics,
                           TransitionState, joint_log_likelihood)
from segflow.recurrence import (PGAuxiliaries, RecurrenceParams, resample_kappa_initial, resample_pg_auxiliaries,
                                sample_regression_prior)
from segflow.weak_limit import weaklimit_sweep

__all__ = ['ChainSettings', 'ChainResult', 'sample_hyperparameters', 'sample_recurrence_prior', 'init_chain',
           'sweep', 'run_chain', 'modal_states', 'joint_log_likelihood']

logger = get_logger(__name__)


@dataclass
class ChainSettings:
    """Length of a chain and what is kept of it.

    Attributes:
        iterations (int): Total number of sweeps.
        burnin (int): Sweeps discarded before the first saved sample.
        thin (int): Save every `thin`-th sweep after burn-in.
        log_interval (int): Log a progress line every this many sweeps.
    """
    iterations: int = 500
    burnin: int = 200
    thin: int = 1
    log_interval: int = 50

    def validate(self) -> ChainSettings:
        if self.iterations < 1:
            raise ConfigError('iterations must be at least one')
        if not 0 <= self.burnin < self.iterations:
            raise ConfigError(f'burn-in ({self.burnin}) must be smaller than iterations ({self.iterations})')
        if self.thin < 1:
            raise ConfigError('thin must be at least one')
        if self.thin > self.iterations - self.burnin:
            raise ConfigError(f'thin ({self.thin}) leaves no saved sweep after burn-in '
                              f'({self.burnin} of {self.iterations})')
        if self.log_interval < 1:
            raise ConfigError('log_interval must be at least one')
        return self

    def is_saved(self, sweep: int) -> bool:
        """Whether the state after 1-based `sweep` is a posterior sample."""
        return sweep > self.burnin and (sweep - self.burnin) % self.thin == 0


@dataclass
class ChainResult:
    """Everything a chain produced.

    Attributes:
        trace (list): Diagnostics of every sweep.
        snapshots (list): Serialized states of the saved sweeps.
        samples (numpy.ndarray): (S, T) state sequences of the saved sweeps.
        modal (numpy.ndarray): (T,) per-timestep mode after label alignment.
        state (ChainState): Final state.
        elapsed (float): Wall-clock seconds spent sweeping.
    """
    trace: List[SweepDiagnostics]
    snapshots: List[Dict[str, Any]]
    samples: np.ndarray
    modal: np.ndarray
    state: ChainState
    elapsed: float = 0.0
    sample_sweeps: List[int] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([d.as_dict() for d in self.trace])


def sample_hyperparameters(settings: ModelSettings, rng: RngStream) -> hdp.HyperParams:
    """Draw every hyperparameter the variant uses from its prior."""
    hyper = hdp.HyperParams(gamma=float(sample_gamma(settings.gamma_prior.shape, settings.gamma_prior.rate, rng)))
    concentration = float(sample_gamma(settings.alpha_prior.shape, settings.alpha_prior.rate, rng))
    if settings.sticky:
        ratio = hdp.resample_sticky_ratio(0, 0, rng, settings.sticky_cells)
        hyper.alpha, hyper.kappa_sticky = (1.0 - ratio) * concentration, ratio * concentration
    else:
        hyper.alpha = concentration
    if settings.disentangled:
        hyper.rho1, hyper.rho2 = hdp.resample_rho_grid(rng, settings.grid)
    return hyper


def sample_recurrence_prior(settings: ModelSettings, hyper: hdp.HyperParams, n_slots: int, q: int,
                            rng: RngStream) -> tuple:
    """Prior draws of the regression weights and `kappa_{j,1}` logits of `n_slots` states."""
    params = RecurrenceParams.zeros(n_slots, q, settings.prior_var)
    if settings.recurrent:
        for j in range(n_slots):
            params.R[j], params.r[j] = sample_regression_prior(q, settings.prior_var, rng)
    if settings.disentangled:
        kappa_initial = resample_kappa_initial(np.zeros(n_slots), np.zeros(n_slots), hyper.rho1, hyper.rho2, rng)
    else:
        kappa_initial = np.zeros(n_slots)
    return params, kappa_initial


def init_chain(model: Model, observations: np.ndarray, rng: RngStream) -> ChainState:
    """Initial chain state.

    Hyperparameters, global weights and persistence come from the prior. The
    weak-limit sampler starts from uniformly random labels over L states; the
    direct-assignment sampler starts with every timestep in one state. The
    emission parameters are drawn given those labels.
    """
    settings = model.settings
    observations = np.asarray(observations, dtype=float)
    T = observations.shape[0]
    inputs = model.inputs(observations)
    hyper = sample_hyperparameters(settings, rng)

    if settings.sampler == 'weak-limit':
        L = settings.n_states
        n_slots = L
        z = rng.generator.integers(L, size=T)
        beta = sample_dirichlet(np.full(L, hyper.gamma / L), rng)
        pi_bar = hdp.resample_pi_bar(np.zeros((L, L)), hyper.alpha, beta, rng, kappa=hyper.kappa_sticky)
    else:
        L = 1
        n_slots = L + 1
        z = np.zeros(T, dtype=np.int64)
        beta = hdp.stick_breaking(hyper.gamma, L, rng)
        pi_bar = None
    w = np.zeros(T, dtype=np.int64)

    params, kappa_initial = sample_recurrence_prior(settings, hyper, n_slots, inputs.shape[1], rng)
    eta = PGAuxiliaries(np.full((n_slots, max(T - 1, 0)), 0.25))
    if settings.recurrent:
        eta = resample_pg_auxiliaries(params, inputs, rng)

    stats = model.emission.suffstats(observations, z, L)
    theta = model.emission.sample_all(stats, rng)
    counts = hdp.TransitionCounts(hdp.transition_counts(z, w, L, initial_row=True))
    return ChainState(
        latent=LatentTrajectory(z, w),
        transition=TransitionState(hdp.GlobalWeights(beta), pi_bar, counts),
        recurrence=RecurrenceState(params, kappa_initial, model.schedule(params, kappa_initial, inputs), eta),
        emission=EmissionState(model.emission.family, theta, stats),
        hyper=hyper,
        rng=rng,
    )


def sweep(state: ChainState, model: Model, observations: np.ndarray):
    """One sweep of the configured sampler."""
    if model.settings.sampler == 'weak-limit':
        return weaklimit_sweep(state, model, observations)
    return direct_assignment_sweep(state, model, observations)


def modal_states(samples: np.ndarray) -> np.ndarray:
    """Per-timestep most frequent label across samples.

    Every sample is aligned to the last one first; labels the alignment leaves
    unmatched get fresh ids so they never vote for a matched label.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    if samples.size == 0:
        raise InputError('modal states need at least one saved sample')
    reference = samples[-1]
    next_label = int(reference.max()) + 1
    aligned = np.empty_like(samples)
    for i, sample in enumerate(samples):
        matching = align_labels(sample, reference).matching
        labels = np.unique(sample)
        for label in labels:
            if int(label) not in matching:
                matching[int(label)] = next_label
                next_label += 1
        lookup = np.array([matching[int(label)] for label in labels])
        aligned[i] = lookup[np.searchsorted(labels, sample)]
    votes = np.zeros((next_label, samples.shape[1]), dtype=np.int64)
    np.add.at(votes, (aligned, np.broadcast_to(np.arange(samples.shape[1]), aligned.shape)), 1)
    return votes.argmax(axis=0)


def run_chain(model: Model, observations: np.ndarray, rng: RngStream, settings: ChainSettings,
              state: Optional[ChainState] = None,
              callback: Optional[Callable[[SweepDiagnostics], None]] = None) -> ChainResult:
    """Run sweeps, record diagnostics and keep the thinned post-burn-in samples.

    Args:
        model (Model): Variant, sampler and emission family.
        observations (numpy.ndarray): (T, d) observations.
        rng (RngStream): Stream of this chain; ignored when `state` is given.
        settings (ChainSettings): Iterations, burn-in and thinning.
        state (ChainState, optional): Resume from this state instead of
            initializing; sweep numbering continues from `state.sweep`.
        callback (callable, optional): Called with the diagnostics of every
            sweep, e.g. to mirror the trace to an experiment tracker.

    Returns:
        ChainResult: Trace, samples, modal sequence and final state.

    Raises:
        ConfigError: If burn-in is not smaller than the number of iterations.
    """
    settings.validate()
    observations = np.asarray(observations, dtype=float)
    if state is None:
        state = init_chain(model, observations, rng)
    first = state.sweep

    trace, snapshots, samples, sample_sweeps = [], [], [], []
    start = time.perf_counter()
    for _ in range(settings.iterations):
        state, diagnostics = sweep(state, model, observations)
        trace.append(diagnostics)
        if callback is not None:
            callback(diagnostics)
        done = state.sweep - first
        if settings.is_saved(done):
            snapshots.append(state.to_dict(model.settings.variant, model.settings.sampler))
            samples.append(state.latent.z.copy())
            sample_sweeps.append(state.sweep)
        if done % settings.log_interval == 0:
            logger.info(f'sweep {state.sweep}: loglik {diagnostics.joint_loglik:.2f}, '
                        f'{diagnostics.n_states_used} states, {diagnostics.n_switches} switches')
    elapsed = time.perf_counter() - start

    samples = np.array(samples, dtype=np.int64)
    return ChainResult(trace=trace, snapshots=snapshots, samples=samples, modal=modal_states(samples),
                       state=state, elapsed=elapsed, sample_sweeps=sample_sweeps)
