#!/usr/bin/env python3

"""Weak-limit blocked Gibbs sweep.

One sweep refreshes, in order:

    1. `(z, w)` jointly by backward filtering and forward sampling,
    2. `kappa_{j,1}` and the persistence schedule,
    3. the Polya-Gamma auxiliaries,
    4. table counts, `beta`, the concentrations and `pi_bar`,
    5. the emission parameters,
    6. `(rho1, rho2)` and the regression weights, then the schedule again.

Variants switch steps off: the plain HDP-HMM has no stick branch, the sticky
model folds its self-transition mass into `pi_bar`, the disentangled model
keeps one constant persistence per state and only the recurrent model
regresses the persistence on the observations.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy import special

from segflow import hdp
from segflow.forward_backward import forward_backward
from segflow.log import get_logger
from segflow.model import ChainState, Model, SweepDiagnostics, TransitionState, sweep_diagnostics
from segflow.recurrence import resample_kappa_initial, resample_pg_auxiliaries, resample_regressions, stick_counts

logger = get_logger(__name__)


def _refresh_schedule(state: ChainState, model: Model, inputs: np.ndarray):
    if 'kappa' in model.settings.skip_steps:
        return
    rec = state.recurrence
    rec.schedule = model.schedule(rec.params, rec.kappa_initial, inputs)


def _resample_transitions(state: ChainState, model: Model, rng) -> None:
    """Table counts, then `beta`, the concentrations and finally `pi_bar`."""
    settings = model.settings
    hyper = state.hyper
    L = state.n_states
    latent = state.latent
    n = hdp.transition_counts(latent.z, latent.w, L, initial_row=True)
    beta = state.transition.beta.beta

    if settings.sticky:
        m = hdp.sample_table_counts(n, hyper.alpha, beta, rng, kappa=hyper.kappa_sticky, row_offset=1)
        rho = hyper.kappa_sticky / (hyper.alpha + hyper.kappa_sticky)
        m_bar, overrides = hdp.apply_override(m, rho, beta, rng, row_offset=1)
    else:
        m = hdp.sample_table_counts(n, hyper.alpha, beta, rng)
        m_bar, overrides = m, None

    new_beta = hdp.resample_beta_weaklimit(m_bar, hyper.gamma, L, rng)
    state.hyper = hyper = hdp.resample_alpha_gamma(
        hdp.TransitionCounts(n, m), hyper, settings.alpha_prior, settings.gamma_prior, rng,
        m_bar=m_bar, overrides=overrides, beta=new_beta.beta, sticky_cells=settings.sticky_cells)

    pi_bar = hdp.resample_pi_bar(n[1:], hyper.alpha, new_beta.beta, rng, kappa=hyper.kappa_sticky)
    state.transition = TransitionState(new_beta, pi_bar, hdp.TransitionCounts(n, m))


def _resample_persistence_prior(state: ChainState, model: Model, rng) -> None:
    """Grid refresh of `(rho1, rho2)`.

    The disentangled model integrates its constant `kappa_j` out of the
    beta-binomial likelihood, so `kappa_j` is redrawn right after.
    """
    settings = model.settings
    hyper = state.hyper
    rec = state.recurrence
    if settings.recurrent:
        hyper.rho1, hyper.rho2 = hdp.resample_rho_grid(
            rng, settings.grid, kappa_initials=special.expit(rec.kappa_initial))
    elif settings.disentangled:
        sticks, switches = stick_counts(state.latent.z, state.latent.w, state.n_states)
        hyper.rho1, hyper.rho2 = hdp.resample_rho_grid(
            rng, settings.grid, stick_successes=sticks, stick_failures=switches)
        rec.kappa_initial = resample_kappa_initial(sticks, switches, hyper.rho1, hyper.rho2, rng)


def _resample_kappa_initial(state: ChainState, model: Model, rng) -> None:
    settings = model.settings
    hyper = state.hyper
    L = state.n_states
    sticks, switches = stick_counts(state.latent.z, state.latent.w, L)
    if settings.recurrent and settings.kappa_initial_update == 'prior':
        sticks, switches = np.zeros(L), np.zeros(L)
    state.recurrence.kappa_initial = resample_kappa_initial(sticks, switches, hyper.rho1, hyper.rho2, rng)


def weaklimit_sweep(state: ChainState, model: Model, observations: np.ndarray) -> Tuple[ChainState, SweepDiagnostics]:
    """Run one weak-limit sweep in place.

    Args:
        state (ChainState): Current chain state, updated in place.
        model (Model): Variant settings and emission family.
        observations (numpy.ndarray): (T, d) observations.

    Returns:
        tuple: The updated state and the sweep diagnostics.

    Raises:
        NumericalError: If the forward-backward messages vanish.
    """
    settings = model.settings
    rng = state.rng
    inputs = model.inputs(observations)
    rec = state.recurrence

    log_lik = model.emission.log_likelihood_matrix(state.emission.theta, observations)
    z, w, _ = forward_backward(log_lik, state.transition.beta.beta, state.transition.pi_bar.pi_bar,
                               rec.schedule, rng)
    state.latent.z, state.latent.w = z, w

    if settings.disentangled:
        _resample_kappa_initial(state, model, rng)
        _refresh_schedule(state, model, inputs)

    if settings.recurrent and 'pg' not in settings.skip_steps:
        rec.eta = resample_pg_auxiliaries(rec.params, inputs, rng)

    _resample_transitions(state, model, rng)

    stats = model.emission.suffstats(observations, z, state.n_states)
    state.emission.stats = stats
    state.emission.theta = model.emission.sample_all(stats, rng)

    _resample_persistence_prior(state, model, rng)
    if settings.recurrent:
        rec.params = resample_regressions(rec.params, inputs, z, w, rec.eta, rng)
    if settings.disentangled:
        _refresh_schedule(state, model, inputs)

    state.sweep += 1
    diagnostics = sweep_diagnostics(state, model, observations)
    logger.debug(f'weak-limit sweep {state.sweep}: {diagnostics.n_states_used} of {state.n_states} states used, '
                 f'loglik {diagnostics.joint_loglik:.3f}')
    return state, diagnostics
