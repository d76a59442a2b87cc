#!/usr/bin/env python3

"""Direct-assignment collapsed Gibbs sweep.

Transition rows and emission parameters are integrated out. Each timestep
draws `(z_t, w_t, w_{t+1})` jointly from a categorical over the legal
configurations, with the transition rows replaced by predictive count ratios

    P(a -> b) = (alpha beta_b + kappa [a == b] + n_ab) / (alpha + kappa + n_a.)

(`kappa` is the sticky mass, zero except for the sticky model) and the
emission replaced by the collapsed predictive density. Choosing the unused
slot creates a state; a state whose last timestep leaves is pruned at once.
State K (0-based) is always the unused slot, which carries its own prior
draws of the persistence parameters.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy import special

from segflow import hdp
from segflow.emissions import EmissionModel
from segflow.errors import ConsistencyError
from segflow.kernels import RngStream, sample_beta, sample_categorical_log
from segflow.log import get_logger
from segflow.model import ChainState, Model, SweepDiagnostics, TransitionState, sweep_diagnostics
from segflow.recurrence import (KappaSchedule, PGAuxiliaries, RecurrenceParams, resample_kappa_initial,
                                resample_pg_auxiliaries, resample_regressions, sample_regression_prior,
                                stick_counts)

logger = get_logger(__name__)


class _Assignment:
    """Mutable bookkeeping of one direct-assignment pass.

    Attributes:
        K (int): Number of active states; index K is the unused slot.
        N (numpy.ndarray): (K+1, K+1) switch counts, last row and column zero.
        occupancy (numpy.ndarray): (K,) timesteps per active state.
        stats (SufficientStats): Emission statistics of K+1 states.
    """

    def __init__(self, state: ChainState, model: Model, observations: np.ndarray, inputs: np.ndarray):
        self.model = model
        self.emission: EmissionModel = model.emission
        self.observations = observations
        self.inputs = inputs
        self.state = state
        self.rng: RngStream = state.rng
        self.z = state.latent.z.copy()
        self.w = state.latent.w.copy()
        self.K = state.n_states
        self.beta = state.transition.beta.beta.copy()
        counts = hdp.transition_counts(self.z, self.w, self.K)
        self.N = np.zeros((self.K + 1, self.K + 1), dtype=np.int64)
        self.N[:self.K, :self.K] = counts
        self.occupancy = np.bincount(self.z, minlength=self.K)
        stats = self.emission.suffstats(observations, self.z, self.K)
        stats.append_state()
        self.stats = stats
        self.post = self.emission.posterior(stats)
        rec = state.recurrence
        self.params = rec.params
        self.kappa_initial = rec.kappa_initial.copy()
        self.log_kappa = rec.schedule.log_kappa
        self.log_stay = rec.schedule.log_one_minus_kappa

    # Emission statistics

    def _y_prev(self, t: int):
        return self.observations[t - 1] if t > 0 else None

    def _move_point(self, t: int, j: int, sign: float):
        x = self.emission.regressor(self._y_prev(t))
        if x is not None:
            self.stats.add(j, self.observations[t], x, sign)
            self._refresh(j)

    def _refresh(self, j: int):
        single = self.emission.posterior(self.stats.take([j]))
        for name in ('Mn', 'Vn', 'Sn', 'nn', 'chol', 'logdet'):
            getattr(self.post, name)[j] = getattr(single, name)[0]

    # Transition counts

    def _change_transitions(self, t: int, delta: int, sweep: int):
        T = self.z.size
        k = self.z[t]
        if t > 0 and self.w[t] == 0:
            self.N[self.z[t - 1], k] += delta
        if t + 1 < T and self.w[t + 1] == 0:
            self.N[k, self.z[t + 1]] += delta
        if np.any(self.N < 0):
            raise ConsistencyError('negative transition count', sweep=sweep, t=t)

    def remove(self, t: int, sweep: int):
        """Take timestep t out of every count; prune its state if it empties."""
        j = self.z[t]
        self._change_transitions(t, -1, sweep)
        self._move_point(t, j, -1.0)
        self.occupancy[j] -= 1
        if self.occupancy[j] < 0:
            raise ConsistencyError(f'negative occupancy of state {j}', sweep=sweep, t=t)
        self.z[t] = -1
        if self.occupancy[j] == 0:
            self._prune(j, sweep, t)

    def _prune(self, j: int, sweep: int, t: int):
        if self.N[j].any() or self.N[:, j].any():
            raise ConsistencyError(f'empty state {j} still has transitions', sweep=sweep, t=t)
        keep = np.delete(np.arange(self.K + 1), j)
        self.beta[-1] += self.beta[j]
        self.beta = self.beta[keep]
        self.N = self.N[np.ix_(keep, keep)]
        self.occupancy = np.delete(self.occupancy, j)
        self.stats = self.stats.take(keep)
        self.post = self.emission.posterior(self.stats)
        self.kappa_initial = self.kappa_initial[keep]
        self.params = self.params.take(keep)
        self.log_kappa = self.log_kappa[keep]
        self.log_stay = self.log_stay[keep]
        self.z[self.z > j] -= 1
        self.K -= 1

    def _create(self):
        """Promote the unused slot to an active state and draw a fresh slot."""
        settings = self.model.settings
        hyper = self.state.hyper
        b = float(sample_beta(1.0, hyper.gamma, self.rng))
        remainder = self.beta[-1]
        self.beta = np.append(self.beta[:-1], [b * remainder, (1.0 - b) * remainder])
        self.N = np.pad(self.N, ((0, 1), (0, 1)))
        self.occupancy = np.append(self.occupancy, 0)
        self.stats.append_state()
        self.post = self.emission.posterior(self.stats)

        kappa_new = resample_kappa_initial(np.zeros(1), np.zeros(1), hyper.rho1, hyper.rho2, self.rng)
        R_new, r_new = (sample_regression_prior(self.params.R.shape[1], self.params.prior_var, self.rng)
                        if settings.recurrent else (np.zeros(self.params.R.shape[1]), 0.0))
        slot = RecurrenceParams(R_new[None], np.array([r_new]), self.params.prior_var)
        row = self.model.schedule(slot, kappa_new, self.inputs)
        self.kappa_initial = np.append(self.kappa_initial, kappa_new)
        self.params = self.params.append(R_new, r_new)
        self.log_kappa = np.vstack([self.log_kappa, row.log_kappa])
        self.log_stay = np.vstack([self.log_stay, row.log_one_minus_kappa])
        self.K += 1

    # Case weights

    def log_transition_row(self, a: int) -> np.ndarray:
        """`log P(a -> b)` for every b in 0..K."""
        hyper = self.state.hyper
        numer = hyper.alpha * self.beta + self.N[a]
        numer[a] += hyper.kappa_sticky
        with np.errstate(divide='ignore'):
            return np.log(numer) - np.log(hyper.alpha + hyper.kappa_sticky + self.N[a].sum())

    def log_transition_column(self, b: int) -> np.ndarray:
        """`log P(a -> b)` for every a in 0..K."""
        hyper = self.state.hyper
        numer = hyper.alpha * self.beta[b] + self.N[:, b].astype(float)
        numer[b] += hyper.kappa_sticky
        with np.errstate(divide='ignore'):
            return np.log(numer) - np.log(hyper.alpha + hyper.kappa_sticky + self.N.sum(axis=1))

    def log_double_self(self, j: int, l: int) -> float:
        """`log` of drawing `j -> j` then `j -> l` from the same row."""
        hyper = self.state.hyper
        kappa = hyper.kappa_sticky
        total = hyper.alpha + kappa + self.N[j].sum()
        first = hyper.alpha * self.beta[j] + kappa + self.N[j, j]
        second = hyper.alpha * self.beta[l] + kappa * (j == l) + self.N[j, l] + (j == l)
        with np.errstate(divide='ignore'):
            return float(np.log(first) - np.log(total) + np.log(second) - np.log(total + 1.0))

    def options(self, t: int) -> Tuple[List[Tuple[int, int, int]], np.ndarray]:
        """Legal `(z_t, w_t, w_{t+1})` configurations and their log weights.

        `w_{t+1}` is reported as -1 at the last timestep.
        """
        T = self.z.size
        with np.errstate(divide='ignore'):
            log_beta = np.log(self.beta)
        pred = self.emission.predictive_log_likelihood(self.stats, self.observations[t], self._y_prev(t),
                                                       post=self.post)
        states = np.arange(self.K + 1)
        lk, ls = self.log_kappa, self.log_stay
        choices: List[Tuple[int, int, int]] = []
        weights: List[np.ndarray] = []

        def extend(ks, w_t, w_next, values):
            ks = np.atleast_1d(ks)
            choices.extend((int(k), w_t, w_next) for k in ks)
            weights.append(np.broadcast_to(values, ks.shape))

        has_prev, has_next = t > 0, t + 1 < T
        j = self.z[t - 1] if has_prev else None
        l = self.z[t + 1] if has_next else None
        if not has_prev and not has_next:
            extend(states, 0, -1, log_beta + pred)
        elif not has_prev:
            extend(l, 0, 1, log_beta[l] + lk[l, 1] + pred[l])
            extend(states, 0, 0, log_beta + ls[:, 1] + self.log_transition_column(l) + pred)
        elif not has_next:
            extend(j, 1, -1, lk[j, t] + pred[j])
            extend(states, 0, -1, ls[j, t] + self.log_transition_row(j) + pred)
        else:
            row_j = self.log_transition_row(j)
            col_l = self.log_transition_column(l)
            if j == l:
                extend(j, 1, 1, lk[j, t] + lk[j, t + 1] + pred[j])
            extend(l, 0, 1, ls[j, t] + row_j[l] + lk[l, t + 1] + pred[l])
            extend(j, 1, 0, lk[j, t] + ls[j, t + 1] + row_j[l] + pred[j])
            others = states[states != j]
            extend(others, 0, 0, ls[j, t] + row_j[others] + ls[others, t + 1] + col_l[others] + pred[others])
            extend(j, 0, 0, ls[j, t] + ls[j, t + 1] + self.log_double_self(j, l) + pred[j])
        return choices, np.concatenate([np.atleast_1d(v) for v in weights])

    def add(self, t: int, choice: Tuple[int, int, int], sweep: int):
        """Assign timestep t and put it back into every count."""
        k, w_t, w_next = choice
        if k == self.K:
            self._create()
        self.z[t] = k
        self.w[t] = w_t
        if w_next >= 0:
            self.w[t + 1] = w_next
        self._change_transitions(t, +1, sweep)
        self._move_point(t, k, +1.0)
        self.occupancy[k] += 1

    def check(self, sweep: int):
        """Compare the running counts with counts rebuilt from scratch."""
        fresh = hdp.transition_counts(self.z, self.w, self.K)
        if not np.array_equal(fresh, self.N[:self.K, :self.K]):
            raise ConsistencyError('incremental transition counts drifted', sweep=sweep)
        if not np.array_equal(np.bincount(self.z, minlength=self.K), self.occupancy):
            raise ConsistencyError('incremental occupancy drifted', sweep=sweep)


def _refresh_schedule(state: ChainState, model: Model, inputs: np.ndarray):
    if 'kappa' in model.settings.skip_steps:
        return
    rec = state.recurrence
    rec.schedule = model.schedule(rec.params, rec.kappa_initial, inputs)


def _resample_globals(state: ChainState, model: Model, inputs: np.ndarray) -> None:
    """Persistence, table counts, `beta` and the hyperparameters after the pass."""
    settings = model.settings
    hyper = state.hyper
    rng = state.rng
    rec = state.recurrence
    K = state.n_states
    z, w = state.latent.z, state.latent.w
    sticks, switches = stick_counts(z, w, K)
    sticks, switches = np.append(sticks, 0.0), np.append(switches, 0.0)

    if settings.disentangled:
        if settings.recurrent and settings.kappa_initial_update == 'prior':
            rec.kappa_initial = resample_kappa_initial(np.zeros(K + 1), np.zeros(K + 1), hyper.rho1, hyper.rho2, rng)
        else:
            rec.kappa_initial = resample_kappa_initial(sticks, switches, hyper.rho1, hyper.rho2, rng)
        _refresh_schedule(state, model, inputs)

    if settings.recurrent and 'pg' not in settings.skip_steps:
        rec.eta = resample_pg_auxiliaries(rec.params, inputs, rng)

    n = hdp.transition_counts(z, w, K, initial_row=True)
    beta = state.transition.beta.beta
    if settings.sticky:
        m = hdp.sample_table_counts(n, hyper.alpha, beta, rng, kappa=hyper.kappa_sticky, row_offset=1)
        rho = hyper.kappa_sticky / (hyper.alpha + hyper.kappa_sticky)
        m_bar, overrides = hdp.apply_override(m, rho, beta, rng, row_offset=1)
    else:
        m = hdp.sample_table_counts(n, hyper.alpha, beta, rng)
        m_bar, overrides = m, None
    new_beta = hdp.resample_beta_direct(m_bar, hyper.gamma, K, rng)
    state.hyper = hyper = hdp.resample_alpha_gamma(
        hdp.TransitionCounts(n, m), hyper, settings.alpha_prior, settings.gamma_prior, rng,
        m_bar=m_bar, overrides=overrides, sticky_cells=settings.sticky_cells)
    state.transition = TransitionState(new_beta, None, hdp.TransitionCounts(n, m))

    if settings.recurrent:
        hyper.rho1, hyper.rho2 = hdp.resample_rho_grid(
            rng, settings.grid, kappa_initials=special.expit(rec.kappa_initial[:K]))
        rec.params = resample_regressions(rec.params, inputs, z, w, rec.eta, rng)
    elif settings.disentangled:
        hyper.rho1, hyper.rho2 = hdp.resample_rho_grid(
            rng, settings.grid, stick_successes=sticks[:K], stick_failures=switches[:K])
        rec.kappa_initial = resample_kappa_initial(sticks, switches, hyper.rho1, hyper.rho2, rng)
    if settings.disentangled:
        _refresh_schedule(state, model, inputs)


def direct_assignment_sweep(state: ChainState, model: Model,
                            observations: np.ndarray) -> Tuple[ChainState, SweepDiagnostics]:
    """Run one direct-assignment sweep in place.

    Args:
        state (ChainState): Current chain state with K active states and
            K+1 persistence slots.
        model (Model): Variant settings and a conjugate emission family.
        observations (numpy.ndarray): (T, d) observations.

    Returns:
        tuple: The updated state and the sweep diagnostics.

    Raises:
        ConsistencyError: If count bookkeeping goes negative or drifts.
    """
    sweep = state.sweep + 1
    inputs = model.inputs(observations)
    work = _Assignment(state, model, observations, inputs)
    for t in range(observations.shape[0]):
        work.remove(t, sweep)
        choices, log_weights = work.options(t)
        work.add(t, choices[sample_categorical_log(log_weights, state.rng)], sweep)
    work.check(sweep)

    K = work.K
    state.latent.z, state.latent.w = work.z, work.w
    state.latent.validate(K, sweep)
    rec = state.recurrence
    rec.params = work.params
    rec.kappa_initial = work.kappa_initial
    rec.schedule = KappaSchedule(work.log_kappa - work.log_stay)
    if rec.eta.eta.shape[0] != K + 1:
        rec.eta = PGAuxiliaries(np.full((K + 1, max(observations.shape[0] - 1, 0)), 0.25))
    state.transition = TransitionState(hdp.GlobalWeights(work.beta), None, state.transition.counts)

    stats = work.stats.take(np.arange(K))
    state.emission.stats = stats
    state.emission.theta = model.emission.sample_all(stats, state.rng)
    _resample_globals(state, model, inputs)

    state.sweep = sweep
    diagnostics = sweep_diagnostics(state, model, observations)
    logger.debug(f'direct-assignment sweep {sweep}: {K} states, loglik {diagnostics.joint_loglik:.3f}')
    return state, diagnostics
