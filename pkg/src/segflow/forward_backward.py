#!/usr/bin/env python3

"""Backward filtering, forward sampling over the pairs `(z_t, w_t)`.

The transition into time t from state i is

    A_t[i, k] = kappa_{i,t} [i == k] + (1 - kappa_{i,t}) pi_bar[i, k],

where the first term is the stick branch (`w_t = 1`) and the second the
switch branch (`w_t = 0`). The stick block is diagonal, so a message update
costs O(L^2) instead of O((2L)^2).

Messages are normalized at every timestep; their log scales are accumulated
so the log marginal likelihood comes out exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special

from segflow.errors import NumericalError
from segflow.kernels import RngStream, sample_categorical_rows
from segflow.recurrence import KappaSchedule


@dataclass
class Messages:
    """Scaled backward messages.

    Attributes:
        backward (numpy.ndarray): (T, L) normalized messages
            `p(y_{t+1:T} | z_t)` up to the factor `exp(log_scales[t])`.
        emissions (numpy.ndarray): (T, L) emission likelihoods scaled so the
            row maximum is one.
        log_scales (numpy.ndarray): (T,) accumulated log scale of each message.
        shifts (numpy.ndarray): (T,) row maxima removed from the log-likelihoods.
        log_marginal (float): `log p(y_{1:T})` under the given parameters.
    """
    backward: np.ndarray
    emissions: np.ndarray
    log_scales: np.ndarray
    shifts: np.ndarray
    log_marginal: float


def backward_messages(log_lik: np.ndarray, beta: np.ndarray, pi_bar: np.ndarray,
                      schedule: KappaSchedule) -> Messages:
    """Run the scaled backward recursion.

    Args:
        log_lik (numpy.ndarray): (T, L) emission log-likelihoods.
        beta (numpy.ndarray): (L,) distribution of `z_1`.
        pi_bar (numpy.ndarray): (L, L) switch transition rows.
        schedule (KappaSchedule): (L, T) self-persistence; column t governs
            the transition into time t.

    Raises:
        NumericalError: If a message turns non-finite or vanishes.
    """
    T, L = log_lik.shape
    shifts = log_lik.max(axis=1)
    if not np.all(np.isfinite(shifts)):
        raise NumericalError('emission log-likelihoods contain rows without finite entries')
    emissions = np.exp(log_lik - shifts[:, None])
    kappa = schedule.kappa
    stay = 1.0 - kappa

    backward = np.empty((T, L))
    log_scales = np.zeros(T)
    backward[-1] = 1.0
    for t in range(T - 1, 0, -1):
        evidence = emissions[t] * backward[t]
        message = kappa[:, t] * evidence + stay[:, t] * (pi_bar @ evidence)
        total = message.sum()
        if not np.isfinite(total) or total <= 0:
            raise NumericalError(f'backward message vanished at t={t}')
        backward[t - 1] = message / total
        log_scales[t - 1] = log_scales[t] + shifts[t] + np.log(total)

    first = beta @ (emissions[0] * backward[0])
    if not np.isfinite(first) or first <= 0:
        raise NumericalError('initial message vanished')
    log_marginal = float(shifts[0] + log_scales[0] + np.log(first))
    return Messages(backward, emissions, log_scales, shifts, log_marginal)


def sample_latent(messages: Messages, beta: np.ndarray, pi_bar: np.ndarray, schedule: KappaSchedule,
                  rng: RngStream, n_draws: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Forward-sample `(z, w)` from the messages.

    At each t > 1 the options are "stick to `z_{t-1}`" and "switch to k" for
    every k, so the draw is a categorical over L + 1 outcomes.

    Args:
        n_draws (int, optional): Draw this many independent trajectories at
            once; the result then has a leading axis of that size.

    Returns:
        tuple: State sequence `z` and stick indicators `w` (`w[0] = 0`).
    """
    T, L = messages.backward.shape
    n = 1 if n_draws is None else n_draws
    kappa = schedule.kappa
    evidence = messages.emissions * messages.backward

    z = np.empty((n, T), dtype=np.int64)
    w = np.zeros((n, T), dtype=np.int64)
    z[:, 0] = sample_categorical_rows(np.broadcast_to(beta * evidence[0], (n, L)), rng)
    for t in range(1, T):
        prev = z[:, t - 1]
        stick = kappa[prev, t] * evidence[t, prev]
        switch = (1.0 - kappa[prev, t])[:, None] * pi_bar[prev] * evidence[t][None, :]
        choice = sample_categorical_rows(np.column_stack([stick, switch]), rng)
        w[:, t] = choice == 0
        z[:, t] = np.where(choice == 0, prev, choice - 1)
    if n_draws is None:
        return z[0], w[0]
    return z, w


def forward_backward(log_lik: np.ndarray, beta: np.ndarray, pi_bar: np.ndarray, schedule: KappaSchedule,
                     rng: RngStream) -> Tuple[np.ndarray, np.ndarray, float]:
    """Joint draw of `(z, w)` from their conditional posterior.

    Returns:
        tuple: `z`, `w` and the log marginal likelihood of the observations.
    """
    messages = backward_messages(log_lik, beta, pi_bar, schedule)
    z, w = sample_latent(messages, beta, pi_bar, schedule, rng)
    return z, w, messages.log_marginal


def log_joint(z: np.ndarray, w: np.ndarray, log_lik: np.ndarray, beta: np.ndarray, pi_bar: np.ndarray,
              schedule: KappaSchedule) -> float:
    """`log p(z, w, y)` of one trajectory under fixed parameters.

    Illegal trajectories (a stick that changes state) get `-inf`.
    """
    z = np.asarray(z, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    if w[0] != 0 or np.any((w[1:] == 1) & (z[1:] != z[:-1])):
        return -np.inf
    t = np.arange(1, z.size)
    prev = z[:-1]
    log_stick = schedule.log_kappa[prev, t]
    with np.errstate(divide='ignore'):
        log_switch = schedule.log_one_minus_kappa[prev, t] + np.log(pi_bar[prev, z[1:]])
        value = np.log(beta[z[0]]) + log_lik[np.arange(z.size), z].sum()
    value += np.where(w[1:] == 1, log_stick, log_switch).sum()
    return float(value)


def log_marginal_enumeration(log_lik: np.ndarray, beta: np.ndarray, pi_bar: np.ndarray,
                             schedule: KappaSchedule, trajectories: Tuple[np.ndarray, np.ndarray]) -> float:
    """Log-sum-exp of `log_joint` over explicitly listed trajectories."""
    values = [log_joint(z, w, log_lik, beta, pi_bar, schedule) for z, w in zip(*trajectories)]
    return float(special.logsumexp(values))
