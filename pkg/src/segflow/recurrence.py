#!/usr/bin/env python3

"""Position-dependent self-persistence of the recurrent sticky model.

State `j` sticks at `t+1` with probability
`kappa_{j,t+1} = sigmoid(R_jᵀ x_t + r_j)`, where `x_t` is the regression input
at time t. The stick indicators are Bernoulli observations of a logistic
regression, which Polya-Gamma auxiliaries `eta_{j,t}` turn into a Gaussian
conditional for `(R_j, r_j)`.

Schedules are stored as logits so probabilities that round to 0 or 1 keep
exact log-probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, special

from segflow.errors import ConsistencyError, InputError
from segflow.kernels import RngStream, sample_beta_logit, sample_polya_gamma_array

INPUT_MODES = ('raw', 'differences')
"""How the regression input `x_t` is built from the observations."""


@dataclass
class RecurrenceParams:
    """Logistic regression weights of every state.

    Attributes:
        R (numpy.ndarray): (L, q) regression weights.
        r (numpy.ndarray): (L,) intercepts.
        prior_var (float): Isotropic prior variance of `(R_j, r_j)`.
    """
    R: np.ndarray
    r: np.ndarray
    prior_var: float

    def __post_init__(self):
        if not self.prior_var > 0:
            raise InputError(f'prior_var must be positive, got {self.prior_var}')

    @classmethod
    def zeros(cls, n_states: int, q: int, prior_var: float) -> RecurrenceParams:
        return cls(np.zeros((n_states, q)), np.zeros(n_states), prior_var)

    @property
    def n_states(self) -> int:
        return self.r.size

    def take(self, states: ArrayLike) -> RecurrenceParams:
        states = np.asarray(states, dtype=np.int64)
        return RecurrenceParams(self.R[states], self.r[states], self.prior_var)

    def append(self, R: np.ndarray, r: float) -> RecurrenceParams:
        return RecurrenceParams(np.vstack([self.R, R[None]]), np.append(self.r, r), self.prior_var)


@dataclass
class KappaSchedule:
    """(L, T) self-persistence probabilities, stored as logits.

    Column 0 holds `kappa_{j,1}`; column t holds `kappa_{j,t+1}` (0-based).
    """
    logits: np.ndarray

    @property
    def kappa(self) -> np.ndarray:
        return special.expit(self.logits)

    @property
    def log_kappa(self) -> np.ndarray:
        return special.log_expit(self.logits)

    @property
    def log_one_minus_kappa(self) -> np.ndarray:
        return special.log_expit(-self.logits)

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]


@dataclass
class PGAuxiliaries:
    """(L, T-1) Polya-Gamma auxiliaries, `eta[j, t] ~ PG(1, v_{j,t})`."""
    eta: np.ndarray


def regression_inputs(observations: ArrayLike, mode: str = 'raw', standardize: bool = False) -> np.ndarray:
    """Regression inputs `x_t` for every timestep.

    Args:
        observations (ArrayLike): (T, d) observations.
        mode (str): `'raw'` uses `y_t`; `'differences'` uses the backward
            difference `y_t - y_{t-1}` with `x_1 = 0`.
        standardize (bool): Scale each dimension to zero mean and unit
            variance. Constant dimensions are only centered.
    """
    observations = np.atleast_2d(np.asarray(observations, dtype=float).T).T
    if mode == 'raw':
        inputs = observations.copy()
    elif mode == 'differences':
        inputs = np.zeros_like(observations)
        inputs[1:] = np.diff(observations, axis=0)
    else:
        raise InputError(f'unknown regression input mode "{mode}", expected one of {INPUT_MODES}')
    if standardize:
        std = inputs.std(axis=0)
        inputs = (inputs - inputs.mean(axis=0)) / np.where(std > 0, std, 1.0)
    return inputs


def linear_predictor(params: RecurrenceParams, inputs: np.ndarray) -> np.ndarray:
    """(L, T-1) matrix `v_{j,t} = R_jᵀ x_t + r_j` for t = 1..T-1."""
    return params.R @ inputs[:-1].T + params.r[:, None]


def compute_kappa_schedule(params: RecurrenceParams, inputs: np.ndarray,
                           kappa_initial_logits: ArrayLike) -> KappaSchedule:
    """Recurrent schedule: initial column from `kappa_{j,1}`, then the logistic predictor.

    Args:
        params (RecurrenceParams): Regression weights of the L states.
        inputs (numpy.ndarray): (T, q) regression inputs.
        kappa_initial_logits (ArrayLike): (L,) logits of `kappa_{j,1}`.
    """
    initial = np.asarray(kappa_initial_logits, dtype=float)
    if initial.shape != (params.n_states,):
        raise InputError(f'expected {params.n_states} initial persistences, got {initial.shape}')
    logits = np.empty((params.n_states, inputs.shape[0]))
    logits[:, 0] = initial
    logits[:, 1:] = linear_predictor(params, inputs)
    return KappaSchedule(logits)


def constant_schedule(kappa_logits: ArrayLike, T: int) -> KappaSchedule:
    """Time-invariant schedule of the disentangled sticky model."""
    kappa_logits = np.asarray(kappa_logits, dtype=float)
    return KappaSchedule(np.repeat(kappa_logits[:, None], T, axis=1))


def zero_schedule(n_states: int, T: int) -> KappaSchedule:
    """Schedule with `kappa = 0` everywhere, i.e. no stick branch."""
    return KappaSchedule(np.full((n_states, T), -np.inf))


def stick_counts(z: ArrayLike, w: ArrayLike, n_states: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-state stick and switch counts.

    Returns:
        tuple: `(sum w_tau, sum (1 - w_tau))` over tau >= 2 with `z_{tau-1} = j`.
    """
    z = np.asarray(z, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    sticks = np.bincount(z[:-1], weights=w[1:], minlength=n_states)
    visits = np.bincount(z[:-1], minlength=n_states)
    return sticks, visits - sticks


def resample_kappa_initial(successes: ArrayLike, failures: ArrayLike, rho1: float, rho2: float,
                           rng: RngStream) -> np.ndarray:
    """Logits of `kappa_{j,1} ~ Beta(rho1 + successes_j, rho2 + failures_j)`."""
    successes = np.asarray(successes, dtype=float)
    failures = np.asarray(failures, dtype=float)
    if np.any(successes < 0) or np.any(failures < 0):
        raise InputError('stick counts must be nonnegative')
    return sample_beta_logit(rho1 + successes, rho2 + failures, rng)


def resample_pg_auxiliaries(params: RecurrenceParams, inputs: np.ndarray, rng: RngStream) -> PGAuxiliaries:
    """Draw `eta_{j,t} ~ PG(1, v_{j,t})` for every state and t = 1..T-1."""
    return PGAuxiliaries(sample_polya_gamma_array(linear_predictor(params, inputs), rng))


def regression_posterior(j: int, inputs: np.ndarray, z: ArrayLike, w: ArrayLike, eta: PGAuxiliaries,
                         prior_var: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of `(R_j, r_j)` given the Polya-Gamma auxiliaries.

    Only timesteps t <= T-1 with `z_t = j` contribute, with response
    `w_{t+1} - 1/2` and input `(x_t, 1)`.

    Returns:
        tuple: Posterior mean and precision matrix.
    """
    z = np.asarray(z, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    visits = np.flatnonzero(z[:-1] == j)
    X = np.hstack([inputs[visits], np.ones((visits.size, 1))])
    weights = eta.eta[j, visits]
    precision = np.eye(X.shape[1]) / prior_var + (X * weights[:, None]).T @ X
    shift = X.T @ (w[visits + 1] - 0.5)
    try:
        factor = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise ConsistencyError(f'regression precision of state {j} is not positive definite') from exc
    return linalg.cho_solve(factor, shift), precision


def resample_regression(j: int, inputs: np.ndarray, z: ArrayLike, w: ArrayLike, eta: PGAuxiliaries,
                        prior_var: float, rng: RngStream) -> Tuple[np.ndarray, float]:
    """Draw `(R_j, r_j)` from its Gaussian conditional via a Cholesky solve."""
    mean, precision = regression_posterior(j, inputs, z, w, eta, prior_var)
    chol = np.linalg.cholesky(precision)
    draw = mean + linalg.solve_triangular(chol.T, rng.normal(mean.size), lower=False)
    return draw[:-1], float(draw[-1])


def resample_regressions(params: RecurrenceParams, inputs: np.ndarray, z: ArrayLike, w: ArrayLike,
                         eta: PGAuxiliaries, rng: RngStream) -> RecurrenceParams:
    """Refresh the regression weights of every state."""
    R = np.empty_like(params.R)
    r = np.empty_like(params.r)
    for j in range(params.n_states):
        R[j], r[j] = resample_regression(j, inputs, z, w, eta, params.prior_var, rng)
    return RecurrenceParams(R, r, params.prior_var)


def sample_regression_prior(q: int, prior_var: float, rng: RngStream) -> Tuple[np.ndarray, float]:
    """Draw `(R, r) ~ N(0, prior_var I)` for a freshly created state."""
    draw = np.sqrt(prior_var) * rng.normal(q + 1)
    return draw[:-1], float(draw[-1])
