#!/usr/bin/env python3

"""Conjugate emission families.

Both families are linear-Gaussian regressions `y_t = A x_t + e_t` with
`e_t ~ N(0, Sigma)` under a matrix-normal inverse-Wishart prior:

    - `gaussian`: `x_t = 1`, so `A` is the state mean and the MNIW prior is
      the usual normal-inverse-Wishart with `V = 1/kappa0`.
    - `ar1`: `x_t = y_{t-1}`, optionally augmented with a constant 1 for an
      affine drift term.

Sufficient statistics are `(n, Sxx, Syx, Syy)` per state, so accumulating
and removing a point are plain additions.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from segflow.errors import InputError, NumericalError
from segflow.kernels import (LOG_2PI, MNIWParams, RngStream, mvn_logpdf, sample_inverse_wishart,
                             sample_matrix_normal, symmetrize)
from segflow.log import get_logger

logger = get_logger(__name__)

FAMILIES = ('gaussian', 'ar1')
"""Supported emission families."""

JITTER = 1e-10
"""Diagonal jitter added once to a posterior scale that fails Cholesky."""


@dataclass
class SufficientStats:
    """Per-state regression statistics.

    Attributes:
        n (numpy.ndarray): (L,) number of points per state.
        Sxx (numpy.ndarray): (L, p, p) sum of `x xᵀ`.
        Syx (numpy.ndarray): (L, d, p) sum of `y xᵀ`.
        Syy (numpy.ndarray): (L, d, d) sum of `y yᵀ`.
    """
    n: np.ndarray
    Sxx: np.ndarray
    Syx: np.ndarray
    Syy: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, d: int, p: int) -> SufficientStats:
        return cls(np.zeros(n_states), np.zeros((n_states, p, p)),
                   np.zeros((n_states, d, p)), np.zeros((n_states, d, d)))

    @property
    def n_states(self) -> int:
        return self.n.size

    def copy(self) -> SufficientStats:
        return SufficientStats(self.n.copy(), self.Sxx.copy(), self.Syx.copy(), self.Syy.copy())

    def add(self, j: int, y: np.ndarray, x: np.ndarray, sign: float = 1.0):
        self.n[j] += sign
        self.Sxx[j] += sign * np.outer(x, x)
        self.Syx[j] += sign * np.outer(y, x)
        self.Syy[j] += sign * np.outer(y, y)

    def append_state(self):
        """Append one empty state."""
        self.n = np.append(self.n, 0.0)
        self.Sxx = np.concatenate([self.Sxx, np.zeros((1,) + self.Sxx.shape[1:])])
        self.Syx = np.concatenate([self.Syx, np.zeros((1,) + self.Syx.shape[1:])])
        self.Syy = np.concatenate([self.Syy, np.zeros((1,) + self.Syy.shape[1:])])

    def take(self, states: ArrayLike) -> SufficientStats:
        """Statistics of the listed states, in the listed order."""
        states = np.asarray(states, dtype=np.int64)
        return SufficientStats(self.n[states], self.Sxx[states], self.Syx[states], self.Syy[states])


@dataclass
class EmissionTheta:
    """Per-state emission parameters `A` (L, d, p) and `Sigma` (L, d, d)."""
    A: np.ndarray
    Sigma: np.ndarray

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def take(self, states: ArrayLike) -> EmissionTheta:
        states = np.asarray(states, dtype=np.int64)
        return EmissionTheta(self.A[states], self.Sigma[states])


@dataclass
class EmissionState:
    """Emission parameters together with the statistics they were drawn from."""
    family: str
    theta: EmissionTheta
    stats: SufficientStats


@dataclass
class Posterior:
    """Batched MNIW posterior of every state.

    `chol` is the lower Cholesky factor of `Sn`, `logdet` is `log |Sn|`.
    """
    Mn: np.ndarray
    Vn: np.ndarray
    Sn: np.ndarray
    nn: np.ndarray
    chol: np.ndarray
    logdet: np.ndarray

    def params(self, j: int) -> MNIWParams:
        return MNIWParams(M=self.Mn[j], V=self.Vn[j], S0=self.Sn[j], n0=float(self.nn[j]))


def _scatter_jitter(scatter: np.ndarray, what: str) -> np.ndarray:
    try:
        np.linalg.cholesky(scatter)
        return scatter
    except np.linalg.LinAlgError:
        pass
    logger.warning(f'{what} is singular, adding 1e-6 jitter to its diagonal')
    return scatter + 1e-6 * np.eye(scatter.shape[0])


def _as_observations(observations: ArrayLike) -> np.ndarray:
    observations = np.asarray(observations, dtype=float)
    if observations.ndim == 1:
        observations = observations[:, None]
    if observations.ndim != 2 or not np.all(np.isfinite(observations)):
        raise InputError('observations must be a finite T x d array')
    return observations


def default_ar_prior(observations: ArrayLike, affine: bool = False, scale_factor: float = 0.4) -> MNIWParams:
    """Data-driven MNIW prior for the AR(1) family.

    `S0 = scale_factor * Sigma_bar` where `Sigma_bar` is the covariance of the
    first differences `y_{t+1} - y_t` (normalized by their number T-1),
    `M = 0`, `V = I` and `n0 = d + 2`.

    Raises:
        InputError: If the sequence has fewer than three points.
    """
    observations = _as_observations(observations)
    T, d = observations.shape
    if T < 3:
        raise InputError(f'default AR prior needs T >= 3, got {T}')
    diffs = np.diff(observations, axis=0)
    sigma_bar = _scatter_jitter(np.atleast_2d(np.cov(diffs, rowvar=False)),
                                'covariance of the first differences')
    p = d + 1 if affine else d
    return MNIWParams(M=np.zeros((d, p)), V=np.eye(p), S0=scale_factor * sigma_bar, n0=d + 2.0).validate()


def default_gaussian_prior(observations: ArrayLike, kappa0: float = 0.1, scale_factor: float = 0.4) -> MNIWParams:
    """Data-driven normal-inverse-Wishart prior for the Gaussian family.

    The mean is centered on the sample mean with `V = 1/kappa0`, `S0` is
    `scale_factor` times the sample covariance and `n0 = d + 2`.
    """
    observations = _as_observations(observations)
    T, d = observations.shape
    if T < 2:
        raise InputError(f'default Gaussian prior needs T >= 2, got {T}')
    cov = _scatter_jitter(np.atleast_2d(np.cov(observations, rowvar=False)),
                          'covariance of the observations')
    return MNIWParams(M=observations.mean(axis=0)[:, None], V=np.array([[1.0 / kappa0]]),
                      S0=scale_factor * cov, n0=d + 2.0).validate()


class EmissionModel(ABC):
    """Base class of the conjugate emission families.

    Subclasses only define how the regressor `x_t` is built from the previous
    observation; everything else is shared linear-Gaussian algebra.

    Attributes:
        prior (MNIWParams): Conjugate prior of every state.
        d (int): Observation dimension.
        p (int): Regressor dimension.
    """

    family: str = None

    def __init__(self, prior: MNIWParams):
        self.prior = prior.validate()
        self.d = prior.d
        self.p = prior.p
        self._V_inv = np.linalg.inv(prior.V)
        self._MV_inv = prior.M @ self._V_inv
        self._MV_invM = self._MV_inv @ prior.M.T

    @abstractmethod
    def regressor(self, y_prev: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """Regressor `x_t` given `y_{t-1}`, None if `y_t` has no regression term."""

    @abstractmethod
    def regressors(self, observations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Regressors of a whole sequence.

        Returns:
            tuple: (T, p) regressors and a boolean (T,) mask of the timesteps
                that contribute sufficient statistics.
        """

    def anchor_log_likelihood(self, y: np.ndarray) -> float:
        raise NotImplementedError(f'{self.family} emissions have no anchor term')

    def empty_stats(self, n_states: int) -> SufficientStats:
        return SufficientStats.zeros(n_states, self.d, self.p)

    def accumulate(self, state: EmissionState, y_t: ArrayLike, y_prev: Optional[ArrayLike], j: int,
                   sign: float = 1.0) -> EmissionState:
        """Add (or with `sign=-1` remove) the point `y_t` to state `j`.

        Raises:
            InputError: On dimension mismatch.
        """
        y_t = np.asarray(y_t, dtype=float)
        if y_t.shape != (self.d,) or (y_prev is not None and np.shape(y_prev) != (self.d,)):
            raise InputError(f'expected {self.d}-dimensional observations, got {y_t.shape}')
        x = self.regressor(None if y_prev is None else np.asarray(y_prev, dtype=float))
        if x is not None:
            state.stats.add(j, y_t, x, sign)
        return state

    def remove(self, state: EmissionState, y_t: ArrayLike, y_prev: Optional[ArrayLike], j: int) -> EmissionState:
        return self.accumulate(state, y_t, y_prev, j, sign=-1.0)

    def suffstats(self, observations: ArrayLike, z: ArrayLike, n_states: int) -> SufficientStats:
        """Statistics of a whole labeled sequence, computed from scratch."""
        observations = _as_observations(observations)
        X, mask = self.regressors(observations)
        z = np.asarray(z, dtype=np.int64)
        onehot = np.zeros((observations.shape[0], n_states))
        onehot[np.arange(z.size)[mask], z[mask]] = 1.0
        return SufficientStats(
            n=onehot.sum(axis=0),
            Sxx=np.einsum('tl,tp,tq->lpq', onehot, X, X),
            Syx=np.einsum('tl,td,tp->ldp', onehot, observations, X),
            Syy=np.einsum('tl,td,te->lde', onehot, observations, observations),
        )

    def posterior(self, stats: SufficientStats) -> Posterior:
        """MNIW posterior of every state.

        Raises:
            NumericalError: If a posterior scale stays non-SPD after jitter.
        """
        Vn_inv = self._V_inv[None] + stats.Sxx
        Vn = symmetrize(np.linalg.inv(Vn_inv))
        Mn = (self._MV_inv[None] + stats.Syx) @ Vn
        Sn = symmetrize(self.prior.S0[None] + stats.Syy + self._MV_invM[None]
                        - Mn @ Vn_inv @ np.swapaxes(Mn, -1, -2))
        try:
            chol = np.linalg.cholesky(Sn)
        except np.linalg.LinAlgError:
            Sn = Sn + JITTER * np.eye(self.d)
            try:
                chol = np.linalg.cholesky(Sn)
            except np.linalg.LinAlgError as exc:
                raise NumericalError('posterior inverse-Wishart scale is not positive definite') from exc
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
        return Posterior(Mn=Mn, Vn=Vn, Sn=Sn, nn=self.prior.n0 + stats.n, chol=chol, logdet=logdet)

    def sample_theta(self, stats: SufficientStats, j: int, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
        """Draw `(A_j, Sigma_j)` from the posterior of state `j`."""
        post = self.posterior(stats.take([j]))
        sigma = sample_inverse_wishart(post.Sn[0], post.nn[0], rng)
        A = sample_matrix_normal(post.Mn[0], sigma, post.Vn[0], rng)
        return A, sigma

    def sample_all(self, stats: SufficientStats, rng: RngStream) -> EmissionTheta:
        """Draw parameters for every state, in state order."""
        draws = [self.sample_theta(stats, j, rng) for j in range(stats.n_states)]
        return EmissionTheta(np.stack([a for a, _ in draws]), np.stack([s for _, s in draws]))

    def sample_prior(self, n_states: int, rng: RngStream) -> EmissionTheta:
        return self.sample_all(self.empty_stats(n_states), rng)

    def log_likelihood(self, A: np.ndarray, Sigma: np.ndarray, y_t: ArrayLike,
                       y_prev: Optional[ArrayLike]) -> float:
        """`log N(y_t | A x_t, Sigma)`, or the anchor density when `x_t` is undefined."""
        y_t = np.asarray(y_t, dtype=float)
        x = self.regressor(None if y_prev is None else np.asarray(y_prev, dtype=float))
        if x is None:
            return self.anchor_log_likelihood(y_t)
        return float(mvn_logpdf(y_t, A @ x, Sigma))

    def log_likelihood_matrix(self, theta: EmissionTheta, observations: ArrayLike) -> np.ndarray:
        """(T, L) matrix of `log p(y_t | theta_j, y_{t-1})`."""
        observations = _as_observations(observations)
        X, mask = self.regressors(observations)
        out = np.empty((observations.shape[0], theta.n_states))
        for j in range(theta.n_states):
            residuals = observations - X @ theta.A[j].T
            out[:, j] = mvn_logpdf(residuals, np.zeros(self.d), theta.Sigma[j])
        if not np.all(mask):
            out[~mask] = np.array([self.anchor_log_likelihood(y) for y in observations[~mask]])[:, None]
        return out

    def predictive_log_likelihood(self, stats: SufficientStats, y_t: ArrayLike,
                                  y_prev: Optional[ArrayLike], post: Optional[Posterior] = None) -> np.ndarray:
        """Collapsed predictive density of `y_t` under every state's posterior.

        The predictive is multivariate Student-t with `nn - d + 1` degrees of
        freedom, location `Mn x` and scale `Sn (1 + xᵀ Vn x) / (nn - d + 1)`.

        Returns:
            numpy.ndarray: (L,) log densities.
        """
        y_t = np.asarray(y_t, dtype=float)
        x = self.regressor(None if y_prev is None else np.asarray(y_prev, dtype=float))
        if x is None:
            return np.full(stats.n_states, self.anchor_log_likelihood(y_t))
        post = post if post is not None else self.posterior(stats)
        c = np.einsum('p,lpq,q->l', x, post.Vn, x)
        e = y_t[None, :] - post.Mn @ x
        solved = np.linalg.solve(post.chol, e[..., None])[..., 0]
        q = np.sum(solved**2, axis=-1) / (1.0 + c)
        nn = post.nn
        d = self.d
        return (special.gammaln(0.5 * (nn + 1.0)) - special.gammaln(0.5 * (nn + 1.0 - d))
                - 0.5 * d * math.log(math.pi) - 0.5 * d * np.log1p(c) - 0.5 * post.logdet
                - 0.5 * (nn + 1.0) * np.log1p(q))

    def sample_observation(self, A: np.ndarray, Sigma: np.ndarray, y_prev: Optional[np.ndarray],
                           rng: RngStream) -> np.ndarray:
        """Simulate `y_t` given the previous observation."""
        x = self.regressor(y_prev)
        if x is None:
            return self.anchor_sample(rng)
        return A @ x + np.linalg.cholesky(Sigma) @ rng.normal(self.d)

    def anchor_sample(self, rng: RngStream) -> np.ndarray:
        raise NotImplementedError(f'{self.family} emissions have no anchor term')

    def new_state(self, n_states: int = 0) -> EmissionState:
        """Empty emission state with `n_states` states and zero parameters."""
        theta = EmissionTheta(np.zeros((n_states, self.d, self.p)), np.tile(np.eye(self.d), (n_states, 1, 1)))
        return EmissionState(self.family, theta, self.empty_stats(n_states))


class GaussianEmission(EmissionModel):
    """Gaussian emissions with a normal-inverse-Wishart prior."""

    family = 'gaussian'

    def __init__(self, prior: MNIWParams):
        if prior.p != 1:
            raise InputError('Gaussian emissions need a d x 1 prior mean')
        super().__init__(prior)

    def regressor(self, y_prev):
        return np.ones(1)

    def regressors(self, observations):
        T = observations.shape[0]
        return np.ones((T, 1)), np.ones(T, dtype=bool)


class AutoRegressiveEmission(EmissionModel):
    """First-order autoregressive emissions with an MNIW prior.

    The first observation has no predecessor; it is scored by a broad anchor
    `N(0, 100 * scale * I)` with `scale` the prior mean noise variance, and it
    adds nothing to the sufficient statistics.

    Attributes:
        affine (bool): Whether `x_t = (y_{t-1}, 1)` carries an intercept.
        anchor_var (float): Variance of the first-observation anchor.
    """

    family = 'ar1'

    def __init__(self, prior: MNIWParams):
        super().__init__(prior)
        if self.p not in (self.d, self.d + 1):
            raise InputError(f'AR(1) prior mean must be d x d or d x (d+1), got {prior.M.shape}')
        self.affine = self.p == self.d + 1
        scale = np.trace(prior.S0) / self.d / max(prior.n0 - self.d - 1.0, 1.0)
        self.anchor_var = 100.0 * scale

    def regressor(self, y_prev):
        if y_prev is None:
            return None
        return np.append(y_prev, 1.0) if self.affine else y_prev

    def regressors(self, observations):
        T = observations.shape[0]
        X = np.zeros((T, self.p))
        X[1:, :self.d] = observations[:-1]
        if self.affine:
            X[:, -1] = 1.0
        mask = np.ones(T, dtype=bool)
        mask[0] = False
        return X, mask

    def anchor_log_likelihood(self, y):
        y = np.asarray(y, dtype=float)
        return float(-0.5 * self.d * (LOG_2PI + math.log(self.anchor_var)) - 0.5 * np.sum(y**2) / self.anchor_var)

    def anchor_sample(self, rng):
        return math.sqrt(self.anchor_var) * rng.normal(self.d)


def make_emission(family: str, prior: MNIWParams) -> EmissionModel:
    """Instantiate the emission model of `family`."""
    if family == 'gaussian':
        return GaussianEmission(prior)
    if family == 'ar1':
        return AutoRegressiveEmission(prior)
    raise InputError(f'unknown emission family "{family}", expected one of {FAMILIES}')


def default_prior(family: str, observations: ArrayLike, affine: bool = False, scale_factor: float = 0.4,
                  kappa0: float = 0.1) -> MNIWParams:
    """Data-driven default prior of `family`."""
    if family == 'ar1':
        return default_ar_prior(observations, affine=affine, scale_factor=scale_factor)
    if family == 'gaussian':
        return default_gaussian_prior(observations, kappa0=kappa0, scale_factor=scale_factor)
    raise InputError(f'unknown emission family "{family}", expected one of {FAMILIES}')
