#!/usr/bin/env python3

"""Hierarchical Dirichlet process machinery shared by both samplers.

Stick-breaking, Chinese-restaurant-franchise table counts, the Dirichlet
posteriors of the global weights `beta` and the base transition rows
`pi_bar`, and the hyperparameter refreshes for the concentrations and the
beta prior on self-persistence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from segflow.errors import ConsistencyError, InputError
from segflow.kernels import (RngStream, sample_beta, sample_beta_logit, sample_categorical_log,
                             sample_dirichlet, sample_gamma, slice_sample)

TINY = np.finfo(float).tiny
SIMPLEX_TOL = 1e-10


@dataclass
class GlobalWeights:
    """Top-level weights `beta`.

    Length L for the weak-limit sampler; K+1 for direct assignment, where the
    last entry is the remainder mass of all unused states.
    """
    beta: np.ndarray

    def validate(self) -> GlobalWeights:
        if np.any(self.beta < 0) or abs(self.beta.sum() - 1.0) > SIMPLEX_TOL:
            raise ConsistencyError('global weights are not a probability vector')
        return self


@dataclass
class TransitionRows:
    """Row-stochastic base transition matrix, row j is `pi_bar_j`."""
    pi_bar: np.ndarray

    def validate(self) -> TransitionRows:
        if np.any(self.pi_bar < 0) or np.any(np.abs(self.pi_bar.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ConsistencyError('transition rows are not probability vectors')
        return self


@dataclass
class TransitionCounts:
    """Switch transitions `n` and CRF table counts `m`.

    `n[j, k]` counts transitions j -> k taken with `w_t = 0`. Both matrices may
    carry one extra leading row for the initial-state restaurant.
    """
    n: np.ndarray
    m: np.ndarray = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        if self.m is None:
            self.m = np.zeros_like(self.n)

    def validate(self) -> TransitionCounts:
        n, m = self.n, self.m
        if np.any(m > n) or np.any((n > 0) & (m < 1)) or np.any((n == 0) & (m != 0)):
            raise ConsistencyError('table counts violate 1 <= m <= n')
        return self


@dataclass
class HyperParams:
    """Concentrations and self-persistence hyperparameters.

    Attributes:
        alpha (float): Transition DP concentration.
        gamma (float): Top-level DP concentration.
        rho1, rho2 (float): Beta prior on self-persistence.
        kappa_sticky (float): Extra self-transition mass of the sticky model,
            zero for every other variant.
    """
    alpha: float = 1.0
    gamma: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    kappa_sticky: float = 0.0

    def validate(self) -> HyperParams:
        if min(self.alpha, self.gamma, self.rho1, self.rho2) <= 0 or self.kappa_sticky < 0:
            raise InputError(f'invalid hyperparameters {self}')
        return self


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior parameterized by shape and rate."""
    shape: float
    rate: float

    @property
    def mean(self) -> float:
        return self.shape / self.rate


@dataclass(frozen=True)
class RhoGrid:
    """Cell-centered grid over `phi = rho1/(rho1+rho2)` and `eta = (rho1+rho2)^(-1/3)`."""
    n_phi: int = 100
    n_eta: int = 100
    eta_max: float = 2.0
    phi: np.ndarray = field(init=False, repr=False)
    eta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_phi < 1 or self.n_eta < 1 or self.eta_max <= 0:
            raise InputError('rho grid needs at least one cell and eta_max > 0')
        object.__setattr__(self, 'phi', (np.arange(self.n_phi) + 0.5) / self.n_phi)
        object.__setattr__(self, 'eta', (np.arange(self.n_eta) + 0.5) * self.eta_max / self.n_eta)

    def rhos(self) -> Tuple[np.ndarray, np.ndarray]:
        """`(rho1, rho2)` on the full (n_phi, n_eta) mesh."""
        phi, eta = np.meshgrid(self.phi, self.eta, indexing='ij')
        return grid_to_rho(phi, eta)


def rho_to_grid(rho1: ArrayLike, rho2: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Map `(rho1, rho2)` to `(phi, eta)`."""
    rho1 = np.asarray(rho1, dtype=float)
    total = rho1 + np.asarray(rho2, dtype=float)
    return rho1 / total, np.cbrt(1.0 / total)


def grid_to_rho(phi: ArrayLike, eta: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Map `(phi, eta)` to `(rho1, rho2) = (phi eta^-3, (1 - phi) eta^-3)`."""
    phi = np.asarray(phi, dtype=float)
    scale = np.asarray(eta, dtype=float)**-3
    return phi * scale, (1.0 - phi) * scale


# Stick-breaking and weights

def stick_breaking(gamma: float, n_sticks: int, rng: RngStream) -> np.ndarray:
    """GEM(gamma) weights truncated after `n_sticks` breaks.

    Returns:
        numpy.ndarray: Length `n_sticks + 1`; the last entry is the unbroken
            remainder of the stick.
    """
    if not gamma > 0 or not math.isfinite(gamma):
        raise InputError(f'gamma must be positive, got {gamma}')
    if n_sticks < 1:
        raise InputError('n_sticks must be at least one')
    logits = sample_beta_logit(np.ones(n_sticks), gamma, rng)
    log_v = special.log_expit(logits)
    log_rest = np.cumsum(special.log_expit(-logits))
    log_beta = np.append(log_v + np.concatenate(([0.0], log_rest[:-1])), log_rest[-1])
    beta = np.exp(log_beta - special.logsumexp(log_beta))
    return beta / beta.sum()


def transition_counts(z: ArrayLike, w: ArrayLike, n_states: int, initial_row: bool = False) -> np.ndarray:
    """Count switch transitions `z_{t-1} -> z_t` with `w_t = 0`.

    Args:
        z (ArrayLike): State sequence.
        w (ArrayLike): Stick indicators, `w[0]` is ignored.
        n_states (int): Number of states.
        initial_row (bool): Prepend a row counting the initial state as one
            customer of an extra restaurant.
    """
    z = np.asarray(z, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    switch = w[1:] == 0
    np.add.at(counts, (z[:-1][switch], z[1:][switch]), 1)
    if initial_row:
        first = np.zeros((1, n_states), dtype=np.int64)
        if z.size:
            first[0, z[0]] = 1
        counts = np.vstack([first, counts])
    return counts


def sample_table_counts(n: ArrayLike, alpha: float, beta: ArrayLike, rng: RngStream,
                        kappa: float = 0.0, row_offset: int = 0) -> np.ndarray:
    """Number of CRF tables serving each dish in each restaurant.

    Customer `i` (0-based) of cell (j, k) opens a new table with probability
    `c / (i + c)`, `c = alpha beta_k + kappa [j == k]`.

    Args:
        n (ArrayLike): (J, K) customer counts.
        alpha (float): Transition concentration.
        beta (ArrayLike): Global weights of the K dishes.
        rng (RngStream): Random stream.
        kappa (float): Sticky self-transition mass.
        row_offset (int): Number of leading rows that are not state
            restaurants (the initial-state row), which get no sticky mass.
    """
    n = np.asarray(n, dtype=np.int64)
    beta = np.asarray(beta, dtype=float)[:n.shape[1]]
    if np.any(n < 0):
        raise InputError('customer counts must be nonnegative')
    if not alpha > 0:
        raise InputError(f'alpha must be positive, got {alpha}')
    concentration = np.broadcast_to(alpha * beta, n.shape).copy()
    if kappa > 0:
        rows = np.arange(row_offset, n.shape[0])
        cols = rows - row_offset
        keep = cols < n.shape[1]
        concentration[rows[keep], cols[keep]] += kappa
    m = (n > 0).astype(np.int64)
    for i in range(1, int(n.max(initial=0))):
        active = n > i
        u = rng.generator.random(n.shape)
        m += active & (u * (i + concentration) < concentration)
    return m


def apply_override(m: np.ndarray, rho: float, beta: ArrayLike, rng: RngStream,
                   row_offset: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Thin sticky self-transition tables that were created by the override.

    Each of the `m_jj` tables is an override with probability
    `rho / (rho + beta_j (1 - rho))`.

    Returns:
        tuple: Thinned table counts and the per-state override counts.
    """
    beta = np.asarray(beta, dtype=float)
    m_bar = m.copy()
    n_states = m.shape[1]
    diag = m[np.arange(n_states) + row_offset, np.arange(n_states)]
    p = rho / (rho + beta[:n_states] * (1.0 - rho))
    overrides = rng.generator.binomial(diag, np.clip(p, 0.0, 1.0))
    m_bar[np.arange(n_states) + row_offset, np.arange(n_states)] -= overrides
    return m_bar, overrides


def resample_beta_weaklimit(m: ArrayLike, gamma: float, L: int, rng: RngStream) -> GlobalWeights:
    """`beta ~ Dir(gamma/L + m_{.k})` over the L weak-limit states."""
    if L < 1:
        raise InputError('the weak-limit truncation L must be at least one')
    m = np.asarray(m)
    return GlobalWeights(sample_dirichlet(gamma / L + m.sum(axis=0)[:L], rng))


def resample_beta_direct(m: ArrayLike, gamma: float, K: int, rng: RngStream) -> GlobalWeights:
    """`(beta_1..beta_K, beta_new) ~ Dir(m_{.1}, ..., m_{.K}, gamma)`.

    Raises:
        ConsistencyError: If an active state owns no table.
    """
    if K == 0:
        return GlobalWeights(np.ones(1))
    columns = np.asarray(m).sum(axis=0)[:K]
    if np.any(columns < 1):
        empty = np.flatnonzero(columns < 1).tolist()
        raise ConsistencyError(f'active states {empty} have no tables and should have been pruned')
    return GlobalWeights(sample_dirichlet(np.append(columns, gamma), rng))


def resample_pi_bar(n: ArrayLike, alpha: float, beta: ArrayLike, rng: RngStream,
                    kappa: float = 0.0) -> TransitionRows:
    """Rows `pi_bar_j ~ Dir(alpha beta + n_j + kappa e_j)`.

    `kappa` is only nonzero for the sticky model, whose rows carry the extra
    self-transition mass directly.
    """
    n = np.asarray(n, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if n.shape[1] != beta.size:
        raise InputError(f'count matrix {n.shape} does not match {beta.size} weights')
    concentration = alpha * beta[None, :] + n
    if kappa > 0:
        concentration += kappa * np.eye(*n.shape)
    return TransitionRows(sample_dirichlet(np.maximum(concentration, TINY), rng))


# Concentration parameters

def resample_concentration(row_totals: ArrayLike, n_tables: int, current: float,
                           prior: GammaPrior, rng: RngStream) -> float:
    """Auxiliary-variable refresh of a concentration shared by many restaurants.

    With restaurant sizes `n_j` and `m` tables in total, draws
    `w_j ~ Beta(c + 1, n_j)`, `s_j ~ Bern(n_j / (n_j + c))` and then
    `c ~ Gamma(a + m - sum s, b - sum log w)`. Empty data returns a prior draw.
    """
    row_totals = np.asarray(row_totals, dtype=float)
    row_totals = row_totals[row_totals > 0]
    if row_totals.size == 0:
        return float(sample_gamma(prior.shape, prior.rate, rng))
    log_w = np.log(sample_beta(current + 1.0, row_totals, rng))
    s = rng.generator.random(row_totals.size) * (row_totals + current) < row_totals
    shape = prior.shape + n_tables - s.sum()
    rate = prior.rate - log_w.sum()
    return float(sample_gamma(shape, rate, rng))


def resample_gamma_single(n_tables: int, n_dishes: int, current: float,
                          prior: GammaPrior, rng: RngStream) -> float:
    """Two-component mixture refresh of the top-level concentration.

    The top level is one restaurant with `n_tables` customers and `n_dishes`
    occupied dishes.
    """
    if n_tables == 0:
        return float(sample_gamma(prior.shape, prior.rate, rng))
    eta = float(sample_beta(current + 1.0, n_tables, rng))
    rate = prior.rate - math.log(eta)
    odds = (prior.shape + n_dishes - 1.0) / (n_tables * rate)
    shape = prior.shape + n_dishes if rng.generator.random() * (1.0 + odds) < odds else prior.shape + n_dishes - 1.0
    return float(sample_gamma(shape, rate, rng))


def resample_alpha_gamma(counts: TransitionCounts, hyper: HyperParams, alpha_prior: GammaPrior,
                         gamma_prior: GammaPrior, rng: RngStream, m_bar: Optional[ArrayLike] = None,
                         overrides: Optional[ArrayLike] = None, beta: Optional[ArrayLike] = None,
                         sticky_cells: int = 100) -> HyperParams:
    """Gibbs refresh of `alpha`, `gamma` and, for the sticky model, `kappa`.

    `alpha + kappa` uses the restaurant sizes `n_{j.}` and the tables of the
    state rows. A leading initial-state row (`n` of shape `(K + 1, K)`) is a
    single customer whose table does not depend on `alpha` and is left out.
    When `overrides` is given the total is split with the sticky ratio drawn
    from the override counts.

    `gamma` sees the tables left after overrides (`m_bar`, defaults to
    `counts.m`). The weak-limit sampler passes its global weights as `beta`
    and refreshes `gamma` from `beta | gamma`; otherwise the top-level
    restaurant refresh runs on the occupied dishes.

    Returns:
        HyperParams: Copy of `hyper` with the new concentrations.
    """
    n, m = counts.n, counts.m
    if n.ndim == 2 and n.shape[0] == n.shape[1] + 1:
        n, m = n[1:], m[1:]
    n_tables = int(m.sum())
    concentration = resample_concentration(n.sum(axis=1), n_tables, hyper.alpha + hyper.kappa_sticky,
                                           alpha_prior, rng)
    if overrides is not None:
        ratio = resample_sticky_ratio(int(np.sum(overrides)), n_tables, rng, sticky_cells)
        alpha, kappa = (1.0 - ratio) * concentration, ratio * concentration
    else:
        alpha, kappa = concentration, 0.0

    if beta is not None:
        gamma = resample_gamma_weaklimit(beta, hyper.gamma, gamma_prior, rng)
    else:
        m_bar = counts.m if m_bar is None else np.asarray(m_bar)
        n_dishes = int(np.count_nonzero(m_bar.sum(axis=0)))
        gamma = resample_gamma_single(int(m_bar.sum()), n_dishes, hyper.gamma, gamma_prior, rng)
    return replace(hyper, alpha=alpha, gamma=gamma, kappa_sticky=kappa)


def gamma_log_posterior_weaklimit(gamma: float, beta: ArrayLike, prior: GammaPrior) -> float:
    """Log density of `gamma | beta` under `beta ~ Dir(gamma/L, ..., gamma/L)`."""
    if not gamma > 0:
        return -math.inf
    log_beta = np.log(np.maximum(np.asarray(beta, dtype=float), TINY))
    L = log_beta.size
    return (special.gammaln(gamma) - L * special.gammaln(gamma / L) + (gamma / L - 1.0) * log_beta.sum()
            + (prior.shape - 1.0) * math.log(gamma) - prior.rate * gamma)


def resample_gamma_weaklimit(beta: ArrayLike, gamma: float, prior: GammaPrior, rng: RngStream) -> float:
    """Exact refresh of `gamma | beta` by slice sampling on `log gamma`."""

    def log_density(log_gamma: float) -> float:
        if log_gamma > 700.0:
            return -math.inf
        return gamma_log_posterior_weaklimit(math.exp(log_gamma), beta, prior) + log_gamma

    return math.exp(slice_sample(log_density, math.log(gamma), rng))


# Self-persistence priors

def rho_grid_log_posterior(grid: RhoGrid, kappa_initials: Optional[ArrayLike] = None,
                           stick_successes: Optional[ArrayLike] = None,
                           stick_failures: Optional[ArrayLike] = None) -> np.ndarray:
    """Normalized log posterior over the `(phi, eta)` cells.

    Args:
        grid (RhoGrid): Grid definition.
        kappa_initials (ArrayLike, optional): Sampled `kappa_{j,1}`, each with
            a `Beta(rho1, rho2)` density term.
        stick_successes, stick_failures (ArrayLike, optional): Per-state stick
            and switch counts, each pair with a beta-binomial term.

    Returns:
        numpy.ndarray: (n_phi, n_eta) log probabilities summing to one.
    """
    rho1, rho2 = grid.rhos()
    log_post = np.zeros_like(rho1)
    if kappa_initials is not None and np.size(kappa_initials):
        kappa = np.clip(np.asarray(kappa_initials, dtype=float), TINY, 1.0 - 1e-16)
        log_post += ((rho1 - 1.0) * np.log(kappa).sum() + (rho2 - 1.0) * np.log1p(-kappa).sum()
                     - kappa.size * special.betaln(rho1, rho2))
    if stick_successes is not None and np.size(stick_successes):
        successes = np.asarray(stick_successes, dtype=float)
        failures = np.asarray(stick_failures, dtype=float)
        log_post += (special.betaln(rho1[..., None] + successes, rho2[..., None] + failures).sum(axis=-1)
                     - successes.size * special.betaln(rho1, rho2))
    return log_post - special.logsumexp(log_post)


def resample_rho_grid(rng: RngStream, grid: Optional[RhoGrid] = None, **likelihood) -> Tuple[float, float]:
    """Draw `(rho1, rho2)` from the grid posterior.

    Keyword arguments are forwarded to `rho_grid_log_posterior`; with none the
    draw is uniform over the cells.
    """
    grid = grid or RhoGrid()
    log_post = rho_grid_log_posterior(grid, **likelihood)
    cell = sample_categorical_log(log_post.ravel(), rng)
    i, k = np.unravel_index(cell, log_post.shape)
    rho1, rho2 = grid_to_rho(grid.phi[i], grid.eta[k])
    return float(rho1), float(rho2)


def resample_sticky_ratio(n_overrides: int, n_tables: int, rng: RngStream, n_cells: int = 100) -> float:
    """Draw `kappa / (alpha + kappa)` on a uniform grid of cell centers.

    The likelihood of `o` overrides among `m` tables is `r^o (1 - r)^(m - o)`.
    """
    ratio = (np.arange(n_cells) + 0.5) / n_cells
    log_post = n_overrides * np.log(ratio) + (n_tables - n_overrides) * np.log1p(-ratio)
    return float(ratio[sample_categorical_log(log_post, rng)])
