#!/usr/bin/env python3

"""Seedable random kernels and log-densities.

Every draw the samplers make goes through this module so that a chain is a
pure function of its `RngStream`. All kernels are stateless; the only mutable
object is the stream itself, which a chain owns exclusively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from polyagamma import random_polyagamma
from scipy import linalg, special, stats

from segflow.errors import DegenerateInputError, InputError

LOG_2PI = math.log(2.0 * math.pi)


class RngStream:
    """Independent random stream owned by one chain.

    Streams are PCG64 generators seeded from `SeedSequence(seed,
    spawn_key=(stream_id,))`, so distinct stream ids share no state and the
    same `(seed, stream_id)` pair always replays the same draws.

    Attributes:
        seed (int): 64-bit unsigned seed.
        stream_id (int): 64-bit unsigned stream index.
        generator (numpy.random.Generator): The underlying generator.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= int(seed) < 2**64 or not 0 <= int(stream_id) < 2**64:
            raise InputError('seed and stream_id must be 64-bit unsigned integers')
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, stream_id: int) -> RngStream:
        """Return a fresh stream with the same seed and another stream id."""
        return RngStream(self.seed, stream_id)

    def uniform(self, size=None):
        """Uniform draws on the half-open interval (0, 1]."""
        return 1.0 - self.generator.random(size)

    def normal(self, size=None):
        """Standard normal draws."""
        return self.generator.standard_normal(size)

    def state_dict(self) -> Dict[str, Any]:
        """Return a JSON-serializable snapshot of the stream."""
        return {
            'seed': self.seed,
            'stream_id': self.stream_id,
            'bit_generator': self.generator.bit_generator.state,
        }

    @classmethod
    def from_state_dict(cls, state: Mapping[str, Any]) -> RngStream:
        """Restore a stream from `state_dict()` output."""
        stream = cls(state['seed'], state['stream_id'])
        stream.generator.bit_generator.state = state['bit_generator']
        return stream


@dataclass(frozen=True)
class PGDraw:
    """One draw of omega ~ PG(1, tilt)."""
    omega: float
    tilt: float


@dataclass(frozen=True)
class MNIWParams:
    """Matrix-normal inverse-Wishart parameters.

    `A | Sigma ~ MN(M, Sigma, V)` and `Sigma ~ IW(S0, n0)`. `M` is d×p where p
    is the regressor dimension (p = d for AR(1), p = d+1 with an intercept
    column, p = 1 for a Gaussian mean).
    """
    M: np.ndarray
    V: np.ndarray
    S0: np.ndarray
    n0: float

    @property
    def d(self) -> int:
        return self.M.shape[0]

    @property
    def p(self) -> int:
        return self.M.shape[1]

    def validate(self) -> MNIWParams:
        """Check shapes and positive definiteness.

        Raises:
            InputError: If `V` or `S0` is not SPD, shapes disagree or
                `n0 <= d - 1`.
        """
        if self.M.ndim != 2 or self.V.shape != (self.p, self.p) or self.S0.shape != (self.d, self.d):
            raise InputError(f'inconsistent MNIW shapes M={self.M.shape}, V={self.V.shape}, S0={self.S0.shape}')
        cholesky(self.V, 'V')
        cholesky(self.S0, 'S0')
        if not self.n0 > self.d - 1:
            raise InputError(f'n0 must exceed d-1={self.d - 1}, got {self.n0}')
        return self


def cholesky(matrix: ArrayLike, name: str = 'matrix') -> np.ndarray:
    """Lower Cholesky factor, raising `InputError` for non-SPD input."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or not np.all(np.isfinite(matrix)):
        raise InputError(f'{name} must be a finite square matrix')
    if not np.allclose(matrix, matrix.T, rtol=1e-8, atol=1e-12):
        raise InputError(f'{name} must be symmetric')
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise InputError(f'{name} is not positive definite') from exc


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + np.swapaxes(matrix, -1, -2))


def _positive(name: str, value: ArrayLike) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)) or np.any(value <= 0):
        raise InputError(f'{name} must be finite and positive')
    return value


# Polya-Gamma

def sample_polya_gamma(c: float, rng: RngStream) -> PGDraw:
    """Exact draw from PG(1, c).

    Uses the alternating-series accept-reject sampler for shape 1. The density
    only depends on |c|, so c and -c give identical sequences.

    Raises:
        InputError: If `c` is not finite.
    """
    if not math.isfinite(c):
        raise InputError(f'Polya-Gamma tilt must be finite, got {c}')
    omega = random_polyagamma(1, abs(c), method='devroye', random_state=rng.generator)
    return PGDraw(omega=float(omega), tilt=float(c))


def sample_polya_gamma_array(c: ArrayLike, rng: RngStream) -> np.ndarray:
    """Vectorized PG(1, c) draws, one per entry of `c`."""
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise InputError('Polya-Gamma tilts must be finite')
    if c.size == 0:
        return np.zeros(c.shape)
    omega = random_polyagamma(1, np.abs(c), method='devroye', random_state=rng.generator)
    return np.asarray(omega, dtype=float).reshape(c.shape)


# Beta, Gamma, Dirichlet and categorical

def _log_gamma_variates(shape: np.ndarray, rng: RngStream) -> np.ndarray:
    """log G with G ~ Gamma(shape, 1), stable for tiny shapes.

    Uses G = G' U^(1/shape) with G' ~ Gamma(shape + 1).
    """
    boosted = rng.generator.standard_gamma(shape + 1.0)
    return np.log(boosted) + np.log(rng.uniform(shape.shape)) / shape


def sample_dirichlet(concentration: ArrayLike, rng: RngStream) -> np.ndarray:
    """Dirichlet draw over the last axis of `concentration`.

    A 2-d input draws one independent row per leading index. Rows sum to one
    within floating point rounding after renormalization.

    Raises:
        InputError: If any entry is non-finite or not positive.
    """
    concentration = _positive('Dirichlet concentration', concentration)
    if concentration.ndim == 0 or concentration.shape[-1] == 0:
        raise InputError('Dirichlet concentration must have at least one entry')
    log_g = _log_gamma_variates(concentration, rng)
    draw = np.exp(log_g - special.logsumexp(log_g, axis=-1, keepdims=True))
    return draw / draw.sum(axis=-1, keepdims=True)


def sample_beta_logit(a: ArrayLike, b: ArrayLike, rng: RngStream) -> np.ndarray:
    """Logit of Beta(a, b) draws.

    Draws that round to 0 or 1 as probabilities stay finite here, so callers
    can keep `log v` and `log(1 - v)` exact through `log_expit`.
    """
    a, b = np.broadcast_arrays(_positive('Beta a', a), _positive('Beta b', b))
    x = _log_gamma_variates(np.array(a, dtype=float), rng)
    y = _log_gamma_variates(np.array(b, dtype=float), rng)
    return x - y


def sample_beta(a: ArrayLike, b: ArrayLike, rng: RngStream) -> np.ndarray:
    """Beta(a, b) draws, broadcasting `a` against `b`."""
    return special.expit(sample_beta_logit(a, b, rng))


def sample_gamma(shape: ArrayLike, rate: ArrayLike, rng: RngStream, size=None) -> np.ndarray:
    """Gamma draws parameterized by shape and rate."""
    shape = _positive('Gamma shape', shape)
    rate = _positive('Gamma rate', rate)
    return rng.generator.gamma(shape, 1.0 / rate, size=size)


def _check_weights(weights: ArrayLike) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0 or not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise InputError('categorical weights must be finite and nonnegative')
    return weights


def sample_categorical(weights: ArrayLike, rng: RngStream) -> int:
    """Draw an index proportional to unnormalized `weights`.

    Raises:
        InputError: On negative or non-finite weights.
        DegenerateInputError: If all weights are zero.
    """
    weights = _check_weights(weights)
    cdf = np.cumsum(weights)
    if cdf[-1] <= 0:
        raise DegenerateInputError('categorical weights are all zero')
    u = rng.generator.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side='right'), weights.size - 1))


def sample_categorical_log(log_weights: ArrayLike, rng: RngStream) -> int:
    """Draw an index proportional to `exp(log_weights)`."""
    log_weights = np.asarray(log_weights, dtype=float)
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise DegenerateInputError('categorical log-weights are all -inf or invalid')
    return sample_categorical(np.exp(log_weights - top), rng)


def sample_categorical_rows(weights: ArrayLike, rng: RngStream) -> np.ndarray:
    """One categorical draw per row of an (N, K) weight matrix."""
    weights = _check_weights(weights)
    cdf = np.cumsum(weights, axis=-1)
    if np.any(cdf[..., -1] <= 0):
        raise DegenerateInputError('a categorical weight row is all zero')
    u = rng.generator.random(cdf.shape[:-1]) * cdf[..., -1]
    idx = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, weights.shape[-1] - 1)


# Gaussian family

def sample_mvn(mean: ArrayLike, cov: ArrayLike, rng: RngStream) -> np.ndarray:
    """Multivariate normal draw via the Cholesky factor of `cov`."""
    mean = np.asarray(mean, dtype=float)
    chol = cholesky(cov, 'covariance')
    return mean + chol @ rng.normal(mean.shape[0])


def sample_inverse_wishart(scale: ArrayLike, df: float, rng: RngStream) -> np.ndarray:
    """Sigma ~ IW(scale, df), returned symmetrized.

    Raises:
        InputError: If `scale` is not SPD or `df <= d - 1`.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    cholesky(scale, 'inverse-Wishart scale')
    d = scale.shape[0]
    if not df > d - 1:
        raise InputError(f'inverse-Wishart df must exceed {d - 1}, got {df}')
    draw = stats.invwishart.rvs(df=df, scale=scale, random_state=rng.generator)
    return symmetrize(np.asarray(draw, dtype=float).reshape(d, d))


def sample_matrix_normal(M: ArrayLike, row_cov: ArrayLike, col_cov: ArrayLike, rng: RngStream) -> np.ndarray:
    """A ~ MN(M, row_cov, col_cov), i.e. A = M + L_row Z L_colᵀ."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    cholesky(row_cov, 'matrix-normal row covariance')
    cholesky(col_cov, 'matrix-normal column covariance')
    draw = stats.matrix_normal.rvs(mean=M, rowcov=row_cov, colcov=col_cov, random_state=rng.generator)
    return np.asarray(draw, dtype=float).reshape(M.shape)


def sample_matrix_normal_inverse_wishart(prior: MNIWParams, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """Draw `(A, Sigma)` with `Sigma ~ IW(S0, n0)` and `A | Sigma ~ MN(M, Sigma, V)`."""
    prior.validate()
    sigma = sample_inverse_wishart(prior.S0, prior.n0, rng)
    A = sample_matrix_normal(prior.M, sigma, prior.V, rng)
    return A, sigma


def slice_sample(log_density: Callable[[float], float], x0: float, rng: RngStream,
                 width: float = 1.0, max_steps: int = 32) -> float:
    """One univariate slice-sampling update with stepping out and shrinkage.

    Args:
        log_density (callable): Unnormalized log density, -inf outside support.
        x0 (float): Current point, must have finite log density.
        rng (RngStream): Random stream.
        width (float): Initial bracket width.
        max_steps (int): Maximum number of stepping-out expansions per side.

    Returns:
        float: The new point.
    """
    level = log_density(x0) + math.log(rng.uniform())
    left = x0 - width * rng.generator.random()
    right = left + width
    steps = max_steps
    while steps > 0 and log_density(left) > level:
        left -= width
        steps -= 1
    steps = max_steps
    while steps > 0 and log_density(right) > level:
        right += width
        steps -= 1
    while True:
        x1 = left + (right - left) * rng.generator.random()
        if log_density(x1) > level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


# Log densities

def mvn_logpdf(x: ArrayLike, mean: ArrayLike, cov: ArrayLike) -> np.ndarray:
    """Multivariate normal log density evaluated through a Cholesky solve.

    `x` may be a single point of shape (d,) or a batch of shape (n, d).
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    chol = cholesky(cov, 'covariance')
    d = chol.shape[0]
    diff = np.atleast_2d(x - mean)
    solved = linalg.solve_triangular(chol, diff.T, lower=True)
    maha = np.sum(solved**2, axis=0)
    out = -0.5 * maha - np.sum(np.log(np.diag(chol))) - 0.5 * d * LOG_2PI
    return out[0] if x.ndim == 1 else out


def _normal(params, x):
    sd = float(_positive('normal sd', params.get('sd', 1.0)))
    return float(stats.norm.logpdf(x, loc=params.get('mean', 0.0), scale=sd))


def _mvn(params, x):
    return float(mvn_logpdf(x, params['mean'], params['cov']))


def _categorical(params, x):
    p = _check_weights(params['p'])
    if abs(p.sum() - 1.0) > 1e-8:
        raise InputError('categorical probabilities must sum to one')
    if not float(x).is_integer() or not 0 <= int(x) < p.size:
        return -math.inf
    return math.log(p[int(x)]) if p[int(x)] > 0 else -math.inf


def _beta(params, x):
    a = float(_positive('Beta a', params['a']))
    b = float(_positive('Beta b', params['b']))
    return float(stats.beta.logpdf(x, a, b))


def _gamma(params, x):
    shape = float(_positive('Gamma shape', params['shape']))
    rate = float(_positive('Gamma rate', params['rate']))
    return float(stats.gamma.logpdf(x, shape, scale=1.0 / rate))


def _dirichlet(params, x):
    concentration = _positive('Dirichlet concentration', params['concentration'])
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-10:
        return -math.inf
    return float(special.gammaln(concentration.sum()) - special.gammaln(concentration).sum()
                 + np.sum(special.xlogy(concentration - 1.0, x)))


def _inverse_wishart(params, x):
    scale = np.atleast_2d(params['scale'])
    cholesky(scale, 'inverse-Wishart scale')
    return float(stats.invwishart.logpdf(x, df=params['df'], scale=scale))


def _matrix_normal(params, x):
    return float(stats.matrix_normal.logpdf(x, mean=params['M'], rowcov=params['row_cov'],
                                            colcov=params['col_cov']))


_LOG_DENSITIES: Dict[str, Callable[[Mapping[str, Any], Any], float]] = {
    'normal': _normal,
    'mvn': _mvn,
    'categorical': _categorical,
    'beta': _beta,
    'gamma': _gamma,
    'dirichlet': _dirichlet,
    'inverse-wishart': _inverse_wishart,
    'matrix-normal': _matrix_normal,
}
"""Supported families of `log_density`."""


def log_density(family: str, params: Mapping[str, Any], x: Any) -> float:
    """Natural-log density (or mass) of `x` under `family` with `params`.

    Args:
        family (str): One of the keys of `_LOG_DENSITIES`.
        params (Mapping): Family parameters, e.g. `{'mean': 0, 'sd': 1}`.
        x: Point to evaluate.

    Raises:
        InputError: If the family is unknown or the parameters are invalid.
    """
    try:
        evaluate = _LOG_DENSITIES[family]
    except KeyError as exc:
        raise InputError(f'unknown family "{family}"') from exc
    try:
        return evaluate(params, x)
    except KeyError as exc:
        raise InputError(f'missing parameter {exc} for family "{family}"') from exc


def logit(p: ArrayLike) -> np.ndarray:
    """Inverse of the logistic function."""
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def optional_seed(rng: Optional[RngStream], seed: int = 0) -> RngStream:
    """Return `rng`, or a fresh stream for `seed` when it is None."""
    return rng if rng is not None else RngStream(seed)
