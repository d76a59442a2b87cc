#!/usr/bin/env python3

"""Synthetic labeled sequences: the oval track and plain HMM simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from segflow.errors import InputError
from segflow.kernels import RngStream, sample_categorical

NASCAR_SPEEDS = (1.0, 1.5, 0.75, 1.25)
"""Speeds on the bottom straight, right turn, top straight and left turn."""


@dataclass
class LabeledSequence:
    """Observations with ground-truth labels.

    Attributes:
        observations (numpy.ndarray): (T, d) observations.
        labels (numpy.ndarray): (T,) contiguous ids starting at 0, or None.
        meta (dict): Generator or source description.
    """
    observations: np.ndarray
    labels: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=float).T).T
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.observations.shape[0],):
                raise InputError(f'{self.labels.size} labels for {self.observations.shape[0]} observations')

    @property
    def T(self) -> int:
        return self.observations.shape[0]

    @property
    def d(self) -> int:
        return self.observations.shape[1]


def nascar_track(n_laps: int = 20, speeds: Sequence[float] = NASCAR_SPEEDS, straight: float = 20.0,
                 radius: float = 5.0, dt: float = 0.1):
    """Noise-free positions and labels along the oval.

    The bottom straight runs from (0, 0) to (straight, 0), the right turn is a
    half circle around (straight, radius), the top straight runs back at height
    2 radius and the left turn closes the loop around (0, radius). Positions are
    sampled every `dt`. Each segment holds `round(length / (speed dt))`
    equally spaced samples, so every lap repeats exactly.

    Returns:
        tuple: (T, 2) positions and (T,) labels.
    """
    speeds = np.asarray(speeds, dtype=float)
    if speeds.shape != (4,) or np.any(speeds <= 0) or not np.all(np.isfinite(speeds)):
        raise InputError('the track needs four positive speeds')
    if n_laps < 1 or straight <= 0 or radius <= 0 or dt <= 0:
        raise InputError('laps, straight length, turn radius and dt must be positive')
    lengths = np.array([straight, math.pi * radius, straight, math.pi * radius])
    steps = np.round(lengths / (speeds * dt)).astype(int)
    if np.any(steps < 1):
        raise InputError(f'a segment is shorter than one step: {steps}')

    lap_points, lap_labels = [], []
    for k in range(4):
        s = np.arange(steps[k]) / steps[k]
        if k == 0:
            points = np.column_stack([s * straight, np.zeros_like(s)])
        elif k == 1:
            angle = -math.pi / 2 + s * math.pi
            points = np.column_stack([straight + radius * np.cos(angle), radius + radius * np.sin(angle)])
        elif k == 2:
            points = np.column_stack([straight - s * straight, np.full_like(s, 2 * radius)])
        else:
            angle = math.pi / 2 + s * math.pi
            points = np.column_stack([radius * np.cos(angle), radius + radius * np.sin(angle)])
        lap_points.append(points)
        lap_labels.append(np.full(steps[k], k))
    lap = np.concatenate(lap_points)
    labels = np.concatenate(lap_labels)
    positions = np.concatenate([np.tile(lap, (n_laps, 1)), lap[:1]])
    return positions, np.append(np.tile(labels, n_laps), labels[0])


def generate_nascar(n_laps: int = 20, speeds: Sequence[float] = NASCAR_SPEEDS, noise_sd: float = 0.05,
                    rng: Optional[RngStream] = None, straight: float = 20.0, radius: float = 5.0,
                    dt: float = 0.1) -> LabeledSequence:
    """Car going round an oval, one state per track segment.

    Dwell times are fixed by segment length over speed, so the segments have
    deterministic, non-geometric durations. The final sample returns to the
    starting point to close the loop.

    Args:
        n_laps (int): Number of laps.
        speeds (sequence): Four positive speeds.
        noise_sd (float): Standard deviation of the Gaussian position noise.
        rng (RngStream, optional): Noise stream; required when `noise_sd > 0`.

    Raises:
        InputError: On degenerate geometry or negative noise.
    """
    if noise_sd < 0:
        raise InputError('noise_sd must be nonnegative')
    positions, labels = nascar_track(n_laps, speeds, straight, radius, dt)
    if noise_sd > 0:
        if rng is None:
            raise InputError('a random stream is needed for noisy tracks')
        positions = positions + noise_sd * rng.normal(positions.shape)
    meta = {'generator': 'nascar', 'n_laps': n_laps, 'speeds': [float(s) for s in speeds],
            'noise_sd': noise_sd, 'straight': straight, 'radius': radius, 'dt': dt,
            'seed': None if rng is None else rng.seed}
    return LabeledSequence(positions, labels, meta)


def _check_transition_matrix(matrix: ArrayLike) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise InputError(f'transition matrix must be square, got shape {matrix.shape}')
    if np.any(matrix < 0) or not np.allclose(matrix.sum(axis=1), 1.0, atol=1e-10):
        raise InputError('transition matrix rows must be probability vectors')
    return matrix


def generate_hmm(n_states: int, transition: ArrayLike, means: ArrayLike, T: int, rng: RngStream,
                 covariances: Optional[ArrayLike] = None, dynamics: Optional[ArrayLike] = None,
                 initial: Optional[ArrayLike] = None) -> LabeledSequence:
    """Simulate an HMM with Gaussian or AR(1) emissions.

    With `dynamics` given, state `k` emits `y_t = A_k y_{t-1} + b_k + e_t`
    where `b_k` is `means[k]`; otherwise it emits `y_t = means[k] + e_t`.
    `e_t ~ N(0, covariances[k])`, identity by default.

    Raises:
        InputError: If the transition matrix is not row-stochastic or the
            parameter shapes disagree.
    """
    transition = _check_transition_matrix(transition)
    if transition.shape[0] != n_states:
        raise InputError(f'{n_states} states but a {transition.shape[0]}-state transition matrix')
    if T < 1:
        raise InputError('T must be positive')
    means = np.atleast_2d(np.asarray(means, dtype=float).T).T
    if means.shape[0] != n_states:
        raise InputError(f'expected {n_states} emission means, got {means.shape[0]}')
    d = means.shape[1]
    covariances = np.tile(np.eye(d), (n_states, 1, 1)) if covariances is None \
        else np.asarray(covariances, dtype=float).reshape(n_states, d, d)
    chols = np.linalg.cholesky(covariances)
    if dynamics is not None:
        dynamics = np.asarray(dynamics, dtype=float).reshape(n_states, d, d)
    initial = np.full(n_states, 1.0 / n_states) if initial is None else np.asarray(initial, dtype=float)

    labels = np.empty(T, dtype=np.int64)
    y = np.empty((T, d))
    for t in range(T):
        k = sample_categorical(initial if t == 0 else transition[labels[t - 1]], rng)
        labels[t] = k
        mean = means[k] if dynamics is None or t == 0 else dynamics[k] @ y[t - 1] + means[k]
        y[t] = mean + chols[k] @ rng.normal(d)
    meta = {'generator': 'hmm', 'n_states': n_states, 'T': T, 'emission': 'gaussian' if dynamics is None else 'ar1',
            'seed': rng.seed}
    return LabeledSequence(y, labels, meta)


def separated_means(n_states: int, d: int = 1, distance: float = 10.0) -> np.ndarray:
    """State means `distance` standard deviations apart along the first axis."""
    means = np.zeros((n_states, d))
    means[:, 0] = distance * np.arange(n_states)
    return means


def sticky_transition_matrix(n_states: int, stay: float = 0.95) -> np.ndarray:
    """Self-transition `stay`, the rest spread uniformly."""
    if n_states == 1:
        return np.ones((1, 1))
    matrix = np.full((n_states, n_states), (1.0 - stay) / (n_states - 1))
    np.fill_diagonal(matrix, stay)
    return matrix
