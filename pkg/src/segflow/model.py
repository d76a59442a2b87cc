#!/usr/bin/env python3

"""Sampler state shared by the weak-limit and direct-assignment sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Optional

import numpy as np
from numpy.typing import ArrayLike

from segflow.emissions import EmissionModel, EmissionState, EmissionTheta
from segflow.errors import ConfigError, ConsistencyError
from segflow.hdp import GammaPrior, GlobalWeights, HyperParams, RhoGrid, TransitionCounts, TransitionRows
from segflow.kernels import RngStream
from segflow.recurrence import (INPUT_MODES, KappaSchedule, PGAuxiliaries, RecurrenceParams,
                                compute_kappa_schedule, constant_schedule, regression_inputs, zero_schedule)

VARIANTS = ('hdp', 's-hdp', 'ds-hdp', 'rs-hdp')
"""Supported model variants."""

SAMPLERS = ('weak-limit', 'direct')
"""Supported samplers."""

KAPPA_INITIAL_UPDATES = ('sticks', 'prior')
"""How `kappa_{j,1}` of the recurrent model is refreshed."""

SKIPPABLE_STEPS = ('pg', 'kappa')
"""Sweep steps that `ModelSettings.skip_steps` may switch off."""

SCHEMA_VERSION = 1
"""Version of the chain snapshot document."""


@dataclass
class ModelSettings:
    """Everything a sweep needs besides the chain state and the data.

    Attributes:
        variant (str): One of `VARIANTS`.
        sampler (str): One of `SAMPLERS`.
        n_states (int): Weak-limit truncation L.
        alpha_prior (GammaPrior): Prior of `alpha` (of `alpha + kappa` for
            the sticky model).
        gamma_prior (GammaPrior): Prior of `gamma`.
        grid (RhoGrid): Grid of the `(rho1, rho2)` posterior.
        sticky_cells (int): Grid cells of the sticky ratio `kappa/(alpha+kappa)`.
        prior_var (float): Prior variance of the recurrence weights.
        input_mode (str): Regression input, see `recurrence.regression_inputs`.
        standardize (bool): Standardize the regression inputs.
        kappa_initial_update (str): `'sticks'` refreshes `kappa_{j,1}` from
            all stick counts; `'prior'` draws it from `Beta(rho1, rho2)`.
        skip_steps (frozenset): Sweep steps to leave out, for harness
            sensitivity checks only.
    """
    variant: str = 'rs-hdp'
    sampler: str = 'weak-limit'
    n_states: int = 10
    alpha_prior: GammaPrior = GammaPrior(1.0, 0.01)
    gamma_prior: GammaPrior = GammaPrior(2.0, 1.0)
    grid: RhoGrid = field(default_factory=RhoGrid)
    sticky_cells: int = 100
    prior_var: float = 1e-4
    input_mode: str = 'raw'
    standardize: bool = False
    kappa_initial_update: str = 'sticks'
    skip_steps: FrozenSet[str] = frozenset()

    def validate(self) -> ModelSettings:
        """Raise `ConfigError` on unsupported or inconsistent settings."""
        if self.variant not in VARIANTS:
            raise ConfigError(f'unknown model "{self.variant}", expected one of {VARIANTS}')
        if self.sampler not in SAMPLERS:
            raise ConfigError(f'unknown sampler "{self.sampler}", expected one of {SAMPLERS}')
        if self.sampler == 'weak-limit' and self.n_states < 1:
            raise ConfigError('the weak-limit sampler needs n_states >= 1')
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f'unknown regression input "{self.input_mode}", expected one of {INPUT_MODES}')
        if self.kappa_initial_update not in KAPPA_INITIAL_UPDATES:
            raise ConfigError(f'kappa_initial_update must be one of {KAPPA_INITIAL_UPDATES}')
        if not self.prior_var > 0:
            raise ConfigError('the recurrence prior variance must be positive')
        unknown = set(self.skip_steps) - set(SKIPPABLE_STEPS)
        if unknown:
            raise ConfigError(f'cannot skip unknown steps {sorted(unknown)}')
        return self

    @property
    def recurrent(self) -> bool:
        return self.variant == 'rs-hdp'

    @property
    def disentangled(self) -> bool:
        """Variants with stick indicators and a beta prior on persistence."""
        return self.variant in ('ds-hdp', 'rs-hdp')

    @property
    def sticky(self) -> bool:
        return self.variant == 's-hdp'


class Model:
    """Model settings bound to an emission family.

    Attributes:
        settings (ModelSettings): Validated settings.
        emission (EmissionModel): Emission family with its prior.
    """

    def __init__(self, settings: ModelSettings, emission: EmissionModel):
        self.settings = settings.validate()
        self.emission = emission

    def inputs(self, observations: np.ndarray) -> np.ndarray:
        """Regression inputs of the recurrent persistence."""
        return regression_inputs(observations, self.settings.input_mode, self.settings.standardize)

    def schedule(self, recurrence: RecurrenceParams, kappa_initial: np.ndarray,
                 inputs: np.ndarray) -> KappaSchedule:
        """Self-persistence schedule implied by the variant."""
        T = inputs.shape[0]
        if self.settings.recurrent:
            return compute_kappa_schedule(recurrence, inputs, kappa_initial)
        if self.settings.disentangled:
            return constant_schedule(kappa_initial, T)
        return zero_schedule(kappa_initial.size, T)


@dataclass
class LatentTrajectory:
    """State sequence `z` and stick indicators `w` (0-based states, `w[0] = 0`)."""
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        self.w = np.asarray(self.w, dtype=np.int64)

    @property
    def T(self) -> int:
        return self.z.size

    @property
    def n_switches(self) -> int:
        return int(np.count_nonzero(self.z[1:] != self.z[:-1]))

    def validate(self, n_states: Optional[int] = None, sweep: Optional[int] = None) -> LatentTrajectory:
        """Raise `ConsistencyError` unless sticks repeat the previous state."""
        if self.w.size and self.w[0] != 0:
            raise ConsistencyError('w_1 must be zero', sweep=sweep)
        bad = np.flatnonzero((self.w[1:] == 1) & (self.z[1:] != self.z[:-1]))
        if bad.size:
            raise ConsistencyError('stick indicator changes state', sweep=sweep, t=int(bad[0]) + 1)
        if n_states is not None and (np.any(self.z < 0) or np.any(self.z >= n_states)):
            raise ConsistencyError(f'state index outside 0..{n_states - 1}', sweep=sweep)
        return self


@dataclass
class TransitionState:
    """Global weights, base transition rows and the counts they were drawn from.

    `pi_bar` is None for the direct-assignment sampler, which integrates it
    out. `counts.n` carries a leading initial-state row.
    """
    beta: GlobalWeights
    pi_bar: Optional[TransitionRows]
    counts: TransitionCounts


@dataclass
class RecurrenceState:
    """Persistence parameters: weights, `kappa_{j,1}` logits, schedule and auxiliaries."""
    params: RecurrenceParams
    kappa_initial: np.ndarray
    schedule: KappaSchedule
    eta: PGAuxiliaries


@dataclass
class SweepDiagnostics:
    """Per-sweep summary written to the trace."""
    sweep: int
    joint_loglik: float
    n_states_used: int
    n_switches: int
    alpha: float
    gamma: float
    rho1: float
    rho2: float
    kappa_sticky: float

    def as_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class ChainState:
    """Complete sampler state, serializable between sweeps."""
    latent: LatentTrajectory
    transition: TransitionState
    recurrence: RecurrenceState
    emission: EmissionState
    hyper: HyperParams
    rng: RngStream
    sweep: int = 0

    @property
    def n_states(self) -> int:
        """L for the weak-limit sampler, the active K for direct assignment."""
        return self.emission.theta.n_states

    def to_dict(self, variant: str, sampler: str) -> Dict[str, Any]:
        """Snapshot as a JSON-ready document of flat arrays with their dims."""

        def flat(array: ArrayLike) -> Dict[str, Any]:
            array = np.asarray(array)
            return {'dims': list(array.shape), 'data': array.ravel().tolist()}

        t = self.transition
        return {
            'schema': SCHEMA_VERSION,
            'variant': variant,
            'sampler': sampler,
            'sweep': self.sweep,
            'z': self.latent.z.tolist(),
            'w': self.latent.w.tolist(),
            'hyper': dict(self.hyper.__dict__),
            'beta': flat(t.beta.beta),
            'pi_bar': None if t.pi_bar is None else flat(t.pi_bar.pi_bar),
            'n': flat(t.counts.n),
            'm': flat(t.counts.m),
            'theta': {'family': self.emission.family,
                      'A': flat(self.emission.theta.A),
                      'Sigma': flat(self.emission.theta.Sigma)},
            'R': flat(self.recurrence.params.R),
            'r': flat(self.recurrence.params.r),
            'prior_var': self.recurrence.params.prior_var,
            'kappa_initial': flat(self.recurrence.kappa_initial),
            'eta': flat(self.recurrence.eta.eta),
            'rng': self.rng.state_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], model: Model, observations: np.ndarray) -> ChainState:
        """Restore a snapshot written by `to_dict`.

        The schedule and the sufficient statistics are recomputed from the
        observations.

        Raises:
            ConfigError: If the document's schema, variant or sampler does not
                match `model`.
        """

        def unflat(entry: Dict[str, Any], dtype=float) -> np.ndarray:
            return np.asarray(entry['data'], dtype=dtype).reshape(entry['dims'])

        if doc.get('schema') != SCHEMA_VERSION:
            raise ConfigError(f'unsupported snapshot schema {doc.get("schema")}')
        if doc['variant'] != model.settings.variant or doc['sampler'] != model.settings.sampler:
            raise ConfigError(f'snapshot of {doc["variant"]}/{doc["sampler"]} does not match the model')
        latent = LatentTrajectory(doc['z'], doc['w'])
        theta = EmissionTheta(unflat(doc['theta']['A']), unflat(doc['theta']['Sigma']))
        n_states = theta.n_states
        stats = model.emission.suffstats(observations, latent.z, n_states)
        params = RecurrenceParams(unflat(doc['R']), unflat(doc['r']), doc['prior_var'])
        kappa_initial = unflat(doc['kappa_initial'])
        schedule = model.schedule(params, kappa_initial, model.inputs(observations))
        transition = TransitionState(
            beta=GlobalWeights(unflat(doc['beta'])),
            pi_bar=None if doc['pi_bar'] is None else TransitionRows(unflat(doc['pi_bar'])),
            counts=TransitionCounts(unflat(doc['n'], np.int64), unflat(doc['m'], np.int64)),
        )
        return cls(
            latent=latent,
            transition=transition,
            recurrence=RecurrenceState(params, kappa_initial, schedule, PGAuxiliaries(unflat(doc['eta']))),
            emission=EmissionState(doc['theta']['family'], theta, stats),
            hyper=HyperParams(**doc['hyper']),
            rng=RngStream.from_state_dict(doc['rng']),
            sweep=int(doc['sweep']),
        )


def joint_log_likelihood(state: ChainState, model: Model, observations: np.ndarray) -> float:
    """`sum_t log p(y_t | theta_{z_t}, y_{t-1})` under the current assignment."""
    log_lik = model.emission.log_likelihood_matrix(state.emission.theta, observations)
    return float(log_lik[np.arange(state.latent.T), state.latent.z].sum())


def sweep_diagnostics(state: ChainState, model: Model, observations: np.ndarray) -> SweepDiagnostics:
    """Summarize the state after a sweep."""
    hyper = state.hyper
    return SweepDiagnostics(
        sweep=state.sweep,
        joint_loglik=joint_log_likelihood(state, model, observations),
        n_states_used=int(np.unique(state.latent.z).size),
        n_switches=state.latent.n_switches,
        alpha=hyper.alpha,
        gamma=hyper.gamma,
        rho1=hyper.rho1,
        rho2=hyper.rho2,
        kappa_sticky=hyper.kappa_sticky,
    )
