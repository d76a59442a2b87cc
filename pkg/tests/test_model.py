import json

import numpy as np
import pytest

from segflow.chain import init_chain, sweep
from segflow.errors import ConfigError, ConsistencyError
from segflow.kernels import RngStream
from segflow.model import ChainState, LatentTrajectory, ModelSettings, joint_log_likelihood
from segflow.recurrence import RecurrenceParams


@pytest.mark.parametrize('overrides', [
    {'variant': 'hmm'},
    {'sampler': 'gibbs'},
    {'n_states': 0},
    {'input_mode': 'lagged'},
    {'kappa_initial_update': 'never'},
    {'prior_var': 0.0},
    {'skip_steps': frozenset({'beta'})},
])
def test_settings_reject_invalid(overrides):
    with pytest.raises(ConfigError):
        ModelSettings(**overrides).validate()


def test_settings_flags():
    assert ModelSettings(variant='rs-hdp').recurrent
    assert ModelSettings(variant='ds-hdp').disentangled
    assert not ModelSettings(variant='ds-hdp').recurrent
    assert ModelSettings(variant='s-hdp').sticky
    assert not ModelSettings(variant='hdp').disentangled
    assert ModelSettings(sampler='direct', n_states=0).validate()


def test_trajectory_validation():
    latent = LatentTrajectory([0, 0, 1, 1], [0, 1, 0, 1])
    assert latent.n_switches == 1
    assert latent.T == 4
    latent.validate(n_states=2)
    with pytest.raises(ConsistencyError):
        LatentTrajectory([0, 1], [0, 1]).validate()
    with pytest.raises(ConsistencyError):
        LatentTrajectory([0, 0], [1, 0]).validate()
    with pytest.raises(ConsistencyError):
        LatentTrajectory([0, 3], [0, 0]).validate(n_states=2)


@pytest.mark.parametrize('variant', ['hdp', 's-hdp', 'ds-hdp', 'rs-hdp'])
def test_schedule_follows_variant(model_factory, variant):
    model = model_factory(variant)
    inputs = np.linspace(-1, 1, 6)[:, None]
    params = RecurrenceParams(np.full((2, 1), 3.0), np.zeros(2), 1.0)
    schedule = model.schedule(params, np.array([1.0, -1.0]), inputs)
    assert schedule.logits.shape == (2, 6)
    if variant in ('hdp', 's-hdp'):
        assert np.all(schedule.kappa == 0.0)
    elif variant == 'ds-hdp':
        assert np.all(schedule.logits[0] == 1.0)
    else:
        assert schedule.logits[0, 0] == 1.0
        np.testing.assert_allclose(schedule.logits[0, 1:], 3.0 * inputs[:-1, 0])


@pytest.mark.parametrize('sampler', ['weak-limit', 'direct'])
@pytest.mark.parametrize('variant', ['s-hdp', 'rs-hdp'])
def test_snapshot_round_trip_resumes_identically(model_factory, three_state_sequence, variant, sampler):
    model = model_factory(variant, sampler)
    observations = three_state_sequence.observations[:80]
    state = init_chain(model, observations, RngStream(4))
    state, _ = sweep(state, model, observations)

    doc = json.loads(json.dumps(state.to_dict(variant, sampler)))
    restored = ChainState.from_dict(doc, model, observations)
    assert restored.sweep == state.sweep
    assert joint_log_likelihood(restored, model, observations) == pytest.approx(
        joint_log_likelihood(state, model, observations))

    state, first = sweep(state, model, observations)
    restored, second = sweep(restored, model, observations)
    assert np.array_equal(state.latent.z, restored.latent.z)
    assert first.joint_loglik == pytest.approx(second.joint_loglik)


def test_snapshot_rejects_other_model(model_factory, three_state_sequence):
    observations = three_state_sequence.observations[:30]
    model = model_factory('rs-hdp')
    doc = init_chain(model, observations, RngStream(1)).to_dict('rs-hdp', 'weak-limit')
    with pytest.raises(ConfigError):
        ChainState.from_dict(doc, model_factory('hdp'), observations)
    with pytest.raises(ConfigError):
        ChainState.from_dict({**doc, 'schema': 99}, model, observations)
