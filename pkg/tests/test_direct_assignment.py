import numpy as np
import pytest

from segflow import hdp
from segflow.chain import ChainSettings, init_chain, run_chain
from segflow.direct_assignment import _Assignment, direct_assignment_sweep
from segflow.emissions import default_prior, make_emission
from segflow.kernels import RngStream
from segflow.metrics import evaluate_segmentation
from segflow.model import Model, ModelSettings, TransitionState

VARIANTS = ['hdp', 's-hdp', 'ds-hdp', 'rs-hdp']


def check_state(state, T):
    K = state.n_states
    assert np.array_equal(np.unique(state.latent.z), np.arange(K))
    state.latent.validate(n_states=K)
    state.transition.beta.validate()
    assert state.transition.beta.beta.shape == (K + 1,)
    assert state.transition.pi_bar is None
    rec = state.recurrence
    assert rec.kappa_initial.shape == (K + 1,)
    assert rec.params.n_states == K + 1
    assert rec.schedule.logits.shape == (K + 1, T)
    assert rec.eta.eta.shape == (K + 1, T - 1)
    assert state.emission.stats.n.sum() == T


@pytest.mark.parametrize('variant', VARIANTS)
def test_sweeps_keep_state_consistent(model_factory, three_state_sequence, variant):
    model = model_factory(variant, 'direct')
    observations = three_state_sequence.observations[:120]
    state = init_chain(model, observations, RngStream(3))
    assert state.n_states == 1
    for expected in range(1, 5):
        state, diagnostics = direct_assignment_sweep(state, model, observations)
        check_state(state, 120)
        assert diagnostics.sweep == expected
        assert diagnostics.n_states_used == state.n_states


def test_far_away_points_open_new_states(three_state_sequence):
    observations = three_state_sequence.observations
    model = Model(ModelSettings(variant='hdp', sampler='direct'),
                  make_emission('gaussian', default_prior('gaussian', observations)))
    state = init_chain(model, observations, RngStream(9))
    for _ in range(5):
        state, _ = direct_assignment_sweep(state, model, observations)
    assert state.n_states >= 2


@pytest.mark.parametrize('variant', VARIANTS)
def test_single_observation(model_factory, variant):
    model = model_factory(variant, 'direct')
    observations = np.array([[1.0]])
    state = init_chain(model, observations, RngStream(0))
    state, _ = direct_assignment_sweep(state, model, observations)
    assert state.n_states == 1
    assert state.latent.z.tolist() == [0]


def test_middle_timestep_options(model_factory, three_state_sequence):
    model = model_factory('ds-hdp', 'direct')
    observations = three_state_sequence.observations[:6]
    state = init_chain(model, observations, RngStream(1))
    state.latent.z = np.array([0, 0, 1, 0, 0, 0])
    state.latent.w = np.zeros(6, dtype=np.int64)
    state.emission.stats = model.emission.suffstats(observations, state.latent.z, 2)
    state.emission.theta = model.emission.sample_all(state.emission.stats, state.rng)
    state.transition = TransitionState(hdp.GlobalWeights(np.array([0.5, 0.3, 0.2])), None, state.transition.counts)
    rec = state.recurrence
    rec.params = rec.params.append(np.zeros(rec.params.R.shape[1]), 0.0)
    rec.kappa_initial = np.array([0.0, 1.0, -1.0])
    rec.schedule = model.schedule(rec.params, rec.kappa_initial, model.inputs(observations))

    work = _Assignment(state, model, observations, model.inputs(observations))
    work.remove(2, sweep=1)
    assert work.K == 1
    choices, log_weights = work.options(2)
    # neighbours are both state 0: stick twice, switch then stick, stick then
    # switch, a fresh state between two switches, and two switches through 0
    assert sorted(choices) == sorted([(0, 1, 1), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 0)])
    assert np.all(np.isfinite(log_weights))


def test_assignment_bookkeeping_survives_full_pass(model_factory, three_state_sequence):
    model = model_factory('rs-hdp', 'direct')
    observations = three_state_sequence.observations[:60]
    state = init_chain(model, observations, RngStream(12))
    work = _Assignment(state, model, observations, model.inputs(observations))
    for t in range(60):
        work.remove(t, sweep=1)
        choices, log_weights = work.options(t)
        work.add(t, choices[int(np.argmax(log_weights))], sweep=1)
    work.check(sweep=1)
    fresh = model.emission.suffstats(observations, work.z, work.K)
    np.testing.assert_allclose(work.stats.n[:work.K], fresh.n)
    np.testing.assert_allclose(work.stats.Syy[:work.K], fresh.Syy, atol=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize('variant', VARIANTS)
def test_recovers_separated_states(three_state_sequence, variant):
    observations = three_state_sequence.observations
    emission = make_emission('gaussian', default_prior('gaussian', observations))
    model = Model(ModelSettings(variant=variant, sampler='direct'), emission)
    result = run_chain(model, observations, RngStream(13), ChainSettings(iterations=40, burnin=20, log_interval=20))
    score = evaluate_segmentation(result.modal, three_state_sequence.labels)
    assert score.accuracy > 0.95
