import numpy as np
import pytest

from segflow.chain import ChainSettings, init_chain, run_chain
from segflow.emissions import default_prior, make_emission
from segflow.kernels import RngStream
from segflow.metrics import evaluate_segmentation
from segflow.model import Model, ModelSettings
from segflow.weak_limit import weaklimit_sweep

VARIANTS = ['hdp', 's-hdp', 'ds-hdp', 'rs-hdp']


def check_state(state, L):
    state.latent.validate(n_states=L)
    state.transition.beta.validate()
    state.transition.pi_bar.validate()
    assert state.transition.beta.beta.shape == (L,)
    assert state.transition.pi_bar.pi_bar.shape == (L, L)
    assert state.emission.theta.n_states == L
    state.hyper.validate()
    state.transition.counts.validate()


@pytest.mark.parametrize('variant', VARIANTS)
def test_sweeps_keep_state_consistent(model_factory, three_state_sequence, variant):
    model = model_factory(variant, n_states=5)
    observations = three_state_sequence.observations[:150]
    state = init_chain(model, observations, RngStream(2))
    for expected in range(1, 6):
        state, diagnostics = weaklimit_sweep(state, model, observations)
        check_state(state, 5)
        assert state.sweep == expected == diagnostics.sweep
        assert np.isfinite(diagnostics.joint_loglik)
        assert 1 <= diagnostics.n_states_used <= 5
    assert state.recurrence.schedule.logits.shape == (5, 150)


@pytest.mark.parametrize('variant', ['hdp', 's-hdp'])
def test_variants_without_sticks(model_factory, three_state_sequence, variant):
    model = model_factory(variant)
    observations = three_state_sequence.observations[:100]
    state = init_chain(model, observations, RngStream(5))
    for _ in range(3):
        state, diagnostics = weaklimit_sweep(state, model, observations)
        assert np.all(state.latent.w == 0)
    assert (diagnostics.kappa_sticky > 0) == (variant == 's-hdp')


def test_disentangled_persistence_is_constant_in_time(model_factory, three_state_sequence):
    model = model_factory('ds-hdp')
    observations = three_state_sequence.observations[:100]
    state = init_chain(model, observations, RngStream(6))
    state, _ = weaklimit_sweep(state, model, observations)
    logits = state.recurrence.schedule.logits
    assert np.all(logits == logits[:, :1])
    np.testing.assert_array_equal(logits[:, 0], state.recurrence.kappa_initial)


def test_skipping_schedule_refresh_keeps_stale_persistence(model_factory, three_state_sequence):
    model = model_factory('ds-hdp', skip_steps=frozenset({'kappa'}))
    observations = three_state_sequence.observations[:100]
    state = init_chain(model, observations, RngStream(6))
    before = state.recurrence.schedule.logits.copy()
    state, _ = weaklimit_sweep(state, model, observations)
    np.testing.assert_array_equal(state.recurrence.schedule.logits, before)
    assert not np.array_equal(state.recurrence.schedule.logits[:, 0], state.recurrence.kappa_initial)


def test_recurrent_schedule_uses_regression(model_factory, three_state_sequence):
    model = model_factory('rs-hdp', prior_var=1.0)
    observations = three_state_sequence.observations[:100]
    state = init_chain(model, observations, RngStream(8))
    state, _ = weaklimit_sweep(state, model, observations)
    rec = state.recurrence
    np.testing.assert_array_equal(rec.schedule.logits[:, 0], rec.kappa_initial)
    expected = rec.params.R @ model.inputs(observations)[:-1].T + rec.params.r[:, None]
    np.testing.assert_allclose(rec.schedule.logits[:, 1:], expected)
    assert rec.eta.eta.shape == (4, 99)
    assert np.all(rec.eta.eta > 0)


@pytest.mark.parametrize('variant', VARIANTS)
def test_single_observation(model_factory, variant):
    model = model_factory(variant)
    observations = np.array([[0.3]])
    state = init_chain(model, observations, RngStream(0))
    state, diagnostics = weaklimit_sweep(state, model, observations)
    assert state.latent.z.shape == (1,)
    assert diagnostics.n_switches == 0


def test_ar_emissions_run(model_factory):
    model = model_factory('rs-hdp', family='ar1')
    observations = np.cumsum(RngStream(1).normal((80, 1)), axis=0)
    state = init_chain(model, observations, RngStream(1))
    for _ in range(3):
        state, diagnostics = weaklimit_sweep(state, model, observations)
    assert np.isfinite(diagnostics.joint_loglik)


@pytest.mark.slow
@pytest.mark.parametrize('variant', VARIANTS)
def test_recovers_separated_states(three_state_sequence, variant):
    observations = three_state_sequence.observations
    emission = make_emission('gaussian', default_prior('gaussian', observations))
    model = Model(ModelSettings(variant=variant, n_states=6), emission)
    result = run_chain(model, observations, RngStream(11), ChainSettings(iterations=80, burnin=40, log_interval=40))
    score = evaluate_segmentation(result.modal, three_state_sequence.labels)
    assert score.accuracy > 0.95
