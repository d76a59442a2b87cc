import numpy as np
import pytest

from segflow.emissions import GaussianEmission, make_emission
from segflow.generators import generate_hmm, separated_means, sticky_transition_matrix
from segflow.kernels import MNIWParams, RngStream
from segflow.model import Model, ModelSettings


@pytest.fixture
def rng():
    return RngStream(20240601)


@pytest.fixture
def unit_prior():
    """One-dimensional NIW prior with unit scales."""
    return MNIWParams(M=np.zeros((1, 1)), V=np.eye(1), S0=np.eye(1), n0=3.0)


@pytest.fixture
def three_state_sequence():
    """600 points from three well-separated, persistent Gaussian states."""
    return generate_hmm(3, sticky_transition_matrix(3, 0.97), separated_means(3, 1, 10.0), 600, RngStream(7))


def small_model(variant='rs-hdp', sampler='weak-limit', n_states=4, family='gaussian', **settings):
    prior = MNIWParams(M=np.zeros((1, 1)), V=np.eye(1), S0=np.eye(1), n0=3.0)
    if family == 'ar1':
        prior = MNIWParams(M=np.zeros((1, 1)), V=np.eye(1), S0=0.5 * np.eye(1), n0=3.0)
    return Model(ModelSettings(variant=variant, sampler=sampler, n_states=n_states, **settings),
                 make_emission(family, prior))


@pytest.fixture
def model_factory():
    return small_model


@pytest.fixture
def gaussian_emission(unit_prior):
    return GaussianEmission(unit_prior)
