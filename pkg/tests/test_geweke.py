import numpy as np
import pytest

from segflow.errors import ConfigError
from segflow.geweke import GewekeConfig, geweke_test, joint_statistics, sample_joint
from segflow.kernels import RngStream


@pytest.mark.parametrize('kwargs', [{'T': 0}, {'T': 21}, {'n_states': 4}, {'n_samples': 10, 'n_batches': 50}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        GewekeConfig(**kwargs).validate()


def test_config_rejects_unknown_skip_step():
    with pytest.raises(ConfigError):
        GewekeConfig(skip_steps=('emissions',)).model()


@pytest.mark.parametrize('sampler', ['weak-limit', 'direct'])
def test_joint_draw_statistics(sampler):
    model = GewekeConfig(sampler=sampler).model()
    state, observations = sample_joint(model, 12, RngStream(3))
    assert observations.shape == (12, 1)
    stats = joint_statistics(state, model, observations)
    assert {'alpha', 'gamma', 'data_mean', 'mean_R_sq', 'mean_r_sq'} <= set(stats)
    assert ('n_states' in stats) == (sampler == 'direct')
    assert all(np.isfinite(v) for v in stats.values())


def test_small_run_reports_every_statistic():
    config = GewekeConfig(variant='s-hdp', T=5, n_samples=200, burnin=10, n_batches=10)
    steps = []
    report = geweke_test(config, RngStream(0), progress=steps.append)
    names = set(report.z_scores())
    assert {'alpha', 'gamma', 'kappa_sticky', 'occupancy_entropy'} <= names
    assert 'mean_R' not in names
    assert all(np.isfinite(s.z) for s in report.statistics)
    assert steps == []


@pytest.mark.slow
@pytest.mark.parametrize('sampler', ['weak-limit', 'direct'])
def test_recurrent_sampler_passes(sampler):
    report = geweke_test(GewekeConfig(sampler=sampler, n_samples=20_000), RngStream(11))
    assert report.passed(), report.z_scores()


@pytest.mark.slow
def test_skipping_polya_gamma_step_is_detected():
    report = geweke_test(GewekeConfig(n_samples=20_000, skip_steps=('pg',)), RngStream(11))
    assert not report.passed()
