import json
import os

import pandas as pd
import pytest

from segflow.datasets import content_hash, load_csv
from segflow.main import EXIT_CONFIG, EXIT_DATA, EXIT_OK, fit_overrides, build_parser, main


@pytest.fixture
def hmm_csv(tmp_path):
    path = str(tmp_path / 'hmm.csv')
    assert main(['generate', 'hmm', '--states', '2', '--T', '120', '--seed', '3', '--out', path]) == EXIT_OK
    return path


def test_generate_is_deterministic(tmp_path, hmm_csv):
    again = str(tmp_path / 'again.csv')
    main(['generate', 'hmm', '--states', '2', '--T', '120', '--seed', '3', '--out', again])
    assert content_hash(again) == content_hash(hmm_csv)
    with open(os.path.splitext(hmm_csv)[0] + '.json', 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    assert manifest['T'] == 120 and manifest['hash'] == content_hash(hmm_csv)


def test_generate_nascar(tmp_path):
    path = str(tmp_path / 'nascar.csv')
    assert main(['generate', 'nascar', '--laps', '2', '--out', path]) == EXIT_OK
    sequence = load_csv(path)
    assert sequence.d == 2
    assert set(sequence.labels.tolist()) == {0, 1, 2, 3}


def test_fit_overrides_follow_flags():
    args = build_parser().parse_args(['fit', '--model', 'hdp', '--iters', '5', 'runner.thin=2'])
    assert fit_overrides(args) == ['model.variant=hdp', 'runner.iterations=5', 'runner.thin=2']


@pytest.mark.parametrize('sampler', ['weak-limit', 'direct'])
def test_fit_then_eval(tmp_path, hmm_csv, sampler):
    run = str(tmp_path / 'run')
    code = main(['fit', '--data', hmm_csv, '--sampler', sampler, '--emission', 'gaussian', '--L', '4',
                 '--iters', '6', '--burnin', '2', '--seed', '1', '--out', run])
    assert code == EXIT_OK
    trace = pd.read_csv(os.path.join(run, 'loglik_trace.csv'))
    assert list(trace.columns) == ['sweep', 'joint_loglik', 'n_states', 'n_switches']
    assert trace['sweep'].tolist() == [1, 2, 3, 4, 5, 6]
    assert len(os.listdir(os.path.join(run, 'samples'))) == 4
    with open(os.path.join(run, 'manifest.json'), 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    assert manifest['dataset']['hash'] == content_hash(hmm_csv)

    assert main(['eval', '--run', run, '--truth', hmm_csv]) == EXIT_OK
    scores = pd.read_csv(os.path.join(run, 'scores.csv'))
    assert scores.loc[0, 'sampler'] == sampler
    assert 0.0 <= scores.loc[0, 'accuracy'] <= 1.0
    assert len(pd.read_csv(os.path.join(run, 'sample_scores.csv'))) == 4

    image = str(tmp_path / 'loglik.png')
    assert main(['plot', '--run', run, '--out', image, '--burnin', '2']) == EXIT_OK
    assert os.path.getsize(image) > 0


def test_fit_resume_continues(tmp_path, hmm_csv):
    run = str(tmp_path / 'run')
    common = ['fit', '--data', hmm_csv, '--model', 's-hdp', '--emission', 'gaussian', '--L', '3', '--burnin', '1']
    assert main(common + ['--iters', '3', '--out', run]) == EXIT_OK
    resumed = str(tmp_path / 'resumed')
    assert main(common + ['--iters', '2', '--out', resumed, '--resume', run]) == EXIT_OK
    trace = pd.read_csv(os.path.join(resumed, 'loglik_trace.csv'))
    assert trace['sweep'].tolist() == [4, 5]


def test_two_chains_write_subdirectories(tmp_path, hmm_csv):
    run = str(tmp_path / 'run')
    assert main(['fit', '--data', hmm_csv, '--model', 'hdp', '--emission', 'gaussian', '--L', '3',
                 '--iters', '3', '--burnin', '1', '--chains', '2', '--out', run]) == EXIT_OK
    scores = str(tmp_path / 'scores.csv')
    assert main(['eval', '--run', run, '--truth', hmm_csv, '--out', scores]) == EXIT_OK
    assert main(['eval', '--run', run, '--truth', hmm_csv, '--out', scores]) == EXIT_OK
    assert pd.read_csv(scores)['chain'].tolist() == [0, 1, 0, 1]


def test_exit_codes(tmp_path, hmm_csv):
    out = str(tmp_path / 'run')
    assert main(['fit', '--data', hmm_csv, '--iters', '5', '--burnin', '9', '--out', out]) == EXIT_CONFIG
    assert main(['fit', '--data', hmm_csv, '--iters', '10', '--burnin', '8', '--thin', '5', '--out', out]) == EXIT_CONFIG
    assert main(['fit', '--data', str(tmp_path / 'missing.csv'), '--iters', '5', '--burnin', '1',
                 '--out', out]) == EXIT_DATA
    assert main(['fit', '--iters', '5', '--burnin', '1', '--out', out]) == EXIT_CONFIG
    assert main(['eval', '--run', str(tmp_path), '--truth', hmm_csv]) == EXIT_DATA


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(['train'])
