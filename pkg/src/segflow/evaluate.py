#!/usr/bin/env python3

"""Score fitted run directories against ground-truth labels."""

import glob
import json
import os
from typing import List, Optional

import pandas as pd

from segflow.datasets import FLOAT_FORMAT, load_sequence
from segflow.errors import DataFormatError
from segflow.log import get_logger
from segflow.metrics import evaluate_segmentation

logger = get_logger(__name__)

SCORE_COLUMNS = ['run', 'model', 'sampler', 'seed', 'chain', 'dataset_hash',
                 'accuracy', 'weighted_f1', 'n_switches', 'matching']


def chain_dirs(run_dir: str) -> List[str]:
    """The run directory itself, or its `chain_*` subdirectories."""
    if os.path.isfile(os.path.join(run_dir, 'modal_states.csv')):
        return [run_dir]
    dirs = sorted(glob.glob(os.path.join(run_dir, 'chain_*')), key=lambda d: int(d.rsplit('_', 1)[1]))
    dirs = [d for d in dirs if os.path.isfile(os.path.join(d, 'modal_states.csv'))]
    if not dirs:
        raise DataFormatError(f'{run_dir} contains no modal_states.csv')
    return dirs


def load_truth(path: str):
    if not os.path.isfile(path):
        raise DataFormatError(f'truth file {path} does not exist')
    sequence = load_sequence(path)
    if sequence.labels is None:
        raise DataFormatError(f'{path}: a label column is required')
    return sequence.labels


def sample_scores(chain: str, truth) -> pd.DataFrame:
    """Score of every saved sample of a chain."""
    rows = []
    for path in sorted(glob.glob(os.path.join(chain, 'samples', 'sweep_*.json'))):
        with open(path, 'r', encoding='utf-8') as f:
            snapshot = json.load(f)
        rows.append({'sweep': snapshot['sweep'], **evaluate_segmentation(snapshot['z'], truth).as_dict()})
    return pd.DataFrame(rows, columns=['sweep', 'accuracy', 'weighted_f1', 'n_switches', 'matching'])


def evaluate(run_dirs: List[str], truth_path: str, out: Optional[str] = None) -> pd.DataFrame:
    """Score the modal sequence of every chain and write the scores table.

    Each chain also gets a `sample_scores.csv` with the score of every saved
    sample, the spread around the modal score.

    Args:
        run_dirs (list): Run directories written by `fit`.
        truth_path (str): CSV with a label column.
        out (str, optional): Scores table. Rows are appended when it exists,
            so several runs on the same dataset end up in one table. Defaults
            to `scores.csv` inside the single run directory.

    Returns:
        pandas.DataFrame: The rows that were written.

    Raises:
        DataFormatError: If a run and the truth disagree in length or a file
            is missing.
    """
    truth = load_truth(truth_path)
    rows = []
    for run_dir in run_dirs:
        for chain in chain_dirs(run_dir):
            modal = pd.read_csv(os.path.join(chain, 'modal_states.csv'))['state'].to_numpy()
            if modal.size != truth.size:
                raise DataFormatError(f'{chain} has {modal.size} timesteps, {truth_path} has {truth.size}')
            manifest_path = os.path.join(chain, 'manifest.json')
            manifest = {}
            if os.path.isfile(manifest_path):
                with open(manifest_path, 'r', encoding='utf-8') as f:
                    manifest = json.load(f)
            config = manifest.get('config', {})
            score = evaluate_segmentation(modal, truth)
            rows.append({
                'run': run_dir,
                'model': config.get('model', {}).get('variant'),
                'sampler': config.get('model', {}).get('sampler'),
                'seed': manifest.get('seed'),
                'chain': manifest.get('chain'),
                'dataset_hash': manifest.get('dataset', {}).get('hash'),
                **score.as_dict(),
            })
            sample_scores(chain, truth).to_csv(os.path.join(chain, 'sample_scores.csv'), index=False,
                                               float_format=FLOAT_FORMAT, lineterminator='\n')
            logger.info(f'{chain}: accuracy {score.accuracy:.4f}, weighted F1 {score.weighted_f1:.4f}')

    frame = pd.DataFrame(rows, columns=SCORE_COLUMNS)
    append = out is not None and os.path.isfile(out)
    if out is None:
        if len(run_dirs) != 1:
            raise DataFormatError('pass an output table when scoring several runs')
        out = os.path.join(run_dirs[0], 'scores.csv')
    frame.to_csv(out, mode='a' if append else 'w', header=not append, index=False,
                 float_format=FLOAT_FORMAT, lineterminator='\n')
    return frame
