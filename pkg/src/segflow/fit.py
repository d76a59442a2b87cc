#!/usr/bin/env python3

"""Fit a model to one sequence and write the per-chain run directories.

A run directory holds

* `loglik_trace.csv`: sweep, joint_loglik, n_states, n_switches;
* `hyper_trace.csv`: the hyperparameters after every sweep;
* `samples/sweep_XXXXXX.json`: snapshots of the saved sweeps;
* `modal_states.csv`: t, state of the aligned per-timestep mode;
* `manifest.json`: resolved configuration, dataset hash and stream.

With more than one chain every chain writes into `chain_<i>/` below the
output directory.
"""

import glob
import json
import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

from segflow.chain import ChainResult, run_chain
from segflow.configuration import chain_settings, emission_model, model_settings
from segflow.datasets import FLOAT_FORMAT, content_hash, load_sequence
from segflow.errors import ConfigError, DataFormatError
from segflow.kernels import RngStream
from segflow.log import get_logger
from segflow.model import ChainState, Model

logger = get_logger(__name__)

TRACE_COLUMNS = ['sweep', 'joint_loglik', 'n_states', 'n_switches']
HYPER_COLUMNS = ['sweep', 'alpha', 'gamma', 'rho1', 'rho2', 'kappa_sticky']


@dataclass
class ChainJob:
    """Everything a worker needs to run one chain."""
    config: Dict[str, Any]
    observations: np.ndarray
    chain: int
    out_dir: str
    dataset: Dict[str, Any]


def chain_dir(output_dir: str, chain: int, n_chains: int) -> str:
    return output_dir if n_chains == 1 else os.path.join(output_dir, f'chain_{chain}')


def latest_snapshot(path: str) -> str:
    """Snapshot to resume from: `path` itself or the last one below `path/samples`."""
    if os.path.isfile(path):
        return path
    snapshots = sorted(glob.glob(os.path.join(path, 'samples', 'sweep_*.json')))
    if not snapshots:
        raise ConfigError(f'no snapshots to resume from in {path}')
    return snapshots[-1]


def write_trace(result: ChainResult, out_dir: str):
    frame = result.trace_frame().rename(columns={'n_states_used': 'n_states'})
    frame[TRACE_COLUMNS].to_csv(os.path.join(out_dir, 'loglik_trace.csv'), index=False,
                                float_format=FLOAT_FORMAT, lineterminator='\n')
    frame[HYPER_COLUMNS].to_csv(os.path.join(out_dir, 'hyper_trace.csv'), index=False,
                                float_format=FLOAT_FORMAT, lineterminator='\n')


def write_samples(result: ChainResult, out_dir: str):
    samples_dir = os.path.join(out_dir, 'samples')
    os.makedirs(samples_dir, exist_ok=True)
    for snapshot in result.snapshots:
        with open(os.path.join(samples_dir, f'sweep_{snapshot["sweep"]:06d}.json'), 'w', encoding='utf-8') as f:
            json.dump(snapshot, f)


def write_modal_states(modal: np.ndarray, out_dir: str):
    frame = pd.DataFrame({'t': np.arange(modal.size), 'state': modal})
    frame.to_csv(os.path.join(out_dir, 'modal_states.csv'), index=False, lineterminator='\n')


def run_one_chain(job: ChainJob, callback: Optional[Callable] = None) -> Dict[str, Any]:
    """Run one chain and write its run directory.

    Module level so that it can be shipped to a worker process.

    Returns:
        dict: The chain's manifest.
    """
    conf = OmegaConf.create(job.config)
    model = Model(model_settings(conf), emission_model(conf, job.observations))
    settings = chain_settings(conf)
    rng = RngStream(conf.runner.seed, stream_id=job.chain)

    state = None
    if conf.runner.resume_from is not None:
        source = conf.runner.resume_from
        if os.path.isdir(source) and conf.runner.chains > 1:
            source = os.path.join(source, f'chain_{job.chain}')
        snapshot = latest_snapshot(source)
        with open(snapshot, 'r', encoding='utf-8') as f:
            state = ChainState.from_dict(json.load(f), model, job.observations)
        logger.info(f'chain {job.chain}: resuming from {snapshot} at sweep {state.sweep}')

    result = run_chain(model, job.observations, rng, settings, state=state, callback=callback)

    os.makedirs(job.out_dir, exist_ok=True)
    write_trace(result, job.out_dir)
    write_samples(result, job.out_dir)
    write_modal_states(result.modal, job.out_dir)
    manifest = {
        'config': job.config,
        'dataset': job.dataset,
        'seed': conf.runner.seed,
        'stream_id': job.chain,
        'chain': job.chain,
        'first_sweep': result.trace[0].sweep if result.trace else 0,
        'last_sweep': result.state.sweep,
        'n_samples': len(result.snapshots),
        'elapsed': result.elapsed,
    }
    with open(os.path.join(job.out_dir, 'manifest.json'), 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.info(f'chain {job.chain}: {settings.iterations} sweeps in {result.elapsed:.1f}s, '
                f'written to {job.out_dir}')
    return manifest


def _tracker_callback(run, chain: int, n_chains: int) -> Optional[Callable]:
    if run is None:
        return None
    prefix = '' if n_chains == 1 else f'chain_{chain}/'

    def log(diagnostics):
        values = diagnostics.as_dict()
        run.log({'sweep': values.pop('sweep'), **{prefix + k: v for k, v in values.items()}})
    return log


def fit(conf, runtime, run, **ignored_kwargs) -> List[Dict[str, Any]]:
    """Fit the configured model with `conf.runner.chains` chains.

    Args:
        conf (DictConfig): Validated configuration.
        runtime (Runtime): Where the chains run.
        run: Experiment-tracker run receiving the per-sweep diagnostics in
            serial mode, or None.

    Returns:
        list: One manifest per chain.

    Raises:
        ConfigError: If no data path is configured.
        DataFormatError: If the data file is missing or malformed.
    """
    if conf.data.path is None:
        raise ConfigError('no data file given, set data.path or pass --data')
    if not os.path.isfile(conf.data.path):
        raise DataFormatError(f'data file {conf.data.path} does not exist')
    sequence = load_sequence(conf.data.path, conf.data.kind)
    dataset = {'path': os.path.abspath(conf.data.path), 'hash': content_hash(conf.data.path),
               'T': sequence.T, 'd': sequence.d}
    logger.info(f'loaded {sequence.T} observations of dimension {sequence.d} from {conf.data.path}')

    n_chains = conf.runner.chains
    os.makedirs(conf.runner.output_dir, exist_ok=True)
    config = OmegaConf.to_container(conf, resolve=True)
    jobs = [ChainJob(config, sequence.observations, i, chain_dir(conf.runner.output_dir, i, n_chains), dataset)
            for i in range(n_chains)]
    callbacks = [_tracker_callback(run, i, n_chains) for i in range(n_chains)]
    return runtime.launch_chains(run_one_chain, jobs, callbacks=callbacks)
