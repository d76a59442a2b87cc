#!/usr/bin/env python3

"""Command-line front end: generate data, fit, evaluate, verify and plot.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 failed
verification, 5 input/output error.
"""

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np
import wandb
from omegaconf import OmegaConf

import segflow.output as sfout
from segflow import __version__
from segflow.configuration import load_config
from segflow.datasets import content_hash, write_csv
from segflow.errors import ConfigError, DataFormatError, InputError, VerificationError
from segflow.evaluate import evaluate
from segflow.fit import fit
from segflow.generators import (NASCAR_SPEEDS, generate_hmm, generate_nascar, separated_means,
                                sticky_transition_matrix)
from segflow.kernels import RngStream
from segflow.log import set_level
from segflow.plotting import plot_traces
from segflow.runtime import Runtime
from segflow.verify import SUITES, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFICATION = 4
EXIT_IO = 5

FIT_FLAGS = {
    'model': 'model.variant',
    'sampler': 'model.sampler',
    'emission': 'model.emission',
    'L': 'model.n_states',
    'iters': 'runner.iterations',
    'burnin': 'runner.burnin',
    'thin': 'runner.thin',
    'seed': 'runner.seed',
    'chains': 'runner.chains',
    'runtime': 'runner.runtime',
    'workers': 'runner.workers',
    'out': 'runner.output_dir',
    'resume': 'runner.resume_from',
    'data': 'data.path',
    'kind': 'data.kind',
}
"""Command-line flags of `fit` and the configuration keys they set."""

SAMPLE_ARGUMENTS = {'pg': 'n_samples', 'conjugacy': 'n_draws', 'fb-oracle': 'n_draws', 'geweke': 'n_samples'}
"""Suite argument set by `verify --samples`."""


def write_manifest(path: str, manifest: dict) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    return path


def cmd_generate(args) -> int:
    rng = RngStream(args.seed)
    if args.generator == 'nascar':
        sequence = generate_nascar(n_laps=args.laps, speeds=args.speeds, noise_sd=args.noise, rng=rng)
    else:
        dynamics = None
        if args.emission == 'ar1':
            dynamics = np.tile(args.ar_coef * np.eye(args.dim), (args.states, 1, 1))
        sequence = generate_hmm(args.states, sticky_transition_matrix(args.states, args.stay),
                                separated_means(args.states, args.dim, args.distance), args.T, rng,
                                dynamics=dynamics)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_csv(sequence, args.out)
    manifest = {'command': 'generate', **sequence.meta, 'T': sequence.T, 'd': sequence.d,
                'path': args.out, 'hash': content_hash(args.out), 'version': __version__}
    write_manifest(os.path.splitext(args.out)[0] + '.json', manifest)
    sfout.info(f'Wrote {sequence.T} rows to {args.out}', newline=False)
    return EXIT_OK


def fit_overrides(args) -> List[str]:
    """Dotted overrides from the explicit flags, followed by the trailing ones."""
    overrides = [f'{key}={getattr(args, flag)}' for flag, key in FIT_FLAGS.items()
                 if getattr(args, flag) is not None]
    return overrides + list(args.overrides)


def cmd_fit(args) -> int:
    conf = load_config(args.config, fit_overrides(args))
    set_level(conf.logging.level)

    sfout.header()
    print("Configuration:")
    print(OmegaConf.to_yaml(conf))

    run = wandb.init(
        project=conf.wandb.project,
        name=conf.wandb.run_name,
        config=OmegaConf.to_container(conf, resolve=True),
        mode=conf.wandb.mode,
        group=conf.wandb.group,
        tags=list(conf.wandb.tags),
        save_code=conf.wandb.save_code,
    )
    wandb.define_metric("*", step_metric="sweep")

    try:
        with Runtime(type_=conf.runner.runtime, workers=conf.runner.workers) as runtime:
            runtime.info()
            fit(conf, runtime, run=run)
    finally:
        run.finish()
    sfout.info(f'Run written to {conf.runner.output_dir}')
    return EXIT_OK


def cmd_eval(args) -> int:
    frame = evaluate(args.run, args.truth, out=args.out)
    for row in frame.itertuples():
        sfout.info(f'{row.run} chain {row.chain}: accuracy {row.accuracy:.4f}, '
                   f'weighted F1 {row.weighted_f1:.4f}, {row.n_switches} switches', newline=False)
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {}
    if args.suite == 'geweke':
        kwargs.update(variant=args.model, sampler=args.sampler)
    if args.samples is not None:
        kwargs[SAMPLE_ARGUMENTS[args.suite]] = args.samples
    run_suite(args.suite, seed=args.seed, **kwargs)
    return EXIT_OK


def cmd_plot(args) -> int:
    path = plot_traces(args.run, args.out, labels=args.labels, burnin=args.burnin)
    sfout.info(f'Wrote {path}', newline=False)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='segflow', description=__doc__.splitlines()[0])
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)

    generate = commands.add_parser('generate', help='write a synthetic labeled sequence')
    generators = generate.add_subparsers(dest='generator', required=True)
    nascar = generators.add_parser('nascar', help='car driving round an oval')
    nascar.add_argument('--laps', type=int, default=20)
    nascar.add_argument('--speeds', type=float, nargs=4, default=list(NASCAR_SPEEDS))
    nascar.add_argument('--noise', type=float, default=0.05)
    hmm = generators.add_parser('hmm', help='sticky HMM with separated means')
    hmm.add_argument('--states', type=int, default=3)
    hmm.add_argument('--T', type=int, default=1000)
    hmm.add_argument('--dim', type=int, default=1)
    hmm.add_argument('--stay', type=float, default=0.95)
    hmm.add_argument('--distance', type=float, default=10.0)
    hmm.add_argument('--emission', choices=['gaussian', 'ar1'], default='gaussian')
    hmm.add_argument('--ar-coef', type=float, default=0.5)
    for sub in (nascar, hmm):
        sub.add_argument('--seed', type=int, default=0)
        sub.add_argument('--out', required=True)
        sub.set_defaults(handler=cmd_generate)

    fit_parser = commands.add_parser('fit', help='run the sampler on a sequence')
    fit_parser.add_argument('--config', help='flat key = value file or YAML')
    fit_parser.add_argument('--model')
    fit_parser.add_argument('--sampler')
    fit_parser.add_argument('--emission')
    fit_parser.add_argument('--L', type=int)
    fit_parser.add_argument('--iters', type=int)
    fit_parser.add_argument('--burnin', type=int)
    fit_parser.add_argument('--thin', type=int)
    fit_parser.add_argument('--seed', type=int)
    fit_parser.add_argument('--chains', type=int)
    fit_parser.add_argument('--runtime')
    fit_parser.add_argument('--workers', type=int)
    fit_parser.add_argument('--data')
    fit_parser.add_argument('--kind')
    fit_parser.add_argument('--out')
    fit_parser.add_argument('--resume')
    fit_parser.add_argument('overrides', nargs='*', help='dotted key=value overrides')
    fit_parser.set_defaults(handler=cmd_fit)

    eval_parser = commands.add_parser('eval', help='score run directories against labels')
    eval_parser.add_argument('--run', nargs='+', required=True)
    eval_parser.add_argument('--truth', required=True)
    eval_parser.add_argument('--out')
    eval_parser.set_defaults(handler=cmd_eval)

    verify = commands.add_parser('verify', help='run a property suite')
    verify.add_argument('suite', choices=list(SUITES))
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--samples', type=int)
    verify.add_argument('--model', default='rs-hdp')
    verify.add_argument('--sampler', default='weak-limit')
    verify.set_defaults(handler=cmd_verify)

    plot = commands.add_parser('plot', help='log-likelihood traces and box plots')
    plot.add_argument('--run', nargs='+', required=True)
    plot.add_argument('--out', default='loglik.png')
    plot.add_argument('--labels', nargs='+')
    plot.add_argument('--burnin', type=int, default=200)
    plot.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        sfout.warning(f'Configuration error: {e}')
        return EXIT_CONFIG
    except (DataFormatError, InputError) as e:
        sfout.warning(f'Data error: {e}')
        return EXIT_DATA
    except VerificationError as e:
        sfout.warning(f'Verification failed: {e}')
        return EXIT_VERIFICATION
    except OSError as e:
        sfout.warning(f'I/O error: {e}')
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
