#!/usr/bin/env python3

"""Log-likelihood trace and box plots across fitted runs."""

import os
from typing import List, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from segflow.errors import DataFormatError  # noqa: E402
from segflow.evaluate import chain_dirs  # noqa: E402


def read_trace(chain: str) -> pd.DataFrame:
    path = os.path.join(chain, 'loglik_trace.csv')
    if not os.path.isfile(path):
        raise DataFormatError(f'{chain} contains no loglik_trace.csv')
    return pd.read_csv(path)


def plot_traces(run_dirs: List[str], out: str, labels: Optional[List[str]] = None, burnin: int = 200) -> str:
    """Log-likelihood against sweep, and a box plot of the post-burn-in values.

    Args:
        run_dirs (list): Run directories written by `fit`; every chain of a
            run is drawn in the run's color.
        out (str): Image file to write.
        labels (list, optional): Legend entries, one per run. Defaults to the
            directory names.
        burnin (int): Sweeps left out of the box plot.

    Returns:
        str: Path written.
    """
    labels = labels or [os.path.basename(os.path.normpath(d)) for d in run_dirs]
    if len(labels) != len(run_dirs):
        raise ValueError(f'Expected {len(run_dirs)} labels, but got {len(labels)}!')

    fig, (ax_trace, ax_box) = plt.subplots(1, 2, figsize=(12, 5), gridspec_kw={'width_ratios': [2, 1]})
    kept = []
    for i, (run_dir, label) in enumerate(zip(run_dirs, labels)):
        values = []
        for j, chain in enumerate(chain_dirs(run_dir)):
            trace = read_trace(chain)
            ax_trace.plot(trace['sweep'], trace['joint_loglik'], color=f'C{i}', linewidth=1,
                          alpha=0.8, label=label if j == 0 else None)
            values.append(trace.loc[trace['sweep'] > burnin, 'joint_loglik'])
        kept.append(pd.concat(values).to_numpy())

    ax_trace.set_xlabel('sweep')
    ax_trace.set_ylabel('log-likelihood')
    ax_trace.grid(True, linestyle='--', alpha=0.7)
    ax_trace.axvline(x=burnin, color='k', linestyle='-', alpha=0.3)
    ax_trace.legend()
    ax_box.boxplot(kept)
    ax_box.set_xticks(range(1, len(labels) + 1), labels, rotation=30)
    ax_box.set_ylabel(f'log-likelihood after sweep {burnin}')
    ax_box.grid(True, linestyle='--', alpha=0.7)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
