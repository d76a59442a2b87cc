"""Bayesian time-series segmentation with recurrent sticky HDP-HMMs."""

__version__ = "1.0.0"

from segflow.chain import ChainResult, ChainSettings, run_chain  # noqa: E402
from segflow.emissions import make_emission  # noqa: E402
from segflow.kernels import RngStream  # noqa: E402
from segflow.metrics import evaluate_segmentation  # noqa: E402
from segflow.model import ChainState, Model, ModelSettings  # noqa: E402

__all__ = ['ChainResult', 'ChainSettings', 'ChainState', 'Model', 'ModelSettings', 'RngStream',
           'evaluate_segmentation', 'make_emission', 'run_chain', '__version__']
