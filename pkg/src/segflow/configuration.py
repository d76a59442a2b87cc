#!/usr/bin/env python3

"""Run configuration: structured defaults, config files and overrides.

Every numeric default of a fit lives in the dataclasses below. A run merges,
in increasing priority, the structured defaults, an optional config file and
dotted command-line overrides (`priors.alpha.shape=1`).
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from segflow.chain import ChainSettings
from segflow.emissions import FAMILIES, EmissionModel, default_prior, make_emission
from segflow.errors import ConfigError, InputError
from segflow.hdp import GammaPrior, RhoGrid
from segflow.model import SAMPLERS, VARIANTS, ModelSettings
from segflow.recurrence import INPUT_MODES

RUNTIME_TYPES = ('serial', 'process')
"""How parallel chains are executed."""


@dataclass
class Wandb:
    project: str = "segflow"
    run_name: str = "fit"
    mode: str = "disabled"  # "online", "offline", "disabled"
    group: Optional[str] = None
    tags: List[str] = field(default_factory=list)
    save_code: bool = False


@dataclass
class Model:
    variant: str = "rs-hdp"  # "hdp", "s-hdp", "ds-hdp", "rs-hdp"
    sampler: str = "weak-limit"  # "weak-limit", "direct"
    emission: str = "ar1"  # "gaussian", "ar1"
    n_states: int = 10  # weak-limit truncation L


@dataclass
class GammaHyper:
    shape: float
    rate: float


@dataclass
class Priors:
    # Gamma(1, 0.01) on alpha (alpha + kappa for the sticky model), Gamma(2, 1) on gamma
    alpha: GammaHyper = field(default_factory=lambda: GammaHyper(1.0, 0.01))
    gamma: GammaHyper = field(default_factory=lambda: GammaHyper(2.0, 1.0))
    # uniform 100 x 100 grid over (phi, eta), eta in (0, 2]
    n_phi: int = 100
    n_eta: int = 100
    eta_max: float = 2.0
    sticky_cells: int = 100
    # S0 = 0.4 * empirical covariance, n0 = d + 2
    emission_scale: float = 0.4
    emission_kappa0: float = 0.1
    affine: bool = False


@dataclass
class Recurrence:
    prior_var: Optional[float] = None  # 1e-4 unless set
    input: str = "raw"  # "raw", "differences"
    standardize: bool = False
    kappa_initial_update: str = "sticks"  # "sticks", "prior"


@dataclass
class Runner:
    iterations: int = 500
    burnin: int = 200
    thin: int = 1
    seed: int = 0
    chains: int = 1
    log_interval: int = 50
    runtime: str = "serial"  # "serial", "process"
    workers: Optional[int] = None
    output_dir: str = "runs/fit"
    resume_from: Optional[str] = None


@dataclass
class Data:
    path: Optional[str] = None
    kind: Optional[str] = None  # "bee", "csv" or None to detect from the header


@dataclass
class Logging:
    timestamp: int = field(default_factory=lambda: int(time.time()))
    level: str = "info"


@dataclass
class Config:
    model: Model = field(default_factory=Model)
    runner: Runner = field(default_factory=Runner)
    priors: Priors = field(default_factory=Priors)
    recurrence: Recurrence = field(default_factory=Recurrence)
    data: Data = field(default_factory=Data)
    logging: Logging = field(default_factory=Logging)
    wandb: Wandb = field(default_factory=Wandb)


def read_flat(path: str) -> DictConfig:
    """Read a flat `dotted.key = value` document.

    Blank lines and lines starting with `#` are skipped; trailing `# ...`
    comments are not supported inside values.
    """
    dotlist = []
    with open(path, 'r', encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ConfigError(f'{path}:{number}: expected "key = value", got "{line}"')
            key, value = (part.strip() for part in line.split('=', 1))
            dotlist.append(f'{key}={value}')
    return OmegaConf.from_dotlist(dotlist)


def load_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> DictConfig:
    """Merge defaults, an optional config file and dotted overrides.

    Args:
        path (str, optional): `.yaml`/`.yml` files go through omegaconf,
            anything else is read as a flat key-value document.
        overrides (list, optional): `key=value` strings, highest priority.

    Raises:
        ConfigError: On unknown keys, wrongly typed values or failed
            validation.
    """
    try:
        sources = [OmegaConf.structured(Config())]
        if path is not None:
            sources.append(OmegaConf.load(path) if path.endswith(('.yaml', '.yml')) else read_flat(path))
        sources.append(OmegaConf.from_dotlist(list(overrides or [])))
        conf = OmegaConf.merge(*sources)
    except OmegaConfBaseException as exc:
        raise ConfigError(f'invalid configuration: {exc}') from exc
    return validate(compute_derived_parameters(conf))


def compute_derived_parameters(conf):
    """Process the configuration after merging all sources, calculating derived values."""
    if conf.recurrence.prior_var is None:
        conf.recurrence.prior_var = 1e-4
    if conf.runner.workers is None:
        conf.runner.workers = conf.runner.chains
    return conf


def validate(conf):
    """Raise `ConfigError` unless the configuration describes a runnable fit."""
    if conf.model.variant not in VARIANTS:
        raise ConfigError(f'unknown model "{conf.model.variant}", expected one of {VARIANTS}')
    if conf.model.sampler not in SAMPLERS:
        raise ConfigError(f'unknown sampler "{conf.model.sampler}", expected one of {SAMPLERS}')
    if conf.model.emission not in FAMILIES:
        raise ConfigError(f'unknown emission "{conf.model.emission}", expected one of {FAMILIES}')
    if conf.model.sampler == 'weak-limit' and conf.model.n_states < 1:
        raise ConfigError('the weak-limit sampler needs n_states >= 1')
    if conf.recurrence.input not in INPUT_MODES:
        raise ConfigError(f'unknown regression input "{conf.recurrence.input}", expected one of {INPUT_MODES}')
    if conf.runner.runtime not in RUNTIME_TYPES:
        raise ConfigError(f'unknown runtime "{conf.runner.runtime}", expected one of {RUNTIME_TYPES}')
    if conf.runner.chains < 1 or conf.runner.workers < 1:
        raise ConfigError('chains and workers must be at least one')
    if not 0 <= conf.runner.seed < 2**64:
        raise ConfigError('seed must be a 64-bit unsigned integer')
    for name in ('alpha', 'gamma'):
        prior = conf.priors[name]
        if prior.shape <= 0 or prior.rate <= 0:
            raise ConfigError(f'priors.{name} needs positive shape and rate')
    chain_settings(conf)
    model_settings(conf)
    return conf


def model_settings(conf) -> ModelSettings:
    """Sampler settings of a validated configuration."""
    priors = conf.priors
    try:
        grid = RhoGrid(priors.n_phi, priors.n_eta, priors.eta_max)
    except InputError as exc:
        raise ConfigError(str(exc)) from exc
    return ModelSettings(
        variant=conf.model.variant,
        sampler=conf.model.sampler,
        n_states=conf.model.n_states,
        alpha_prior=GammaPrior(priors.alpha.shape, priors.alpha.rate),
        gamma_prior=GammaPrior(priors.gamma.shape, priors.gamma.rate),
        grid=grid,
        sticky_cells=priors.sticky_cells,
        prior_var=conf.recurrence.prior_var,
        input_mode=conf.recurrence.input,
        standardize=conf.recurrence.standardize,
        kappa_initial_update=conf.recurrence.kappa_initial_update,
    ).validate()


def chain_settings(conf) -> ChainSettings:
    runner = conf.runner
    return ChainSettings(iterations=runner.iterations, burnin=runner.burnin, thin=runner.thin,
                         log_interval=runner.log_interval).validate()


def emission_model(conf, observations) -> EmissionModel:
    """Emission family with its data-driven default prior."""
    priors = conf.priors
    prior = default_prior(conf.model.emission, observations, affine=priors.affine,
                          scale_factor=priors.emission_scale, kappa0=priors.emission_kappa0)
    return make_emission(conf.model.emission, prior)
