import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml
from xdg.BaseDirectory import xdg_data_home, xdg_state_home

from . import __version__ as VERSION
from .diffusion import DEFAULT_EPSILON, DEFAULT_KAPPAS, DiffusionParams
from .errors import InputError, InvalidParameter, InvalidRatio, UsageError
from .log import LogManager
from .panelreg import OUTCOMES
from .ratiorule import SWEEP_MAX, SWEEP_MIN
from .reconstruction import ReconstructionConfig
from .spectrum import SOLVERS


class Environment(object):

    APP_NAME: str = "contagion-lab"
    APP_VERSION: str = VERSION
    LOG_FILE: str = 'contagion-lab.log'
    OUTPUT_VARIABLE: str = 'CONTAGION_LAB_OUTPUT_DIR'

    log_path: str = ''
    log_full_name: str = ''
    data_path: str = ''
    report_path: str = ''

    @staticmethod
    def prepare_environment():
        Environment.log_path = os.path.join(xdg_state_home, Environment.APP_NAME)
        Environment.data_path = os.path.join(xdg_data_home, Environment.APP_NAME)
        Environment.report_path = os.environ.get(Environment.OUTPUT_VARIABLE) or os.path.join(Environment.data_path, 'reports')
        if not os.path.isdir(Environment.log_path):
            os.makedirs(Environment.log_path, mode=0o755, exist_ok=True)
        Environment.log_full_name = os.path.join(Environment.log_path, Environment.LOG_FILE)


@dataclass(frozen=True)
class RatioSweep:
    min: float = SWEEP_MIN
    max: float = SWEEP_MAX
    steps: int = 10

    def __post_init__(self):
        if not (0.0 < self.min < 1.0 and 0.0 < self.max < 1.0):
            raise UsageError("Sweep bounds must lie in (0, 1)", min=self.min, max=self.max)
        if self.min > self.max:
            raise UsageError("Sweep minimum exceeds maximum", min=self.min, max=self.max)
        if self.steps < 1:
            raise UsageError("Sweep needs at least one step", steps=self.steps)

    def values(self) -> List[float]:
        if self.min == self.max:
            return [self.min]
        return [float(value) for value in np.linspace(self.min, self.max, self.steps)]


@dataclass(frozen=True)
class BootstrapSettings:
    B: int = 100
    level: float = 0.95
    seed: Optional[int] = None

    def __post_init__(self):
        if self.B < 10:
            raise UsageError("Bootstrap needs at least ten replicates", B=self.B)
        if not 0.0 < self.level < 1.0:
            raise UsageError("Confidence level must lie in (0, 1)", level=self.level)


@dataclass(frozen=True)
class DidSettings:
    base_year: Optional[int] = None
    quantile: float = 0.75
    interactions: Optional[Tuple[str, ...]] = None
    outcome: str = 'log_assets'
    method: str = 'within'

    def __post_init__(self):
        if self.interactions is not None:
            object.__setattr__(self, 'interactions', tuple(self.interactions))
        if not 0.0 < self.quantile < 1.0:
            raise UsageError("Treatment quantile must lie in (0, 1)", quantile=self.quantile)
        if self.outcome not in OUTCOMES:
            raise UsageError("Unknown DID outcome", outcome=self.outcome)
        if self.method not in ('within', 'dummy'):
            raise UsageError("Unknown DID estimator", method=self.method)


@dataclass(frozen=True)
class CascadeSettings:
    s0: float = 1.0
    theta: float = 0.5
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.s0 > 0 and self.theta > 0 and 0.0 <= self.kappa < 1.0):
            raise UsageError("Cascade needs s0 > 0, theta > 0 and kappa in [0, 1)", s0=self.s0, theta=self.theta, kappa=self.kappa)


@dataclass(frozen=True)
class RunConfig:
    input_path: Optional[str] = None
    years: Tuple[int, ...] = ()
    method: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    ratio_sweep: Optional[RatioSweep] = None
    bootstrap: Optional[BootstrapSettings] = None
    did: Optional[DidSettings] = None
    output_dir: str = ''
    seed: int = 0
    workers: int = 1
    epsilon: float = DEFAULT_EPSILON
    diffusion: DiffusionParams = field(default_factory=DiffusionParams)
    kappa_grid: Tuple[float, ...] = DEFAULT_KAPPAS
    placebo_draws: int = 1000
    permutations: int = 10000
    solver: str = 'auto'
    x_min: Optional[float] = None
    scan_xmin: bool = False
    top_k: Optional[int] = None
    cascade: CascadeSettings = field(default_factory=CascadeSettings)
    compare_methods: bool = False
    trajectory: bool = False
    log_level: int = logging.WARNING
    table: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'years', tuple(int(year) for year in self.years))
        object.__setattr__(self, 'kappa_grid', tuple(float(kappa) for kappa in self.kappa_grid))
        if self.seed < 0:
            raise UsageError("Seed must be unsigned", seed=self.seed)
        if self.workers < 1:
            raise UsageError("Worker count must be positive", workers=self.workers)
        if not 0.0 < self.epsilon < 1.0:
            raise UsageError("Critical-distance threshold must lie in (0, 1)", epsilon=self.epsilon)
        if self.placebo_draws < 1 or self.permutations < 1:
            raise UsageError("Draw counts must be positive", placebo_draws=self.placebo_draws,
                             permutations=self.permutations)
        if self.solver not in SOLVERS:
            raise UsageError("Unknown eigensolver", solver=self.solver)
        if self.top_k is not None and self.top_k < 1:
            raise UsageError("top_k must be positive", top_k=self.top_k)

    @staticmethod
    def _convert(name: str, value):
        if value is None:
            return None
        try:
            if name == 'method':
                return value if isinstance(value, ReconstructionConfig) else ReconstructionConfig.from_dict(value)
            if name == 'ratio_sweep':
                return value if isinstance(value, RatioSweep) else RatioSweep(**value)
            if name == 'bootstrap':
                return value if isinstance(value, BootstrapSettings) else BootstrapSettings(**value)
            if name == 'did':
                return value if isinstance(value, DidSettings) else DidSettings(**value)
            if name == 'cascade':
                return value if isinstance(value, CascadeSettings) else CascadeSettings(**value)
            if name == 'diffusion':
                return value if isinstance(value, DiffusionParams) else DiffusionParams(**value)
        except (InvalidParameter, InvalidRatio) as error:
            raise UsageError(error.message, setting=name, **error.context)
        except TypeError as error:
            raise UsageError("Invalid settings block", setting=name, error=str(error))
        return value

    @classmethod
    def from_arguments(cls, base: Optional['RunConfig'] = None, **kwargs) -> 'RunConfig':
        """Overlay non-None values on base; unknown keys are rejected."""
        base = base or cls()
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(kwargs) - names)
        if unknown:
            raise UsageError("Unknown configuration keys", keys=unknown)
        updates = {name: cls._convert(name, value) for name, value in kwargs.items() if value is not None}
        try:
            return replace(base, **updates)
        except InvalidParameter as error:
            raise UsageError(error.message, **error.context)

    @classmethod
    def load_from_file(cls, file_name: str) -> 'RunConfig':
        if not os.path.isfile(file_name):
            raise InputError("Configuration file not found", path=file_name)
        LogManager.logger.debug(f'Loading configuration from {file_name}')
        with open(file_name, encoding='utf-8') as config_file:
            try:
                config = yaml.safe_load(config_file)
            except yaml.YAMLError as error:
                raise InputError("Configuration file does not parse", path=file_name, error=str(error))
        if config is None:
            return cls()
        if not isinstance(config, dict):
            raise InputError("Configuration must be a single mapping", path=file_name)
        return cls.from_arguments(**config)

    def get_settings(self) -> Dict[str, object]:
        settings = asdict(self)
        settings['method'] = self.method.to_dict()
        settings['diffusion'] = self.diffusion.to_dict()
        return settings
