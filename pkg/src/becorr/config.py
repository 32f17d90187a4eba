"""
Run configuration: YAML files with one section per concern, loaded into frozen dataclasses.
Unknown keys are rejected; dump_config writes a file that load_config reads back unchanged.
"""

import os
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass

import yaml

from .errors import ConfigError

THREADS_ENV = "BECORR_THREADS"


@dataclass(frozen=True)
class QuadratureConfig:
    hermite_nodes: int = 64
    tensor_nodes: int = 32
    laguerre_nodes: int = 64


@dataclass(frozen=True)
class MarketConfig:
    n: int = None
    survival: tuple = ()
    hazards: tuple = ()
    recovery: float = 0.0
    maturity: float = 5.0
    time: float = 0.0
    quotes: str = None  # CSV of quotes, see becorr.quotes


@dataclass(frozen=True)
class CopulaConfig:
    family: str = "gauss1f"
    rho: tuple = ()  # one loading per name, or a single flat loading
    theta: float = None


@dataclass(frozen=True)
class DynamicsConfig:
    sigma_bar: tuple = ()
    betas: tuple = ()
    spread_corr: float = None  # uniform spread correlation
    spread_corr_file: str = None  # square CSV with a name header
    xi: str = "merton"
    alpha: float = 0.0


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 100
    n_steps: int = 180
    dt: float = 1 / 365
    scheme: str = "exact_z"


@dataclass(frozen=True)
class HedgeConfig:
    orders: tuple = (1,)
    window: int = None
    candidates: tuple = ()


@dataclass(frozen=True)
class ScenarioConfig:
    study: str = "four_name"
    method: str = "instantaneous"
    orders: tuple = ()
    n_paths: int = None
    threads: int = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 12345
    output: str = None
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    market: MarketConfig = field(default_factory=MarketConfig)
    copula: CopulaConfig = field(default_factory=CopulaConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    hedge: HedgeConfig = field(default_factory=HedgeConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    @classmethod
    def from_dict(cls, data):
        return _build(cls, data or {}, "")

    def to_dict(self):
        return _plain(asdict(self))


def _default(f):
    if f.default is not MISSING:
        return f.default
    return f.default_factory()


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"Section {path or '<root>'} must be a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"Unknown configuration key: {path}{unknown[0]}")
    values = {}
    for name, f in known.items():
        key = f"{path}{name}"
        if name not in data:
            continue
        value, default = data[name], _default(f)
        if is_dataclass(default):
            values[name] = _build(type(default), value, f"{key}.")
        elif isinstance(default, tuple):
            values[name] = _as_tuple(value, key)
        else:
            values[name] = _as_scalar(value, f.type, key)
    return cls(**values)


def _as_tuple(value, key):
    if value is None:
        return ()
    if isinstance(value, (int, float)):
        return (value,)
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key} must be a list, got {value!r}")
    for item in value:
        if not isinstance(item, (int, float)) or isinstance(item, bool):
            raise ConfigError(f"{key} must contain numbers, got {item!r}")
    return tuple(value)


def _as_scalar(value, kind, key):
    if value is None:
        return None
    expected = {"int": int, "float": (int, float), "str": str}.get(kind if isinstance(kind, str) else kind.__name__)
    if expected is not None and (not isinstance(value, expected) or isinstance(value, bool)):
        raise ConfigError(f"{key} has the wrong type: {value!r}")
    return float(value) if kind in ("float", float) else value


def _plain(value):
    """Tuples become lists so that YAML writes plain sequences."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def load_config(path) -> RunConfig:
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Cannot parse {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def dump_config(config: RunConfig, path):
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)


def default_threads():
    """Worker count from the BECORR_THREADS environment variable, 1 when unset."""
    value = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(value)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive, got {threads}")
    return threads
