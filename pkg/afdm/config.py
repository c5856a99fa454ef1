"""Configuration management for the AFDM simulator."""

import json
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from afdm.bem import min_bem_order
from afdm.channel import DEFAULT_CARRIER_HZ, DEFAULT_SPACING_HZ, DOPPLER_MODES, speed_to_alpha_max
from afdm.errors import ConfigError
from afdm.transforms import DEFAULT_C2
from afdm.utils.config_utils import normalize_sweep_var

logger = logging.getLogger(__name__)

ERROR_TERMS = ("expected", "genie")
SWEEP_VARS = ("snr_p", "snr_d", "speed", "alpha_max")


@dataclass(frozen=True)
class GridConfig:
    n_subcarriers: int = 64
    alpha_max: int = 1
    k_nu: int = 1
    c2: float = DEFAULT_C2


@dataclass(frozen=True)
class ChannelConfig:
    """
    Channel ensemble.

    ``alpha_max`` defaults to the grid's design Doppler; ``speed_kmh``, when set, overrides both.
    With ``same_delay`` every path sits on the first configured delay.
    """

    num_paths: int = 3
    delays: Tuple[int, ...] = (0, 1, 2)
    path_powers: Optional[Tuple[float, ...]] = None
    alpha_max: Optional[float] = None
    speed_kmh: Optional[float] = None
    same_delay: bool = False
    doppler_mode: str = "jakes"
    carrier_hz: float = DEFAULT_CARRIER_HZ
    spacing_hz: float = DEFAULT_SPACING_HZ

    def effective_delays(self) -> Tuple[int, ...]:
        if self.same_delay:
            return (self.delays[0],) * self.num_paths
        return tuple(self.delays)

    def effective_powers(self) -> Tuple[float, ...]:
        if self.path_powers is None:
            return tuple([1.0 / self.num_paths] * self.num_paths)
        return tuple(self.path_powers)


@dataclass(frozen=True)
class BemConfig:
    order: int = 4
    oversampling: int = 2


@dataclass(frozen=True)
class FrameConfig:
    l_max: int = 2
    snr_p_db: float = 30.0


@dataclass(frozen=True)
class DetectionConfig:
    constellation_order: int = 4
    snr_d_db: float = 20.0
    error_term: str = "expected"
    a_m: Optional[float] = None
    b_m: Optional[float] = None


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved simulation configuration. Immutable; sweeps derive variants with :meth:`with_value`."""

    grid: GridConfig = field(default_factory=GridConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    bem: BemConfig = field(default_factory=BemConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    trials: int = 2000
    seed: int = 20240601
    workers: int = 1
    min_bit_errors: int = 0
    max_bits: int = 0
    fail_fast: bool = False
    snr_p_grid: Tuple[float, ...] = (20.0, 25.0, 30.0, 35.0)
    snr_d_grid: Tuple[float, ...] = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    speed_grid: Tuple[float, ...] = (135.0, 405.0, 675.0)

    @property
    def channel_alpha_max(self) -> float:
        """α_max of the channel ensemble after the speed and grid defaults are applied."""
        ch = self.channel
        if ch.speed_kmh is not None:
            return speed_to_alpha_max(ch.speed_kmh, ch.carrier_hz, ch.spacing_hz)
        if ch.alpha_max is not None:
            return float(ch.alpha_max)
        return float(self.grid.alpha_max)

    @property
    def q_guard(self) -> int:
        """Q_B = Q + (2(α_max + k_ν) + 1)·l_max for the recommended c1."""
        step = 2 * (self.grid.alpha_max + self.grid.k_nu) + 1
        return self.bem.order + step * self.frame.l_max

    def with_value(self, var: str, value: float) -> "SimConfig":
        """
        Copy of this config with one sweep variable set.

        :param var: ``snr_p``, ``snr_d``, ``speed`` or ``alpha_max``
        :type var: str
        :param value: New value
        :type value: float
        :return: Derived configuration
        :rtype: SimConfig
        :raises ConfigError: For an unknown variable
        """
        var = normalize_sweep_var(var)
        if var == "snr_p":
            return replace(self, frame=replace(self.frame, snr_p_db=float(value)))
        if var == "snr_d":
            return replace(self, detection=replace(self.detection, snr_d_db=float(value)))
        if var == "speed":
            return replace(self, channel=replace(self.channel, speed_kmh=float(value)))
        if var == "alpha_max":
            return replace(self, channel=replace(self.channel, alpha_max=float(value), speed_kmh=None))
        raise ConfigError(f"unknown sweep variable {var!r}; expected one of {', '.join(SWEEP_VARS)}")

    def default_grid(self, var: str) -> Tuple[float, ...]:
        var = normalize_sweep_var(var)
        grids = {"snr_p": self.snr_p_grid, "snr_d": self.snr_d_grid, "speed": self.speed_grid}
        if var not in grids:
            raise ConfigError(f"no default grid for {var!r}; pass --grid")
        return grids[var]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


PROFILES: Dict[str, Dict[str, Any]] = {
    'desk': {
        'grid': {'n_subcarriers': 64},
        'trials': 2000,
        'snr_d_grid': [0, 4, 8, 12, 16, 20],
    },
    'full': {
        'grid': {'n_subcarriers': 256},
        'trials': 10000,
        'snr_d_grid': [0, 5, 10, 15, 20, 25, 30],
    },
}

_SECTIONS = {
    'grid': GridConfig,
    'channel': ChannelConfig,
    'bem': BemConfig,
    'frame': FrameConfig,
    'detection': DetectionConfig,
}
_TUPLE_FIELDS = {'delays', 'path_powers', 'snr_p_grid', 'snr_d_grid', 'speed_grid'}


def _merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build(cls, data: Dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is SimConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a table")
            value = _build(_SECTIONS[key], value, key)
        elif key in _TUPLE_FIELDS and value is not None:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid {where}: {e}") from e


def validate_config(config: SimConfig) -> List[str]:
    """
    Check every cross-module constraint of a configuration.

    :param config: Configuration to check
    :type config: SimConfig
    :return: Human readable violations, empty when the configuration is usable
    :rtype: List[str]
    """
    problems = []
    g, ch, bem, fr, det = config.grid, config.channel, config.bem, config.frame, config.detection
    if g.n_subcarriers < 2:
        problems.append(f"grid.n_subcarriers must be at least 2, got {g.n_subcarriers}")
    if g.alpha_max < 0 or g.k_nu < 0:
        problems.append("grid.alpha_max and grid.k_nu must be non-negative integers")
    if bem.order < 0 or bem.order % 2:
        problems.append(f"bem.order must be a non-negative even integer, got {bem.order}")
    if bem.oversampling < 1:
        problems.append(f"bem.oversampling must be positive, got {bem.oversampling}")
    if bem.order >= bem.oversampling * g.n_subcarriers:
        problems.append(f"bem.order={bem.order} must be below R*N={bem.oversampling * g.n_subcarriers}")
    if not 0 <= fr.l_max < g.n_subcarriers:
        problems.append(f"frame.l_max={fr.l_max} must lie in [0, N)")
    if 3 * config.q_guard + 2 >= g.n_subcarriers:
        problems.append(f"3*Q_B+2 = {3 * config.q_guard + 2} < N = {g.n_subcarriers} does not hold")
    if ch.num_paths < 1 or (not ch.same_delay and len(ch.delays) != ch.num_paths) or not ch.delays:
        problems.append(f"channel.delays {list(ch.delays)} does not describe {ch.num_paths} paths")
    if any(d < 0 or d > fr.l_max for d in ch.delays):
        problems.append(f"channel.delays {list(ch.delays)} must lie in [0, l_max={fr.l_max}]")
    if not ch.same_delay and len(set(ch.delays)) != len(ch.delays):
        problems.append("channel.delays repeat; set channel.same_delay to allow it")
    powers = ch.effective_powers()
    if len(powers) != ch.num_paths or any(p < 0 for p in powers) or abs(sum(powers) - 1.0) > 1e-12:
        problems.append(f"channel.path_powers must be {ch.num_paths} non-negative values summing to 1")
    if ch.doppler_mode not in DOPPLER_MODES:
        problems.append(f"channel.doppler_mode must be one of {', '.join(DOPPLER_MODES)}")
    if (ch.alpha_max is not None and ch.alpha_max < 0) or (ch.speed_kmh is not None and ch.speed_kmh < 0):
        problems.append("channel.alpha_max and channel.speed_kmh must be non-negative")
    if det.constellation_order not in (4, 16, 64, 256):
        problems.append(f"detection.constellation_order must be a power of 4, got {det.constellation_order}")
    if det.error_term not in ERROR_TERMS:
        problems.append(f"detection.error_term must be one of {', '.join(ERROR_TERMS)}")
    if config.trials < 1 or config.workers < 1:
        problems.append("trials and workers must be positive")
    if config.min_bit_errors < 0 or config.max_bits < 0:
        problems.append("min_bit_errors and max_bits must be non-negative")
    if not 0 <= config.seed < 2 ** 64:
        problems.append(f"seed must be an unsigned 64-bit integer, got {config.seed}")
    return problems


class ConfigManager:
    """Loads, resolves and validates a simulation configuration."""

    def __init__(self, config_path: Optional[str] = None, profile: str = "desk",
                 overrides: Optional[Dict[str, Any]] = None):
        """
        Initialize the configuration manager.

        :param config_path: JSON or TOML file overlaid on the profile. Defaults to the bare profile
        :type config_path: Optional[str]
        :param profile: Named defaults, ``desk`` or ``full``
        :type profile: str
        :param overrides: Top-level values applied last (CLI flags such as ``seed`` and ``trials``)
        :type overrides: Optional[Dict[str, Any]]
        :raises ConfigError: If the file cannot be read or the result is inconsistent
        """
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; expected one of {', '.join(PROFILES)}")
        self.profile = profile
        self.config_path = Path(config_path) if config_path else None
        data = _merge({}, PROFILES[profile])
        if self.config_path is not None:
            data = _merge(data, self._load_file())
        data = _merge(data, {k: v for k, v in (overrides or {}).items() if v is not None})
        self.config = _build(SimConfig, data, "configuration")
        self.validate()

    def _load_file(self) -> Dict[str, Any]:
        """
        Read the configuration file.

        :return: Raw configuration dictionary
        :rtype: Dict[str, Any]
        """
        path = self.config_path
        if not path.exists():
            raise ConfigError(f"configuration file {path} not found")
        try:
            if path.suffix.lower() == '.toml':
                with open(path, 'rb') as f:
                    data = tomllib.load(f)
            else:
                with open(path, 'r') as f:
                    data = json.load(f)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError, OSError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a table at the top level")
        return data

    def validate(self) -> None:
        """
        Check the resolved configuration.

        :raises ConfigError: Listing every violated constraint
        """
        problems = validate_config(self.config)
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
        minimum = min_bem_order(self.config.channel_alpha_max, self.config.bem.oversampling)
        if self.config.bem.order < minimum:
            logger.warning("BEM order Q=%d is below 2*ceil(R*alpha_max)=%d for this Doppler",
                           self.config.bem.order, minimum)


def get_config_manager(config_path: Optional[str] = None, profile: str = "desk",
                       overrides: Optional[Dict[str, Any]] = None) -> ConfigManager:
    """
    Get a configuration manager instance.

    :return: Configuration manager instance
    :rtype: ConfigManager
    """
    return ConfigManager(config_path, profile, overrides)
