import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from src.util.errors import ConfigurationError

THREADS_ENV = "NHMM_THREADS"
CONFIG_DIR_ENV = "NHMM_CONFIG_DIR"

Coefficients = Union[float, List[List[float]]]


@dataclass
class McmcConfig:
    iterations: int = 2000
    burn_in_fraction: float = 0.1
    thinning: int = 1
    seed: int = 0
    states: int = 2

    @classmethod
    def exploration(cls, **overrides):
        return cls(iterations=2000, burn_in_fraction=0.1, **overrides)

    @classmethod
    def final(cls, **overrides):
        return cls(iterations=10000, burn_in_fraction=0.2, **overrides)

    @property
    def burn_in(self) -> int:
        return int(round(self.burn_in_fraction * self.iterations))

    @property
    def retained(self) -> int:
        return self.iterations // self.thinning

    def validate(self) -> "McmcConfig":
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1", {"iterations": self.iterations})
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigurationError(
                "burn-in fraction must lie in [0, 1)", {"burn_in_fraction": self.burn_in_fraction}
            )
        if self.thinning < 1:
            raise ConfigurationError("thinning must be at least 1", {"thinning": self.thinning})
        if self.states < 1:
            raise ConfigurationError("K must be at least 1", {"states": self.states})
        return self


@dataclass
class PriorConfig:
    zeta_mean: Coefficients = 0.0
    zeta_precision: Coefficients = 0.0
    beta_precision: float = 0.0
    lambda_shape: float = 1.0
    lambda_rate: float = 1.0
    gamma_cap: float = 10.0

    def validate(self) -> "PriorConfig":
        for name in ("beta_precision",):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} cannot be negative")
        if self.lambda_shape <= 0 or self.lambda_rate <= 0:
            raise ConfigurationError("rate prior needs positive shape and rate")
        if self.gamma_cap <= 0:
            raise ConfigurationError("cutpoint cap must be positive", {"gamma_cap": self.gamma_cap})
        precision = self.zeta_precision
        if isinstance(precision, list):
            if any(v < 0 for row in precision for v in row):
                raise ConfigurationError("zeta_precision cannot be negative")
        elif precision < 0:
            raise ConfigurationError("zeta_precision cannot be negative")
        return self


@dataclass
class RunConfig:
    panel: Optional[str] = None
    x: Optional[str] = None
    w: Optional[str] = None
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    holdout: int = 0
    output: str = "nhmm-out"
    add_harmonics: bool = False
    add_drift: bool = False
    order_rates: bool = False
    threads: int = 1

    @classmethod
    def default(cls):
        return cls()

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}", {"keys": unknown})

        try:
            mcmc = McmcConfig(**data.pop("mcmc", {}))
            priors = PriorConfig(**data.pop("priors", {}))
            return cls(mcmc=mcmc, priors=priors, **data)
        except TypeError as e:
            raise ConfigurationError(f"invalid config: {e}") from None

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, config_path: Optional[Path] = None) -> "RunConfig":
        if config_path is None:
            config_path = get_config_path()

        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigurationError(f"config file not found: {config_path}", {"path": str(config_path)})

        try:
            if config_path.suffix == ".toml":
                with open(config_path, "rb") as f:
                    data = tomllib.load(f)
            else:
                with open(config_path, "r") as f:
                    data = json.load(f)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigurationError(f"cannot parse {config_path.name}: {e}", {"path": str(config_path)}) from None

        return cls.from_json(data)

    def save(self, config_path: Optional[Path] = None):
        if config_path is None:
            config_path = get_config_path()

        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)

        with open(config_path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    def merge(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Flag values win over file values; None leaves the file value."""
        data = self.to_json()
        for key, value in overrides.items():
            if value is None:
                continue
            if key in McmcConfig.__dataclass_fields__:
                data["mcmc"][key] = value
            elif key in PriorConfig.__dataclass_fields__:
                data["priors"][key] = value
            elif key in data:
                data[key] = value
            else:
                raise ConfigurationError(f"unknown setting: {key}")
        return RunConfig.from_json(data)

    def validate(self, T: Optional[int] = None) -> "RunConfig":
        self.mcmc.validate()
        self.priors.validate()

        if self.panel is None:
            raise ConfigurationError("no observation panel given")
        for name in ("panel", "x", "w"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigurationError(f"{name} file not found: {path}", {"path": str(path)})

        if self.holdout < 0:
            raise ConfigurationError("holdout cannot be negative", {"holdout": self.holdout})
        if T is not None and self.holdout >= T - 1:
            raise ConfigurationError(
                "holdout leaves fewer than 2 days to fit", {"holdout": self.holdout, "T": T}
            )
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1", {"threads": self.threads})
        return self


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer", {"value": env}) from None
    return 1


def get_config_dir() -> Path:
    override = os.environ.get(CONFIG_DIR_ENV)
    if override:
        return Path(override)
    config_home = Path.home() / ".config"
    return config_home / "nhmm"


def get_config_path() -> Path:
    return get_config_dir() / "config.json"
