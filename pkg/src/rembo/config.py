"""Run configuration: shipped per-environment defaults, file parsing and overrides."""

import configparser
import dataclasses
import io
import warnings
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .envs import ENV_IDS
from .errors import ConfigError
from .learner.schedule import ExplorationSchedule

ALGORITHMS = ("dqn_t", "vdn", "ma_td3")
SECTION = "run"


@dataclass
class RunConfig:
    env: str
    algo: str = "dqn_t"
    rembo: bool = True
    alpha0: float = 1.0
    alpha1: float = 50.0
    alpha2: float = 50.0
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    tau: float = 0.01
    batch_size: int = 32
    buffer_size: int = 20000
    gamma: float = 0.99
    gumbel_temperature: float = 1.0
    hidden: tuple = (64, 64)
    filters: int = 6
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    seeds: tuple = (0, 1, 2, 3, 4)
    total_steps: int = 20000
    eval_interval: int = 100
    eval_episodes: int = 20
    eval_states: int = 128
    schedule: str = "matrix"
    eps_start: float = 0.8
    eps_end: float = 0.0
    eps_decay: float = 0.999
    horizon: int = None
    td3_policy_delay: int = 5
    td3_target_noise: float = 0.1
    agent_sample: int = 0
    train_deviation: bool = True
    checkpoint_interval: int = 5000
    optimizer: str = "adam"
    output_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.env not in ENV_IDS:
            raise ConfigError(f"unknown env {self.env!r}; valid ids: {', '.join(ENV_IDS)}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; valid ids: {', '.join(ALGORITHMS)}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; valid: adam, sgd")
        if min(self.alpha1, self.alpha2) < 0 or self.alpha0 <= 0:
            raise ConfigError("loss weights must be non-negative with alpha0 > 0")
        for name in ("batch_size", "buffer_size", "total_steps", "eval_interval", "eval_episodes", "td3_policy_delay"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie strictly inside (0, 1)")
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if self.gumbel_temperature <= 0:
            raise ConfigError("gumbel_temperature must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        try:
            self.exploration()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def exploration(self):
        return ExplorationSchedule(self.eps_start, self.eps_end, self.eps_decay)

    def loss_weights(self):
        """Effective ``(alpha0, alpha1, alpha2)`` rescaled so ``alpha0 = 1``; baselines drop the incentive terms."""
        if not self.rembo:
            return 1.0, 0.0, 0.0
        return 1.0, self.alpha1 / self.alpha0, self.alpha2 / self.alpha0

    @property
    def label(self):
        return ("rembo_" if self.rembo else "") + self.algo

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp[SECTION] = {f.name: _format(getattr(self, f.name)) for f in fields(self)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_text())


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _field_types():
    return {f.name: f for f in fields(RunConfig)}


def _parse_value(name, raw):
    f = _field_types()[name]
    text = str(raw).strip()
    default = f.default
    try:
        if name == "horizon":
            return None if text.lower() in ("", "none") else int(text)
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
        if isinstance(default, int):
            return int(float(text)) if "e" in text.lower() else int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {name}") from None


def default_config_text(env_id):
    if env_id not in ENV_IDS:
        raise ConfigError(f"unknown env {env_id!r}; valid ids: {', '.join(ENV_IDS)}")
    return resources.files("rembo.configs").joinpath(f"{env_id}.cfg").read_text()


def _read(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if SECTION not in cp:
        raise ConfigError(f"config lacks a [{SECTION}] section")
    return dict(cp[SECTION])


def resolve(raw, overrides=None):
    """Build a :class:`RunConfig` from raw key/value pairs plus overrides.

    Per-algorithm weights are written ``alpha1.<algo>``; a plain ``alpha1``
    (from the file or an override) takes precedence.
    """
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    if "env" not in raw:
        raise ConfigError("config must name an env")
    known = _field_types()
    values = {}
    algo = str(raw.get("algo", RunConfig.algo)).strip()
    for key, val in raw.items():
        if "." in key:
            base, which = key.split(".", 1)
            if base not in ("alpha1", "alpha2") or which not in ALGORITHMS:
                raise ConfigError(f"unknown key {key!r}")
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _parse_value(key, val)
    for base in ("alpha1", "alpha2"):
        if base not in values and f"{base}.{algo}" in raw:
            values[base] = _parse_value(base, raw[f"{base}.{algo}"])
    cfg = RunConfig(**values)
    if cfg.rembo and cfg.alpha1 == 0 and cfg.alpha2 == 0:
        warnings.warn("rembo enabled with alpha1 = alpha2 = 0: the run is identical to the baseline", stacklevel=2)
    return cfg


def load_config(env=None, path=None, overrides=None):
    """Shipped defaults for ``env`` (or the file at ``path``), then ``overrides``."""
    overrides = dict(overrides or {})
    if path is not None:
        try:
            raw = _read(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        env = overrides.get("env") or raw.get("env") or env
        if env is None:
            raise ConfigError("config must name an env")
        merged = _read(default_config_text(env))
        merged.update(raw)
    else:
        env = overrides.get("env") or env
        if env is None:
            raise ConfigError("an env id is required")
        merged = _read(default_config_text(env))
    overrides["env"] = env
    return resolve(merged, overrides)


def parse_config_text(text):
    return resolve(_read(text))
