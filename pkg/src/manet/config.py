"""Flat ``key = value`` experiment configuration with ``#`` comments.

Training keys are the :class:`~manet.rl.TrainConfig` field names; network
shape overrides use an ``arch.`` prefix (``arch.ff_hidden = 64,64``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .rl import TrainConfig

ENVS = ("nav", "combat")
MODELS = {"nav": ("manet", "single-attn", "dqn"), "combat": ("manet", "nocomm", "dense")}

ARCH_DEFAULTS = {
    ("nav", "manet"): dict(n_attention=2, ff_hidden=(64, 64), key_dim=16, val_dim=32, q_hidden=128),
    ("nav", "single-attn"): dict(n_attention=1, ff_hidden=(64, 64), key_dim=16, val_dim=32,
                                 q_hidden=128),
    ("nav", "dqn"): dict(hidden=(256, 256)),
    ("combat", "manet"): dict(ff_hidden=(128, 128), key_dim=16, val_dim=64, q_hidden=128),
    ("combat", "nocomm"): dict(ff_hidden=(128, 128), val_dim=64, q_hidden=128),
    ("combat", "dense"): dict(hidden=(256, 256)),
}

# nav: mean evaluation score; combat: evaluation win rate
THRESHOLDS = {"nav": 6.7, "combat": 0.9}


@dataclass
class ExperimentConfig:
    env: str = "nav"
    model: str = "manet"
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: dict = field(default_factory=dict)
    max_epochs: int = 300
    stop_at_threshold: bool = True
    normalize_obs: bool = True
    out_dir: str = "runs/default"

    def resolved(self):
        """Validate, and fill architecture defaults for the env/model pair."""
        if self.env not in ENVS:
            raise ConfigError(f"env: unknown environment {self.env!r}")
        if self.model not in MODELS[self.env]:
            raise ConfigError(f"model: {self.model!r} is not available for env {self.env!r}")
        if self.max_epochs <= 0:
            raise ConfigError("max_epochs: must be positive")
        defaults = ARCH_DEFAULTS[(self.env, self.model)]
        for key in self.arch:
            if key not in defaults:
                raise ConfigError(f"arch.{key}: not a parameter of {self.env}/{self.model}")
        arch = {**defaults, **self.arch}
        if self.model == "single-attn" and arch["n_attention"] != 1:
            raise ConfigError("arch.n_attention: single-attn requires exactly 1")
        self.train.validate()
        return replace(self, arch=arch, train=replace(self.train))

    @property
    def model_id(self):
        return f"{self.env}/{self.model}"

    @property
    def threshold(self):
        return THRESHOLDS[self.env]


_TOP = {"env": str, "model": str, "max_epochs": int, "stop_at_threshold": bool,
        "normalize_obs": bool, "out_dir": str}
_TRAIN_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(kind, text):
    if kind in (bool, "bool"):
        return _parse_bool(text)
    if kind in (int, "int"):
        return int(text.replace("_", ""))
    if kind in (float, "float"):
        return float(text)
    return text


def _arch_value(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    values = tuple(int(p) for p in parts)
    return values if "," in text else values[0]


def apply_setting(cfg, key, value):
    key, value = key.strip(), value.strip()
    try:
        if key in _TOP:
            setattr(cfg, key, _convert(_TOP[key], value))
        elif key in _TRAIN_TYPES:
            setattr(cfg.train, key, _convert(_TRAIN_TYPES[key], value))
        elif key.startswith("arch.") and len(key) > 5:
            cfg.arch[key[5:]] = _arch_value(value)
        else:
            raise ConfigError(f"{key}: unknown configuration key")
    except ValueError as exc:
        raise ConfigError(f"{key}: invalid value {value!r} ({exc})") from None
    return cfg


def parse_config(text, resolve=True):
    """Parse ``key = value`` lines; ``resolve=False`` skips validation and arch defaults."""
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        apply_setting(cfg, key, value)
    return cfg.resolved() if resolve else cfg


def load_config(path, resolve=True):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), resolve)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value) + ("," if len(value) == 1 else "")
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg):
    """Effective configuration as text; ``parse_config(dump_config(c)) == c``."""
    cfg = cfg.resolved()
    lines = ["# manet experiment configuration"]
    for key in ("env", "model", "max_epochs", "stop_at_threshold", "normalize_obs", "out_dir"):
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    for f in fields(TrainConfig):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.train, f.name))}")
    for key in sorted(cfg.arch):
        lines.append(f"arch.{key} = {_fmt(cfg.arch[key])}")
    return "\n".join(lines) + "\n"


def default_config(env="nav", model="manet", **train_overrides):
    return ExperimentConfig(env=env, model=model, train=TrainConfig(**train_overrides)).resolved()
