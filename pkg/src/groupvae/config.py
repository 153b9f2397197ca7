"""Training configuration and the flat key=value config file format."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .model import resolve_elbo_mode


@dataclass
class TrainConfig:
    """All knobs for one training run.

    Defaults follow the reference protocol: Adam(0.9, 0.999) at lr 0.001,
    batches of 32, gradient clipping at 2.5, early stopping with patience 100
    within at most 10000 epochs, and a linear regularization warm-up over the
    first 100 epochs. ``hidden=None`` triggers the per-expert width search
    that matches the single-network parameter budget.
    """

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    max_epochs: int = 10_000
    patience: int = 100
    beta_max: float = 1.0
    beta_warmup_epochs: int = 100
    clip: float = 2.5
    seed: int = 0
    elbo_mode: str = "auto"
    include_prior: bool = True
    latent_dim: int = 16
    groups: int = 4
    supervised: bool = False
    subset_samples: int = 1
    hidden: tuple[int, ...] | None = None
    dropout: float = 0.5
    batch_norm: bool = True
    folds: int = 5
    train_samples: int = 0  # 0 keeps the full training split
    scale_on_all: bool = False  # fit min-max scaling on every row, not train only
    clf_seeds: int = 5
    clf_max_epochs: int = 10_000
    clf_patience: int = 100

    def validate(self) -> "TrainConfig":
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        positives = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("clip", self.clip),
            ("latent_dim", self.latent_dim),
            ("groups", self.groups),
            ("subset_samples", self.subset_samples),
            ("folds", self.folds),
            ("clf_seeds", self.clf_seeds),
            ("clf_max_epochs", self.clf_max_epochs),
            ("clf_patience", self.clf_patience),
        ]
        for name, value in positives:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ConfigError("adam momentum constants must lie in (0, 1)")
        if self.beta_max < 0:
            raise ConfigError("beta_max must be non-negative")
        if self.beta_warmup_epochs < 0:
            raise ConfigError("beta_warmup_epochs must be non-negative")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.train_samples < 0:
            raise ConfigError("train_samples must be non-negative")
        if self.batch_size < 2 and self.batch_norm:
            raise ConfigError("batch size below 2 is incompatible with batch norm")
        resolve_elbo_mode(self.elbo_mode, self.groups)
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


_BOOL_WORDS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


def _parse_bool(key, text):
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {text!r}") from None


def _parse_hidden(key, text):
    text = text.strip()
    if text.lower() in ("", "auto", "none"):
        return None
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated widths, got {text!r}") from None


def _parse_typed(key: str, text: str):
    blueprint = TrainConfig()
    current = getattr(blueprint, key)
    if key == "hidden":
        return _parse_hidden(key, text)
    if isinstance(current, bool):
        return _parse_bool(key, text)
    try:
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    return text.strip()


CONFIG_KEYS = tuple(f.name for f in fields(TrainConfig))


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        raw[key] = value
    return raw


def build_config(
    file_values: dict[str, str] | None = None,
    overrides: dict[str, str] | None = None,
) -> TrainConfig:
    """Config from defaults, then file values, then override strings."""
    cfg = TrainConfig()
    for source in (file_values or {}, overrides or {}):
        for key, text in source.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg = replace(cfg, **{key: _parse_typed(key, text)})
    return cfg.validate()
