"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, keys are typed against the
schema below.  Unknown keys, type mismatches and cross-field inconsistencies
raise :class:`ConfigError` naming the offending key.  ``serialize`` followed
by ``parse`` reproduces all effective values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from . import activations


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending key."""


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    return str(value)


@dataclass
class ExperimentConfig:
    """Everything one training run needs; flat by design."""

    # experiment
    algorithm: str = "mac"          # mac | dpsgd
    task: str = "autoencoder"       # classifier | autoencoder
    seed: int = 0
    output_dir: str = "run"
    # data
    data_format: str = "synthetic"  # idx | csv | synthetic
    train_inputs: str | None = None
    train_targets: str | None = None
    test_inputs: str | None = None
    test_targets: str | None = None
    norm_bound: float = 1.0
    n_classes: int | None = None
    # synthetic data knobs
    synth_train: int = 1000
    synth_test: int = 500
    synth_dim: int = 16
    synth_latent: int = 4
    # model
    hidden_units: tuple = ()
    hidden_act: str = activations.SOFTPLUS
    output_act: str = activations.IDENTITY
    init_scale: float = 1.0
    # shared training
    epochs: int = 1
    batch_size: int = 100
    # privacy
    sigma: float = 0.0
    delta: float = 1e-5
    pca_dim: int | None = None
    pca_sigma: float = 0.0
    # alternating trainer
    taylor_order: int = 1
    mu: float = 1.0
    z_steps: int = 30
    w_steps: int = 1
    z_lr: float = 1e-3
    w_lr: float = 1e-2
    w_lr_decay: float = 1.0
    z_optimizer: str = "adam"
    w_optimizer: str = "adam"
    sensitivity_mode: str = "clipped"
    grad_clip: float | None = None
    hess_clip: float | None = None
    persist_coords: bool = False
    # baseline trainer
    lr: float = 0.01
    lr_decay: float = 1.0
    lr_halving_epochs: int | None = None
    clip_bound: float | None = None
    optimizer: str = "gd"

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ("mac", "dpsgd"):
            raise ConfigError(f"algorithm: expected 'mac' or 'dpsgd', got {self.algorithm!r}")
        if self.task not in ("classifier", "autoencoder"):
            raise ConfigError(f"task: expected 'classifier' or 'autoencoder', got {self.task!r}")
        if self.data_format not in ("idx", "csv", "synthetic"):
            raise ConfigError(f"data_format: expected idx, csv or synthetic, got {self.data_format!r}")
        if self.data_format != "synthetic" and self.train_inputs is None:
            raise ConfigError("train_inputs: required unless data_format = synthetic")
        if self.data_format == "idx" and self.task == "classifier" and self.train_targets is None:
            raise ConfigError("train_targets: label file required for idx classifier data")
        if self.sigma < 0 or self.pca_sigma < 0:
            raise ConfigError("sigma: noise multipliers must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta: must lie in (0, 1)")
        if self.norm_bound <= 0:
            raise ConfigError("norm_bound: must be positive")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigError("pca_dim: must be a positive integer")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs/batch_size: must be positive")
        return self


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    tuple: _parse_int_tuple,
}

# Field -> base type, honoring Optional[...] annotations via the defaults
# declared above. Optionals accept the literal value "none".
_FIELD_TYPES = {
    "algorithm": str, "task": str, "seed": int, "output_dir": str,
    "data_format": str, "train_inputs": str, "train_targets": str,
    "test_inputs": str, "test_targets": str, "norm_bound": float,
    "n_classes": int, "synth_train": int, "synth_test": int,
    "synth_dim": int, "synth_latent": int,
    "hidden_units": tuple, "hidden_act": str, "output_act": str,
    "init_scale": float, "epochs": int, "batch_size": int,
    "sigma": float, "delta": float, "pca_dim": int, "pca_sigma": float,
    "taylor_order": int, "mu": float, "z_steps": int, "w_steps": int,
    "z_lr": float, "w_lr": float, "w_lr_decay": float,
    "z_optimizer": str, "w_optimizer": str, "sensitivity_mode": str,
    "grad_clip": float, "hess_clip": float, "persist_coords": bool,
    "lr": float, "lr_decay": float, "lr_halving_epochs": int,
    "clip_bound": float, "optimizer": str,
}

_OPTIONAL_FIELDS = {
    "train_inputs", "train_targets", "test_inputs", "test_targets",
    "n_classes", "pca_dim", "grad_clip", "hess_clip", "lr_halving_epochs",
    "clip_bound",
}


def parse_assignments(text: str) -> dict:
    """``key = value`` lines -> raw string dict; rejects malformed lines."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Typed construction from string values; unknown keys are errors."""
    kwargs = {}
    for key, raw in mapping.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        if key in _OPTIONAL_FIELDS and raw.lower() in ("none", ""):
            kwargs[key] = None
            continue
        parser = _PARSERS[_FIELD_TYPES[key]]
        try:
            kwargs[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return ExperimentConfig(**kwargs).validate()


def parse_config(text: str) -> ExperimentConfig:
    return config_from_mapping(parse_assignments(text))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}"
             for f in fields(ExperimentConfig)]
    return "\n".join(lines) + "\n"
