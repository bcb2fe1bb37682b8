"""Experiment configuration: defaults < TOML file < LAMBDA_* environment < ``--set`` < flags."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tomllib
import types
import typing
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from lambdaea.enums import Metric, parse_option
from lambdaea.exceptions import ConfigurationError, LambdaError
from lambdaea.ipule import IpuleConfig
from lambdaea.keesa import EncoderConfig
from lambdaea.kgdata import SyntheticConfig
from lambdaea.logging import get_logger
from lambdaea.trainer import TrainerConfig

logger = get_logger("config")

ENV_PREFIX = "LAMBDA_"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class AlignConfig:
    metric: Metric = Metric.CSLS
    csls_k: int = 10
    align_epochs: int = 100
    augment_every: int = 0
    reverse: bool = False
    rank_depth: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", parse_option(Metric, self.metric, "align.metric"))
        if self.csls_k < 1:
            raise ConfigurationError("align.csls_k must be >= 1")
        if self.align_epochs < 0 or self.augment_every < 0:
            raise ConfigurationError("align epoch counts must be >= 0")
        if self.rank_depth is not None and self.rank_depth < 1:
            raise ConfigurationError("align.rank_depth must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    data: Path | None = None
    out: Path | None = None
    train_ratio: float = 0.3
    plots: bool = False
    single_thread: bool = False
    ipule: IpuleConfig = field(default_factory=IpuleConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.train_ratio <= 1.0:
            raise ConfigurationError("train_ratio must lie in (0, 1]")

    @property
    def encoder(self) -> EncoderConfig:
        return self.ipule.encoder

    @property
    def train(self) -> TrainerConfig:
        return self.ipule.train


TOP_LEVEL = ("seed", "data", "out", "train_ratio", "plots", "single_thread")
SECTIONS: dict[str, type] = {
    "encoder": EncoderConfig,
    "train": TrainerConfig,
    "ipule": IpuleConfig,
    "align": AlignConfig,
    "synth": SyntheticConfig,
}
# Nested dataclasses are configured through their own sections
_NESTED = {"encoder", "train"}


# --------------------------------------------------------------------------- coercion


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = typing.get_origin(hint)
    if origin in (types.UnionType, typing.Union):
        options = [arg for arg in typing.get_args(hint) if arg is not type(None)]
        if value is None or (isinstance(value, str) and value.strip().lower() in {"", "none", "null"}):
            return None
        return _coerce(value, options[0], key)
    try:
        if isinstance(hint, type) and issubclass(hint, StrEnum):
            return parse_option(hint, value, key)
        if hint is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if hint is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if hint is float:
            return float(value)
        if hint is Path:
            return Path(value).expanduser()
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{key}: {e}") from e
    return value


def _build[T](cls: type[T], values: Mapping[str, Any], section: str, **extra: Any) -> T:
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in dataclasses.fields(cls)} - (_NESTED if cls is IpuleConfig else set())  # type: ignore[arg-type]
    unknown = set(values) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    kwargs = {name: _coerce(value, hints[name], f"{section}.{name}") for name, value in values.items()}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except ConfigurationError:
        raise
    except LambdaError as e:
        raise ConfigurationError(f"[{section}] {e}") from e


# --------------------------------------------------------------------------- sources


def _empty_layers() -> dict[str, dict[str, Any]]:
    return {"": {}, **{name: {} for name in SECTIONS}}


def _merge_table(layers: dict[str, dict[str, Any]], table: Mapping[str, Any], origin: str) -> None:
    for key, value in table.items():
        if isinstance(value, Mapping):
            if key not in SECTIONS:
                raise ConfigurationError(f"unknown section [{key}] in {origin}")
            layers[key].update(value)
        elif key in TOP_LEVEL:
            layers[""][key] = value
        else:
            raise ConfigurationError(f"unknown top-level key {key!r} in {origin}")


def read_toml(path: Path | str) -> dict[str, Any]:
    try:
        with Path(path).open("rb") as fh:
            return tomllib.load(fh)
    except OSError as e:
        logger.error("Cannot read config file %s", path)
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        logger.error("Invalid TOML in %s", path)
        raise ConfigurationError(f"invalid TOML in {path}: {e}") from e


def _split_key(name: str) -> tuple[str, str] | None:
    """``train_lr`` -> ``("train", "lr")``; ``seed`` -> ``("", "seed")``."""
    if name in TOP_LEVEL:
        return "", name
    for section in SECTIONS:
        if name.startswith(section + "_"):
            return section, name[len(section) + 1 :]
    return None


def env_overrides(environ: Mapping[str, str]) -> dict[str, dict[str, Any]]:
    layers = _empty_layers()
    for var, value in environ.items():
        if not var.startswith(ENV_PREFIX):
            continue
        target = _split_key(var[len(ENV_PREFIX) :].lower())
        if target is None:
            logger.warning("Ignoring unrecognised environment variable %s", var)
            continue
        section, key = target
        layers[section][key] = value
    return layers


def parse_set(assignments: Iterable[str]) -> dict[str, dict[str, Any]]:
    """Parse ``section.key=value`` (or ``key=value`` for top-level keys) overrides."""
    layers = _empty_layers()
    for item in assignments:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        section, dot, key = name.strip().rpartition(".")
        if not dot and key not in TOP_LEVEL:
            raise ConfigurationError(f"unknown top-level key {key!r}")
        if dot and section not in SECTIONS:
            raise ConfigurationError(f"unknown section {section!r} in override {item!r}")
        layers[section if dot else ""][key] = value.strip()
    return layers


def load_config(
    path: Path | str | None = None,
    overrides: Iterable[str] = (),
    environ: Mapping[str, str] | None = None,
    seed: int | None = None,
    data: Path | str | None = None,
    out: Path | str | None = None,
) -> ExperimentConfig:
    """Resolve an :class:`ExperimentConfig` from every configuration source.

    Args:
        path: Optional TOML file with top-level keys and ``[encoder]``, ``[train]``,
            ``[ipule]``, ``[align]``, ``[synth]`` tables
        overrides: ``section.key=value`` strings
        environ: Environment to read ``LAMBDA_*`` variables from; defaults to ``os.environ``
        seed: Seed flag; wins over every other source
        data: Data directory flag
        out: Output directory flag

    Raises:
        ConfigurationError: Unknown keys, uncoercible values, out-of-range settings or no seed
    """
    layers = _empty_layers()
    if path is not None:
        _merge_table(layers, read_toml(path), str(path))
    for source in (env_overrides(os.environ if environ is None else environ), parse_set(overrides)):
        for section, values in source.items():
            layers[section].update(values)
    for key, flag in (("seed", seed), ("data", data), ("out", out)):
        if flag is not None:
            layers[""][key] = flag

    top = layers[""]
    if "seed" not in top:
        raise ConfigurationError("a seed is required (config file, LAMBDA_SEED, --set seed=N or --seed)")
    experiment_seed = _coerce(top["seed"], int, "seed")
    seeded = {"seed": experiment_seed}

    encoder = _build(EncoderConfig, layers["encoder"], "encoder")
    train = _build(TrainerConfig, {**seeded, **layers["train"]}, "train")
    ipule = _build(IpuleConfig, layers["ipule"], "ipule", encoder=encoder, train=train)
    align = _build(AlignConfig, layers["align"], "align")
    synth = _build(SyntheticConfig, {**seeded, **layers["synth"]}, "synth")
    return _build(
        ExperimentConfig,
        {**top, "seed": experiment_seed},
        "top-level",
        ipule=ipule,
        align=align,
        synth=synth,
    )


# --------------------------------------------------------------------------- serialization


def _plain(value: Any) -> Any:
    if isinstance(value, StrEnum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Flat section layout matching the TOML file format."""
    data = {key: _plain(getattr(config, key)) for key in TOP_LEVEL}
    ipule = dataclasses.asdict(config.ipule)
    data["encoder"] = _plain(ipule.pop("encoder"))
    data["train"] = _plain(ipule.pop("train"))
    data["ipule"] = _plain(ipule)
    data["align"] = _plain(dataclasses.asdict(config.align))
    data["synth"] = _plain(dataclasses.asdict(config.synth))
    return data


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
