"""Run configuration: a JSON document with strict key checking and filled-in defaults."""

from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import ClassifierTrainConfig, RnnConfig
from .data_io import SyntheticConfig
from .errors import ConfigError, HypomimiaError
from .evaluation import AVERAGING
from .expression_model import ExpressionModelConfig, ExpressionTrainConfig

SEED_ENV = "HYPOMIMIA_SEED"


@dataclass(frozen=True)
class ClassifierSection:
    network: RnnConfig = field(default_factory=RnnConfig)
    train: ClassifierTrainConfig = field(default_factory=ClassifierTrainConfig)


@dataclass(frozen=True)
class DataSection:
    expression_dir: str | None = None
    subject_dir: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass(frozen=True)
class EvalSection:
    averaging: str = "binary_pd"
    k: int = 5

    def __post_init__(self):
        if self.averaging not in AVERAGING:
            raise ConfigError(f"eval.averaging must be one of {AVERAGING}")
        if self.k < 2:
            raise ConfigError("eval.k must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    model: ExpressionModelConfig = field(default_factory=ExpressionModelConfig)
    train: ExpressionTrainConfig = field(default_factory=ExpressionTrainConfig)
    classifier: ClassifierSection = field(default_factory=ClassifierSection)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def _build(cls, obj, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in obj.items():
        hint = hints[key]
        where = f"{path}.{key}" if path else key
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, where)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except HypomimiaError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def config_from_dict(obj: dict) -> RunConfig:
    return _build(RunConfig, obj, "")


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(obj)


def default_seed(flag: int | None, fallback: int = 0) -> int:
    """Seed from the command-line flag, else the environment override, else ``fallback``."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return fallback
