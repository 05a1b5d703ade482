"""Run settings: built-in defaults < config file < PRODCAT_* environment < command-line flags.

Config files are flat ``key = value`` lines with ``#`` comments, keys dotted
by section (``split.ratios = 0.7,0.15,0.15``). Environment variables spell
the same keys as ``PRODCAT_SPLIT__RATIOS``.
"""

import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from ..corpus import ColumnMap, SplitSpec
from ..losses_metrics import FocalLossConfig
from ..models import ModelConfig, ModelOptions
from ..textnorm import NormConfig
from ..train import TrainConfig
from ..vocab import DEFAULT_MAX_LEN, DEFAULT_MAX_WORDS
from .errors import ConfigError, InputFileError
from .logger import logger

ENV_PREFIX = "PRODCAT_"


class CsvSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    delimiter: str = ";"
    columns: ColumnMap = ColumnMap()

    @field_validator("columns", mode="before")
    @classmethod
    def _parse_columns(cls, value):
        if isinstance(value, str):
            return ColumnMap.parse(value)
        return value

    @field_validator("delimiter")
    @classmethod
    def _single_char(cls, value: str) -> str:
        if len(value) != 1:
            raise ValueError("delimiter must be a single character")
        return value


class VocabSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_words: int = DEFAULT_MAX_WORDS
    max_len: int = DEFAULT_MAX_LEN

    @field_validator("max_words")
    @classmethod
    def _words(cls, value: int) -> int:
        if value < 3:
            raise ValueError("must be >= 3")
        return value

    @field_validator("max_len")
    @classmethod
    def _len(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be > 0")
        return value


class TrainSettings(BaseModel):
    """Overrides only; unset keys fall back to the architecture defaults."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: Optional[float] = None
    batch_size: Optional[int] = None
    max_epochs: Optional[int] = None
    early_stop_patience: Optional[int] = None
    loss: Optional[Literal["ce", "focal"]] = None
    optimizer: Optional[Literal["adam", "adamw"]] = None
    weight_decay: Optional[float] = None
    clip_norm: Optional[float] = None
    precision: Optional[int] = None
    freeze_embeddings: Optional[bool] = None

    @field_validator("precision")
    @classmethod
    def _precision(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        return value


class FocalSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma_per_head: Optional[str] = None
    alpha: Optional[float] = None


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    threads: int = 1
    norm: NormConfig = NormConfig()
    csv: CsvSettings = CsvSettings()
    split: SplitSpec = SplitSpec()
    vocab: VocabSettings = VocabSettings()
    model: ModelOptions = ModelOptions()
    train: TrainSettings = TrainSettings()
    focal: FocalSettings = FocalSettings()

    @field_validator("seed")
    @classmethod
    def _seed(cls, value: int) -> int:
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("threads")
    @classmethod
    def _threads(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    def train_config(self, arch: str, **flags) -> TrainConfig:
        """Architecture defaults, then config/env overrides, then flags."""
        values = self.train.model_dump()
        values.update({k: v for k, v in flags.items() if v is not None})
        focal_defaults = FocalLossConfig.for_arch(arch).model_dump()
        focal_overrides = {k: v for k, v in self.focal.model_dump().items() if v is not None}
        try:
            focal = FocalLossConfig(**{**focal_defaults, **focal_overrides})
            return TrainConfig.for_arch(arch, seed=self.seed, focal=focal, **values)
        except ValidationError as e:
            raise config_error(e, prefix="train") from None

    def resolve_model(self, vocab_size: int, max_len: int, head_sizes: Tuple[int, int, int, int],
                      embed_dim: Optional[int] = None) -> ModelConfig:
        """Model options resolved against the data-dependent sizes."""
        options = self.model
        if options.arch == "transformer" and options.d_model % options.num_heads:
            raise ConfigError(f"must divide model.d_model ({options.d_model})", key="model.num_heads",
                              context={"input": str(options.num_heads)})
        try:
            return ModelConfig.build(options, vocab_size=vocab_size, max_len=max_len,
                                     head_sizes=head_sizes, embed_dim=embed_dim)
        except ValidationError as e:
            raise config_error(e, prefix="model") from None


def config_error(exc: ValidationError, prefix: str = "") -> ConfigError:
    first = exc.errors()[0]
    parts = [str(p) for p in first.get("loc", ())]
    if prefix and (not parts or parts[0] != prefix):
        parts.insert(0, prefix)
    key = ".".join(parts) or "config"
    return ConfigError(first.get("msg", "invalid value"), key=key, context={"input": str(first.get("input"))})


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        parts = key.split(".")
        if len(parts) > 2 or not all(parts):
            raise ConfigError("unrecognised key", key=key)
        if len(parts) == 1:
            nested[parts[0]] = value
        else:
            section = nested.setdefault(parts[0], {})
            if not isinstance(section, dict):
                raise ConfigError("key is both a value and a section", key=parts[0])
            section[parts[1]] = value
    return nested


def read_config_file(path) -> Dict[str, Optional[str]]:
    source = Path(path)
    if not source.is_file():
        raise InputFileError(f"config file not found: {source}", source)
    values = dotenv_values(source, encoding="utf-8")
    logger.info("read %s config keys from %s", len(values), source)
    return {k.strip().lower(): v for k, v in values.items()}


def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    return {
        key[len(ENV_PREFIX):].lower().replace("__", "."): value
        for key, value in environ.items()
        if key.startswith(ENV_PREFIX)
    }


def load_settings(path=None, overrides: Optional[Mapping[str, Any]] = None,
                  environ: Optional[Mapping[str, str]] = None) -> Settings:
    """Merge every layer into a validated Settings; invalid keys raise ConfigError."""
    flat: Dict[str, Any] = {}
    if path is not None:
        flat.update(read_config_file(path))
    flat.update(environment_overrides(environ))
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    nested = _nest(flat)
    try:
        return Settings(**nested)
    except ValidationError as e:
        raise config_error(e) from None
