from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, field_validator

from ..losses_metrics import FocalLossConfig

LossKind = Literal["ce", "focal"]
OptimizerKind = Literal["adam", "adamw"]

DEFAULT_TRAIN = {
    "bilstm": {"lr": 1e-5, "batch_size": 64, "max_epochs": 50, "early_stop_patience": 3, "optimizer": "adam"},
    "transformer": {"lr": 5e-5, "batch_size": 32, "max_epochs": 40, "early_stop_patience": 10, "optimizer": "adamw"},
}


class TrainConfig(BaseModel):
    """Optimization settings for one run; ``for_arch`` fills the per-architecture defaults."""
    model_config = ConfigDict(frozen=True)

    arch: Literal["bilstm", "transformer"] = "bilstm"
    lr: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 50
    early_stop_patience: int = 3
    seed: int = 0
    loss: LossKind = "focal"
    focal: Optional[FocalLossConfig] = None
    optimizer: OptimizerKind = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: Optional[float] = None
    precision: Literal[32, 64] = 32
    freeze_embeddings: bool = False
    eval_batch_size: int = 256

    @field_validator("lr", "eps")
    @classmethod
    def _positive_float(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("batch_size", "max_epochs", "early_stop_patience", "eval_batch_size")
    @classmethod
    def _positive_int(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("beta1", "beta2")
    @classmethod
    def _beta(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError("must be in [0, 1)")
        return value

    @field_validator("weight_decay")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("clip_norm")
    @classmethod
    def _clip(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value <= 0:
            raise ValueError("must be > 0")
        return value

    @field_validator("seed")
    @classmethod
    def _seed(cls, value: int) -> int:
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @classmethod
    def for_arch(cls, arch: str, **overrides) -> "TrainConfig":
        """Per-architecture defaults; ``None`` overrides are ignored."""
        values = {"arch": arch, **DEFAULT_TRAIN[arch]}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def focal_config(self) -> Optional[FocalLossConfig]:
        if self.loss == "ce":
            return None
        return self.focal or FocalLossConfig.for_arch(self.arch)
