"""Per-head losses (cross-entropy, focal) and macro-F1 evaluation."""

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .autodiff import Tensor, clip, exp, log_softmax, power, reduce_mean, take_along_last
from .corpus import LEVELS
from .utils.errors import DataValidationError, ShapeError

P_T_FLOOR = 1e-12
P_T_CEIL = 1.0 - 1e-12
_LOG_FLOOR = float(np.log(P_T_FLOOR))
_LOG_CEIL = float(np.log1p(-1e-12))

DEFAULT_FOCAL = {
    "bilstm": {"gamma_per_head": (2.0, 2.0, 2.0, 2.0), "alpha": 0.25},
    "transformer": {"gamma_per_head": (2.0, 1.0, 1.0, 2.0), "alpha": 1.0},
}


class FocalLossConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma_per_head: Tuple[float, float, float, float] = (2.0, 2.0, 2.0, 2.0)
    alpha: float = 0.25
    from_logits: bool = True

    @field_validator("gamma_per_head", mode="before")
    @classmethod
    def _split_gammas(cls, value):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if isinstance(value, (int, float)):
            value = [value] * len(LEVELS)
        gammas = tuple(float(v) for v in value)
        if len(gammas) != len(LEVELS):
            raise ValueError(f"expected {len(LEVELS)} gammas, got {len(gammas)}")
        if any(g < 0 for g in gammas):
            raise ValueError("gamma must be >= 0")
        return gammas

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        return value

    @classmethod
    def for_arch(cls, arch: str) -> "FocalLossConfig":
        return cls(**DEFAULT_FOCAL[arch])


def _check_targets(logits: Tensor, targets) -> Tuple[Tensor, np.ndarray]:
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if logits.ndim == 1:
        logits = logits[None, :]
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} do not match targets {targets.shape}",
                         {"logits": list(logits.shape), "targets": list(targets.shape)})
    n_classes = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise DataValidationError(f"target index out of range [0, {n_classes})",
                                  {"n_classes": n_classes, "max": int(targets.max())})
    return logits, targets


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean of -log softmax(logits)[target] over the batch."""
    logits, targets = _check_targets(logits, targets)
    log_p = take_along_last(log_softmax(logits, axis=-1), targets)
    return -reduce_mean(log_p)


def focal_loss(logits: Tensor, targets, cfg: FocalLossConfig, head: int) -> Tensor:
    """Mean of -alpha * (1 - p_t)^gamma * log(p_t), p_t clamped to [1e-12, 1 - 1e-12]."""
    logits, targets = _check_targets(logits, targets)
    gamma = cfg.gamma_per_head[head]
    log_pt = clip(take_along_last(log_softmax(logits, axis=-1), targets), _LOG_FLOOR, _LOG_CEIL)
    weight = power(1.0 - exp(log_pt), gamma)
    return -cfg.alpha * reduce_mean(weight * log_pt)


def multi_head_loss(logits: Sequence[Tensor], labels: np.ndarray,
                    cfg: Optional[FocalLossConfig] = None) -> Tensor:
    """Unweighted sum over the four heads; cross-entropy when ``cfg`` is None."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 2 or labels.shape[1] != len(logits):
        raise ShapeError(f"labels {labels.shape} do not match {len(logits)} heads")
    total = None
    for head, head_logits in enumerate(logits):
        if cfg is None:
            loss = cross_entropy(head_logits, labels[:, head])
        else:
            loss = focal_loss(head_logits, labels[:, head], cfg, head)
        total = loss if total is None else total + loss
    return total


def focal_curve(p_values: Sequence[float], gammas: Sequence[float], alpha: float = 1.0) -> np.ndarray:
    """Loss for each (gamma, p_t) pair; rows follow ``gammas``."""
    p = np.clip(np.asarray(p_values, dtype=np.float64), P_T_FLOOR, P_T_CEIL)
    g = np.asarray(gammas, dtype=np.float64)[:, None]
    return -alpha * (1.0 - p[None, :]) ** g * np.log(p[None, :])


# metrics

@dataclass(frozen=True)
class ClassTable:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean()) if self.f1.size else 0.0


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=den > 0)


def confusion_matrix(true_labels, pred_labels, n_classes: int) -> np.ndarray:
    """counts[t, p]: how often true class t was predicted as p."""
    true = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    if true.shape != pred.shape:
        raise ShapeError(f"{true.size} true labels but {pred.size} predictions")
    if n_classes <= 0:
        raise DataValidationError("n_classes must be > 0")
    for name, values in (("true", true), ("pred", pred)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise DataValidationError(f"{name} label out of range [0, {n_classes})", {"n_classes": n_classes})
    return np.bincount(true * n_classes + pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def precision_recall_per_class(true_labels, pred_labels, n_classes: int) -> ClassTable:
    counts = confusion_matrix(true_labels, pred_labels, n_classes)
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)
    support = counts.sum(axis=1)
    precision = _safe_ratio(tp, predicted)
    recall = _safe_ratio(tp, support.astype(np.float64))
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    return ClassTable(precision=precision, recall=recall, f1=f1, support=support, confusion=counts)


def f1_macro(true_labels, pred_labels, n_classes: int) -> float:
    """Mean per-class F1 over every class in the label space."""
    return precision_recall_per_class(true_labels, pred_labels, n_classes).macro_f1


class HeadReport(BaseModel):
    labels: List[str]
    precision: List[float]
    recall: List[float]
    f1: List[float]
    support: List[int]
    confusion: List[List[int]]
    macro_f1: float


class EvalReport(BaseModel):
    n_samples: int
    heads: Dict[str, HeadReport]
    macro_f1_mean: float

    @classmethod
    def build(cls, true: np.ndarray, pred: np.ndarray, label_names: Sequence[Sequence[str]]) -> "EvalReport":
        """``true``/``pred`` are (n, 4) index arrays; ``label_names`` one sequence per level."""
        heads: Dict[str, HeadReport] = {}
        for j, level in enumerate(LEVELS):
            table = precision_recall_per_class(true[:, j], pred[:, j], len(label_names[j]))
            heads[level] = HeadReport(
                labels=list(label_names[j]),
                precision=table.precision.tolist(),
                recall=table.recall.tolist(),
                f1=table.f1.tolist(),
                support=table.support.tolist(),
                confusion=table.confusion.tolist(),
                macro_f1=table.macro_f1,
            )
        mean = float(np.mean([heads[level].macro_f1 for level in LEVELS]))
        return cls(n_samples=int(true.shape[0]), heads=heads, macro_f1_mean=mean)

    def head_f1(self) -> Tuple[float, ...]:
        return tuple(self.heads[level].macro_f1 for level in LEVELS)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.model_validate_json(text)
