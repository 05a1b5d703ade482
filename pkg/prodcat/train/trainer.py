"""Mini-batch training with early stopping on mean validation macro-F1."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..autodiff import backward
from ..corpus import LEVELS, LabelSpace
from ..losses_metrics import f1_macro, multi_head_loss
from ..models import BaseClassifier, ModelCheckpoint
from ..textnorm import NormConfig
from ..utils.errors import DataValidationError, NumericalError
from ..utils.logger import logger
from ..vocab import Vocabulary
from .config import TrainConfig
from .inference import EncodedSplit, predict_indices
from .optim import make_optimizer

HISTORY_COLUMNS = ("epoch", "train_loss", "val_macro_f1_mean", "seg_f1", "cat_f1", "sub_f1", "prod_f1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: Tuple[float, float, float, float]

    @property
    def val_macro_f1_mean(self) -> float:
        return float(np.mean(self.val_f1))

    def row(self) -> Tuple:
        return (self.epoch, self.train_loss, self.val_macro_f1_mean, *self.val_f1)


class EarlyStopping:
    """Track the best metric; ties keep the earliest epoch."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_epoch: Optional[int] = None
        self.best_metric = -np.inf
        self.stale = 0

    def update(self, epoch: int, metric: float) -> bool:
        """Record one epoch; True when training should stop."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience

    @property
    def improved(self) -> bool:
        return self.stale == 0


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    diverged: bool = False

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.history], columns=list(HISTORY_COLUMNS))

    def write_history(self, path) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        self.history_frame().to_csv(out, index=False, float_format="%.10g", lineterminator="\n")
        logger.info("wrote %s history rows to %s", len(self.history), out)
        return out


def _snapshot(model: BaseClassifier) -> Dict[str, np.ndarray]:
    # checkpoint precision; keeps in-memory and reloaded checkpoints identical
    return {name: p.data.astype(np.float32) for name, p in model.params.items()}


def _restore(model: BaseClassifier, arrays: Dict[str, np.ndarray]) -> None:
    for name, value in arrays.items():
        model.params[name].data = value.astype(model.params[name].dtype)


def validation_f1(model: BaseClassifier, split: EncodedSplit, labels: LabelSpace,
                  batch_size: int = 256) -> Tuple[float, float, float, float]:
    pred = predict_indices(model, split.ids, batch_size=batch_size)
    return tuple(f1_macro(split.labels[:, j], pred[:, j], size)
                 for j, size in enumerate(labels.sizes()))


def check_disjoint(train: EncodedSplit, others: Dict[str, Optional[EncodedSplit]]) -> None:
    seen = train.sources()
    for name, split in others.items():
        if split is None:
            continue
        overlap = seen & split.sources()
        if overlap:
            raise DataValidationError(f"{len(overlap)} {name} records also appear in the training split",
                                      {"split": name, "examples": sorted(overlap)[:5]})


def train(model: BaseClassifier, train_split: EncodedSplit, val_split: Optional[EncodedSplit],
          cfg: TrainConfig, vocab: Vocabulary, labels: LabelSpace,
          norm: Optional[NormConfig] = None, max_epochs: Optional[int] = None) -> TrainResult:
    """Fit ``model`` in place and return the best checkpoint with per-epoch history.

    Without a validation split there is no early stopping and the final
    epoch's parameters are kept.
    """
    if len(train_split) == 0:
        raise DataValidationError("training split is empty")
    if val_split is not None and len(val_split) == 0:
        raise DataValidationError("validation split is empty")
    check_disjoint(train_split, {"validation": val_split})
    if train_split.labels.shape[1] != len(LEVELS):
        raise DataValidationError("training labels must have one column per level")

    if cfg.freeze_embeddings:
        model.freeze(*(n for n in ("embedding", "tok_embedding") if n in model.params))
    optimizer = make_optimizer(cfg.optimizer, model.trainable(), lr=cfg.lr, beta1=cfg.beta1,
                               beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay)
    focal = cfg.focal_config()
    epochs = max_epochs or cfg.max_epochs
    stopper = EarlyStopping(cfg.early_stop_patience)
    n = len(train_split)

    best = _snapshot(model)
    history: List[EpochRecord] = []
    diverged = False
    epochs_run = 0
    logger.info("training %s (%s parameters) on %s records, %s epochs max, loss=%s, optimizer=%s",
                model.config.arch, model.num_parameters(), n, epochs, cfg.loss, cfg.optimizer)

    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng(cfg.seed + epoch)
        order = rng.permutation(n)
        total_loss = 0.0
        try:
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                optimizer.zero_grad()
                logits = model(train_split.ids[batch], train=True, rng=rng)
                loss = multi_head_loss(logits, train_split.labels[batch], focal)
                backward(loss)
                if cfg.clip_norm is not None:
                    optimizer.clip_grad_norm(cfg.clip_norm)
                optimizer.step()
                total_loss += loss.item() * len(batch)
                logger.debug("epoch %s batch %s loss %.6f", epoch, start // cfg.batch_size, loss.item())
        except NumericalError as e:
            logger.error("training diverged at epoch %s: %s; keeping last good parameters", epoch, e.message)
            diverged = True
            break
        epochs_run = epoch
        train_loss = total_loss / n

        if val_split is None:
            history.append(EpochRecord(epoch, train_loss, (0.0, 0.0, 0.0, 0.0)))
            best = _snapshot(model)
            stopper.best_epoch = epoch
            logger.info("epoch %s train_loss=%.6f", epoch, train_loss)
            continue

        f1 = validation_f1(model, val_split, labels, cfg.eval_batch_size)
        record = EpochRecord(epoch, train_loss, f1)
        history.append(record)
        stop = stopper.update(epoch, record.val_macro_f1_mean)
        if stopper.improved:
            best = _snapshot(model)
        logger.info("epoch %s train_loss=%.6f val_macro_f1=%.4f (%s)", epoch, train_loss,
                    record.val_macro_f1_mean, " ".join(f"{v:.4f}" for v in f1))
        if stop:
            logger.info("early stop after epoch %s; best epoch %s (%.4f)",
                        epoch, stopper.best_epoch, stopper.best_metric)
            break

    _restore(model, best)
    best_epoch = stopper.best_epoch or 0
    checkpoint = ModelCheckpoint(
        config=model.config, params=best, vocab=vocab, labels=labels, seed=cfg.seed,
        norm=norm or NormConfig(),
        meta={"best_epoch": best_epoch, "epochs_run": epochs_run, "loss": cfg.loss,
              "optimizer": cfg.optimizer, "lr": cfg.lr, "diverged": diverged},
    )
    return TrainResult(checkpoint=checkpoint, history=history, best_epoch=best_epoch,
                       epochs_run=epochs_run, diverged=diverged)


def retrain_with_val(model: BaseClassifier, train_split: EncodedSplit, val_split: EncodedSplit,
                     cfg: TrainConfig, vocab: Vocabulary, labels: LabelSpace, epochs: int,
                     norm: Optional[NormConfig] = None) -> TrainResult:
    """Fit a fresh model on train + val for a fixed number of epochs."""
    if epochs <= 0:
        raise DataValidationError("retraining needs at least one epoch", {"epochs": epochs})
    combined = EncodedSplit(
        ids=np.concatenate([train_split.ids, val_split.ids], axis=0),
        labels=np.concatenate([train_split.labels, val_split.labels], axis=0),
        provenance=train_split.provenance + val_split.provenance,
    )
    logger.info("retraining on train+val (%s records) for %s epochs", len(combined), epochs)
    return train(model, combined, None, cfg, vocab, labels, norm=norm, max_epochs=epochs)
