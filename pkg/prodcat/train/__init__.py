from .config import DEFAULT_TRAIN, TrainConfig
from .inference import (UNCLASSIFIABLE, EncodedSplit, HeadPick, Prediction, encode_split, evaluate,
                        majority_baseline, model_from_checkpoint, predict, predict_indices, predict_many)
from .optim import Adam, AdamW, OptimizerState, adam_step, make_optimizer
from .trainer import (HISTORY_COLUMNS, EarlyStopping, EpochRecord, TrainResult, check_disjoint,
                      retrain_with_val, train, validation_f1)

__all__ = [
    "Adam",
    "AdamW",
    "DEFAULT_TRAIN",
    "EarlyStopping",
    "EncodedSplit",
    "EpochRecord",
    "HISTORY_COLUMNS",
    "HeadPick",
    "OptimizerState",
    "Prediction",
    "TrainConfig",
    "TrainResult",
    "UNCLASSIFIABLE",
    "adam_step",
    "check_disjoint",
    "encode_split",
    "evaluate",
    "majority_baseline",
    "make_optimizer",
    "model_from_checkpoint",
    "predict",
    "predict_indices",
    "predict_many",
    "retrain_with_val",
    "train",
    "validation_f1",
]
