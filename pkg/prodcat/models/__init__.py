from typing import Dict, Optional

import numpy as np

from .base_model import BaseClassifier, MultiHeadLogits, glorot, glorot_bound
from .checkpoint import ModelCheckpoint
from .config import DEFAULT_HEAD_DROPOUT, ModelConfig, ModelOptions
from .lstm import (BiLstmClassifier, LstmCellParams, LstmState, bilstm_forward, lstm_cell_step,
                   run_direction)
from .transformer import TransformerClassifier, attention, multi_head_attention, transformer_forward

MODEL_CLASSES = {"bilstm": BiLstmClassifier, "transformer": TransformerClassifier}


def init_parameters(config: ModelConfig, seed: int, dtype=np.float64,
                    embedding: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Fresh parameter arrays, deterministic per seed."""
    rng = np.random.default_rng(seed)
    return MODEL_CLASSES[config.arch].init_parameters(config, rng, dtype, embedding=embedding)


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float64,
                embedding: Optional[np.ndarray] = None,
                arrays: Optional[Dict[str, np.ndarray]] = None) -> BaseClassifier:
    """A classifier from fresh initialization or from existing arrays (e.g. a checkpoint)."""
    if arrays is None:
        arrays = init_parameters(config, seed, dtype, embedding=embedding)
    return MODEL_CLASSES[config.arch].from_arrays(config, arrays, dtype=dtype)


__all__ = [
    "BaseClassifier",
    "BiLstmClassifier",
    "DEFAULT_HEAD_DROPOUT",
    "LstmCellParams",
    "LstmState",
    "MODEL_CLASSES",
    "ModelCheckpoint",
    "ModelConfig",
    "ModelOptions",
    "MultiHeadLogits",
    "TransformerClassifier",
    "attention",
    "bilstm_forward",
    "build_model",
    "glorot",
    "glorot_bound",
    "init_parameters",
    "lstm_cell_step",
    "multi_head_attention",
    "run_direction",
    "transformer_forward",
]
