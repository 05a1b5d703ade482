from abc import ABC, abstractmethod
from typing import Dict, Iterator, NamedTuple, Optional, Tuple

import numpy as np

from ..autodiff import Tensor, dropout, matmul, no_grad, softmax
from ..corpus import LEVELS
from ..utils.errors import ShapeError
from ..vocab import PAD_ID
from .config import ModelConfig


class MultiHeadLogits(NamedTuple):
    segment: Tensor
    category: Tensor
    subcategory: Tensor
    product: Tensor


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = glorot_bound(fan_in, fan_out)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class BaseClassifier(ABC):
    """Shared trunk plumbing: parameter store, four affine heads, inference helpers."""

    def __init__(self, config: ModelConfig, params: Dict[str, Tensor]):
        self.config = config
        self.params = params
        self.frozen: set = set()

    # parameters

    @classmethod
    @abstractmethod
    def init_parameters(cls, config: ModelConfig, rng: np.random.Generator, dtype) -> Dict[str, np.ndarray]:
        """Trunk and head arrays in a fixed, documented order."""

    @staticmethod
    def init_heads(config: ModelConfig, width: int, rng: np.random.Generator, dtype) -> Dict[str, np.ndarray]:
        arrays = {}
        for level, size in zip(LEVELS, config.head_sizes):
            arrays[f"head.{level}.W"] = glorot(rng, width, size, dtype)
            arrays[f"head.{level}.b"] = np.zeros(size, dtype=dtype)
        return arrays

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Dict[str, np.ndarray], dtype=np.float64) -> "BaseClassifier":
        params = {name: Tensor(np.asarray(value, dtype=dtype), requires_grad=True, name=name)
                  for name, value in arrays.items()}
        return cls(config, params)

    def freeze(self, *names: str) -> None:
        for name in names:
            self.frozen.add(name)
            self.params[name].requires_grad = False

    def trainable(self) -> Dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if n not in self.frozen}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {n: p.data for n, p in self.params.items()}

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    # forward

    def check_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ShapeError(f"ids must be (batch, max_len), got {ids.shape}", {"shape": list(ids.shape)})
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise ShapeError(f"token id {int(ids.max())} >= vocab_size {self.config.vocab_size}",
                             {"max_id": int(ids.max()), "vocab_size": self.config.vocab_size})
        return ids

    @staticmethod
    def padding_mask(ids: np.ndarray) -> np.ndarray:
        return ids != PAD_ID

    def heads(self, representation: Tensor, train: bool, rng: Optional[np.random.Generator]) -> MultiHeadLogits:
        """Shared dropout, then one affine head per level."""
        shared = dropout(representation, self.config.head_dropout, rng, train=train)
        logits = []
        for level in LEVELS:
            logits.append(matmul(shared, self.params[f"head.{level}.W"]) + self.params[f"head.{level}.b"])
        return MultiHeadLogits(*logits)

    @abstractmethod
    def forward(self, ids: np.ndarray, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
        """(batch, max_len) ids -> four (batch, n_level) logit tensors."""

    def __call__(self, ids: np.ndarray, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
        return self.forward(ids, train=train, rng=rng)

    def predict_proba(self, ids: np.ndarray, batch_size: int = 256) -> Tuple[np.ndarray, ...]:
        """Per-head softmax probabilities with dropout off and no recording."""
        outputs = [[] for _ in LEVELS]
        with no_grad():
            for start in range(0, len(ids), batch_size):
                logits = self.forward(ids[start:start + batch_size], train=False)
                for j, head in enumerate(logits):
                    outputs[j].append(softmax(head, axis=-1).data)
        return tuple(
            np.concatenate(o, axis=0) if o else np.zeros((0, size))
            for o, size in zip(outputs, self.config.head_sizes)
        )
