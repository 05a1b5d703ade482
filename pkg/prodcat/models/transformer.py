"""Desk-scale transformer encoder classifier."""

from typing import Dict, Optional

import numpy as np

from ..autodiff import (Tensor, embedding_lookup, index_select, layer_norm, masked_mean,
                        matmul, relu, reshape, softmax, swapaxes, transpose)
from ..utils.errors import ShapeError
from ..vocab import PAD_ID
from .base_model import BaseClassifier, MultiHeadLogits, glorot
from .config import ModelConfig

EMBEDDING_INIT_RANGE = 0.05


def attention(Q, K, V, mask: Optional[np.ndarray] = None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes.

    ``mask`` is true for keys that may be attended to; it broadcasts against
    the (..., n_q, n_k) score matrix. Masked keys get zero weight.
    """
    Q, K, V = (x if isinstance(x, Tensor) else Tensor(x) for x in (Q, K, V))
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeError(f"attention: query width {Q.shape[-1]} != key width {K.shape[-1]}",
                         {"d_q": Q.shape[-1], "d_k": K.shape[-1]})
    if K.shape[-2] != V.shape[-2]:
        raise ShapeError(f"attention: {K.shape[-2]} keys but {V.shape[-2]} values",
                         {"keys": K.shape[-2], "values": V.shape[-2]})
    d_k = Q.shape[-1]
    scores = matmul(Q, swapaxes(K, -1, -2)) * (1.0 / float(np.sqrt(d_k)))
    weights = softmax(scores, axis=-1, mask=mask)
    return matmul(weights, V)


def _split_heads(x: Tensor, num_heads: int, d_k: int) -> Tensor:
    batch, steps, _ = x.shape
    return transpose(reshape(x, (batch, steps, num_heads, d_k)), (0, 2, 1, 3))


def multi_head_attention(params: Dict[str, Tensor], prefix: str, x: Tensor, mask: np.ndarray,
                         num_heads: int, d_k: int) -> Tensor:
    batch, steps, width = x.shape
    q = _split_heads(matmul(x, params[f"{prefix}.W_q"]) + params[f"{prefix}.b_q"], num_heads, d_k)
    k = _split_heads(matmul(x, params[f"{prefix}.W_k"]) + params[f"{prefix}.b_k"], num_heads, d_k)
    v = _split_heads(matmul(x, params[f"{prefix}.W_v"]) + params[f"{prefix}.b_v"], num_heads, d_k)
    key_mask = mask.reshape(batch, 1, 1, steps)
    context = attention(q, k, v, mask=key_mask)
    merged = reshape(transpose(context, (0, 2, 1, 3)), (batch, steps, width))
    return matmul(merged, params[f"{prefix}.W_o"]) + params[f"{prefix}.b_o"]


def encoder_block(params: Dict[str, Tensor], index: int, x: Tensor, mask: np.ndarray,
                  config: ModelConfig) -> Tensor:
    prefix = f"block.{index}"
    attended = multi_head_attention(params, f"{prefix}.attn", x, mask, config.num_heads, config.d_k)
    x = layer_norm(x + attended, params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"])
    hidden = relu(matmul(x, params[f"{prefix}.ff.W1"]) + params[f"{prefix}.ff.b1"])
    fed = matmul(hidden, params[f"{prefix}.ff.W2"]) + params[f"{prefix}.ff.b2"]
    return layer_norm(x + fed, params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"])


class TransformerClassifier(BaseClassifier):
    """Token + positional embedding, encoder blocks, pooled vector, four heads."""

    @classmethod
    def init_parameters(cls, config: ModelConfig, rng: np.random.Generator, dtype,
                        embedding: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        d = config.d_model
        arrays: Dict[str, np.ndarray] = {}
        if embedding is not None:
            if embedding.shape != (config.vocab_size, d):
                raise ShapeError(f"embedding matrix {embedding.shape} does not match ({config.vocab_size}, {d})")
            table = np.array(embedding, dtype=dtype)
        else:
            table = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(config.vocab_size, d)).astype(dtype)
        table[PAD_ID] = 0.0
        arrays["tok_embedding"] = table
        if config.positional:
            arrays["pos_embedding"] = rng.uniform(
                -EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(config.max_len, d)).astype(dtype)

        for i in range(config.num_blocks):
            prefix = f"block.{i}"
            for name in ("q", "k", "v", "o"):
                arrays[f"{prefix}.attn.W_{name}"] = glorot(rng, d, d, dtype)
                arrays[f"{prefix}.attn.b_{name}"] = np.zeros(d, dtype=dtype)
            arrays[f"{prefix}.ln1.gain"] = np.ones(d, dtype=dtype)
            arrays[f"{prefix}.ln1.bias"] = np.zeros(d, dtype=dtype)
            arrays[f"{prefix}.ff.W1"] = glorot(rng, d, config.ff_dim, dtype)
            arrays[f"{prefix}.ff.b1"] = np.zeros(config.ff_dim, dtype=dtype)
            arrays[f"{prefix}.ff.W2"] = glorot(rng, config.ff_dim, d, dtype)
            arrays[f"{prefix}.ff.b2"] = np.zeros(d, dtype=dtype)
            arrays[f"{prefix}.ln2.gain"] = np.ones(d, dtype=dtype)
            arrays[f"{prefix}.ln2.bias"] = np.zeros(d, dtype=dtype)

        arrays.update(cls.init_heads(config, d, rng, dtype))
        return arrays

    def encode(self, ids: np.ndarray, train: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        config = self.config
        steps = ids.shape[1]
        if steps > config.max_len:
            raise ShapeError(f"sequence length {steps} exceeds max_len {config.max_len}",
                             {"length": steps, "max_len": config.max_len})
        mask = self.padding_mask(ids)
        x = embedding_lookup(self.params["tok_embedding"], ids, padding_idx=PAD_ID)
        if config.positional:
            x = x + index_select(self.params["pos_embedding"], slice(0, steps))
        for i in range(config.num_blocks):
            x = encoder_block(self.params, i, x, mask, config)
        if config.pooling == "mean":
            return masked_mean(x, mask, axis=1)
        return index_select(x, (slice(None), 0, slice(None)))

    def forward(self, ids: np.ndarray, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
        ids = self.check_ids(ids)
        return self.heads(self.encode(ids, train=train, rng=rng), train, rng)


def transformer_forward(model: TransformerClassifier, ids: np.ndarray, train: bool = False,
                        rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
    return model.forward(ids, train=train, rng=rng)
