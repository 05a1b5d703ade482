"""Peephole LSTM cell and the stacked bidirectional classifier built on it.

Gate equations (row-vector convention, ``x @ W``):

    i = sigmoid(x W_xi + h W_hi + w_ci * c_prev + b_i)
    f = sigmoid(x W_xf + h W_hf + w_cf * c_prev + b_f)
    c = f * c_prev + i * tanh(x W_xc + h W_hc + b_c)
    o = sigmoid(x W_xo + h W_ho + w_co * c + b_o)
    h = o * tanh(c)

Peephole weights are diagonal and stored as vectors. The output gate reads
the updated cell state.
"""

from dataclasses import dataclass, fields
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..autodiff import (Tensor, concat, dropout, embedding_lookup, index_select, matmul,
                        reshape, sigmoid, swapaxes, tanh, where)
from ..utils.errors import ShapeError
from ..vocab import PAD_ID
from .base_model import BaseClassifier, MultiHeadLogits, glorot
from .config import ModelConfig

DIRECTIONS = ("fwd", "bwd")
EMBEDDING_INIT_RANGE = 0.05


class LstmState(NamedTuple):
    h: Tensor
    c: Tensor


@dataclass(frozen=True)
class LstmCellParams:
    W_xi: Tensor
    W_hi: Tensor
    W_ci: Tensor
    b_i: Tensor
    W_xf: Tensor
    W_hf: Tensor
    W_cf: Tensor
    b_f: Tensor
    W_xc: Tensor
    W_hc: Tensor
    b_c: Tensor
    W_xo: Tensor
    W_ho: Tensor
    W_co: Tensor
    b_o: Tensor

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_params(cls, params: Dict[str, Tensor], prefix: str) -> "LstmCellParams":
        return cls(**{name: params[f"{prefix}.{name}"] for name in cls.names()})

    @classmethod
    def from_arrays(cls, **arrays) -> "LstmCellParams":
        return cls(**{name: Tensor(np.asarray(arrays[name], dtype=np.float64)) for name in cls.names()})

    @property
    def input_dim(self) -> int:
        return self.W_xi.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_hi.shape[0]

    def validate(self) -> None:
        n_in, n_h = self.input_dim, self.hidden_dim
        expected = {"W_x": (n_in, n_h), "W_h": (n_h, n_h), "W_c": (n_h,), "b_": (n_h,)}
        for name in self.names():
            kind = name[:3] if name.startswith("W") else "b_"
            shape = getattr(self, name).shape
            if shape != expected[kind]:
                raise ShapeError(f"LSTM parameter {name} has shape {shape}, expected {expected[kind]}",
                                 {"param": name, "shape": list(shape)})

    def input_weights(self) -> Tensor:
        """(input_dim, 4 * hidden) in gate order i, f, c, o."""
        return concat([self.W_xi, self.W_xf, self.W_xc, self.W_xo], axis=1)

    def recurrent_weights(self) -> Tensor:
        return concat([self.W_hi, self.W_hf, self.W_hc, self.W_ho], axis=1)


def zero_state(batch: int, hidden: int, dtype=np.float64) -> LstmState:
    return LstmState(Tensor(np.zeros((batch, hidden), dtype=dtype)), Tensor(np.zeros((batch, hidden), dtype=dtype)))


def _cell_update(params: LstmCellParams, x_proj: Tensor, h_proj: Tensor, prev: LstmState) -> LstmState:
    n = params.hidden_dim
    z = x_proj + h_proj
    lead = (slice(None),) * (z.ndim - 1)
    z_i = index_select(z, lead + (slice(0, n),))
    z_f = index_select(z, lead + (slice(n, 2 * n),))
    z_c = index_select(z, lead + (slice(2 * n, 3 * n),))
    z_o = index_select(z, lead + (slice(3 * n, 4 * n),))

    i = sigmoid(z_i + params.W_ci * prev.c + params.b_i)
    f = sigmoid(z_f + params.W_cf * prev.c + params.b_f)
    c = f * prev.c + i * tanh(z_c + params.b_c)
    o = sigmoid(z_o + params.W_co * c + params.b_o)
    return LstmState(h=o * tanh(c), c=c)


def lstm_cell_step(params: LstmCellParams, x_t: Tensor, prev: LstmState) -> LstmState:
    """One timestep for a single vector ``(input_dim,)`` or a batch ``(B, input_dim)``."""
    params.validate()
    if x_t.shape[-1] != params.input_dim:
        raise ShapeError(f"x_t has width {x_t.shape[-1]}, cell expects {params.input_dim}",
                         {"x": list(x_t.shape), "input_dim": params.input_dim})
    if prev.h.shape != prev.c.shape or prev.h.shape[-1] != params.hidden_dim \
            or prev.h.shape[:-1] != x_t.shape[:-1]:
        raise ShapeError(f"state shapes h={prev.h.shape} c={prev.c.shape} do not fit hidden "
                         f"{params.hidden_dim} and input {x_t.shape}")
    return _cell_update(params, matmul(x_t, params.input_weights()),
                        matmul(prev.h, params.recurrent_weights()), prev)


def run_direction(params: LstmCellParams, inputs: Tensor, mask: np.ndarray,
                  reverse: bool = False) -> Tuple[List[Tensor], LstmState]:
    """Scan (B, T, D) inputs; masked steps carry the previous state through unchanged.

    Returns per-step hidden states in time order and the final state. Run in
    reverse, the final state is the one reached after reading position 0.
    """
    batch, steps, _ = inputs.shape
    state = zero_state(batch, params.hidden_dim, inputs.dtype)
    # (T, B, 4H) so each step is a single leading-axis slice
    projected = swapaxes(matmul(inputs, params.input_weights()), 0, 1)
    recurrent = params.recurrent_weights()
    outputs: List[Optional[Tensor]] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        candidate = _cell_update(params, projected[t], matmul(state.h, recurrent), state)
        valid = mask[:, t:t + 1]
        state = LstmState(h=where(valid, candidate.h, state.h), c=where(valid, candidate.c, state.c))
        outputs[t] = state.h
    return outputs, state


def _stack_time(states: List[Tensor]) -> Tensor:
    batch, width = states[0].shape
    return concat([reshape(s, (batch, 1, width)) for s in states], axis=1)


def bilstm_encode(model: "BiLstmClassifier", ids: np.ndarray, train: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """Shared trunk: (B, T) ids -> (B, 2 * last_units) representation."""
    config = model.config
    mask = ids != PAD_ID
    x = embedding_lookup(model.params["embedding"], ids, padding_idx=PAD_ID)
    batch, _, width = x.shape
    x = dropout(x, config.spatial_dropout_rate, rng, train=train, noise_shape=(batch, 1, width))

    representation = None
    n_layers = len(config.lstm_layers)
    for layer, (_, rate) in enumerate(config.lstm_layers):
        fwd_params = LstmCellParams.from_params(model.params, f"lstm.{layer}.fwd")
        bwd_params = LstmCellParams.from_params(model.params, f"lstm.{layer}.bwd")
        fwd_out, fwd_last = run_direction(fwd_params, x, mask)
        bwd_out, bwd_first = run_direction(bwd_params, x, mask, reverse=True)
        if layer == n_layers - 1:
            representation = dropout(concat([fwd_last.h, bwd_first.h], axis=-1), rate, rng, train=train)
        else:
            sequence = concat([_stack_time(fwd_out), _stack_time(bwd_out)], axis=-1)
            x = dropout(sequence, rate, rng, train=train)
    return representation


class BiLstmClassifier(BaseClassifier):
    """Embedding, spatial dropout, stacked BiLSTM, four heads."""

    @classmethod
    def init_parameters(cls, config: ModelConfig, rng: np.random.Generator, dtype,
                        embedding: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        arrays: Dict[str, np.ndarray] = {}
        if embedding is not None:
            if embedding.shape != (config.vocab_size, config.embed_dim):
                raise ShapeError(f"embedding matrix {embedding.shape} does not match "
                                 f"({config.vocab_size}, {config.embed_dim})")
            table = np.array(embedding, dtype=dtype)
        else:
            table = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE,
                                size=(config.vocab_size, config.embed_dim)).astype(dtype)
        table[PAD_ID] = 0.0
        arrays["embedding"] = table

        input_dim = config.embed_dim
        for layer, (units, _) in enumerate(config.lstm_layers):
            peephole = float(np.sqrt(3.0 / units))
            for direction in DIRECTIONS:
                prefix = f"lstm.{layer}.{direction}"
                for gate in ("i", "f", "c", "o"):
                    arrays[f"{prefix}.W_x{gate}"] = glorot(rng, input_dim, units, dtype)
                    arrays[f"{prefix}.W_h{gate}"] = glorot(rng, units, units, dtype)
                    if gate != "c":
                        arrays[f"{prefix}.W_c{gate}"] = rng.uniform(-peephole, peephole, size=units).astype(dtype)
                    arrays[f"{prefix}.b_{gate}"] = np.full(units, 1.0 if gate == "f" else 0.0, dtype=dtype)
            input_dim = 2 * units

        arrays.update(cls.init_heads(config, input_dim, rng, dtype))
        return arrays

    def forward(self, ids: np.ndarray, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
        ids = self.check_ids(ids)
        return self.heads(bilstm_encode(self, ids, train=train, rng=rng), train, rng)


def bilstm_forward(model: BiLstmClassifier, ids: np.ndarray, train: bool = False,
                   rng: Optional[np.random.Generator] = None) -> MultiHeadLogits:
    return model.forward(ids, train=train, rng=rng)
