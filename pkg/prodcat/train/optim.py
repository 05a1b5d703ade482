"""Adam and AdamW over named numpy parameters."""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from ..autodiff import Tensor
from ..utils.errors import NumericalError, ShapeError
from ..utils.logger import logger


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: OptimizerState) -> Dict[str, np.ndarray]:
    """One bias-corrected Adam update; AdamW first decays p by lr * wd * p.

    Every gradient is checked before anything is touched, so a rejected step
    leaves parameters and moments unchanged.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name}", {"param": name})
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}",
                             {"param": name})
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}", {"param": name})

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t

    updated: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            updated[name] = p
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        if state.decoupled and state.weight_decay:
            p = p - state.lr * state.weight_decay * p
        updated[name] = (p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(params[name].dtype, copy=False)
    return updated


class Adam:
    decoupled = False

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = dict(params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                                    weight_decay=weight_decay, decoupled=self.decoupled)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: p.grad for name, p in self.params.items() if p.grad is not None}

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the norm before."""
        grads = self.grads()
        total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        if total > max_norm:
            scale = max_norm / total
            for name in grads:
                self.params[name].grad = grads[name] * scale
            logger.debug("clipped gradient norm %.4f -> %.4f", total, max_norm)
        return total

    def step(self) -> None:
        arrays = {name: p.data for name, p in self.params.items()}
        updated = adam_step(arrays, self.grads(), self.state)
        for name, value in updated.items():
            self.params[name].data = value


class AdamW(Adam):
    decoupled = True

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        super().__init__(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def make_optimizer(kind: str, params: Mapping[str, Tensor], lr: float, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8, weight_decay: Optional[float] = None) -> Adam:
    if kind == "adamw":
        return AdamW(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                     weight_decay=0.01 if weight_decay is None else weight_decay)
    return Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
