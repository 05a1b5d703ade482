"""Dense tensors with reverse-mode automatic differentiation over numpy.

Each op computes its forward value eagerly and, when any input requires a
gradient, records its parents and a backward rule mapping the output gradient
to one gradient per parent. ``backward`` orders the recorded graph into a
ComputationTape and walks it once in reverse.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .utils.errors import NumericalError, ShapeError
from .utils.logger import logger

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad():
    """Run ops without recording; used for inference and finite differences."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def _as_array(data: ArrayLike, dtype=None) -> np.ndarray:
    array = np.asarray(data, dtype=dtype)
    if dtype is None and not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardRule] = None
        self.op = "leaf"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        backward(self)

    # operators
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __pow__(self, exponent: float): return power(self, exponent)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, index): return index_select(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name, dtype=dtype)


def _lift(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _make(data: np.ndarray, parents: Sequence[Tensor], rule: BackwardRule, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by {op}", {"op": op})
    out = Tensor(data)
    out.op = op
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = rule
    return out


def _check_leading_broadcast(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    """Allow equal shapes, scalars, or one shape being a trailing suffix of the other."""
    if a == b:
        return a
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    longer, shorter = (a, b) if len(a) >= len(b) else (b, a)
    if longer[len(longer) - len(shorter):] != shorter:
        raise ShapeError(f"{op}: incompatible shapes {a} and {b}", {"left": list(a), "right": list(b)})
    return longer


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum(), dtype=grad.dtype)
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_leading_broadcast(a.shape, b.shape, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_leading_broadcast(a.shape, b.shape, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_leading_broadcast(a.shape, b.shape, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _check_leading_broadcast(a.shape, b.shape, "div")
    if np.any(b.data == 0):
        raise NumericalError("division by zero")
    return _make(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)), "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent

    def grad(g):
        if exponent == 0:
            return (np.zeros_like(a.data),)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = exponent * a.data ** (exponent - 1)
        if exponent < 1:
            # subgradient 0 at a zero base
            local = np.where(a.data == 0, np.zeros_like(local), local)
        return (g * local,)

    return _make(data, (a,), grad, "pow")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericalError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp; the gradient is zero where the value was clamped."""
    data = np.clip(a.data, low, high)
    passed = (a.data >= low) & (a.data <= high)
    return _make(data, (a,), lambda g: (g * passed,), "clip")


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select from ``a`` where mask is true, else ``b``; mask is a constant."""
    if a.shape != b.shape:
        raise ShapeError(f"where: incompatible shapes {a.shape} and {b.shape}",
                         {"left": list(a.shape), "right": list(b.shape)})
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return _make(np.where(keep, a.data, b.data), (a, b),
                 lambda g: (np.where(keep, g, 0.0), np.where(keep, 0.0, g)), "where")


# activations

def sigmoid(a: Tensor) -> Tensor:
    # Stable on both tails.
    x = a.data
    e = np.exp(-np.abs(x))
    data = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return _make(data, (a,), lambda g: (g * data * (1.0 - data),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    return _make(data, (a,), lambda g: (g * (1.0 - data * data),), "tanh")


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    return _make(a.data * positive, (a,), lambda g: (g * positive,), "relu")


def softmax(a: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is false get probability 0.

    A slice with every position masked yields all zeros.
    """
    if a.shape[axis] == 0:
        raise ShapeError(f"softmax over empty axis {axis} of shape {a.shape}", {"shape": list(a.shape)})
    x = a.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(keep, x, -np.inf)
        peak = np.max(x, axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0.0)
        e = np.where(keep, np.exp(x - peak), 0.0)
        total = e.sum(axis=axis, keepdims=True)
        data = np.divide(e, total, out=np.zeros_like(e), where=total > 0)
    else:
        e = np.exp(x - np.max(x, axis=axis, keepdims=True))
        data = e / e.sum(axis=axis, keepdims=True)
    data = data.astype(a.dtype, copy=False)

    def rule(g):
        return (data * (g - (g * data).sum(axis=axis, keepdims=True)),)

    return _make(data, (a,), rule, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    if a.shape[axis] == 0:
        raise ShapeError(f"log_softmax over empty axis {axis} of shape {a.shape}", {"shape": list(a.shape)})
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    log_total = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - log_total
    probs = np.exp(data)
    return _make(data, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),), "log_softmax")


# linear algebra and structure

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., n, k) @ (k, m) or (..., n, k) @ (..., k, m); 1-D left operand allowed."""
    a, b = _lift(a), _lift(b)
    if a.ndim == 0 or b.ndim < 2:
        raise ShapeError(f"matmul: unsupported shapes {a.shape} and {b.shape}",
                         {"left": list(a.shape), "right": list(b.shape)})
    if a.shape[-1] != b.shape[-2] or (b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}",
                         {"left": list(a.shape), "right": list(b.shape)})
    vector = a.ndim == 1
    a2 = a.data[None, :] if vector else a.data
    data = np.matmul(a2, b.data)

    def rule(g):
        g2 = g[None, :] if vector else g
        grad_a = np.matmul(g2, np.swapaxes(b.data, -1, -2))
        if vector:
            grad_a = grad_a[0]
        grad_b = np.matmul(np.swapaxes(a2, -1, -2), g2)
        if b.ndim == 2 and grad_b.ndim > 2:
            grad_b = grad_b.reshape(-1, *grad_b.shape[-2:]).sum(axis=0)
        return grad_a, grad_b

    return _make(data[0] if vector else data, (a, b), rule, "matmul")


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(a, axes)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {original} into {tuple(shape)}",
                         {"from": list(original), "to": list(shape)}) from None
    return _make(data, (a,), lambda g: (g.reshape(original),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of no tensors")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}",
                         {"shapes": [list(t.shape) for t in tensors]}) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(data, tuple(tensors), rule, "concat")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def index_select(a: Tensor, index) -> Tensor:
    """Basic or advanced indexing (``slice`` op)."""
    data = a.data[index]
    basic = _is_basic_index(index)

    def rule(g):
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return _make(np.array(data, copy=True), (a,), rule, "slice")


def take_along_last(a: Tensor, indices: np.ndarray) -> Tensor:
    """out[i] = a[i, indices[i]] for a 2-D tensor."""
    if a.ndim != 2 or indices.shape != (a.shape[0],):
        raise ShapeError(f"take_along_last: shapes {a.shape} and {indices.shape}",
                         {"left": list(a.shape), "right": list(indices.shape)})
    rows = np.arange(a.shape[0])
    data = a.data[rows, indices]

    def rule(g):
        grad = np.zeros_like(a.data)
        grad[rows, indices] = g
        return (grad,)

    return _make(data, (a,), rule, "take")


def embedding_lookup(matrix: Tensor, ids: np.ndarray, padding_idx: Optional[int] = None) -> Tensor:
    """Rows of ``matrix`` at ``ids``; the padding row never receives gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab_size = matrix.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise ShapeError(f"embedding_lookup: id out of range [0, {vocab_size})",
                         {"max_id": int(ids.max()), "vocab_size": vocab_size})
    data = matrix.data[ids]

    def rule(g):
        grad = np.zeros_like(matrix.data)
        np.add.at(grad, ids, g)
        if padding_idx is not None:
            grad[padding_idx] = 0.0
        return (grad,)

    return _make(data, (matrix,), rule, "embedding")


def dropout(a: Tensor, rate: float, rng: Union[np.random.Generator, int, None] = None,
            train: bool = True, noise_shape: Optional[Sequence[int]] = None) -> Tensor:
    """Inverted dropout; identity when not training.

    ``noise_shape`` with 1s broadcasts one mask value across that axis
    (spatial dropout uses ``(batch, 1, channels)``).
    """
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    shape = tuple(noise_shape) if noise_shape is not None else a.shape
    keep = (rng.random(shape) >= rate).astype(a.dtype) / (1.0 - rate)
    mask = np.broadcast_to(keep, a.shape)
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(data, dtype=a.dtype), (a,), rule, "sum")


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    if count == 0:
        raise ShapeError(f"mean over an empty axis of shape {a.shape}")
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def masked_mean(a: Tensor, mask: np.ndarray, axis: int = 1) -> Tensor:
    """Mean over ``axis`` counting only positions where mask (shape a.shape[:axis+1]) is true."""
    weights = np.asarray(mask, dtype=a.dtype)
    weights = weights.reshape(weights.shape + (1,) * (a.ndim - weights.ndim))
    count = np.maximum(weights.sum(axis=axis, keepdims=True), 1.0)
    scaled = weights / count
    data = (a.data * scaled).sum(axis=axis)

    def rule(g):
        return (np.expand_dims(g, axis) * scaled,)

    return _make(data, (a,), rule, "masked_mean")


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gain.shape != a.shape[-1:] or bias.shape != a.shape[-1:]:
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {a.shape}")
    x = a.data
    n = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def rule(g):
        dxhat = g * gain.data
        dx = (inv / n) * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _make(data, (a, gain, bias), rule, "layer_norm")


# reverse pass

class ComputationTape:
    """Recorded ops in an order consistent with forward execution."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def record(cls, root: Tensor) -> "ComputationTape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def run(self, root: Tensor, seed: np.ndarray) -> None:
        grads: Dict[int, np.ndarray] = {id(root): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into every requires_grad leaf's ``grad``."""
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}", {"shape": list(loss.shape)})
    if not loss.requires_grad:
        raise ShapeError("backward on a tensor that does not require grad")
    tape = ComputationTape.record(loss)
    tape.run(loss, np.ones_like(loss.data))


def zero_grad(params: Union[Mapping[str, Tensor], Sequence[Tensor]]) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.zero_grad()


# verification

def gradient_check(f: Callable, point, epsilon: float = 1e-5, tolerance: float = 1e-6,
                   floor: float = 1e-8) -> float:
    """Max relative error between backward gradients and central differences.

    ``point`` is an array, a sequence of arrays or a mapping of arrays; ``f``
    receives Tensors in the same structure and returns a scalar Tensor.
    Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
    """
    if isinstance(point, Mapping):
        keys = list(point)
        arrays = [np.array(point[k], dtype=np.float64) for k in keys]
        call = lambda ts: f(dict(zip(keys, ts)))
    elif isinstance(point, np.ndarray) or np.isscalar(point):
        arrays = [np.array(point, dtype=np.float64)]
        call = lambda ts: f(ts[0])
    else:
        arrays = [np.array(p, dtype=np.float64) for p in point]
        call = lambda ts: f(*ts)

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = call(leaves)
    if not np.all(np.isfinite(out.data)):
        raise NumericalError("gradient_check: non-finite function value")
    backward(out)
    analytic = [l.grad if l.grad is not None else np.zeros_like(l.data) for l in leaves]

    def value_at() -> float:
        with no_grad():
            v = call([Tensor(a) for a in arrays])
        if not np.all(np.isfinite(v.data)):
            raise NumericalError("gradient_check: non-finite function value")
        return float(v.data)

    worst = 0.0
    for array, grad in zip(arrays, analytic):
        flat = array.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            up = value_at()
            flat[i] = original - epsilon
            down = value_at()
            flat[i] = original
            numeric = (up - down) / (2.0 * epsilon)
            a = float(gflat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    if worst > tolerance:
        logger.warning("gradient check: max relative error %.3e exceeds %.1e", worst, tolerance)
    return worst
