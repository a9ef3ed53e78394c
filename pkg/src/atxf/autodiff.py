"""Dense tensors, reverse-mode autodiff and the Adam optimizer.

Tensors wrap row-major numpy arrays (float32 for training, float64 for
gradient checking). Primitive ops append nodes to an explicit tape
(ComputationRecord); ``backward`` walks the tape in reverse creation
order, which is already a topological order, accumulating gradients
left-to-right so repeated runs are bitwise identical.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, NumericError

# Validate outputs of every primitive op for NaN/Inf. Desk-scale models
# make the extra pass affordable; flip off only for profiling.
_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> None:
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """A dense float tensor, optionally a trainable parameter."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # arithmetic sugar; every overload routes through the primitive ops
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)


def _as_tensor(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


@dataclass
class OpNode:
    """One recorded primitive op: inputs, output and its backward rule."""

    op: str
    inputs: tuple
    output: Tensor
    backward_fn: object  # grad_out -> tuple of per-input grads (or None)


@dataclass
class ComputationRecord:
    """Tape of primitive ops in creation (= topological) order."""

    nodes: list = field(default_factory=list)
    _tracked: set = field(default_factory=set)

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def append(self, node: OpNode) -> None:
        self.nodes.append(node)
        self._tracked.add(id(node.output))


_RECORDING = threading.local()  # per-thread stack of active tapes


def _active_stack() -> list:
    stack = getattr(_RECORDING, "stack", None)
    if stack is None:
        stack = _RECORDING.stack = []
    return stack


class record:
    """Context manager that makes a fresh tape the active record."""

    def __enter__(self) -> ComputationRecord:
        rec = ComputationRecord()
        _active_stack().append(rec)
        return rec

    def __exit__(self, *exc):
        _active_stack().pop()
        return False


def _emit(op_name, inputs, out_data, backward_fn):
    """Wrap a primitive op result, recording it on the active tape."""
    if _FINITE_CHECKS and not np.all(np.isfinite(out_data)):
        raise NumericError(f"non-finite values produced by op '{op_name}'")
    out = Tensor(out_data)
    stack = _active_stack()
    if stack:
        rec = stack[-1]
        if any(isinstance(t, Tensor) and rec.tracks(t) for t in inputs):
            rec.append(OpNode(op_name, tuple(inputs), out, backward_fn))
    return out


def _unbroadcast(grad, shape):
    """Sum-reduce a broadcast gradient back to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _emit("mul", (a, b), out, bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; batch dimensions broadcast."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b_data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a_data, -1, -2) @ g, b.shape)
        return ga, gb

    return _emit("matmul", (a, b), out, bwd)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    old_shape = x.data.shape

    def bwd(g):
        return (g.reshape(old_shape),)

    return _emit("reshape", (x,), out, bwd)


def transpose(x: Tensor, axes=None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = list(range(x.data.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def bwd(g):
        return (g.transpose(inverse),)

    return _emit("transpose", (x,), out, bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    positive = x.data > 0

    def bwd(g):
        return (g * positive,)

    return _emit("relu", (x,), out, bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax; each slice along ``axis`` sums to 1."""
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains NaN/Inf")
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit("softmax", (x,), out, bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax input contains NaN/Inf")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_z
    soft = np.exp(out)

    def bwd(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", (x,), out, bwd)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (gt,)

    return _emit("embedding", (table,), out, bwd)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then apply affine scale and shift."""
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    norm = (x.data - mean) * inv
    out = norm * scale.data + shift.data
    n = x.data.shape[-1]
    scale_data = scale.data

    def bwd(g):
        g_norm = g * scale_data
        g_scale = (g * norm).reshape(-1, n).sum(axis=0)
        g_shift = g.reshape(-1, n).sum(axis=0)
        gm = g_norm.mean(axis=-1, keepdims=True)
        gnm = (g_norm * norm).mean(axis=-1, keepdims=True)
        gx = (g_norm - gm - norm * gnm) * inv
        return gx, g_scale, g_shift

    return _emit("layer_norm", (x, scale, shift), out, bwd)


def take_along_last(x: Tensor, ids: np.ndarray) -> Tensor:
    """out[...] = x[..., ids[...]]; selects one entry per leading position."""
    ids = np.asarray(ids)
    out = np.take_along_axis(x.data, ids[..., None], axis=-1)[..., 0]

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, ids[..., None], g[..., None], axis=-1)
        return (gx,)

    return _emit("take_along_last", (x,), out, bwd)


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)
    in_shape = x.data.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, in_shape).copy(),)

    return _emit("sum", (x,), out, bwd)


def tensor_mean(x: Tensor, axis=None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tensor_sum(x, axis), _as_tensor(1.0 / count, x.dtype))


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# backward


def backward(rec: ComputationRecord, loss: Tensor) -> dict:
    """Gradient of a scalar loss w.r.t. every parameter on the tape.

    Returns ``{id(tensor): grad_array}`` for tensors with
    ``requires_grad``; also assigns each one's ``.grad``.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    param_grads: dict[int, np.ndarray] = {}
    for node in reversed(rec.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        for inp, g_in in zip(node.inputs, node.backward_fn(g_out)):
            if g_in is None or not isinstance(inp, Tensor):
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
            if inp.requires_grad:
                param_grads[key] = grads[key]
    for node in rec.nodes:
        for inp in node.inputs:
            if isinstance(inp, Tensor) and inp.requires_grad and id(inp) in param_grads:
                inp.grad = param_grads[id(inp)]
    return param_grads


# ---------------------------------------------------------------------------
# initialization


_SCHEMES = ("uniform-glorot", "zeros", "ones")


def seeded_init(shape, scheme: str, seed: int, dtype=np.float32) -> Tensor:
    """Deterministic parameter tensor for a (shape, scheme, seed) triple."""
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return Tensor(np.zeros(shape, dtype=dtype))
    if scheme == "ones":
        return Tensor(np.ones(shape, dtype=dtype))
    if scheme == "uniform-glorot":
        if len(shape) >= 2:
            fan_in, fan_out = shape[0], shape[1]
        else:
            fan_in = fan_out = shape[0]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        rng = np.random.default_rng(seed)
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))
    raise ConfigError(f"unknown init scheme '{scheme}' (expected one of {_SCHEMES})")


def derive_seed(seed: int, name: str) -> int:
    """Stable per-tensor seed so init is independent of creation order."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter Adam moments plus hyperparameters.

    Defaults follow the usual transformer recipe: lr 1e-3, beta1 0.9,
    beta2 0.98, eps 1e-9.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.learning_rate, self.beta1, self.beta2, self.epsilon) <= 0:
            raise ConfigError("Adam hyperparameters must be positive")


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update over named parameter tensors.

    ``params`` maps name -> Tensor, ``grads`` maps name -> ndarray.
    Parameters without a gradient entry are left untouched.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in params:
        g = grads.get(name)
        if g is None:
            continue
        p = params[name]
        if g.shape != p.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter '{name}' {p.data.shape}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state
