"""Dense-tensor reverse-mode automatic differentiation and Adam.

A Tensor wraps a numpy array; operations executed inside a `with Tape()`
block are recorded and `backward` replays them in reverse to produce exact
gradients for every requires_grad leaf. Outside a tape, the same functions
run as plain numpy (inference mode).

Default compute precision is float32; reductions accumulate in float64.
Tensors of float64 propagate their precision through mixed expressions,
which the gradient-check tests rely on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


class AutodiffError(ValueError):
    """Shape mismatch or invalid differentiation request."""


class Tensor:
    """Value node. Data is never aliased with caller-visible arrays."""

    __slots__ = ("data", "requires_grad", "grad", "_tracked")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr.copy()
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tracked = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar. Python scalars go through shift/scale so they never
    # promote float32 data to float64.
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, other)
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -other)
        return add(self, neg(_as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return neg(self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other, self.dtype))


def _as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=dtype)


_STATE = threading.local()


def _tape_stack() -> list:
    if not hasattr(_STATE, "stack"):
        _STATE.stack = []
    return _STATE.stack


class Tape:
    """Ordered record of operations for one forward pass.

    Single-owner: a tape must not be shared across threads. backward()
    consumes the tape; recording onto a consumed tape is an error.
    """

    def __init__(self):
        self._nodes: list[tuple[tuple[Tensor, ...], Tensor, object]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward_fn) -> None:
        if self._consumed:
            raise AutodiffError("tape already consumed by backward()")
        self._nodes.append((inputs, output, backward_fn))

    def __len__(self) -> int:
        return len(self._nodes)


def _active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _finish(inputs: tuple[Tensor, ...], out_data: np.ndarray, backward_fn) -> Tensor:
    """Wrap an op result, recording it if a tape is active and any input is tracked."""
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = False
    out.grad = None
    out._tracked = False
    tape = _active_tape()
    if tape is not None and any(t._tracked for t in inputs):
        out._tracked = True
        tape.record(inputs, out, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse-mode gradients of a scalar loss for all requires_grad leaves.

    Returns a map from id(tensor) to gradient array and also populates
    tensor.grad on the leaves. The tape is consumed.
    """
    if loss.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.shape}")
    if tape._consumed:
        raise AutodiffError("tape already consumed")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for inputs, output, backward_fn in reversed(tape._nodes):
        g_out = grads.pop(id(output), None)
        if g_out is None:
            continue
        with np.errstate(invalid="ignore", over="ignore"):
            g_inputs = backward_fn(g_out)
        for t, g in zip(inputs, g_inputs):
            if g is None or not t._tracked:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g.astype(t.data.dtype, copy=False)
            if t.requires_grad:
                leaves[key] = t
    result = {}
    for key, t in leaves.items():
        t.grad = grads[key]
        result[key] = grads[key]
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _finish((a, b), out, bwd)


def neg(a: Tensor) -> Tensor:
    return _finish((a,), -a.data, lambda g: (-g,))


def shift(a: Tensor, s: float) -> Tensor:
    return _finish((a,), a.data + np.asarray(s, dtype=a.dtype), lambda g: (g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        return (_unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape))

    return _finish((a, b), out, bwd)


def scale(a: Tensor, s: float) -> Tensor:
    return _finish((a,), a.data * s, lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b; a may carry leading batch dimensions."""
    if a.ndim < 2 or b.ndim != 2:
        raise AutodiffError(f"matmul expects a[..., i] @ b[i, o], got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise AutodiffError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    a2 = a.data.reshape(-1, a.shape[-1])
    out = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],))
    a_data, b_data = a.data, b.data

    def bwd(g):
        g2 = g.reshape(-1, b_data.shape[1])
        ga = (g2 @ b_data.T).reshape(a_data.shape)
        gb = a_data.reshape(-1, a_data.shape[-1]).T @ g2
        return (ga, gb)

    return _finish((a, b), out, bwd)


def affine(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """y = x @ w + bias with exact gradients for all three arguments."""
    if x.ndim < 2 or w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise AutodiffError(f"affine expects x[..., i] @ w[i, o], got {x.shape} @ {w.shape}")
    if bias.shape != (w.shape[1],):
        raise AutodiffError(f"bias shape {bias.shape} does not match output width {w.shape[1]}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    out += bias.data
    out = out.reshape(x.shape[:-1] + (w.shape[1],))
    x_data, w_data = x.data, w.data

    def bwd(g):
        g2 = g.reshape(-1, w_data.shape[1])
        gx = (g2 @ w_data.T).reshape(x_data.shape)
        gw = x_data.reshape(-1, x_data.shape[-1]).T @ g2
        return (gx, gw, g2.sum(axis=0))

    return _finish((x, w, bias), out, bwd)


def edge_broadcast_sum(send: Tensor, recv: Tensor, edge: Tensor, bias: Tensor) -> Tensor:
    """Fused send[b,u,:] + recv[b,v,:] + edge[b,u,v,:] + bias over the edge grid.

    One tape node instead of three chained broadcast adds; this is the hot
    path of message construction.
    """
    b, n, w = send.shape
    out = np.empty_like(edge.data)
    np.add(send.data[:, :, None, :], recv.data[:, None, :, :], out=out)
    out += edge.data
    out += bias.data

    def bwd(g):
        return (g.sum(axis=2), g.sum(axis=1), g, g.sum(axis=(0, 1, 2)))

    return _finish((send, recv, edge, bias), out, bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    orig = a.shape
    return _finish((a,), a.data.reshape(shape), lambda g: (g.reshape(orig),))


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _finish(tuple(tensors), out, bwd)


def relu(a: Tensor) -> Tensor:
    x = a.data
    return _finish((a,), np.maximum(x, 0.0), lambda g: (g * (x > 0),))


def where_const(mask: np.ndarray, a: Tensor, fill: float) -> Tensor:
    """Select a where mask else fill; the mask is a constant, fill carries no grad."""
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, np.asarray(fill, dtype=a.dtype))
    return _finish((a,), out, lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def reduce_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)
    shp = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shp).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shp).copy(),)

    return _finish((a,), out, bwd)


def reduce_mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reduce_max(a: Tensor, axis: int) -> Tensor:
    """Max along one axis; gradient flows only to the first argmax on ties.

    The argmax is only materialized during backward, and only when exact
    ties actually occur; tie-free slices use a cheap equality mask.
    """
    if a.shape[axis] < 1:
        raise AutodiffError("reduce_max over an empty axis")
    x = a.data
    out = x.max(axis=axis)

    def bwd(g):
        hit = x == np.expand_dims(out, axis)
        if hit.sum(axis=axis).max() > 1:
            grad = np.zeros(x.shape, dtype=g.dtype)
            arg = x.argmax(axis=axis)
            np.put_along_axis(grad, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
            return (grad,)
        return (hit * np.expand_dims(g, axis),)

    return _finish((a,), out, bwd)


def softmax_weighted_sum(m: Tensor, temperature: float, axis: int = -1) -> Tensor:
    """Temperature-softmax aggregation: sum_j sigma(m/T)_j * m_j along axis.

    Entries equal to -inf receive weight 0 and contribute no gradient, which
    is how masked neighborhoods are excluded. As T -> 0 the result approaches
    the hard max; as T -> inf it approaches the mean.
    """
    if temperature <= 0:
        raise AutodiffError(f"temperature must be > 0, got {temperature} (use reduce_max for T=0)")
    if m.shape[axis] < 1:
        raise AutodiffError("softmax_weighted_sum over an empty axis")
    x = m.data
    hi = np.max(x, axis=axis, keepdims=True)
    hi = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(invalid="ignore"):
        e = np.exp((x - hi) / temperature)
    e = np.where(np.isfinite(x), e, 0.0)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
    s = e / denom
    with np.errstate(invalid="ignore"):
        contrib = np.where(s > 0, s * x, 0.0)
    out = contrib.sum(axis=axis, dtype=np.float64).astype(x.dtype)

    def bwd(g):
        gg = np.expand_dims(g, axis)
        outk = np.expand_dims(out, axis)
        with np.errstate(invalid="ignore"):
            local = s * (1.0 + (x - outk) / temperature)
        local = np.where(s > 0, local, 0.0)
        return (gg * local,)

    return _finish((m,), out, bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log-softmax; -inf entries stay -inf with zero weight."""
    x = a.data
    hi = np.max(x, axis=axis, keepdims=True)
    hi = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(invalid="ignore"):
        shifted = x - hi
    e = np.where(np.isfinite(x), np.exp(shifted), 0.0)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
    logp = shifted - np.log(denom)
    s = e / denom

    def bwd(g):
        total = g.sum(axis=axis, keepdims=True)
        return (g - s * total,)

    return _finish((a,), logp, bwd)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates and step counter for a parameter set."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise AutodiffError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        g = g.astype(np.float64, copy=False)
        m = state.m.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        v = state.v.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (p.data.astype(np.float64) - update).astype(p.dtype)
