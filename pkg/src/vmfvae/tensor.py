"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Operations record themselves on the calling thread's :class:`Tape` whenever an
input requires a gradient. :func:`backward` walks the tape in exact reverse
recording order, accumulates gradients into leaf tensors and clears the tape.
Recurrent networks are unrolled into these primitives; there is no RNN op.
"""
import contextlib
import math
import struct
import threading
import zlib

import numpy as np

from .errors import NumericalError, ShapeError

_local = threading.local()


def _state():
    st = _local.__dict__
    if "tape" not in st:
        st["tape"] = Tape()
        st["grad_enabled"] = True
        st["check_finite"] = False
    return st


class Tape:
    """Ordered record of ``(output, inputs, backward_rule)`` triples."""

    def __init__(self):
        self.records = []

    def record(self, out, inputs, rule):
        self.records.append((out, inputs, rule))

    def clear(self):
        self.records = []

    def __len__(self):
        return len(self.records)


def get_tape():
    return _state()["tape"]


def reset_tape():
    _state()["tape"].clear()


@contextlib.contextmanager
def no_grad():
    st = _state()
    previous = st["grad_enabled"]
    st["grad_enabled"] = False
    try:
        yield
    finally:
        st["grad_enabled"] = previous


@contextlib.contextmanager
def check_finite(enabled=True):
    """Raise :class:`NumericalError` as soon as any op produces NaN/inf."""
    st = _state()
    previous = st["check_finite"]
    st["check_finite"] = enabled
    try:
        yield
    finally:
        st["check_finite"] = previous


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "name", "_from_op")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._from_op = False

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_leaf(self):
        return not self._from_op

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self):
        return self.values.copy()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(values, name=None):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def _make(values, inputs, rule):
    st = _state()
    if st["check_finite"] and not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite value produced by {getattr(rule, '__qualname__', rule)}")
    needs = st["grad_enabled"] and any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs)
    if needs:
        out._from_op = True
        st["tape"].record(out, inputs, rule)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def custom(inputs, values, rule):
    """Record an op with a hand-written backward rule ``rule(grad_out) -> grads``."""
    return _make(np.asarray(values, dtype=np.float64), [as_tensor(t) for t in inputs], rule)


# -- elementwise / broadcasting -------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.values + b.values, [a, b], rule)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.values - b.values, [a, b], rule)


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "multiply")

    def rule(g):
        ga = _unbroadcast(g * b.values, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.values * b.values, [a, b], rule)


def negate(x):
    x = as_tensor(x)
    return _make(-x.values, [x], lambda g: (-g,))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.values)
    return _make(y, [x], lambda g: (g * (1.0 - y * y),))


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.values)
    return _make(y, [x], lambda g: (g * y * (1.0 - y),))


def softplus(x):
    x = as_tensor(x)
    y = np.logaddexp(0.0, x.values)
    return _make(y, [x], lambda g: (g * _sigmoid(x.values),))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.values)
    return _make(y, [x], lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    return _make(np.log(x.values), [x], lambda g: (g / x.values,))


def clamp(x, low, high):
    """Clip to ``[low, high]``; gradient is zero where clipping is active."""
    x = as_tensor(x)
    inside = (x.values >= low) & (x.values <= high)
    return _make(np.clip(x.values, low, high), [x], lambda g: (g * inside,))


def detach(x):
    return Tensor(as_tensor(x).values)


# -- structural -------------------------------------------------------------

def matmul(a, b):
    """``(..., n) @ (n, m)``; leading axes of ``a`` are treated as a batch."""
    a, b = as_tensor(a), as_tensor(b)
    if b.values.ndim != 2 or a.values.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g):
        ga = g @ b.values.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if a.values.ndim == 1:
                gb = np.outer(a.values, g)
            else:
                gb = a.values.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(a.values @ b.values, [a, b], rule)


def concat(tensors):
    """Concatenate along the last axis."""
    tensors = [as_tensor(t) for t in tensors]
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) != 1:
        raise ShapeError(f"concat: leading shapes differ {sorted(lead)}")
    bounds = np.cumsum([0] + [t.shape[-1] for t in tensors])

    def rule(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _make(np.concatenate([t.values for t in tensors], axis=-1), tensors, rule)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ShapeError("stack: all tensors must share a shape")

    def rule(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.values for t in tensors], axis=axis), tensors, rule)


def slice_last(x, start, stop):
    x = as_tensor(x)
    width = x.shape[-1]
    if not 0 <= start < stop <= width:
        raise ShapeError(f"slice_last: [{start}:{stop}] out of range for width {width}")

    def rule(g):
        full = np.zeros_like(x.values)
        full[..., start:stop] = g
        return (full,)

    return _make(x.values[..., start:stop].copy(), [x], rule)


def embedding_lookup(table, indices):
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.values.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("embedding index out of range")

    def rule(g):
        full = np.zeros_like(table.values)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _make(table.values[idx], [table], rule)


def l2_normalize(x, min_norm=1e-12):
    """Scale rows (last axis) to unit Euclidean norm."""
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.values * x.values, axis=-1, keepdims=True))
    if np.any(norm <= min_norm):
        raise NumericalError("l2_normalize: vector norm below 1e-12")
    y = x.values / norm

    def rule(g):
        return ((g - y * np.sum(y * g, axis=-1, keepdims=True)) / norm,)

    return _make(y, [x], rule)


# -- reductions / losses ------------------------------------------------------

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_tensor(x)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.sum(x.values, axis=axis, keepdims=keepdims), [x], rule)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.values.size if axis is None else x.shape[axis]
    return multiply(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _log_softmax(v):
    shifted = v - np.max(v, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def log_softmax(x):
    x = as_tensor(x)
    y = _log_softmax(x.values)

    def rule(g):
        return (g - np.exp(y) * np.sum(g, axis=-1, keepdims=True),)

    return _make(y, [x], rule)


def masked_nll(logits, targets, mask=None, per_example=False):
    """Sum over unmasked positions of ``-log_softmax(logits)[target]``.

    With ``per_example`` the sum runs over every axis but the first, giving
    one value per row.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"masked_nll: targets {targets.shape} vs logits {logits.shape}")
    mask = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    if mask.shape != targets.shape:
        raise ShapeError("masked_nll: mask shape must match targets")
    if per_example and targets.ndim < 1:
        raise ShapeError("masked_nll: per_example needs a batch axis")
    logp = _log_softmax(logits.values)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    losses = -(mask * picked)
    if per_example:
        value = losses.reshape(losses.shape[0], -1).sum(axis=1)
    else:
        value = np.asarray(losses.sum())

    def rule(g):
        if per_example:
            g = g.reshape((-1,) + (1,) * (targets.ndim - 1))
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None],
                          np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (grad * (mask * g)[..., None],)

    return _make(value, [logits], rule)


# -- backward / optimisation --------------------------------------------------

def backward(loss):
    """Accumulate ``d loss / d leaf`` into every grad-requiring leaf; clears the tape."""
    tape = get_tape()
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        tape.clear()
        raise ValueError("loss does not depend on any tensor requiring grad")
    try:
        if loss.is_leaf:
            loss.grad = np.ones_like(loss.values) + (0.0 if loss.grad is None else loss.grad)
            return
        pending = {id(loss): np.ones_like(loss.values)}
        reached = False
        for out, inputs, rule in reversed(tape.records):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            reached = True
            for inp, gi in zip(inputs, rule(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    pending[key] = gi if key not in pending else pending[key] + gi
        if not reached:
            raise ValueError("loss is not reachable from the current tape")
    finally:
        tape.clear()


def global_grad_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def sgd_step(params, learning_rate, clip_norm):
    """Clip by global norm, take one SGD step, zero the grads. Returns the pre-clip norm."""
    norm = global_grad_norm(params)
    if not math.isfinite(norm):
        bad = [p.name or repr(p) for p in params if p.grad is not None and not np.all(np.isfinite(p.grad))]
        raise NumericalError(f"non-finite gradient in {', '.join(bad)}; step aborted")
    scale = clip_norm / norm if norm > clip_norm else 1.0
    for p in params:
        if p.grad is not None:
            p.values -= (learning_rate * scale) * p.grad
        p.grad = None
    return norm


# -- initialisation -----------------------------------------------------------

def param_rng(seed, name):
    """Generator keyed by ``(seed, name)`` so a weight's init ignores creation order."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def init_weight(seed, name, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return parameter(param_rng(seed, name).uniform(-bound, bound, size=shape), name=name)


def init_bias(name, shape):
    return parameter(np.zeros(shape), name=name)


# -- checkpoint format --------------------------------------------------------

MAGIC = b"HVAE"
FORMAT_VERSION = 1


def encode_tensors(tensors):
    """Serialise ``{name: array}`` to the checkpoint byte layout (insertion order kept)."""
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr.values if isinstance(arr, Tensor) else arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def decode_tensors(data):
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(data):
        raise ValueError("trailing bytes after last tensor")
    return out
