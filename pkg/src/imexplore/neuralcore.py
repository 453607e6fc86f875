"""Small reverse-mode autodiff on top of numpy.

Only what the actor-critic and curiosity networks need: dense and strided
convolution layers, elementwise math, (log-)softmax, reductions and an Adam
optimizer over a named :class:`ParamStore`.

Every op records its parents and a closure that maps the output gradient to
input gradients.  :func:`backward` walks the graph in reverse topological
order and accumulates into parameter ``.grad`` arrays (accumulate-then-zero).
"""

from __future__ import annotations

import contextlib
import functools
import struct
import zlib
from collections import OrderedDict
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: tuple = (), _backward: Optional[Callable] = None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):  # 0-d arithmetic yields numpy scalars; keep their dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    _check_finite(data, op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, None, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # plain numbers adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.data.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.data.dtype), b
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,), "clip")


def minimum(a, b) -> Tensor:
    a, b = _pair(a, b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
                 "minimum")


# ---------------------------------------------------------------------------
# shape and reductions


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.data.dtype),)

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, ts, backward, "concat")


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """``a[i, index[i]]`` for a 2-D tensor."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        return (full,)

    return _make(a.data[rows, index], (a,), backward, "take_rows")


# ---------------------------------------------------------------------------
# layers


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weights + bias`` with ``weights`` shaped (in, out)."""
    if x.shape[-1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ValueError(f"dense shape mismatch: {x.shape} @ {weights.shape} + {bias.shape}")
    out = x.data @ weights.data + bias.data

    def backward(g):
        return g @ weights.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(out, (x, weights, bias), backward, "dense")


def conv_output_size(n: int, kernel: int = 3, stride: int = 2, padding: int = 1) -> int:
    return (n + 2 * padding - kernel) // stride + 1


@functools.lru_cache(maxsize=32)
def _conv_index(C: int, H: int, W: int, O: int, kh: int, kw: int, stride: int, padding: int):
    """Index map from kernel entries into the unrolled (C*H*W, O*Ho*Wo) weight matrix."""
    Ho = conv_output_size(H, kh, stride, padding)
    Wo = conv_output_size(W, kw, stride, padding)
    o, c, i, j, p, q = np.meshgrid(np.arange(O), np.arange(C), np.arange(kh), np.arange(kw),
                                   np.arange(Ho), np.arange(Wo), indexing="ij")
    h = p * stride - padding + i
    w = q * stride - padding + j
    inside = (h >= 0) & (h < H) & (w >= 0) & (w < W)
    rows = (c * H * W + h * W + w)[inside]
    cols = (o * Ho * Wo + p * Wo + q)[inside]
    kidx = (((o * C + c) * kh + i) * kw + j)[inside]
    return rows, cols, kidx, Ho, Wo


_UNROLL_CACHE: dict = {}


def _unrolled(kernels: Tensor, H: int, W: int, rows, cols, kidx, n_out: int) -> np.ndarray:
    # rebuilt only when the kernel values change (i.e. after an optimizer step)
    key = (id(kernels), H, W)
    hit = _UNROLL_CACHE.get(key)
    if hit is not None and hit[0] is kernels and np.array_equal(hit[1], kernels.data):
        return hit[2]
    C = kernels.shape[1]
    unrolled = np.zeros((C * H * W, n_out), dtype=kernels.data.dtype)
    unrolled[rows, cols] = kernels.data.reshape(-1)[kidx]
    if len(_UNROLL_CACHE) > 64:
        _UNROLL_CACHE.clear()
    _UNROLL_CACHE[key] = (kernels, kernels.data.copy(), unrolled)
    return unrolled


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 2, padding: int = 1) -> Tensor:
    """NCHW cross-correlation; ``kernels`` shaped (out, in, kh, kw).

    The kernel is unrolled into a dense (C*H*W, O*Ho*Wo) matrix so forward
    and backward are plain matmuls, which suits the tiny 7x7 inputs here.
    """
    if x.data.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernels {kernels.shape}")
    B, C, H, W = x.shape
    O, _, kh, kw = kernels.shape
    rows, cols, kidx, Ho, Wo = _conv_index(C, H, W, O, kh, kw, stride, padding)
    unrolled = _unrolled(kernels, H, W, rows, cols, kidx, O * Ho * Wo)
    xf = x.data.reshape(B, -1)
    out = (xf @ unrolled).reshape(B, O, Ho * Wo) + bias.data[:, None]

    def backward(g):
        gf = g.reshape(B, -1)
        full = xf.T @ gf
        dk = np.bincount(kidx, weights=full[rows, cols], minlength=kernels.size)
        dk = dk.reshape(kernels.shape).astype(kernels.data.dtype)
        db = g.reshape(B, O, -1).sum(axis=(0, 2))
        dx = (gf @ unrolled.T).reshape(x.shape) if x.requires_grad else None
        return dx, dk, db

    return _make(out.reshape(B, O, Ho, Wo), (x, kernels, bias), backward, "conv2d")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return _make(out, (a,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),), "log_softmax")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    return exp(log_softmax(a, axis))


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row by inverse-CDF sampling."""
    probs = softmax_np(np.asarray(logits, dtype=np.float64))
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ValueError("backward() needs a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for parameter {node.name!r}")
            g = g.astype(node.data.dtype, copy=False).reshape(node.shape)
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# ---------------------------------------------------------------------------
# parameters, init, optimizer


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, stream name)."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), zlib.crc32(stream.encode())]))


def orthogonal(shape: tuple, gain: float, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Orthogonal init; conv kernels are flattened to (out, in*kh*kw)."""
    if len(shape) == 2:
        rows, cols = shape
    else:
        rows, cols = shape[0], int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).reshape(shape).astype(dtype)


class ParamStore:
    """Ordered named parameters with gradients and Adam moments."""

    def __init__(self, dtype=DEFAULT_DTYPE):
        self.dtype = dtype
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype).copy(), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def count(self, prefix: str = "") -> int:
        return sum(t.size for n, t in self.params.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if norm > max_norm:
            scale = max_norm / (norm + 1e-6)
            for t in self.params.values():
                if t.grad is not None:
                    t.grad *= scale
        return norm

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.params.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for n, arr in values.items():
            t = self.params[n]
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {n}: {arr.shape} vs {t.shape}")
            t.data[...] = arr

    def copy_from(self, other: "ParamStore") -> None:
        self.load(other.snapshot())


def adam_step(params: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-5, names: Optional[Iterable[str]] = None) -> None:
    """Bias-corrected Adam update on every parameter that has a gradient."""
    params.t += 1
    t = params.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    selected = params.params.keys() if names is None else names
    for name in selected:
        p = params.params[name]
        if p.grad is None:
            continue
        g = p.grad
        m = params.m.get(name)
        if m is None:
            m = params.m[name] = np.zeros_like(p.data)
            params.v[name] = np.zeros_like(p.data)
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# checkpoints: count, then per tensor name-len/name/ndim/dims/f32 payload


def save_params(params: ParamStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(params)))
        for name, t in params:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<I", fh.read(4))
        for _ in range(n):
            (ln,) = struct.unpack("<I", fh.read(4))
            name = fh.read(ln).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(dims)) if dims else 1
            out[name] = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(dims).copy()
    return out


# ---------------------------------------------------------------------------
# building blocks shared by the policy and curiosity networks


class Dense:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, gain: float,
                 rng: np.random.Generator):
        self.w = store.add(f"{name}.weight", orthogonal((n_in, n_out), gain, rng, store.dtype))
        self.b = store.add(f"{name}.bias", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.w, self.b)


class Conv2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, gain: float,
                 rng: np.random.Generator, kernel: int = 3, stride: int = 2, padding: int = 1):
        self.k = store.add(f"{name}.weight",
                           orthogonal((c_out, c_in, kernel, kernel), gain, rng, store.dtype))
        self.b = store.add(f"{name}.bias", np.zeros(c_out))
        self.stride, self.padding = stride, padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.k, self.b, self.stride, self.padding)


class MLP:
    """Dense stack with ReLU between layers; last layer linear unless told otherwise."""

    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int], rng: np.random.Generator,
                 hidden_gain: float = float(np.sqrt(2)), out_gain: Optional[float] = None,
                 final_relu: bool = False):
        out_gain = hidden_gain if out_gain is None else out_gain
        n = len(sizes) - 1
        self.layers = [Dense(store, f"{name}.{i}", sizes[i], sizes[i + 1],
                             out_gain if i == n - 1 else hidden_gain, rng) for i in range(n)]
        self.final_relu = final_relu

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_relu:
                x = relu(x)
        return x


class ConvStack:
    """Three 3x3 stride-2 pad-1 convolutions, 32 filters each: 7x7 -> 4x4 -> 2x2 -> 1x1."""

    def __init__(self, store: ParamStore, name: str, rng: np.random.Generator, c_in: int = 3,
                 filters: int = 32, depth: int = 3, final_relu: bool = True):
        gain = float(np.sqrt(2))
        self.convs = [Conv2d(store, f"{name}.{i}", c_in if i == 0 else filters, filters, gain, rng)
                      for i in range(depth)]
        self.final_relu = final_relu

    def __call__(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1 or self.final_relu:
                x = relu(x)
        return reshape(x, (x.shape[0], -1))
