"""Dense-tensor kernel with reverse-mode differentiation.

Tensors wrap numpy arrays and record their producing operation so that
gradients can be propagated backwards through any forward computation in
the pipeline. Two precision modes exist: float64 for gradient
verification (finite differences are unreliable at float32) and float32
for training.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

VERIFY_DTYPE = np.float64
TRAIN_DTYPE = np.float32

ELEMENTWISE_KINDS = ("sigmoid", "exp", "log", "negate", "add", "multiply")


class Tensor:
    """A dense array plus the bookkeeping needed for backpropagation.

    ``parents`` and ``vjps`` are populated by the operations below;
    leaf tensors have neither. ``vjps[i]`` maps the upstream gradient to
    the gradient contribution of ``parents[i]``.
    """

    __slots__ = ("data", "requires_grad", "grad", "parents", "vjps")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _vjps=()):
        if _parents:
            self.data = data  # trusted: produced by an op below
        else:
            arr = np.asarray(data, dtype=dtype)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(VERIFY_DTYPE)
            if not np.all(np.isfinite(arr)):
                raise ValueError("leaf tensor contains non-finite values")
            self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.parents = _parents
        self.vjps = _vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar used throughout the pipeline code.
    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __sub__(self, other):
        return add(self, negate(_lift(other, self.dtype)))

    def __mul__(self, other):
        return multiply(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return multiply(_lift(other, self.dtype), self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Seed a unit gradient at this scalar and accumulate into `.grad`
        of every tensor that requires gradients."""
        if self.data.shape != ():
            raise ValueError(f"backward requires a scalar, got shape {self.data.shape}")
        order = _toposort(self)
        grads = {id(self): np.ones((), dtype=self.data.dtype)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in zip(node.parents, node.vjps):
                if not _needs_grad(parent):
                    continue
                contrib = vjp(g)
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib


def _lift(value, dtype):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _needs_grad(t):
    return t.requires_grad or t.parents


def _toposort(root):
    """Reverse topological order via iterative DFS; deterministic for a
    fixed construction order."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited and _needs_grad(parent):
                stack.append((parent, False))
    order.reverse()
    return order


def _make(data, parents, vjps):
    if not any(_needs_grad(p) for p in parents):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.parents = ()
        out.vjps = ()
        return out
    return Tensor(data, _parents=tuple(parents), _vjps=tuple(vjps))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# --- core operations -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching semantics over leading axes."""
    _check_dtypes(a, b, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul requires rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}")
    out = _matmul_data(a.data, b.data)

    def vjp_a(g):
        return _unbroadcast(_matmul_data(g, np.swapaxes(b.data, -1, -2)), a.data.shape)

    def vjp_b(g):
        return _unbroadcast(_matmul_data(np.swapaxes(a.data, -1, -2), g), b.data.shape)

    return _make(out, (a, b), (vjp_a, vjp_b))


def _matmul_data(a, b):
    # float64 mode multiplies and reduce-sums explicitly so the summation
    # order matches a naive loop bit-for-bit (BLAS kernels may fuse
    # multiply-adds); float32 mode takes the fast BLAS path.
    if a.dtype == np.float64 or b.dtype == np.float64:
        return (a[..., :, :, None] * b[..., None, :, :]).sum(axis=-2)
    return np.matmul(a, b)


def _check_dtypes(a, b, op):
    if a.data.dtype != b.data.dtype:
        raise DimensionError(
            f"{op}: mixed precisions {a.data.dtype} and {b.data.dtype}; cast explicitly")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b, "add")
    out = a.data + b.data
    return _make(out, (a, b), (lambda g: _unbroadcast(g, a.data.shape),
                               lambda g: _unbroadcast(g, b.data.shape)))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b, "multiply")
    out = a.data * b.data
    return _make(out, (a, b), (lambda g: _unbroadcast(g * b.data, a.data.shape),
                               lambda g: _unbroadcast(g * a.data, b.data.shape)))


def negate(x: Tensor) -> Tensor:
    return _make(-x.data, (x,), (lambda g: -g,))


def scale(x: Tensor, s: float) -> Tensor:
    s = x.data.dtype.type(s)
    return _make(x.data * s, (x,), (lambda g: g * s,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), (lambda g: g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log requires strictly positive input")
    return _make(np.log(x.data), (x,), (lambda g: g / x.data,))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_data(x.data)
    return _make(out, (x,), (lambda g: g * out * (1.0 - out),))


def _sigmoid_data(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), (lambda g: g * (1.0 - out * out),))


def elementwise(kind: str, x: Tensor, y: Tensor | None = None) -> Tensor:
    """Dispatch by name; binary kinds require exactly equal shapes."""
    if kind not in ELEMENTWISE_KINDS:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if kind in ("add", "multiply"):
        if y is None:
            raise ValueError(f"{kind} requires two operands")
        if x.shape != y.shape:
            raise DimensionError(f"{kind}: operand shapes differ: {x.shape} vs {y.shape}")
        return add(x, y) if kind == "add" else multiply(x, y)
    if y is not None:
        raise ValueError(f"{kind} takes a single operand")
    return {"sigmoid": sigmoid, "exp": exp, "log": log, "negate": negate}[kind](x)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Stable softmax along `axis` (max subtraction before exponentiation)."""
    axis = _check_axis(x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - inner)

    return _make(out, (x,), (vjp,))


def logsumexp(x: Tensor, axis: int) -> Tensor:
    """log(sum(exp(x))) along `axis`, rank reduced by one."""
    axis = _check_axis(x, axis)
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)

    def vjp(g):
        return np.expand_dims(g, axis) * (e / s)

    return _make(out, (x,), (vjp,))


def mean_pool(x: Tensor, axis: int) -> Tensor:
    """Arithmetic mean along `axis`; output rank is reduced by one."""
    axis = _check_axis(x, axis)
    n = x.data.shape[axis]
    out = x.data.mean(axis=axis)
    inv = x.data.dtype.type(1.0 / n)

    def vjp(g):
        return np.broadcast_to(np.expand_dims(g * inv, axis), x.data.shape)

    return _make(out, (x,), (vjp,))


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        out = x.data.sum()
        return _make(out, (x,), (lambda g: np.broadcast_to(g, x.data.shape),))
    axis = _check_axis(x, axis)
    out = x.data.sum(axis=axis)
    return _make(out, (x,), (lambda g: np.broadcast_to(np.expand_dims(g, axis), x.data.shape),))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _make(x.data.reshape(shape), (x,), (lambda g: g.reshape(x.data.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), (lambda g: g.transpose(inverse),))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    axis = _check_axis(x, axis)
    n = x.data.shape[axis]
    if not 0 <= start < stop <= n:
        raise DimensionError(f"slice [{start}, {stop}) invalid for axis {axis} of shape {x.shape}")
    index = tuple(slice(start, stop) if d == axis else slice(None) for d in range(x.data.ndim))
    out = np.ascontiguousarray(x.data[index])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return full

    return _make(out, (x,), (vjp,))


def _check_axis(x, axis):
    ndim = x.data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.shape}")
    return axis % ndim


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the bias broadcast over rows; accepts x of any rank
    whose trailing dimension matches w's first."""
    if w.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError(f"affine expects 2-d weight and 1-d bias, got {w.shape}, {b.shape}")
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"affine: shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}")
    if x.data.ndim == 1:
        x2 = reshape(x, (1, x.data.shape[0]))
        return reshape(add(matmul(x2, w), b), (w.data.shape[1],))
    return add(matmul(x, w), b)


class MLP:
    """Two-layer perceptron: affine -> nonlinearity -> affine.

    The default nonlinearity is tanh; pass activation=None for a purely
    affine stack (used by identity-style test fixtures).
    """

    def __init__(self, w1, b1, w2, b2, activation="tanh"):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.activation = activation

    @classmethod
    def create(cls, rng, d_in, d_hidden, d_out, dtype, activation="tanh"):
        # gain sqrt(3) gives the weights variance 1/fan_in, which keeps
        # activation scale roughly constant through a stack of tanh layers
        w1 = Tensor(_uniform_init(rng, (d_in, d_hidden), d_in, dtype,
                                  gain=_MLP_GAIN), requires_grad=True)
        b1 = Tensor(np.zeros(d_hidden, dtype=dtype), requires_grad=True)
        w2 = Tensor(_uniform_init(rng, (d_hidden, d_out), d_hidden, dtype,
                                  gain=_MLP_GAIN), requires_grad=True)
        b2 = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
        return cls(w1, b1, w2, b2, activation)

    def __call__(self, x: Tensor) -> Tensor:
        h = affine(x, self.w1, self.b1)
        if self.activation == "tanh":
            h = tanh(h)
        elif self.activation is not None:
            raise ValueError(f"unknown activation {self.activation!r}")
        return affine(h, self.w2, self.b2)

    def parameters(self, prefix):
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}

    def over_columns(self, x: Tensor) -> Tensor:
        """Apply the MLP along the channel axis of a (..., channels, n) tensor,
        independently per trailing column."""
        return swap_last(self(swap_last(x)))


def swap_last(x: Tensor) -> Tensor:
    """Transpose the two trailing axes."""
    nd = x.data.ndim
    if nd < 2:
        raise DimensionError(f"need rank >= 2 to swap trailing axes, got {x.shape}")
    return transpose(x, (*range(nd - 2), nd - 1, nd - 2))


_MLP_GAIN = np.sqrt(3.0)


def _uniform_init(rng, shape, fan_in, dtype, gain=1.0):
    bound = gain / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def uniform_param(rng, shape, fan_in, dtype) -> Tensor:
    """Seeded trainable leaf, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    return Tensor(_uniform_init(rng, shape, fan_in, dtype), requires_grad=True)


# --- graphs and gradient verification --------------------------------------

class Graph:
    """A forward computation over named trainable leaf tensors.

    `loss_fn` rebuilds the forward pass from the current parameter values
    each time it is called, which is what finite differencing needs.
    """

    def __init__(self, loss_fn, params: dict[str, Tensor]):
        if len(set(params)) != len(params):
            raise ValueError("parameter names must be unique")
        self.loss_fn = loss_fn
        self.params = params

    def loss(self) -> Tensor:
        return self.loss_fn()


def backward(graph: Graph, loss: Tensor | None = None) -> dict[str, np.ndarray]:
    """Run backpropagation and return one gradient per named parameter.

    Parameters that do not influence the loss get zero gradients.
    """
    if loss is None:
        loss = graph.loss()
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    for p in graph.params.values():
        p.grad = None
    loss.backward()
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in graph.params.items()}


def grad_check(graph: Graph, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Requires float64 parameters; float32 rounding drowns the comparison.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for name, p in graph.params.items():
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check requires 64-bit parameters, {name} is {p.data.dtype}")
    analytic = backward(graph)
    worst = 0.0
    for name, p in graph.params.items():
        flat = p.data.flat
        grad_flat = analytic[name].flat
        for i in range(p.data.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = graph.loss().item()
            flat[i] = orig - eps
            f_minus = graph.loss().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = grad_flat[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
