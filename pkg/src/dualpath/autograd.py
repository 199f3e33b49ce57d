"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

The op set is deliberately small: exactly what a project-and-fuse classifier
with an LSTM encoder needs. Matrix product, element-wise add/multiply, tanh,
sigmoid, last-axis concatenation, embedding lookup, bias-row addition, and a
numerically stabilized softmax cross-entropy. Everything runs in 64-bit so
central-difference gradient checks are meaningful at tight tolerances.

Usage pattern is define-by-run: open a `Tape`, build the computation, call
`backward`. Ops executed while no tape is active still compute values (that is
the inference path) but record nothing.
"""

import threading
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(ArithmeticError):
    """An operation produced (or was given) NaN or Inf."""


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


class Tensor:
    """Dense row-major float64 array plus an optional gradient buffer.

    Data is validated to be finite on construction; ops validate their own
    outputs, so a tensor you can observe never holds NaN/Inf. The gradient
    buffer exists only when `requires_grad` is set and accumulates additively
    across backward passes until `zero_grad` is called.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = np.zeros_like(arr) if requires_grad else None

    @classmethod
    def _from_op(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        # Fast path for op outputs: arr is already a fresh float64 array.
        if not np.isfinite(arr).all():
            raise NonFiniteError("operation produced NaN or Inf")
        out = cls.__new__(cls)
        out.data = arr
        out.requires_grad = requires_grad
        out.grad = np.zeros_like(arr) if requires_grad else None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Small amount of operator sugar; the named functions are the real API.
    def __add__(self, other: "Tensor") -> "Tensor":
        return ew_add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return ew_mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Tape:
    """Ordered record of executed ops, replayed in reverse by `backward`.

    A tape and every tensor recorded on it belong to one thread; separate
    tapes (e.g. independently training ensemble units) may live on separate
    threads. Tapes nest: ops record onto the innermost active tape.
    """

    def __init__(self):
        # Each entry: (output, inputs, backward_fn). backward_fn maps the
        # upstream gradient array to one gradient array (or None) per input.
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted: exited a tape that is not innermost")

    def __len__(self) -> int:
        return len(self._entries)

    def _record(self, output: Tensor, inputs: tuple, backward_fn: Callable) -> None:
        self._entries.append((output, inputs, backward_fn))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def _record(output: Tensor, inputs: tuple, backward_fn: Callable) -> None:
    stack = _tape_stack()
    if stack and output.requires_grad:
        stack[-1]._record(output, inputs, backward_fn)


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients of everything on `tape` that `loss` depends on.

    Gradients add into existing buffers: calling backward twice without
    `zero_grad` doubles the leaf gradients. Per-pass intermediate gradients
    are kept in a scratch map so repeated passes stay linear, then merged
    into each tensor's buffer.
    """
    if loss.shape != ():
        raise ShapeError(f"loss must be a scalar tensor, got shape {loss.shape}")
    if not loss.requires_grad:
        return  # constant loss: nothing reachable, all gradients stay as-is
    produced = any(entry[0] is loss for entry in tape._entries)
    if not produced:
        raise ValueError("loss was not produced on this tape")

    local: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    touched: dict[int, Tensor] = {id(loss): loss}
    for output, inputs, backward_fn in reversed(tape._entries):
        g_out = local.get(id(output))
        if g_out is None:
            continue
        grads_in = backward_fn(g_out)
        for tensor, g in zip(inputs, grads_in):
            if g is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in local:
                local[key] = local[key] + g
            else:
                local[key] = g
                touched[key] = tensor
    for key, tensor in touched.items():
        if tensor.grad is None:
            tensor.grad = np.zeros_like(tensor.data)
        tensor.grad += local[key]


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D (m,k) tensor with a 2-D (k,n) tensor."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = Tensor._from_op(a.data @ b.data, _needs_grad(a, b))

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    _record(out, (a, b), back)
    return out


def ew_add(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"ew_add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor._from_op(a.data + b.data, _needs_grad(a, b))

    def back(g):
        return (g if a.requires_grad else None, g if b.requires_grad else None)

    _record(out, (a, b), back)
    return out


def ew_mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard (element-wise) product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"ew_mul shapes differ: {a.shape} vs {b.shape}")
    out = Tensor._from_op(a.data * b.data, _needs_grad(a, b))

    def back(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    _record(out, (a, b), back)
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a 1-D bias row to every row of a 2-D tensor.

    The only broadcasting this library performs; the bias gradient sums over
    rows.
    """
    if x.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError(f"add_bias needs (rows, d) and (d,), got {x.shape} and {b.shape}")
    if x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias width mismatch: {x.shape} vs {b.shape}")
    out = Tensor._from_op(x.data + b.data, _needs_grad(x, b))

    def back(g):
        gx = g if x.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gb

    _record(out, (x, b), back)
    return out


def tanh(a: Tensor) -> Tensor:
    """Element-wise hyperbolic tangent; backward uses 1 - tanh^2."""
    y = np.tanh(a.data)
    out = Tensor._from_op(y, a.requires_grad)

    def back(g):
        return ((1.0 - y * y) * g,)

    _record(out, (a,), back)
    return out


def sigmoid(a: Tensor) -> Tensor:
    """Element-wise logistic function, computed without overflow."""
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor._from_op(y, a.requires_grad)

    def back(g):
        return (y * (1.0 - y) * g,)

    _record(out, (a,), back)
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis; all leading dimensions must agree."""
    if a.data.ndim != b.data.ndim or a.data.ndim < 1:
        raise ShapeError(f"concat rank mismatch: {a.shape} vs {b.shape}")
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat leading dimensions differ: {a.shape} vs {b.shape}")
    p = a.shape[-1]
    out = Tensor._from_op(np.concatenate([a.data, b.data], axis=-1), _needs_grad(a, b))

    def back(g):
        ga = np.ascontiguousarray(g[..., :p]) if a.requires_grad else None
        gb = np.ascontiguousarray(g[..., p:]) if b.requires_grad else None
        return ga, gb

    _record(out, (a, b), back)
    return out


def transpose(a: Tensor) -> Tensor:
    """Transpose of a 2-D tensor (materialized, no views)."""
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")
    out = Tensor._from_op(np.ascontiguousarray(a.data.T), a.requires_grad)

    def back(g):
        return (np.ascontiguousarray(g.T),)

    _record(out, (a,), back)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Row-major reshape to a new shape with the same element count."""
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor._from_op(a.data.reshape(shape).copy(), a.requires_grad)

    def back(g):
        return (g.reshape(a.data.shape),)

    _record(out, (a,), back)
    return out


def scale(a: Tensor, alpha: float) -> Tensor:
    """Multiply by a plain Python scalar (not a tracked tensor)."""
    alpha = float(alpha)
    out = Tensor._from_op(a.data * alpha, a.requires_grad)

    def back(g):
        return (g * alpha,)

    _record(out, (a,), back)
    return out


def sum_all(a: Tensor) -> Tensor:
    """Sum every element into a scalar tensor."""
    out = Tensor._from_op(a.data.sum(dtype=np.float64).reshape(()), a.requires_grad)

    def back(g):
        return (np.full_like(a.data, float(g)),)

    _record(out, (a,), back)
    return out


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows `ids` from a 2-D table; gradients scatter-add back.

    Equivalent to stacking one-hot vectors and multiplying by the table, at a
    fraction of the cost.
    """
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("ids must be a non-empty 1-D sequence of integers")
    n = table.shape[0]
    if (idx < 0).any() or (idx >= n).any():
        bad = int(idx[(idx < 0) | (idx >= n)][0])
        raise ValueError(f"id {bad} out of range for table with {n} rows")
    out = Tensor._from_op(table.data[idx].copy(), table.requires_grad)

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    _record(out, (table,), back)
    return out


def softmax_cross_entropy(logits: Tensor, targets, reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of integer targets under softmax(logits).

    `logits` is (batch, classes) or a single (classes,) row; stabilized by
    subtracting the row max. Reduction is the mean over the batch by default;
    "sum" is available so callers can combine sub-batches and rescale
    themselves.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    squeeze = logits.data.ndim == 1
    z = logits.data.reshape(1, -1) if squeeze else logits.data
    if z.ndim != 2:
        raise ShapeError(f"logits must be 1-D or 2-D, got {logits.shape}")
    batch, n_classes = z.shape
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if t.shape != (batch,):
        raise ShapeError(f"expected {batch} targets, got array of shape {t.shape}")
    if (t < 0).any() or (t >= n_classes).any():
        bad = int(t[(t < 0) | (t >= n_classes)][0])
        raise ValueError(f"target {bad} out of range for {n_classes} classes")

    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    log_probs = shifted - np.log(total)[:, None]
    nll = -log_probs[np.arange(batch), t]
    value = nll.sum() if reduction == "sum" else nll.mean()
    out = Tensor._from_op(np.float64(value).reshape(()), logits.requires_grad)

    probs = exp / total[:, None]

    def back(g):
        d = probs.copy()
        d[np.arange(batch), t] -= 1.0
        if reduction == "mean":
            d /= batch
        d *= float(g)
        return (d.reshape(logits.data.shape) if squeeze else d,)

    _record(out, (logits,), back)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain (non-differentiated) stabilized softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between tape gradients of f and central differences.

    f must map the tensor x to a scalar tensor and be deterministic. Returns
    max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8),
    numeric_i = (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
    """
    was_requiring = x.requires_grad
    x.requires_grad = True
    if x.grad is None:
        x.grad = np.zeros_like(x.data)
    x.zero_grad()
    try:
        with Tape() as tape:
            y = f(x)
        backward(y, tape)
        analytic = x.grad.copy()

        flat = x.data.reshape(-1)
        numeric = np.empty(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(x).item()
            flat[i] = orig - eps
            f_minus = f(x).item()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * eps)
    finally:
        x.requires_grad = was_requiring

    numeric = numeric.reshape(x.data.shape)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
