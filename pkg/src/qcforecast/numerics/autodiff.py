"""Minimal reverse-mode differentiable compute core.

A :class:`Tensor` wraps a float64 numpy array plus a gradient slot; a
:class:`Tape` records every primitive applied to tensors that live on it and
replays the recorded backward rules in exact reverse order. The op set is
fixed to what the package's losses need: elementwise arithmetic, matmul,
tanh/log/exp/sqrt, kinked max-style ops with zero subgradient at the kink,
the standard normal CDF, reductions, shape plumbing, and triangular linear
algebra (forward substitution and log-determinant) with hand-derived
backward rules.

Every op accepts a mix of :class:`Tensor` and plain numpy/scalar inputs.
When no input is attached to a tape the op computes in plain numpy and
returns an ndarray, so the same network code serves both recorded training
steps and fast inference.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .special import normal_cdf as _normal_cdf_array
from .special import normal_pdf as _normal_pdf_array
from ..errors import ShapeError, SingularMatrixError


class Tensor:
    """Node in a recorded computation: value buffer plus gradient slot."""

    __slots__ = ("data", "grad", "tape")

    # Keep numpy from intercepting mixed ndarray (op) Tensor expressions.
    __array_ufunc__ = None

    def __init__(self, data, tape: "Tape | None" = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def grad_value(self) -> np.ndarray:
        """Accumulated gradient; zeros for nodes the loss never touched."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, tape={'yes' if self.tape else 'no'})"


class Tape:
    """Ordered record of primitive ops; backward replays it exactly reversed."""

    def __init__(self):
        self._records: list[Callable[[], None]] = []

    def var(self, data) -> Tensor:
        """Attach a leaf to this tape. The buffer is wrapped, not copied."""
        return Tensor(data, self)

    def _record(self, backward: Callable[[], None]) -> None:
        self._records.append(backward)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and accumulate gradients into every node."""
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise ValueError("backward target must be a Tensor recorded on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward target must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for rule in reversed(self._records):
            rule()

    def reset(self) -> None:
        self._records.clear()

    def __len__(self) -> int:
        return len(self._records)


def value_of(x) -> np.ndarray:
    """Raw float64 buffer of a Tensor, or the input coerced to float64."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


_value = value_of


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ValueError("cannot combine tensors recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _accumulate(x, g) -> None:
    if not isinstance(x, Tensor):
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), x.data.shape)
    x.grad = g if x.grad is None else x.grad + g


def _make(out_value: np.ndarray, tape: Tape | None, backward: Callable[[Tensor], Callable[[], None]]):
    """Wrap an op result; record its backward rule when a tape is present."""
    if tape is None:
        return out_value
    out = Tensor(out_value, tape)
    tape._record(backward(out))
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    av, bv = _value(a), _value(b)
    tape = _tape_of(a, b)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad)
            _accumulate(b, out.grad)
        return backward

    return _make(av + bv, tape, rule)


def sub(a, b):
    av, bv = _value(a), _value(b)
    tape = _tape_of(a, b)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad)
            _accumulate(b, -out.grad)
        return backward

    return _make(av - bv, tape, rule)


def mul(a, b):
    av, bv = _value(a), _value(b)
    tape = _tape_of(a, b)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * bv)
            _accumulate(b, out.grad * av)
        return backward

    return _make(av * bv, tape, rule)


def div(a, b):
    av, bv = _value(a), _value(b)
    tape = _tape_of(a, b)
    out_v = av / bv

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad / bv)
            _accumulate(b, -out.grad * out_v / bv)
        return backward

    return _make(out_v, tape, rule)


def neg(a):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, -out.grad)
        return backward

    return _make(-av, tape, rule)


def matmul(a, b):
    av, bv = _value(a), _value(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {av.shape} @ {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {av.shape} @ {bv.shape}")
    tape = _tape_of(a, b)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad @ bv.T)
            _accumulate(b, av.T @ out.grad)
        return backward

    return _make(av @ bv, tape, rule)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a):
    av = _value(a)
    tape = _tape_of(a)
    out_v = np.tanh(av)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * (1.0 - out_v * out_v))
        return backward

    return _make(out_v, tape, rule)


def exp(a):
    av = _value(a)
    tape = _tape_of(a)
    out_v = np.exp(av)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * out_v)
        return backward

    return _make(out_v, tape, rule)


def log(a):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad / av)
        return backward

    return _make(np.log(av), tape, rule)


def sqrt(a):
    av = _value(a)
    tape = _tape_of(a)
    out_v = np.sqrt(av)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * 0.5 / out_v)
        return backward

    return _make(out_v, tape, rule)


def relu(a):
    """max(x, 0) with subgradient 0 at the kink."""
    av = _value(a)
    tape = _tape_of(a)
    mask = av > 0.0

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * mask)
        return backward

    return _make(av * mask, tape, rule)


def clip_min(a, floor: float):
    """max(x, floor) with subgradient 0 on the clipped branch."""
    av = _value(a)
    tape = _tape_of(a)
    mask = av > floor

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * mask)
        return backward

    return _make(np.where(mask, av, floor), tape, rule)


def normal_cdf(a):
    """Standard normal CDF as a differentiable primitive (derivative = pdf)."""
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad * _normal_pdf_array(av))
        return backward

    return _make(_normal_cdf_array(av), tape, rule)


# ---------------------------------------------------------------------------
# reductions and shape plumbing


def reduce_sum(a, axis=None, keepdims: bool = False):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, av.shape))
        return backward

    return _make(av.sum(axis=axis, keepdims=keepdims), tape, rule)


def reduce_mean(a, axis=None, keepdims: bool = False):
    av = _value(a)
    tape = _tape_of(a)
    count = av.size if axis is None else av.shape[axis]

    def rule(out):
        def backward():
            if out.grad is None:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, av.shape) / count)
        return backward

    return _make(av.mean(axis=axis, keepdims=keepdims), tape, rule)


def reshape(a, shape):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad.reshape(av.shape))
        return backward

    return _make(av.reshape(shape), tape, rule)


def broadcast_to(a, shape):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(a, out.grad)  # _accumulate unbroadcasts
        return backward

    return _make(np.broadcast_to(av, shape).copy(), tape, rule)


def concat_last(parts: Sequence):
    """Concatenate along the last axis; backward slices the gradient apart."""
    values = [_value(p) for p in parts]
    tape = _tape_of(*parts)
    widths = [v.shape[-1] for v in values]
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def rule(out):
        def backward():
            if out.grad is None:
                return
            for part, a, b in zip(parts, offsets[:-1], offsets[1:]):
                _accumulate(part, out.grad[..., a:b])
        return backward

    return _make(np.concatenate(values, axis=-1), tape, rule)


def slice_last(a, start: int, stop: int):
    av = _value(a)
    tape = _tape_of(a)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            g = np.zeros_like(av)
            g[..., start:stop] = out.grad
            _accumulate(a, g)
        return backward

    return _make(av[..., start:stop].copy(), tape, rule)


# ---------------------------------------------------------------------------
# triangular linear algebra


def _check_lower_triangular(L: np.ndarray) -> None:
    if L.ndim < 2 or L.shape[-1] != L.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {L.shape}")
    d = L.shape[-1]
    upper = L[..., np.triu_indices(d, k=1)[0], np.triu_indices(d, k=1)[1]]
    if upper.size and np.any(upper != 0.0):
        raise ShapeError("matrix has nonzero entries above the diagonal")


def _diagonal(L: np.ndarray) -> np.ndarray:
    return np.diagonal(L, axis1=-2, axis2=-1)


def _forward_substitute(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L z = b for lower-triangular L; batched over leading axes."""
    d = L.shape[-1]
    z = np.empty_like(b)
    for i in range(d):
        s = np.einsum("...j,...j->...", L[..., i, :i], z[..., :i]) if i else 0.0
        z[..., i] = (b[..., i] - s) / L[..., i, i]
    return z


def _transpose_substitute(L: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve L^T w = g (back substitution on the transposed system)."""
    d = L.shape[-1]
    w = np.empty_like(g)
    for i in range(d - 1, -1, -1):
        s = np.einsum("...j,...j->...", L[..., i + 1 :, i], w[..., i + 1 :]) if i < d - 1 else 0.0
        w[..., i] = (g[..., i] - s) / L[..., i, i]
    return w


def lower_tri_solve(L, b, validate: bool = True):
    """Solve L z = b by forward substitution; differentiable in L and b.

    ``L`` may carry leading batch axes ([..., d, d] with b [..., d]).

    Raises
    ------
    SingularMatrixError
        If any diagonal entry is at or below 1e-12.
    """
    Lv, bv = _value(L), _value(b)
    if validate:
        _check_lower_triangular(Lv)
    if bv.shape[-1] != Lv.shape[-1]:
        raise ShapeError(f"rhs shape {bv.shape} does not match matrix shape {Lv.shape}")
    try:
        batch = np.broadcast_shapes(bv.shape[:-1], Lv.shape[:-2])
    except ValueError as exc:
        raise ShapeError(f"rhs shape {bv.shape} does not broadcast against matrix "
                         f"shape {Lv.shape}") from exc
    if bv.shape[:-1] != batch:
        bv = np.broadcast_to(bv, batch + bv.shape[-1:])
    if np.any(_diagonal(Lv) <= 1e-12):
        raise SingularMatrixError("triangular solve: diagonal entry at or below 1e-12")
    tape = _tape_of(L, b)
    z = _forward_substitute(Lv, bv)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            gb = _transpose_substitute(Lv, out.grad)
            _accumulate(b, gb)
            gL = -gb[..., :, None] * z[..., None, :]
            _accumulate(L, np.tril(gL))
        return backward

    return _make(z, tape, rule)


def tri_diagonal(L):
    """Extract the diagonal of [..., d, d] matrices as [..., d]."""
    Lv = _value(L)
    tape = _tape_of(L)
    d = Lv.shape[-1]
    idx = np.arange(d)

    def rule(out):
        def backward():
            if out.grad is None:
                return
            g = np.zeros_like(Lv)
            g[..., idx, idx] = out.grad
            _accumulate(L, g)
        return backward

    return _make(_diagonal(Lv).copy(), tape, rule)


def log_det_lower_tri(L, validate: bool = True):
    """Sum of log diagonal entries of a lower-triangular matrix; differentiable.

    Raises
    ------
    ValueError
        If any diagonal entry is nonpositive.
    """
    Lv = _value(L)
    if validate:
        _check_lower_triangular(Lv)
    if np.any(_diagonal(Lv) <= 0.0):
        raise ValueError("log_det_lower_tri requires a strictly positive diagonal")
    out = reduce_sum(log(tri_diagonal(L)), axis=-1)
    if isinstance(out, np.ndarray) and out.ndim == 0:
        return float(out)
    return out


def assemble_lower_tri(diag_vals, off_vals):
    """Build [..., d, d] lower-triangular matrices from diagonal and packed
    strictly-lower entries (row-major order)."""
    dv, ov = _value(diag_vals), _value(off_vals)
    d = dv.shape[-1]
    m = d * (d - 1) // 2
    if ov.shape[-1] != m:
        raise ShapeError(f"expected {m} off-diagonal values for d={d}, got {ov.shape[-1]}")
    if dv.shape[:-1] != ov.shape[:-1]:
        raise ShapeError("diagonal and off-diagonal batch shapes differ")
    tape = _tape_of(diag_vals, off_vals)
    rows, cols = np.tril_indices(d, k=-1)
    didx = np.arange(d)
    out_v = np.zeros(dv.shape[:-1] + (d, d), dtype=np.float64)
    out_v[..., didx, didx] = dv
    out_v[..., rows, cols] = ov

    def rule(out):
        def backward():
            if out.grad is None:
                return
            _accumulate(diag_vals, out.grad[..., didx, didx])
            _accumulate(off_vals, out.grad[..., rows, cols])
        return backward

    return _make(out_v, tape, rule)


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(f, theta, eps: float = 1e-5) -> float:
    """Compare reverse-mode gradients of a scalar function against central
    finite differences, coordinate by coordinate.

    ``f`` must accept either a leaf Tensor (recorded evaluation) or a plain
    array (pure evaluation) and return a scalar. Returns the max relative
    discrepancy; the caller keeps ``theta`` away from kinks.
    """
    theta = np.asarray(theta, dtype=np.float64)
    tape = Tape()
    leaf = tape.var(theta.copy())
    out = f(leaf)
    tape.backward(out)
    analytic = leaf.grad_value.ravel()

    flat = theta.ravel().copy()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(_value(f(flat.reshape(theta.shape))))
        flat[i] = orig - eps
        lo = float(_value(f(flat.reshape(theta.shape))))
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)

    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))
