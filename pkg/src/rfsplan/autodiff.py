"""Minimal reverse-mode automatic differentiation over 64-bit numpy arrays.

Forward operations append entries to a module-level tape; ``backward`` replays
the tape in strict reverse execution order and accumulates gradients by sum
over all paths. Tensor values are treated as immutable once produced (the
optimizer replaces the value array of a parameter rather than mutating it).

Deterministic subgradients: ``max2`` ties route the full gradient to the first
argument, ``absolute`` has gradient 0 at exactly 0, and ``maxpool1d`` ties
route to the lowest time index.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, NonFiniteError

LAYERNORM_EPS = 1e-5

_TAPE: list[tuple["Tensor", Callable[[np.ndarray], None]]] = []
_GRAD_ENABLED = True


class Tensor:
    """An n-dimensional float64 array participating in differentiation."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractViolation(f"item: tensor has {self.values.size} elements")
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference / numeric probing)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def tape_size() -> int:
    return len(_TAPE)


def reset_tape() -> None:
    _TAPE.clear()


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


def _result(arr: np.ndarray, track: bool, kind: str) -> Tensor:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{kind}: produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.values = arr
    out.requires_grad = track
    out.grad = None
    return out


def _track(*tensors: Tensor) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad for t in tensors)


def _record(out: Tensor, fn: Callable[[np.ndarray], None]) -> None:
    _TAPE.append((out, fn))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g)
    else:
        t.grad += g


def _shape_err(kind: str, *shapes) -> ContractViolation:
    return ContractViolation(f"{kind}: incompatible shapes {' and '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_err("matmul", a.shape, b.shape)
    out = _result(a.values @ b.values, _track(a, b), "matmul")
    if out.requires_grad:
        av, bv = a.values, b.values

        def backward(g):
            if a.requires_grad:
                _accum(a, g @ bv.T)
            if b.requires_grad:
                _accum(b, av.T @ g)

        _record(out, backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also admits a bias vector ((m,) or (1, m)) across rows."""
    bias = a.shape != b.shape
    if bias:
        row_ok = (
            a.values.ndim == 2
            and (b.shape == (a.shape[1],) or b.shape == (1, a.shape[1]))
        )
        if not row_ok:
            raise _shape_err("add", a.shape, b.shape)
    out = _result(a.values + b.values, _track(a, b), "add")
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, g)
            if b.requires_grad:
                _accum(b, g.sum(axis=0).reshape(b.shape) if bias else g)

        _record(out, backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise _shape_err("sub", a.shape, b.shape)
    out = _result(a.values - b.values, _track(a, b), "sub")
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, g)
            if b.requires_grad:
                _accum(b, -g)

        _record(out, backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise _shape_err("elementwise-mul", a.shape, b.shape)
    out = _result(a.values * b.values, _track(a, b), "elementwise-mul")
    if out.requires_grad:
        av, bv = a.values, b.values

        def backward(g):
            if a.requires_grad:
                _accum(a, g * bv)
            if b.requires_grad:
                _accum(b, g * av)

        _record(out, backward)
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    out = _result(a.values * factor, _track(a), "scale")
    if out.requires_grad:
        def backward(g):
            _accum(a, g * factor)

        _record(out, backward)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractViolation("concat: empty input list")
    ndim = tensors[0].values.ndim
    for t in tensors:
        if t.values.ndim != ndim:
            raise _shape_err("concat", *(x.shape for x in tensors))
    out = _result(np.concatenate([t.values for t in tensors], axis=axis),
                  _track(*tensors), "concat")
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    _accum(t, np.take(g, range(lo, hi), axis=axis))

        _record(out, backward)
    return out


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop) along one axis."""
    if axis >= a.values.ndim or not (0 <= start < stop <= a.shape[axis]):
        raise ContractViolation(
            f"slice: range [{start}:{stop}) axis {axis} invalid for shape {a.shape}")
    index = (slice(None),) * axis + (slice(start, stop),)
    out = _result(a.values[index], _track(a), "slice")
    if out.requires_grad:
        def backward(g):
            full = np.zeros_like(a.values)
            full[index] = g
            _accum(a, full)

        _record(out, backward)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise _shape_err("transpose", a.shape)
    out = _result(a.values.T, _track(a), "transpose")
    if out.requires_grad:
        def backward(g):
            _accum(a, g.T)

        _record(out, backward)
    return out


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis of a 1-D or 2-D tensor."""
    if a.values.ndim not in (1, 2):
        raise _shape_err("row-softmax", a.shape)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _result(s, _track(a), "row-softmax")
    if out.requires_grad:
        def backward(g):
            _accum(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))

        _record(out, backward)
    return out


def layernorm(a: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (eps inside sqrt)."""
    if a.values.ndim not in (1, 2):
        raise _shape_err("layernorm", a.shape)
    mu = a.values.mean(axis=-1, keepdims=True)
    xc = a.values - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LAYERNORM_EPS)
    y = xc * inv
    out = _result(y, _track(a), "layernorm")
    if out.requires_grad:
        def backward(g):
            gm = g.mean(axis=-1, keepdims=True)
            gym = (g * y).mean(axis=-1, keepdims=True)
            _accum(a, inv * (g - gm - y * gym))

        _record(out, backward)
    return out


def relu(a: Tensor) -> Tensor:
    out = _result(np.maximum(a.values, 0.0), _track(a), "relu")
    if out.requires_grad:
        mask = a.values > 0.0

        def backward(g):
            _accum(a, g * mask)

        _record(out, backward)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.values)
    out = _result(y, _track(a), "tanh")
    if out.requires_grad:
        def backward(g):
            _accum(a, g * (1.0 - y * y))

        _record(out, backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _result(y, _track(a), "sigmoid")
    if out.requires_grad:
        def backward(g):
            _accum(a, g * y * (1.0 - y))

        _record(out, backward)
    return out


def absolute(a: Tensor) -> Tensor:
    """Elementwise |x|; subgradient 0 at exactly 0."""
    out = _result(np.abs(a.values), _track(a), "abs")
    if out.requires_grad:
        sign = np.sign(a.values)

        def backward(g):
            _accum(a, g * sign)

        _record(out, backward)
    return out


def max2(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max of two same-shape tensors; ties route to the first."""
    if a.shape != b.shape:
        raise _shape_err("max2", a.shape, b.shape)
    out = _result(np.maximum(a.values, b.values), _track(a, b), "max2")
    if out.requires_grad:
        first = a.values >= b.values

        def backward(g):
            if a.requires_grad:
                _accum(a, g * first)
            if b.requires_grad:
                _accum(b, g * ~first)

        _record(out, backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _result(np.asarray(a.values.sum()), _track(a), "sum")
    if out.requires_grad:
        def backward(g):
            _accum(a, np.full_like(a.values, float(g)))

        _record(out, backward)
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    out = _result(np.asarray(a.values.mean()), _track(a), "mean")
    if out.requires_grad:
        def backward(g):
            _accum(a, np.full_like(a.values, float(g) / n))

        _record(out, backward)
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1-D convolution over time: x (T, Cin), w (K, Cin, Cout) with odd K,
    b (Cout,); stride 1, zero same-padding, output (T, Cout)."""
    if x.values.ndim != 2 or w.values.ndim != 3 or w.shape[1] != x.shape[1]:
        raise _shape_err("conv1d", x.shape, w.shape)
    k = w.shape[0]
    if k % 2 != 1:
        raise ContractViolation(f"conv1d: kernel size {k} must be odd for same-padding")
    if b.shape != (w.shape[2],):
        raise _shape_err("conv1d", w.shape, b.shape)
    t = x.shape[0]
    pad = k // 2
    xp = np.zeros((t + 2 * pad, x.shape[1]))
    xp[pad:pad + t] = x.values
    y = np.tile(b.values, (t, 1))
    for i in range(k):
        y += xp[i:i + t] @ w.values[i]
    out = _result(y, _track(x, w, b), "conv1d")
    if out.requires_grad:
        wv = w.values

        def backward(g):
            if b.requires_grad:
                _accum(b, g.sum(axis=0))
            if w.requires_grad:
                dw = np.empty_like(wv)
                for i in range(k):
                    dw[i] = xp[i:i + t].T @ g
                _accum(w, dw)
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for i in range(k):
                    dxp[i:i + t] += g @ wv[i].T
                _accum(x, dxp[pad:pad + t])

        _record(out, backward)
    return out


def maxpool1d(x: Tensor) -> Tensor:
    """Max over the time axis of x (T, C) -> (1, C); ties take the lowest index."""
    if x.values.ndim != 2:
        raise _shape_err("maxpool1d-over-time", x.shape)
    idx = x.values.argmax(axis=0)
    cols = np.arange(x.shape[1])
    out = _result(x.values[idx, cols][None, :], _track(x), "maxpool1d-over-time")
    if out.requires_grad:
        def backward(g):
            dx = np.zeros_like(x.values)
            dx[idx, cols] = g[0]
            _accum(x, dx)

        _record(out, backward)
    return out


def embed_lookup(w: Tensor, index: int) -> Tensor:
    """Select row `index` of a 2-D table -> (1, d)."""
    if w.values.ndim != 2:
        raise _shape_err("embed-lookup", w.shape)
    if not 0 <= index < w.shape[0]:
        raise ContractViolation(f"embed-lookup: index {index} out of range for {w.shape}")
    out = _result(w.values[index:index + 1], _track(w), "embed-lookup")
    if out.requires_grad:
        def backward(g):
            dw = np.zeros_like(w.values)
            dw[index] = g[0]
            _accum(w, dw)

        _record(out, backward)
    return out


_OPS: dict[str, Callable] = {
    "matmul": lambda ins, attrs: matmul(*ins),
    "add": lambda ins, attrs: add(*ins),
    "sub": lambda ins, attrs: sub(*ins),
    "elementwise-mul": lambda ins, attrs: mul(*ins),
    "scale": lambda ins, attrs: scale(ins[0], attrs["factor"]),
    "concat": lambda ins, attrs: concat(ins, attrs.get("axis", 0)),
    "slice": lambda ins, attrs: narrow(ins[0], attrs["axis"], attrs["start"], attrs["stop"]),
    "transpose": lambda ins, attrs: transpose(*ins),
    "row-softmax": lambda ins, attrs: row_softmax(*ins),
    "layernorm": lambda ins, attrs: layernorm(*ins),
    "relu": lambda ins, attrs: relu(*ins),
    "tanh": lambda ins, attrs: tanh(*ins),
    "sigmoid": lambda ins, attrs: sigmoid(*ins),
    "abs": lambda ins, attrs: absolute(*ins),
    "max2": lambda ins, attrs: max2(*ins),
    "sum": lambda ins, attrs: sum_all(*ins),
    "mean": lambda ins, attrs: mean_all(*ins),
    "conv1d": lambda ins, attrs: conv1d(*ins),
    "maxpool1d-over-time": lambda ins, attrs: maxpool1d(*ins),
    "embed-lookup": lambda ins, attrs: embed_lookup(ins[0], attrs["index"]),
}


def forward_op(kind: str, inputs: Sequence[Tensor], attrs: dict | None = None) -> Tensor:
    """Dispatch a primitive by kind name (the uniform operation surface)."""
    if kind not in _OPS:
        raise ContractViolation(f"unknown op kind {kind!r}")
    return _OPS[kind](list(inputs), attrs or {})


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(tensor) into .grad for every tensor reachable from
    root on the tape, then clear the tape."""
    if root.values.size != 1:
        raise ContractViolation(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractViolation("backward: root has no recorded history")
    try:
        root.grad = np.ones_like(root.values)
        for out, fn in reversed(_TAPE):
            g = out.grad
            if g is not None:
                fn(g)
    finally:
        _TAPE.clear()


@dataclass
class GradCheckReport:
    """Worst-case disagreement between reverse-mode and central differences."""

    max_rel_error: float
    n_checked: int
    worst_input: int = -1
    worst_element: int = -1
    analytic: float = 0.0
    numeric: float = 0.0


def grad_check(f: Callable[..., Tensor], point: Sequence[Tensor], eps: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar-valued ``f(*point)`` against
    central differences at every element of every input tensor.

    Relative error is |a - n| / max(1e-8, |a| + |n|).
    """
    if eps <= 0:
        raise ContractViolation("grad_check: eps must be positive")
    point = list(point)
    saved_flags = [t.requires_grad for t in point]
    for t in point:
        t.requires_grad = True
        t.grad = None
    reset_tape()
    out = f(*point)
    if out.values.size != 1:
        raise ContractViolation("grad_check: f must be scalar-valued")
    backward(out)
    analytic = [np.zeros_like(t.values) if t.grad is None else t.grad.copy() for t in point]
    for t, flag in zip(point, saved_flags):
        t.requires_grad = flag
        t.grad = None

    report = GradCheckReport(max_rel_error=0.0, n_checked=0)
    with no_grad():
        for i, t in enumerate(point):
            original = t.values
            work = original.copy()
            t.values = work
            flat = work.reshape(-1)
            try:
                for j in range(flat.size):
                    base = flat[j]
                    try:
                        flat[j] = base + eps
                        f_plus = f(*point).item()
                        flat[j] = base - eps
                        f_minus = f(*point).item()
                    except Exception as exc:
                        raise ContractViolation(
                            f"grad_check: f raised at input {i} element {j} "
                            f"perturbed by ±{eps}: {exc}") from exc
                    finally:
                        flat[j] = base
                    numeric = (f_plus - f_minus) / (2.0 * eps)
                    a = float(analytic[i].reshape(-1)[j])
                    rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                    report.n_checked += 1
                    if rel > report.max_rel_error:
                        report.max_rel_error = rel
                        report.worst_input = i
                        report.worst_element = j
                        report.analytic = a
                        report.numeric = numeric
            finally:
                t.values = original
    return report


def global_grad_norm(tensors) -> float:
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return math.sqrt(total)
