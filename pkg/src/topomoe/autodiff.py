"""Minimal reverse-mode autodiff on float64 numpy arrays.

A Tape records primitive operations in creation order (which is a
topological order); backward walks the record in exact reverse, so every
gradient reduction happens in one fixed order and repeated runs are
bit-identical. A tape can be consumed by backward exactly once.

Only the primitives the gating/expert/loss stack needs are provided; there
is no general broadcasting beyond what those consumers use.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GradCheckError, RoutingError, ShapeError

NEG_INF = -np.inf
_LN2 = math.log(2.0)


class Tensor:
    """Value plus gradient buffer. Leaves (parameters, constants) outlive
    any tape; intermediates belong to the tape that created them."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    """Ordered operation record for one forward/backward cycle."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []
        self._consumed = False

    def _emit(self, value, back, *parents) -> Tensor:
        needs = any(p.requires_grad for p in parents)
        out = Tensor(value, requires_grad=needs)
        if needs:
            self._nodes.append((out, back))
        return out

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(leaf) into every reachable leaf's .grad."""
        if self._consumed:
            raise RuntimeError("backward already ran on this tape; record a new tape")
        self._consumed = True
        if root.value.shape != ():
            raise ShapeError(f"backward root must be scalar, got shape {root.value.shape}")
        root.grad = np.ones_like(root.value)
        for out, back in reversed(self._nodes):
            if out.grad is not None:
                back(out.grad)

    # ---- elementwise arithmetic (broadcast like numpy, reduced on backward)

    def add(self, a, b) -> Tensor:
        a, b = _wrap(a), _wrap(b)

        def back(g):
            _accum(a, _unbroadcast(g, a.value.shape))
            _accum(b, _unbroadcast(g, b.value.shape))

        return self._emit(a.value + b.value, back, a, b)

    def sub(self, a, b) -> Tensor:
        a, b = _wrap(a), _wrap(b)

        def back(g):
            _accum(a, _unbroadcast(g, a.value.shape))
            _accum(b, _unbroadcast(-g, b.value.shape))

        return self._emit(a.value - b.value, back, a, b)

    def mul(self, a, b) -> Tensor:
        a, b = _wrap(a), _wrap(b)

        def back(g):
            _accum(a, _unbroadcast(g * b.value, a.value.shape))
            _accum(b, _unbroadcast(g * a.value, b.value.shape))

        return self._emit(a.value * b.value, back, a, b)

    def div(self, a, b) -> Tensor:
        a, b = _wrap(a), _wrap(b)

        def back(g):
            _accum(a, _unbroadcast(g / b.value, a.value.shape))
            _accum(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

        return self._emit(a.value / b.value, back, a, b)

    def scale(self, a, c: float) -> Tensor:
        a = _wrap(a)

        def back(g):
            _accum(a, g * c)

        return self._emit(a.value * c, back, a)

    def square(self, a) -> Tensor:
        return self.mul(a, a)

    # ---- linear algebra

    def matmul(self, a, b) -> Tensor:
        a, b = _wrap(a), _wrap(b)
        if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(f"cannot matmul {a.value.shape} by {b.value.shape}")

        def back(g):
            _accum(a, g @ b.value.T)
            _accum(b, a.value.T @ g)

        return self._emit(a.value @ b.value, back, a, b)

    def linear(self, x, w, b) -> Tensor:
        """y = x W + b; accepts a vector or a matrix of rows."""
        x, w, b = _wrap(x), _wrap(w), _wrap(b)
        vector_in = x.value.ndim == 1
        x2 = self.reshape(x, (1, -1)) if vector_in else x
        if x2.value.shape[1] != w.value.shape[0]:
            raise ShapeError(f"cannot multiply {x.value.shape} by {w.value.shape}")
        if b.value.shape != (w.value.shape[1],):
            raise ShapeError(f"bias {b.value.shape} does not fit weight {w.value.shape}")
        y = self.add(self.matmul(x2, w), b)
        return self.reshape(y, (-1,)) if vector_in else y

    def reshape(self, a, shape) -> Tensor:
        a = _wrap(a)
        old = a.value.shape

        def back(g):
            _accum(a, g.reshape(old))

        return self._emit(a.value.reshape(shape), back, a)

    # ---- nonlinearities

    def tanh(self, a) -> Tensor:
        a = _wrap(a)
        y = np.tanh(a.value)

        def back(g):
            _accum(a, g * (1.0 - y * y))

        return self._emit(y, back, a)

    def shifted_softplus(self, a) -> Tensor:
        """ln(0.5 e^x + 0.5): softplus shifted to pass through the origin."""
        a = _wrap(a)
        y = np.logaddexp(0.0, a.value) - _LN2

        def back(g):
            _accum(a, g / (1.0 + np.exp(-a.value)))

        return self._emit(y, back, a)

    def softmax(self, a) -> Tensor:
        """Max-subtracted softmax; -inf entries map to exactly 0.

        Accepts a vector or a matrix (softmax per row). Raises RoutingError
        when a row has no finite entry.
        """
        a = _wrap(a)
        z = a.value
        rows = z[None, :] if z.ndim == 1 else z
        if np.any(np.isnan(rows)) or np.any(rows == np.inf):
            raise RoutingError("softmax input must be finite or -inf")
        finite = np.isfinite(rows)
        if not finite.any(axis=1).all():
            raise RoutingError("softmax saw a fully masked vector")
        m = np.max(np.where(finite, rows, NEG_INF), axis=1, keepdims=True)
        e = np.exp(rows - m)
        s = e / e.sum(axis=1, keepdims=True)
        out = s[0] if z.ndim == 1 else s

        def back(g):
            g2 = g[None, :] if z.ndim == 1 else g
            dot = (g2 * s).sum(axis=1, keepdims=True)
            dz = s * (g2 - dot)
            _accum(a, dz[0] if z.ndim == 1 else dz)

        return self._emit(out, back, a)

    def mask_keep(self, a, keep: np.ndarray) -> Tensor:
        """Entries where keep is False become -inf; gradient flows only
        through kept entries."""
        a = _wrap(a)
        keep = np.asarray(keep, dtype=bool)

        def back(g):
            _accum(a, np.where(keep, g, 0.0))

        return self._emit(np.where(keep, a.value, NEG_INF), back, a)

    # ---- gather / scatter / reductions

    def gather_rows(self, a, idx) -> Tensor:
        a = _wrap(a)
        idx = np.asarray(idx, dtype=np.int64)

        def back(g):
            if not a.requires_grad:
                return
            buf = np.zeros_like(a.value)
            np.add.at(buf, idx, g)
            _accum(a, buf)

        return self._emit(a.value[idx], back, a)

    def scatter_sum(self, a, idx, n_rows: int) -> Tensor:
        a = _wrap(a)
        idx = np.asarray(idx, dtype=np.int64)
        out = np.zeros((n_rows,) + a.value.shape[1:], dtype=np.float64)
        np.add.at(out, idx, a.value)

        def back(g):
            _accum(a, g[idx])

        return self._emit(out, back, a)

    def take(self, a, i: int) -> Tensor:
        """Scalar element of a vector."""
        a = _wrap(a)
        if a.value.ndim != 1:
            raise ShapeError(f"take expects a vector, got shape {a.value.shape}")

        def back(g):
            buf = np.zeros_like(a.value)
            buf[i] = g
            _accum(a, buf)

        return self._emit(a.value[i], back, a)

    def column(self, a, k: int) -> Tensor:
        """Column k of a matrix as an (n, 1) slice."""
        a = _wrap(a)

        def back(g):
            buf = np.zeros_like(a.value)
            buf[:, k : k + 1] = g
            _accum(a, buf)

        return self._emit(a.value[:, k : k + 1], back, a)

    def sum(self, a) -> Tensor:
        a = _wrap(a)

        def back(g):
            _accum(a, np.full_like(a.value, float(g)))

        return self._emit(a.value.sum(), back, a)

    def sum_rows(self, a) -> Tensor:
        """Sum a matrix over axis 0, yielding a vector."""
        a = _wrap(a)

        def back(g):
            _accum(a, np.broadcast_to(g, a.value.shape).copy())

        return self._emit(a.value.sum(axis=0), back, a)

    def mean(self, a) -> Tensor:
        a = _wrap(a)
        return self.scale(self.sum(a), 1.0 / a.value.size)


# ---- free-function aliases for the two most-used primitives


def linear(tape: Tape, x, w, b) -> Tensor:
    return tape.linear(x, w, b)


def softmax(tape: Tape, z) -> Tensor:
    return tape.softmax(z)


class ParamStore:
    """Named float64 parameters with persistent gradient buffers.

    Initialization is seeded; weight matrices use the uniform
    +-sqrt(6/(fan_in+fan_out)) rule, vectors start at zero. Insertion
    order is the canonical parameter order everywhere (checkpoints,
    optimizer, grad_check).
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape, init: str = "auto") -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        shape = tuple(shape)
        if init == "zeros" or (init == "auto" and len(shape) == 1):
            value = np.zeros(shape)
        elif init == "glorot" or init == "auto":
            fan_in, fan_out = shape[0], shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            value = self.rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(value, requires_grad=True)
        t.grad = np.zeros(shape)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    @property
    def n_params(self) -> int:
        return sum(t.value.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.value)
            else:
                t.grad[...] = 0.0

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._params.items()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise ShapeError(f"parameter {name!r}: stored {arr.shape} vs live {t.value.shape}")
            t.value[...] = arr


def grad_check(loss_fn, params: ParamStore, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    `loss_fn` must be deterministic and return a (Tape, scalar Tensor)
    pair built from the current parameter values.
    """
    if not 1e-6 <= h <= 1e-4:
        raise GradCheckError(f"step h={h} outside [1e-6, 1e-4]")
    params.zero_grad()
    tape, loss = loss_fn()
    if not np.isfinite(loss.value):
        raise GradCheckError(f"loss is not finite: {loss.value}")
    tape.backward(loss)
    analytic = {name: t.grad.copy() for name, t in params.items()}

    def eval_loss() -> float:
        _, out = loss_fn()
        val = float(out.value)
        if not math.isfinite(val):
            raise GradCheckError("loss became non-finite during perturbation")
        return val

    worst = 0.0
    for name, t in params.items():
        flat = t.value.reshape(-1)
        g_ad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = eval_loss()
            flat[i] = orig - h
            down = eval_loss()
            flat[i] = orig
            g_fd = (up - down) / (2.0 * h)
            denom = max(abs(g_ad[i]), abs(g_fd), 1e-8)
            worst = max(worst, abs(g_ad[i] - g_fd) / denom)
    return worst
