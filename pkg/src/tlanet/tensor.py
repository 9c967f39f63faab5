"""Dense tensors with reverse-mode automatic differentiation on an explicit tape.

Everything is 64-bit. A ``Tensor`` stores a flat value buffer plus a flat
gradient buffer of the same length; ``shape`` describes how the buffer is
viewed by the ops. Ops record themselves on the innermost active ``Tape``
(entered with ``with Tape() as tape:``); outside a tape they just compute,
which is the inference path.

The only broadcast anywhere is ``add_bias`` (a bias row added to every row
of a matrix). Every other op requires exact shape agreement, which keeps
each backward rule small enough to audit by eye.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "GraphError",
    "ScalarRecurrence",
    "add",
    "sub",
    "mul",
    "scale",
    "add_bias",
    "matmul",
    "linear",
    "activation",
    "tanh",
    "sigmoid",
    "relu",
    "softmax",
    "softmax_rows",
    "concat",
    "slice_cols",
    "reshape",
    "total_sum",
    "mean_all",
    "pick",
    "take_per_row",
    "clip_log",
    "repeat_vector",
    "lookup_rows",
    "dropout",
    "backward",
    "scalar_recurrence",
    "recurrence_trajectory",
    "recurrence_regime",
]


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """The tape or a tensor was used outside its contract."""


def _as_shape(shape) -> tuple[int, ...]:
    return tuple(int(d) for d in shape)


class Tensor:
    """A dense float64 array with an accumulated gradient buffer.

    ``values`` and ``grad`` are flat 1-D arrays of identical length
    ``prod(shape)``. ``grad`` starts at zero and only changes through
    ``Tape.backward`` (which adds into it) or ``zero_grad``.
    """

    __slots__ = ("shape", "values", "grad", "requires_grad", "name")

    def __init__(self, values, shape=None, *, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if shape is None:
            shape = arr.shape
        shape = _as_shape(shape)
        flat = np.array(arr, dtype=np.float64).reshape(-1)
        if int(np.prod(shape, dtype=np.int64)) != flat.size:
            raise ShapeError(f"shape {shape} does not match {flat.size} values")
        self.shape = shape
        self.values = flat
        self.grad = np.zeros_like(flat)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @classmethod
    def zeros(cls, shape, *, requires_grad: bool = False, name: str | None = None) -> "Tensor":
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64))
        return cls(np.zeros(n), shape, requires_grad=requires_grad, name=name)

    @property
    def array(self) -> np.ndarray:
        """The values viewed at ``self.shape`` (a view, not a copy)."""
        return self.values.reshape(self.shape)

    @property
    def grad_array(self) -> np.ndarray:
        return self.grad.reshape(self.shape)

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise GraphError(f"item() on tensor of shape {self.shape}")
        return float(self.values[0])

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape}{label} requires_grad={self.requires_grad}>"


def constant(values, shape=None) -> Tensor:
    return Tensor(values, shape, requires_grad=False)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    rule: object  # callable: shaped output adjoint -> tuple of shaped input adjoints


_TLS = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered log of primitive ops; replayed in reverse to accumulate grads.

    Records are appended in creation order, so walking them backwards is a
    valid reverse-topological traversal. A tape and the tensors produced on
    it belong to a single thread.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - would indicate misuse across threads
            raise GraphError("tape stack corrupted")
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], rule) -> None:
        self._records.append(_Record(out, inputs, rule))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into ``grad`` for every tensor reachable from ``loss``.

        Gradients add across calls: running backward twice doubles them.
        """
        if loss.values.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for rec in reversed(self._records):
            g_out = adjoints.pop(id(rec.out), None)
            if g_out is None:
                continue
            rec.out.grad += g_out.reshape(-1)
            holders.pop(id(rec.out), None)
            for tin, g in zip(rec.inputs, rec.rule(g_out)):
                if g is None:
                    continue
                key = id(tin)
                prev = adjoints.get(key)
                adjoints[key] = g if prev is None else prev + g
                holders[key] = tin
        for key, g in adjoints.items():
            holders[key].grad += g.reshape(-1)


def backward(loss: Tensor, tape: Tape) -> None:
    """Functional spelling of ``tape.backward(loss)``."""
    tape.backward(loss)


def _emit(values: np.ndarray, shape, inputs: tuple[Tensor, ...], rule) -> Tensor:
    out = Tensor(values, shape)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(out, inputs, rule)
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit(a.array + b.array, a.shape, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _emit(a.array - b.array, a.shape, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    av, bv = a.array.copy(), b.array.copy()
    return _emit(av * bv, a.shape, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.array * c, a.shape, (a,), lambda g: (g * c,))


def add_bias(m: Tensor, bias: Tensor) -> Tensor:
    """Add a bias row to every row of a rank-2 tensor (the one allowed broadcast)."""
    if len(m.shape) != 2 or len(bias.shape) != 1 or m.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias: matrix {m.shape} incompatible with bias {bias.shape}")
    return _emit(m.array + bias.array, m.shape, (m, bias), lambda g: (g, g.sum(axis=0)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} disagree")
    av, bv = a.array.copy(), b.array.copy()
    out = av @ bv

    def rule(g):
        return g @ bv.T, av.T @ g

    return _emit(out, out.shape, (a, b), rule)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w.T`` for ``x`` of shape (rows, fan_in) and ``w`` of shape (fan_out, fan_in)."""
    if len(x.shape) != 2 or len(w.shape) != 2:
        raise ShapeError(f"linear needs rank-2 operands, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input width {x.shape} does not match weight {w.shape}")
    xv, wv = x.array.copy(), w.array.copy()
    out = xv @ wv.T

    def rule(g):
        return g @ wv, g.T @ xv

    return _emit(out, out.shape, (x, w), rule)


_ACTIVATIONS = ("tanh", "sigmoid", "relu")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}, expected one of {_ACTIVATIONS}")
    xv = x.array
    if kind == "tanh":
        y = np.tanh(xv)
        rule = lambda g, y=y: (g * (1.0 - y * y),)
    elif kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-xv))
        rule = lambda g, y=y: (g * y * (1.0 - y),)
    else:
        y = np.maximum(xv, 0.0)
        mask = (xv > 0.0).astype(np.float64)
        rule = lambda g, mask=mask: (g * mask,)
    return _emit(y, x.shape, (x,), rule)


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def _stable_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax of a rank-1 tensor (max-subtraction before exp)."""
    if len(x.shape) != 1 or x.shape[0] < 1:
        raise ShapeError(f"softmax needs a non-empty rank-1 tensor, got {x.shape}")
    y = _stable_softmax(x.array)

    def rule(g, y=y):
        return (y * (g - float(g @ y)),)

    return _emit(y, x.shape, (x,), rule)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise stable softmax of a rank-2 tensor."""
    if len(x.shape) != 2 or x.shape[1] < 1:
        raise ShapeError(f"softmax_rows needs a rank-2 tensor with columns, got {x.shape}")
    y = _stable_softmax(x.array)

    def rule(g, y=y):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _emit(y, x.shape, (x,), rule)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero parts")
    rank = len(parts[0].shape)
    if not 0 <= axis < rank:
        raise ShapeError(f"concat axis {axis} out of range for rank {rank}")
    for p in parts:
        if len(p.shape) != rank:
            raise ShapeError(f"concat: ranks differ ({[q.shape for q in parts]})")
        for d in range(rank):
            if d != axis and p.shape[d] != parts[0].shape[d]:
                raise ShapeError(f"concat: ragged shapes {[q.shape for q in parts]} on axis {d}")
    out = np.concatenate([p.array for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def rule(g, axis=axis, bounds=bounds):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(out, out.shape, tuple(parts), rule)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if len(x.shape) != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_cols[{start}:{stop}] invalid for shape {x.shape}")
    out = x.array[:, start:stop].copy()

    def rule(g, shape=x.shape, start=start, stop=stop):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _emit(out, out.shape, (x,), rule)


def reshape(x: Tensor, shape) -> Tensor:
    shape = _as_shape(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    return _emit(x.values.reshape(shape), shape, (x,), lambda g, s=x.shape: (g.reshape(s),))


def total_sum(x: Tensor) -> Tensor:
    """Sum of all entries; the scalar reduction every loss bottoms out in."""
    return _emit(np.asarray(x.values.sum()), (), (x,), lambda g, s=x.shape: (np.full(s, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    return scale(total_sum(x), 1.0 / x.size)


def pick(x: Tensor, index: int) -> Tensor:
    if len(x.shape) != 1:
        raise ShapeError(f"pick needs a rank-1 tensor, got {x.shape}")
    index = int(index)
    if not 0 <= index < x.shape[0]:
        raise IndexError(f"pick index {index} out of range for length {x.shape[0]}")

    def rule(g, n=x.shape[0], i=index):
        gx = np.zeros(n)
        gx[i] = float(g)
        return (gx,)

    return _emit(np.asarray(x.values[index]), (), (x,), rule)


def take_per_row(x: Tensor, indices) -> Tensor:
    """``out[r] = x[r, indices[r]]`` for a rank-2 tensor; scatters on backward."""
    idx = np.asarray(indices, dtype=np.int64)
    if len(x.shape) != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"take_per_row: indices {idx.shape} do not fit {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise IndexError(f"take_per_row: index out of range for {x.shape[1]} columns")
    rows = np.arange(x.shape[0])
    out = x.array[rows, idx].copy()

    def rule(g, shape=x.shape, rows=rows, idx=idx):
        gx = np.zeros(shape)
        gx[rows, idx] = g
        return (gx,)

    return _emit(out, (x.shape[0],), (x,), rule)


def clip_log(x: Tensor, floor: float = 1e-12) -> Tensor:
    """``log(max(x, floor))``; gradient is 1/x above the floor, 0 at or below it."""
    xv = x.array.copy()
    clipped = np.maximum(xv, floor)
    out = np.log(clipped)

    def rule(g, xv=xv, clipped=clipped, floor=floor):
        return (np.where(xv > floor, g / clipped, 0.0),)

    return _emit(out, x.shape, (x,), rule)


def repeat_vector(v: Tensor, times: int) -> Tensor:
    """Tile a rank-1 vector into ``times`` identical rows; backward sums the rows."""
    if len(v.shape) != 1:
        raise ShapeError(f"repeat_vector needs a rank-1 tensor, got {v.shape}")
    times = int(times)
    if times < 1:
        raise ValueError(f"repeat_vector needs times >= 1, got {times}")
    out = np.tile(v.array, (times, 1))
    return _emit(out, out.shape, (v,), lambda g: (g.sum(axis=0),))


def lookup_rows(table: Tensor, ids, padding_idx: int | None = None) -> Tensor:
    """Gather rows ``table[ids]``; backward scatter-adds into exactly those rows.

    A ``padding_idx`` row never receives gradient, so it stays pinned.
    """
    idx = np.asarray(ids, dtype=np.int64)
    if len(table.shape) != 2 or idx.ndim != 1:
        raise ShapeError(f"lookup_rows: table {table.shape} with ids of rank {idx.ndim}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        bad = int(idx[(idx < 0) | (idx >= table.shape[0])][0])
        raise IndexError(f"token id {bad} outside table with {table.shape[0]} rows")
    out = table.array[idx].copy()

    def rule(g, shape=table.shape, idx=idx, pad=padding_idx):
        gt = np.zeros(shape)
        np.add.at(gt, idx, g)
        if pad is not None:
            gt[pad] = 0.0
        return (gt,)

    return _emit(out, out.shape, (table,), rule)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return _emit(x.array * mask, x.shape, (x,), lambda g, mask=mask: (g * mask,))


# ---------------------------------------------------------------------------
# the scalar recurrence x_n = W^n x_0
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarRecurrence:
    """A single scalar weight applied repeatedly to an initial value."""

    weight: float
    x0: float
    steps: int

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")


def recurrence_trajectory(r: ScalarRecurrence) -> list[float]:
    """Values x_0 .. x_n produced by repeatedly multiplying by the weight."""
    xs = [float(r.x0)]
    for _ in range(r.steps):
        xs.append(xs[-1] * r.weight)
    return xs


def scalar_recurrence(r: ScalarRecurrence) -> float:
    return recurrence_trajectory(r)[-1]


def recurrence_regime(weight: float) -> str:
    """'explodes' for |W|>1, 'vanishes' for |W|<1, 'neutral' at |W|=1."""
    mag = abs(weight)
    if mag > 1.0:
        return "explodes"
    if mag < 1.0:
        return "vanishes"
    return "neutral"
