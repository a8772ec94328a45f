"""Dense tensors with tape-based reverse-mode differentiation.

Every operation is a plain function over :class:`Tensor` values.  When any
input belongs to a :class:`Tape`, the result is recorded on that tape along
with a closure that maps the output gradient to input gradients.  Calling
:func:`backward` walks the tape once in reverse and deposits gradients into
the :class:`Parameter` objects that were watched.

Tapes are cheap and meant to be rebuilt for every forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class TapeError(RuntimeError):
    """Misuse of a tape (foreign tensors, non-scalar loss, ...)."""


class TrainingError(RuntimeError):
    """Numerical failure during optimisation."""


class Tensor:
    """An immutable float64 array, optionally attached to a tape."""

    __slots__ = ("data", "tape")

    def __init__(self, data, tape: Tape | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = " tracked" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)


@dataclass
class Parameter:
    """A named trainable array with a gradient slot of the same shape."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class ParameterSet:
    """Ordered collection of uniquely named parameters."""

    def __init__(self, params: Sequence[Parameter] = ()):
        self._params: dict[str, Parameter] = {}
        for p in params:
            self.add(p)

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ValueError(f"duplicate parameter name {param.name!r}")
        self._params[param.name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self:
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for name, value in state.items():
            p = self._params[name]
            if p.value.shape != value.shape:
                raise ShapeError(f"{name}: expected {p.value.shape}, got {value.shape}")
            p.value = np.array(value, dtype=np.float64)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], tuple]


class Tape:
    """Forward-order record of operations for one differentiation pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaves: list[tuple[Tensor, Parameter]] = []

    def watch(self, param: Parameter) -> Tensor:
        """Return a tracked tensor whose gradient flows into ``param.grad``."""
        t = Tensor(param.value, tape=self)
        self._leaves.append((t, param))
        return t

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(inputs: Sequence[Tensor]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeError("operands belong to different tapes")
    return tape


def _record(data: np.ndarray, inputs: tuple, grad_fn: Callable) -> Tensor:
    tape = _tape_of(inputs)
    out = Tensor(data, tape)
    if tape is not None:
        tape.nodes.append(_Node(out, inputs, grad_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every parameter watched on ``tape``."""
    if loss.tape is not tape:
        raise TapeError("loss was not produced on this tape")
    if loss.data.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or inp.tape is not tape:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    for leaf, param in tape._leaves:
        g = grads.get(id(leaf))
        if g is not None:
            param.grad += g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _record(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    x = _as_tensor(x)
    mask = x.data > 0
    # np.maximum keeps NaN so corrupt weights surface as a non-finite loss
    return _record(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    s = _stable_sigmoid(x.data)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),))


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(x, floor)``; clamped entries receive no gradient."""
    x = _as_tensor(x)
    if floor > 0:
        clamped = x.data < floor
        xd = np.where(clamped, floor, x.data)
    else:
        clamped = np.zeros(x.shape, dtype=bool)
        xd = x.data
    return _record(np.log(xd), (x,), lambda g: (np.where(clamped, 0.0, g / xd),))


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    shape = x.shape

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(x.data.sum(axis=axis), (x,), grad_fn)


def mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    shape = x.shape
    return _record(np.mean(x.data), (x,), lambda g: (np.full(shape, g / n),))


# ---------------------------------------------------------------- shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {x.shape}")
    return _record(x.data.T, (x,), lambda g: (g.T,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    p = a.shape[1]
    return _record(
        np.concatenate([a.data, b.data], axis=1), (a, b), lambda g: (g[:, :p], g[:, p:])
    )


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows ``x[index]``; repeated indices accumulate in backward."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(x.data[idx], (x,), grad_fn)


def pick(x: Tensor, rows, cols) -> Tensor:
    """Elementwise gather ``x[rows[k], cols[k]]`` into a vector."""
    x = _as_tensor(x)
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    shape = x.shape

    def grad_fn(g):
        out = np.zeros(shape)
        np.add.at(out, (r, c), g)
        return (out,)

    return _record(x.data[r, c], (x,), grad_fn)


# ---------------------------------------------------------------- graph ops


class EdgeIndex:
    """Directed edges ``source -> target`` with cached mean-aggregation matrices."""

    def __init__(self, sources, targets, num_sources: int, num_targets: int):
        self.sources = np.asarray(sources, dtype=np.int64).reshape(-1)
        self.targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        if self.sources.shape != self.targets.shape:
            raise ShapeError("sources and targets differ in length")
        self.num_sources = int(num_sources)
        self.num_targets = int(num_targets)
        if len(self.sources):
            if self.sources.min() < 0 or self.sources.max() >= self.num_sources:
                raise IndexError("edge source out of range")
            if self.targets.min() < 0 or self.targets.max() >= self.num_targets:
                raise IndexError("edge target out of range")

    @classmethod
    def from_pairs(cls, pairs, num_sources: int, num_targets: int) -> EdgeIndex:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1], num_sources, num_targets)

    def __len__(self) -> int:
        return len(self.sources)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.targets, minlength=self.num_targets).astype(np.float64)

    @cached_property
    def mean_matrix(self) -> sp.csr_matrix:
        """Row-normalised adjacency; rows of targets without neighbours are empty."""
        deg = self.in_degree
        w = 1.0 / deg[self.targets] if len(self.targets) else np.zeros(0)
        return sp.csr_matrix(
            (w, (self.targets, self.sources)), shape=(self.num_targets, self.num_sources)
        )

    @cached_property
    def mean_matrix_t(self) -> sp.csr_matrix:
        return self.mean_matrix.T.tocsr()


def mean_aggregate(src: Tensor, edges: EdgeIndex, num_targets: int | None = None) -> Tensor:
    """Row ``i`` of the result is the mean of ``src`` over the in-neighbours of ``i``.

    Targets with no incoming edge get a zero row.
    """
    src = _as_tensor(src)
    if num_targets is not None and num_targets != edges.num_targets:
        raise ShapeError(f"edge index has {edges.num_targets} targets, not {num_targets}")
    if src.ndim != 2 or src.shape[0] != edges.num_sources:
        raise ShapeError(f"source rows {src.shape} do not match {edges.num_sources} nodes")
    A, At = edges.mean_matrix, edges.mean_matrix_t
    return _record(np.asarray(A @ src.data), (src,), lambda g: (np.asarray(At @ g),))


def basis_compose(coeffs: Tensor, bases: Tensor) -> Tensor:
    """Per-relation weights ``W[r] = sum_b coeffs[r, b] * bases[b]``.

    ``coeffs`` is ``(R, B)``, ``bases`` is ``(B, d_out, d_in)``; the result is
    ``(R, d_out, d_in)``.
    """
    coeffs, bases = _as_tensor(coeffs), _as_tensor(bases)
    if coeffs.ndim != 2 or bases.ndim != 3 or coeffs.shape[1] != bases.shape[0]:
        raise ShapeError(f"basis_compose: {coeffs.shape} vs {bases.shape}")
    cd, bd = coeffs.data, bases.data
    out = np.einsum("rb,boi->roi", cd, bd)
    return _record(
        out,
        (coeffs, bases),
        lambda g: (np.einsum("roi,boi->rb", g, bd), np.einsum("rb,roi->boi", cd, g)),
    )


def relational_aggregate(h: Tensor | None, edges: Sequence[EdgeIndex], weights: Tensor) -> Tensor:
    """``sum_r mean_r(h) @ weights[r].T`` over relation-specific edge sets.

    ``h=None`` stands for one-hot node features, i.e. the identity matrix,
    which is never materialised: ``mean_r(I) @ W.T`` becomes ``A_r @ W.T``.
    """
    weights = _as_tensor(weights)
    if weights.ndim != 3 or weights.shape[0] != len(edges):
        raise ShapeError(f"need {len(edges)} relation weights, got {weights.shape}")
    wd = weights.data
    n_rel, d_out, d_in = wd.shape
    if h is None:
        inputs: tuple = (weights,)
        hd = None
    else:
        h = _as_tensor(h)
        if h.ndim != 2 or h.shape[1] != d_in:
            raise ShapeError(f"input width {h.shape} does not match weights {wd.shape}")
        inputs = (h, weights)
        hd = h.data
    n_nodes = edges[0].num_targets if edges else (hd.shape[0] if hd is not None else d_in)
    out = np.zeros((n_nodes, d_out))
    msgs = []
    for r, e in enumerate(edges):
        m = e.mean_matrix @ hd if hd is not None else e.mean_matrix
        msgs.append(m)
        out += np.asarray(m @ wd[r].T)

    def grad_fn(g):
        gw = np.empty_like(wd)
        gh = np.zeros_like(hd) if hd is not None else None
        for r, e in enumerate(edges):
            # (m.T @ g).T == g.T @ m, kept in this form so sparse m works
            gw[r] = np.asarray((msgs[r].T @ g).T)
            if gh is not None:
                gh += np.asarray(e.mean_matrix_t @ (g @ wd[r]))
        return (gw,) if hd is None else (gh, gw)

    return _record(out, inputs, grad_fn)


# ---------------------------------------------------------------- init / optim


def xavier_init(shape: Sequence[int], seed) -> np.ndarray:
    """Xavier-uniform values on ``±sqrt(6 / (fan_in + fan_out))``.

    The fans are the last two dimensions; leading dimensions are stacked copies.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ValueError(f"xavier_init needs positive dimensions, got {shape}")
    fan_a = shape[-2] if len(shape) >= 2 else shape[0]
    fan_b = shape[-1]
    bound = np.sqrt(6.0 / (fan_a + fan_b))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParameterSet, state: AdamState) -> None:
    """One bias-corrected Adam update, then zero every gradient."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p in params:
        g = p.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value = p.value - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.zero_grad()
