"""Small dense reverse-mode autodiff over float64 numpy arrays.

Tensors are immutable values; ``Tensor.backward`` walks the recorded graph
in reverse topological order and accumulates gradients into the leaves.
Leaves created by :meth:`ParamStore.param` push their gradient into the
store's paired buffer.  Broadcasting is limited to bias-add and scalar
operands.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericsError, ShapeError


def _finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericsError(f"non-finite value produced by {op}")
    return value


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "_sink", "op")

    def __init__(self, value, parents: Sequence[Tensor] = (), vjp: Callable | None = None,
                 requires_grad: bool | None = None, sink: Callable | None = None, op: str = "leaf"):
        self.value = _finite(np.asarray(value, dtype=np.float64), op)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._vjp = vjp
        self._sink = sink
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self._parents)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    def backward(self, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if self.value.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.value)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        grads = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                if node._sink is not None:
                    node._sink(g)
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def variable(x) -> Tensor:
    return Tensor(x, requires_grad=True)


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    """Same-shape sum, bias-add (``b`` 1-D over the last axis) or scalar shift."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        if np.ndim(b) != 0:
            raise ShapeError("only scalar constants broadcast in add")
        return Tensor(a.value + float(b), (a,), lambda g: (g,), op="add_scalar")
    if a.shape == b.shape:
        return Tensor(a.value + b.value, (a, b), lambda g: (g, g), op="add")
    if b.value.ndim == 1 and a.value.ndim >= 1 and a.shape[-1:] == b.shape:
        lead = tuple(range(a.value.ndim - 1))
        return Tensor(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=lead)), op="bias_add")
    if b.value.ndim == 0:
        return Tensor(a.value + b.value, (a, b), lambda g: (g, g.sum()), op="add_scalar_tensor")
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a, b) -> Tensor:
    return add(a, scale(b, -1.0) if isinstance(b, Tensor) else -b)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return Tensor(a.value * s, (a,), lambda g: (g * s,), op="scale")


def mul(a, b) -> Tensor:
    """Elementwise product; either side may be a scalar (python or 0-d/size-1 tensor)."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        if np.ndim(b) != 0:
            raise ShapeError("only scalar constants broadcast in mul")
        return scale(a, b)
    if a.shape == b.shape:
        return Tensor(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value), op="mul")
    if b.value.size == 1 and b.value.ndim <= 1:
        bs = b.value.reshape(())
        return Tensor(a.value * bs, (a, b),
                      lambda g: (g * bs, np.sum(g * a.value).reshape(b.shape)), op="mul_scalar")
    if a.value.size == 1 and a.value.ndim <= 1:
        return mul(b, a)
    raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), op="relu")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,), op="exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.value <= 0):
        raise NumericsError("log of a non-positive value")
    return Tensor(np.log(a.value), (a,), lambda g: (g / a.value,), op="log")


# -- shape / reductions ------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return Tensor(av @ bv, (a, b), vjp, op="matmul")


def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise ShapeError("transpose needs a matrix")
    return Tensor(a.value.T, (a,), lambda g: (g.T,), op="transpose")


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), op="reshape")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    try:
        out = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return Tensor(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)), op="concat")


def take(a: Tensor, index, axis: int = 0) -> Tensor:
    idx = np.asarray(index)

    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (slice(None),) * (axis % a.value.ndim) + (idx,), g)
        return (full,)

    return Tensor(np.take(a.value, idx, axis=axis), (a,), vjp, op="take")


def diag(a: Tensor) -> Tensor:
    if a.value.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("diag needs a square matrix")
    return Tensor(np.diag(a.value).copy(), (a,), lambda g: (np.diag(g),), op="diag")


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(a.value.sum(axis=axis), (a,), vjp, op="sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def l2_normalize(a: Tensor) -> Tensor:
    """Rows (last axis) scaled to unit length."""
    norm = np.sqrt(np.sum(a.value**2, axis=-1, keepdims=True))
    if np.any(norm == 0):
        raise NumericsError("l2_normalize of a zero vector")
    out = a.value / norm

    def vjp(g):
        return ((g - out * np.sum(g * out, axis=-1, keepdims=True)) / norm,)

    return Tensor(out, (a,), vjp, op="l2_normalize")


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine along the last axis of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine: shapes {a.shape} and {b.shape} differ")
    return sum(mul(l2_normalize(a), l2_normalize(b)), axis=-1)


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosines between rows of ``a`` (n, C) and rows of ``b`` (K, C)."""
    return matmul(l2_normalize(a), transpose(l2_normalize(b)))


def softmax(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return Tensor(out, (a,), vjp, op="softmax")


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * np.sum(g, axis=-1, keepdims=True),)

    return Tensor(out, (a,), vjp, op="log_softmax")


# -- parameters --------------------------------------------------------------

@dataclass
class Entry:
    values: np.ndarray
    grads: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass
class ParamStore:
    """Named float64 buffers with paired gradient buffers.

    A frozen store hands out constant tensors, so no gradient ever reaches it.
    """

    entries: dict[str, Entry] = field(default_factory=dict)
    frozen: bool = False
    step: int = 0

    def add(self, name: str, values) -> Entry:
        if name in self.entries:
            raise KeyError(f"duplicate parameter {name!r}")
        values = np.array(values, dtype=np.float64)
        _finite(values, f"param {name}")
        entry = Entry(values, np.zeros_like(values))
        self.entries[name] = entry
        return entry

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name].values

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def param(self, name: str) -> Tensor:
        entry = self.entries[name]
        if self.frozen:
            return Tensor(entry.values, requires_grad=False, op=f"frozen:{name}")

        def sink(g, entry=entry):
            entry.grads += g

        return Tensor(entry.values, requires_grad=True, sink=sink, op=f"param:{name}")

    def zero_grad(self) -> None:
        for e in self.entries.values():
            e.grads[...] = 0.0

    def copy(self) -> ParamStore:
        out = ParamStore(frozen=self.frozen, step=self.step)
        for name, e in self.entries.items():
            out.entries[name] = Entry(e.values.copy(), e.grads.copy())
        return out

    def subset(self, prefix: str) -> ParamStore:
        """Entries under ``prefix`` sharing buffers with this store."""
        out = ParamStore(frozen=self.frozen, step=self.step)
        out.entries = {k: e for k, e in self.entries.items() if k.startswith(prefix)}
        return out

    def merged(self, other: ParamStore) -> ParamStore:
        """Union of two stores (shared buffers); names must not clash."""
        out = ParamStore(frozen=self.frozen, step=self.step)
        out.entries = dict(self.entries)
        for k, e in other.entries.items():
            if k in out.entries:
                raise KeyError(f"duplicate parameter {k!r}")
            out.entries[k] = e
        return out

    def equals(self, other: ParamStore) -> bool:
        """Bit-exact equality of names, shapes and values."""
        if list(self.entries) != list(other.entries):
            return False
        return all(self[n].shape == other[n].shape and self[n].tobytes() == other[n].tobytes()
                   for n in self.entries)


class SGD:
    """Plain SGD with heavy-ball momentum: v <- mu v + g; theta <- theta - lr v."""

    def __init__(self, store: ParamStore, lr: float, momentum: float = 0.9,
                 only: Iterable[str] | None = None):
        if store.frozen:
            raise ValueError("cannot optimize a frozen store")
        self.store = store
        self.lr = lr
        self.momentum = momentum
        self.names = list(only) if only is not None else store.names()
        self.velocity = {n: np.zeros_like(store[n]) for n in self.names}

    def step(self) -> None:
        for n in self.names:
            e = self.store.entries[n]
            v = self.velocity[n]
            v *= self.momentum
            v += e.grads
            e.values -= self.lr * v
            _finite(e.values, f"SGD update of {n}")
        self.store.step += 1


def grad_check(fn: Callable[[], Tensor], params: ParamStore, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must rebuild its graph from ``params`` on every call.  The error per
    coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if params.frozen:
        return 0.0
    params.zero_grad()
    fn().backward()
    worst = 0.0
    for name, entry in params.entries.items():
        analytic = entry.grads.copy()
        flat = entry.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn().item()
            flat[i] = orig - eps
            f_minus = fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    params.zero_grad()
    return worst
