"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation computes its forward value eagerly with numpy and, while
gradients are enabled, records its parents and a local gradient rule.
A Tape owns the named parameters and drives the backward pass; gradient
evaluation visits each recorded operation exactly once in reverse
topological order. Reduction orders are fixed, so forward values are
bit-stable run to run.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording (pure inference / finite differences)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float64 array plus its recorded provenance."""

    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.bwd: Callable[[np.ndarray], None] | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data, parents: tuple[Tensor, ...], bwd) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.bwd = bwd
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and structural operations


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, -_unbroadcast(g, b.shape))

    return _result(data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _acc(a, -g)

    return _result(-a.data, (a,), bwd)


def scale(a: Tensor, factor) -> Tensor:
    """Multiply by a constant (scalar or ndarray); no gradient into factor."""
    factor = np.asarray(factor, dtype=np.float64)

    def bwd(g):
        _acc(a, _unbroadcast(g * factor, a.shape))

    return _result(a.data * factor, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} misaligned")

        def bwd(g):
            _acc(a, g @ bd.T)
            _acc(b, ad.T @ g)

    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} misaligned")

        def bwd(g):
            _acc(a, bd @ g)
            _acc(b, np.outer(ad, g))

    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} misaligned")

        def bwd(g):
            _acc(a, np.outer(g, bd))
            _acc(b, ad.T @ g)

    else:
        raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    return _result(ad @ bd, (a, b), bwd)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat: empty input")
    sizes = [p.data.shape[axis] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def bwd(g):
        offset = 0
        for p, size in zip(parts, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _acc(p, g[tuple(index)])
            offset += size

    return _result(data, tuple(parts), bwd)


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 1-D vectors into a (len, d) matrix."""
    if not parts:
        raise ShapeError("stack_rows: empty input")
    data = np.stack([p.data for p in parts], axis=0)

    def bwd(g):
        for i, p in enumerate(parts):
            _acc(p, g[i])

    return _result(data, tuple(parts), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[index] += g

    return _result(a.data[index].copy(), (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bwd(g):
        _acc(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, g)

    return _result(a.data[idx], (a,), bwd)


def embed(table: Tensor, ids) -> Tensor:
    """Look up embedding rows for integer ids."""
    return gather_rows(table, ids)


def segment_sum(a: Tensor, segments, n_segments: int) -> Tensor:
    """Sum rows of `a` into `n_segments` buckets; empty buckets are zero."""
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((n_segments,) + a.data.shape[1:], dtype=np.float64)
    np.add.at(out, segments, a.data)

    def bwd(g):
        _acc(a, g[segments])

    return _result(out, (a,), bwd)


def mean_pool(a: Tensor) -> Tensor:
    """Element-wise mean over a stack of row vectors: (m, d) -> (d,)."""
    if a.data.ndim != 2:
        raise ShapeError(f"mean_pool: expected 2-D stack, got shape {a.shape}")
    m = a.data.shape[0]

    def bwd(g):
        _acc(a, np.broadcast_to(g / m, a.data.shape))

    return _result(a.data.mean(axis=0), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        _acc(a, g * s * (1.0 - s))

    return _result(s, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def bwd(g):
        _acc(a, g * (1.0 - t * t))

    return _result(t, (a,), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        _acc(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _result(s, (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - logz

    def bwd(g):
        _acc(a, g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _result(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _acc(a, np.broadcast_to(g, a.data.shape).copy())

    return _result(a.data.sum(), (a,), bwd)


def take_per_row(a: Tensor, idx) -> Tensor:
    """a[(i, idx[i])] for each row i: (m, n) with (m,) ints -> (m,)."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.shape != (a.data.shape[0],):
        raise ShapeError(f"take_per_row: shapes {a.shape} and {idx.shape} misaligned")
    rows = np.arange(a.data.shape[0])

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (rows, idx), g)

    return _result(a.data[rows, idx], (a,), bwd)


# ---------------------------------------------------------------------------
# Recurrent cells


@dataclass(frozen=True)
class LstmParams:
    """Fused gate parameters: w is (input+hidden, 4*hidden) for i, f, g, o."""

    w: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.w.shape[1] // 4


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams) -> tuple[Tensor, Tensor]:
    """One step of the standard LSTM recurrence. Inputs may be single
    vectors or (batch, dim) matrices."""
    hidden = params.hidden
    z = add(matmul(concat([x, h_prev], axis=-1), params.w), params.b)
    i = sigmoid(narrow(z, -1, 0, hidden))
    f = sigmoid(narrow(z, -1, hidden, hidden))
    g = tanh(narrow(z, -1, 2 * hidden, hidden))
    o = sigmoid(narrow(z, -1, 3 * hidden, hidden))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


@dataclass(frozen=True)
class GruParams:
    """Gate parameters: w_gates is (input+hidden, 2*hidden) for r, z."""

    w_gates: Tensor
    b_gates: Tensor
    w_x: Tensor
    w_h: Tensor
    b_h: Tensor

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]


def gru_cell(x: Tensor, h_prev: Tensor, params: GruParams) -> Tensor:
    """One gated-recurrent-unit update: h' = (1-z) * h + z * candidate."""
    hidden = params.hidden
    rz = sigmoid(add(matmul(concat([x, h_prev], axis=-1), params.w_gates), params.b_gates))
    r = narrow(rz, -1, 0, hidden)
    z = narrow(rz, -1, hidden, hidden)
    cand = tanh(add(add(matmul(x, params.w_x), matmul(mul(r, h_prev), params.w_h)), params.b_h))
    return add(h_prev, mul(z, sub(cand, h_prev)))


# ---------------------------------------------------------------------------
# Tape: parameter registry + backward driver


class Tape:
    """Owns named parameters and runs reverse-mode differentiation."""

    def __init__(self, seed: int = 0):
        self.params: dict[str, Tensor] = {}
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def param(self, name: str, shape: tuple[int, ...], init: str = "auto") -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter '{name}' already registered")
        if init == "auto":
            init = "glorot" if len(shape) == 2 else "zeros"
        if init == "glorot":
            fan_in, fan_out = shape[0], shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            raise ValueError(f"unknown init '{init}'")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Accumulate d(loss)/d(param) for every parameter. Parameters the
        loss does not reach get zero gradients."""
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad += np.ones_like(loss.data)
        for node in reversed(topo):
            if node.bwd is not None:
                node.bwd(node.grad)
        out = {}
        for name, p in self.params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            out[name] = p.grad
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)[:4]}")
        for name, p in self.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"parameter '{name}': checkpoint shape {arr.shape} != model shape {p.data.shape}"
                )
            p.data = arr.copy()


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam with global gradient-norm clipping."""

    def __init__(
        self,
        tape: Tape,
        learning_rate: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float = 5.0,
    ):
        self.tape = tape
        self.learning_rate = learning_rate
        self.betas = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in tape.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in tape.params.items()}

    def step(self) -> float:
        """Apply one update from accumulated gradients; returns the
        pre-clip global gradient norm."""
        items = [
            (name, p, p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.tape.params.items()
        ]
        total = 0.0
        for _, _, g in items:
            total += float((g * g).sum())
        gnorm = math.sqrt(total)
        factor = self.clip_norm / gnorm if self.clip_norm and gnorm > self.clip_norm else 1.0

        self.t += 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p, g in items:
            if factor != 1.0:
                g = g * factor
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data = p.data - self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return gnorm


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(params: Mapping[str, Tensor | np.ndarray], path: str, extra: Mapping | None = None) -> None:
    doc: dict = {"version": 1, "params": {}}
    for name in sorted(params):
        p = params[name]
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        doc["params"][name] = {"shape": list(data.shape), "data": data.reshape(-1).tolist()}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    params = {
        name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in doc["params"].items()
    }
    extra = {k: v for k, v in doc.items() if k not in ("version", "params")}
    return params, extra
