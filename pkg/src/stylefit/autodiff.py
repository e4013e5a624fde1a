"""Dense float64 tensors with tape-based reverse-mode differentiation.

The op surface is deliberately small: exactly what the fixed encoder /
embedder architectures and their losses need. Everything is float64 so
gradient checks are limited by the method, not the precision. Broadcasting
is restricted to two sanctioned cases: bias-add (row vector over matrix
rows) and nothing else; all other ops require exact shape agreement.

Recording is opt-in: ops executed while a ``Tape`` is active (``with
Tape() as tape``) register a backward rule; without an active tape they
are plain numpy computations, which makes frozen-parameter inference
cheap and safe to run from multiple threads.
"""

from __future__ import annotations

import hashlib
import json
import threading
from typing import Iterable, Sequence

import numpy as np

CHECKPOINT_FORMAT = "stylefit.checkpoint.v1"


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class ContractError(RuntimeError):
    """An operation precondition was violated by the caller."""


_ACTIVE = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_ACTIVE, "tape", None)


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    ``grad`` accumulates across backward passes until explicitly cleared
    (``zero_grad``), so summed losses and separate backward calls compose
    linearly.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Tape:
    """Ordered record of executed differentiable operations.

    Entries are appended in execution order, which is a topological order
    of the computation by construction; ``backward`` replays them exactly
    once in reverse.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, callable]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise ContractError("a Tape is already active on this thread")
        _ACTIVE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE.tape = None

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, out: Tensor, pull) -> None:
        self._entries.append((out, pull))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor reachable from ``loss``."""
        if loss.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._produced:
            raise ContractError("loss tensor was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for out, pull in reversed(self._entries):
            if out.grad is None:
                continue
            pull(out.grad)


def backward(loss: Tensor, tape: Tape) -> None:
    tape.backward(loss)


def zero_grads(params: Iterable[Tensor] | dict) -> None:
    tensors = params.values() if isinstance(params, dict) else params
    for t in tensors:
        t.zero_grad()


def _record(out: Tensor, pull) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        tape.record(out, pull)
    return out


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts matrix + row vector (bias-add)."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)

        def pull(g):
            a.accumulate_grad(g)
            b.accumulate_grad(g)

        return _record(out, pull)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        out = Tensor(a.data + b.data)

        def pull(g):
            a.accumulate_grad(g)
            b.accumulate_grad(g.sum(axis=0))

        return _record(out, pull)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data - b.data)

    def pull(g):
        a.accumulate_grad(g)
        b.accumulate_grad(-g)

    return _record(out, pull)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def pull(g):
        a.accumulate_grad(-g)

    return _record(out, pull)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data * b.data)

    def pull(g):
        a.accumulate_grad(g * b.data)
        b.accumulate_grad(g * a.data)

    return _record(out, pull)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (not a differentiable operand)."""
    c = float(c)
    out = Tensor(a.data * c)

    def pull(g):
        a.accumulate_grad(g * c)

    return _record(out, pull)


def add_const(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + float(c))

    def pull(g):
        a.accumulate_grad(g)

    return _record(out, pull)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree ({a.shape} x {b.shape})")
    out = Tensor(a.data @ b.data)

    def pull(g):
        a.accumulate_grad(g @ b.data.T)
        b.accumulate_grad(a.data.T @ g)

    return _record(out, pull)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-d tensor, got {a.shape}")
    out = Tensor(a.data.T.copy())

    def pull(g):
        a.accumulate_grad(g.T)

    return _record(out, pull)


# ---------------------------------------------------------------------------
# nonlinearities and reductions


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))

    def pull(g):
        a.accumulate_grad(g * out.data)

    return _record(out, pull)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def pull(g):
        a.accumulate_grad(g / a.data)

    return _record(out, pull)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def pull(g):
        a.accumulate_grad(g * (a.data > 0.0))

    return _record(out, pull)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along ``axis``; rows sum to one."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))

    def pull(g):
        s = out.data
        inner = (g * s).sum(axis=axis, keepdims=True)
        a.accumulate_grad(s * (g - inner))

    return _record(out, pull)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse)

    def pull(g):
        soft = np.exp(out.data)
        a.accumulate_grad(g - soft * g.sum(axis=axis, keepdims=True))

    return _record(out, pull)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    n = a.data.size if axis is None else a.data.shape[axis]

    def pull(g):
        if axis is None:
            a.accumulate_grad(np.full_like(a.data, float(g) / n))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(gg / n, a.data.shape).copy())

    return _record(out, pull)


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def pull(g):
        if axis is None:
            a.accumulate_grad(np.full_like(a.data, float(g)))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(gg, a.data.shape).copy())

    return _record(out, pull)


# ---------------------------------------------------------------------------
# shape manipulation


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def pull(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate_grad(g[tuple(idx)])

    return _record(out, pull)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` elements along ``axis``."""
    if start < 0 or start + length > a.data.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}) outside axis {axis} of {a.shape}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    out = Tensor(a.data[tuple(idx)].copy())

    def pull(g):
        full = np.zeros_like(a.data)
        full[tuple(idx)] = g
        a.accumulate_grad(full)

    return _record(out, pull)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def pull(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return _record(out, pull)


# ---------------------------------------------------------------------------
# fused ops


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row (last axis) to zero mean / unit variance, then scale."""
    n = a.data.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm gain/bias must match the last axis")
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = Tensor(xhat * gain.data + bias.data)

    def pull(g):
        axes = tuple(range(g.ndim - 1))
        gain.accumulate_grad((g * xhat).sum(axis=axes))
        bias.accumulate_grad(g.sum(axis=axes))
        gx = g * gain.data
        a.accumulate_grad(
            inv
            * (
                gx
                - gx.mean(axis=-1, keepdims=True)
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            )
        )

    return _record(out, pull)


def squared_distance(a: Tensor, b: Tensor) -> Tensor:
    """Sum of squared differences (scalar output)."""
    if a.shape != b.shape:
        raise ShapeError(f"squared_distance: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    out = Tensor(np.sum(diff * diff))

    def pull(g):
        a.accumulate_grad(2.0 * float(g) * diff)
        b.accumulate_grad(-2.0 * float(g) * diff)

    return _record(out, pull)


def l2_distance(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distance; gradient defined as 0 at coincident points."""
    if a.shape != b.shape:
        raise ShapeError(f"l2_distance: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    dist = float(np.sqrt(np.sum(diff * diff)))
    out = Tensor(dist)

    def pull(g):
        if dist == 0.0:
            return
        a.accumulate_grad(float(g) * diff / dist)
        b.accumulate_grad(-float(g) * diff / dist)

    return _record(out, pull)


# ---------------------------------------------------------------------------
# parameter plumbing


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def params_checksum(params: dict[str, Tensor]) -> str:
    """Order-independent digest of parameter names and values."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


def save_checkpoint(path, params: dict[str, Tensor], config: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": config or {},
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path, requires_grad: bool = False) -> tuple[dict[str, Tensor], dict]:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(
            f"unsupported checkpoint format {payload.get('format')!r} in {path}"
        )
    params = {}
    for name, rec in payload["params"].items():
        arr = np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        params[name] = Tensor(arr, requires_grad=requires_grad)
    return params, payload.get("config", {})
