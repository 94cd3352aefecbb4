"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are appended to it in
order; :func:`backward` walks the tape in reverse. Outside a tape nothing is
recorded, which is the fast path used for inference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and min(arr.shape) <= 0:
            raise ValueError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar, all routed through recorded ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _wrap(other))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(_wrap(other), self)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __pow__(self, p):
        from . import ops
        if p != 2:
            raise NotImplementedError("only squaring is supported")
        return ops.mul(self, self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Op:
    """A primitive: ``forward`` caches what ``backward`` needs on ``self``."""

    name = "op"

    def forward(self, *xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError


@dataclass
class Record:
    op: Op
    inputs: tuple[Tensor, ...]
    output: Tensor


@dataclass
class Tape:
    """The computation record: primitives in execution order."""

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def replay(self) -> list[np.ndarray]:
        """Re-run every recorded op on its recorded inputs; returns the outputs."""
        outs = []
        for rec in self.records:
            out = rec.op.forward(*(t.data for t in rec.inputs))
            outs.append(out)
        return outs


def recording() -> bool:
    return bool(_ACTIVE)


def apply(op: Op, *inputs: Tensor) -> Tensor:
    out = Tensor(op.forward(*(t.data for t in inputs)))
    if _ACTIVE and any(_tracked(t) for t in inputs):
        if hasattr(op, "need_input_grad"):
            op.need_input_grad = inputs[0].requires_grad
        out.requires_grad = True
        _ACTIVE[-1].records.append(Record(op, inputs, out))
    return out


def _tracked(t: Tensor) -> bool:
    return t.requires_grad


def backward(tape: Tape, loss: Tensor, visit: Callable[[Record], None] | None = None) -> dict[int, np.ndarray]:
    """Reverse-mode sweep over ``tape`` seeded at the scalar ``loss``.

    Leaf tensors with ``requires_grad`` get ``.grad`` overwritten (not
    accumulated across calls), so two calls give identical results. Returns
    a mapping ``id(tensor) -> gradient`` for those leaves.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(r.output) for r in tape.records}
    if id(loss) not in produced:
        raise ValueError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        if visit is not None:
            visit(rec)
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.op.backward(g)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = t
    out = {}
    for key, t in leaves.items():
        g = grads.get(key, np.zeros_like(t.data))
        t.grad = g
        out[key] = g
    return out
