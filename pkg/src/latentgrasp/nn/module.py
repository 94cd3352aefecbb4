from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Holds named parameters plus non-trainable buffers (normalization stats, weights)."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def linear(self, name: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
        std = np.sqrt(2.0 / n_in)
        self.add_param(f"{name}.w", rng.normal(0.0, std, (n_out, n_in)))
        self.add_param(f"{name}.b", np.zeros(n_out))

    def conv(self, name: str, c_in: int, c_out: int, rng: np.random.Generator) -> None:
        std = np.sqrt(2.0 / (c_in * 27))
        self.add_param(f"{name}.w", rng.normal(0.0, std, (c_out, c_in, 3, 3, 3)))
        self.add_param(f"{name}.b", np.zeros(c_out))

    def fc(self, name: str, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self._params[f"{name}.w"], self._params[f"{name}.b"])

    def conv3d(self, name: str, x: Tensor) -> Tensor:
        return ops.conv3d(x, self._params[f"{name}.w"], self._params[f"{name}.b"])

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"param.{k}": v.data.copy() for k, v in self._params.items()}
        out.update({f"buffer.{k}": np.asarray(v, dtype=np.float64).copy() for k, v in self._buffers.items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        want = set(self.state_dict())
        if set(state) != want:
            missing = sorted(want - set(state))
            extra = sorted(set(state) - want)
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, v in state.items():
            kind, name = k.split(".", 1)
            if kind == "param":
                if v.shape != self._params[name].shape:
                    raise ValueError(f"{name}: shape {v.shape} != {self._params[name].shape}")
                self._params[name].data = np.array(v, dtype=np.float64)
            else:
                self._buffers[name] = np.array(v, dtype=np.float64)

    @contextmanager
    def frozen(self) -> Iterator["Module"]:
        """Parameters stop requiring grad inside the block; gradients still pass through."""
        flags = {k: p.requires_grad for k, p in self._params.items()}
        for p in self._params.values():
            p.requires_grad = False
        try:
            yield self
        finally:
            for k, p in self._params.items():
                p.requires_grad = flags[k]
