from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")


def _check(params: list[Tensor], grads: list[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {p.name or i}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name or i}")


class SGD:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = list(params)
        self.state = OptimizerState(lr)

    def step(self, grads: list[np.ndarray]) -> None:
        _check(self.params, grads)
        for p, g in zip(self.params, grads):
            p.data = p.data - self.state.lr * g
        self.state.step += 1


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(lr)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, grads: list[np.ndarray]) -> None:
        _check(self.params, grads)
        st = self.state
        st.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**st.step
        c2 = 1.0 - b2**st.step
        for i, (p, g) in enumerate(zip(self.params, grads)):
            st.m[i] = b1 * st.m[i] + (1 - b1) * g
            st.v[i] = b2 * st.v[i] + (1 - b2) * g * g
            p.data = p.data - st.lr * (st.m[i] / c1) / (np.sqrt(st.v[i] / c2) + self.eps)
