"""Central finite-difference checks against the reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckResult:
    checked: int
    rel_ok: int
    abs_ok: int
    worst_rel: float
    kinks: int = 0

    @property
    def smooth(self) -> int:
        return self.checked - self.kinks

    @property
    def passed(self) -> bool:
        # >= 99% within relative tolerance and everything else within absolute;
        # stencils straddling a kink are not a valid finite-difference probe
        return self.rel_ok >= 0.99 * self.smooth and self.rel_ok + self.abs_ok == self.smooth


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    *,
    step: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-6,
    max_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    for p in params:
        p.grad = None  # parameters off this graph must read as zero, not a stale gradient
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    checked = rel_ok = abs_ok = kinks = 0
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_per_param, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            num = (up - down) / (2 * step)
            a = ga.reshape(-1)[i]
            rel = _rel(a, num)
            checked += 1
            if rel < rel_tol:
                rel_ok += 1
            elif abs(a - num) < abs_tol:
                abs_ok += 1
            elif _straddles_kink(a, up, loss_fn().item(), down, step, rel_tol):
                kinks += 1
                continue
            worst = max(worst, rel)
    return GradCheckResult(checked, rel_ok, abs_ok, worst, kinks)


def _rel(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    return abs(a - b) / denom if denom > 0 else 0.0


def _straddles_kink(a: float, up: float, mid: float, down: float, step: float, rel_tol: float) -> bool:
    # one-sided slopes disagree and the analytic value matches one of them
    left, right = (mid - down) / step, (up - mid) / step
    return _rel(left, right) > 10 * rel_tol and min(_rel(a, left), _rel(a, right)) < 10 * rel_tol
