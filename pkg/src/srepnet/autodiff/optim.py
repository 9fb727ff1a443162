"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update.  Returns new parameter arrays; ``state`` is updated in place."""
    state.step += 1
    t = state.step
    updated = {}
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        m = beta1 * state.m.get(name, np.zeros_like(w)) + (1 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(w)) + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        updated[name] = w - lr * mhat / (np.sqrt(vhat) + eps)
    return updated, state


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        values = {p.name: p.data for p in self.params}
        grads = {p.name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for p in self.params}
        new, _ = adam_step(values, grads, self.state, self.lr, *self.betas, self.eps)
        for p in self.params:
            p.data = new[p.name]
