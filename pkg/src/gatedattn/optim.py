"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RECURRENT_NAMES = ("lambda_raw", "nu_log", "theta_log", "a_rec")


def cosine_lr(step: int, total_steps: int, lr0: float = 1e-3, lr_min: float = 1e-6) -> float:
    """Half-cosine anneal from ``lr0`` at step 0 to ``lr_min`` at ``total_steps``."""
    if total_steps <= 0:
        return lr0
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr_min + (lr0 - lr_min) * 0.5 * (1.0 + math.cos(math.pi * frac))


def is_recurrent(name: str) -> bool:
    return name.rsplit(".", 1)[-1] in RECURRENT_NAMES


@dataclass
class OptimState:
    lr0: float = 1e-3
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 1
    exempt: frozenset = frozenset()
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, **hyper) -> "OptimState":
        exempt = hyper.pop("exempt", None)
        if exempt is None:
            exempt = frozenset(k for k in params if is_recurrent(k))
        return cls(exempt=frozenset(exempt), **hyper)

    def lr(self) -> float:
        return cosine_lr(self.step, self.total_steps, self.lr0, self.lr_min)


def adamw_step(params: dict, grads: dict, state: OptimState, lr: float | None = None):
    """One AdamW update; returns ``(new_params, state)``.

    ``p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`` with the decay
    term skipped for names in ``state.exempt``. ``lr`` defaults to the
    schedule value at the current step.
    """
    lr = state.lr() if lr is None else lr
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - state.beta1) * g if m is None else state.beta1 * m + (1 - state.beta1) * g
        v = (1 - state.beta2) * g * g if v is None else state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if name not in state.exempt and state.weight_decay:
            update = update + state.weight_decay * p
        out[name] = p - lr * update
    state.step = t
    return out, state
