"""Causal linear self-attention and its decayed variant."""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from ..errors import ShapeError
from .batch import as_inputs


@dataclass
class AttentionParams:
    w_v: np.ndarray
    w_k: np.ndarray
    w_q: np.ndarray

    arch: ClassVar[str] = "lsa"

    def __post_init__(self):
        self.w_v, self.w_k, self.w_q = (np.asarray(w, dtype=np.float64)
                                        for w in (self.w_v, self.w_k, self.w_q))
        d = self.w_v.shape[0]
        for w in (self.w_v, self.w_k, self.w_q):
            if w.shape != (d, d):
                raise ShapeError(f"attention weights must share a square shape, got {w.shape}")

    @property
    def d(self) -> int:
        return self.w_v.shape[0]


def lsa_forward(p: AttentionParams, x) -> np.ndarray:
    """Stream the fast-weight recursion ``W_t = W_{t-1} + v_t k_t^T`` and
    read out ``y_t = W_t q_t``. Cost O(T d^2) time and O(d^2) state."""
    x = as_inputs(x)
    if x.shape[-1] != p.d:
        raise ShapeError(f"input width {x.shape[-1]} != attention width {p.d}")
    v = x @ p.w_v.T
    k = x @ p.w_k.T
    q = x @ p.w_q.T
    batch, steps, d = x.shape
    w_ff = np.zeros((batch, d, d))
    y = np.empty_like(x)
    for t in range(steps):
        w_ff += v[:, t, :, None] * k[:, t, None, :]
        y[:, t] = np.einsum("bij,bj->bi", w_ff, q[:, t])
    return y


@dataclass
class DecayedAttentionParams:
    """Linear attention with biases and per-row geometric forgetting.

    Row ``i`` of the fast-weight matrix is multiplied by ``1 - gamma[i]``
    before each new outer product is added.
    """

    w_v: np.ndarray
    w_k: np.ndarray
    w_q: np.ndarray
    b_v: np.ndarray
    b_k: np.ndarray
    b_q: np.ndarray
    gamma: np.ndarray

    arch: ClassVar[str] = "decayed_lsa"

    def __post_init__(self):
        for name in ("w_v", "w_k", "w_q", "b_v", "b_k", "b_q", "gamma"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.gamma < 0) or np.any(self.gamma > 1):
            raise ValueError("gamma entries must lie in [0, 1]")

    @property
    def d(self) -> int:
        return self.w_v.shape[0]


def decayed_lsa_forward(p: DecayedAttentionParams, x) -> np.ndarray:
    x = as_inputs(x)
    v = x @ p.w_v.T + p.b_v
    k = x @ p.w_k.T + p.b_k
    q = x @ p.w_q.T + p.b_q
    batch, steps, _ = x.shape
    keep = (1.0 - p.gamma)[:, None]
    w_ff = np.zeros((batch, v.shape[-1], k.shape[-1]))
    y = np.empty((batch, steps, v.shape[-1]))
    for t in range(steps):
        w_ff = keep * w_ff + v[:, t, :, None] * k[:, t, None, :]
        y[:, t] = np.einsum("bij,bj->bi", w_ff, q[:, t])
    return y
