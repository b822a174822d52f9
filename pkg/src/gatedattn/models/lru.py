"""Linear recurrent unit (LRU) stacks and their gating variants.

Each layer runs a complex diagonal recurrence
``h_t = lam * h_{t-1} + gamma * (B u_t)`` with
``lam = exp(-exp(nu_log) + i exp(theta_log))`` and ``gamma = exp(gamma_log)``,
reads ``y~_t = Re[C h_t] + D u_t`` and applies a post-block. Complex weights
are stored as separate real and imaginary arrays.

Variants:

* ``glu_out``: ``u = input``; post-block ``sigmoid(A y~) * (B y~)``.
* ``glu_in_out``: an extra GLU on the layer input before the recurrence.
* ``mlp_in_out``: both GLUs replaced by ``B tanh(A z)``, same parameter count.

``mode="linearized"`` turns every GLU into the bilinear gate
``(A z) * (B z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .. import autodiff as ad
from .base import value_of
from .batch import as_inputs

VARIANTS = ("glu_out", "glu_in_out", "mlp_in_out")


@dataclass
class LruLayer:
    nu_log: np.ndarray
    theta_log: np.ndarray
    gamma_log: np.ndarray
    b_re: np.ndarray
    b_im: np.ndarray
    c_re: np.ndarray
    c_im: np.ndarray
    d_skip: np.ndarray
    post_a: np.ndarray
    post_b: np.ndarray
    pre_a: np.ndarray | None = None
    pre_b: np.ndarray | None = None

    @property
    def n_state(self):
        return value_of(self.nu_log).shape[0]

    def lam(self) -> np.ndarray:
        mod = np.exp(-np.exp(value_of(self.nu_log)))
        return mod * np.exp(1j * np.exp(value_of(self.theta_log)))


@dataclass
class LruParams:
    embed: np.ndarray
    layers: list = field(default_factory=list)
    readout: np.ndarray = None
    variant: str = "glu_out"
    mode: str = "standard"
    augmented: bool = False

    arch: ClassVar[str] = "lru"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant != "glu_out" and any(l.pre_a is None for l in self.layers):
            raise ValueError(f"variant {self.variant} needs input-block weights")

    @property
    def d_in(self):
        return value_of(self.embed).shape[1]


def block(z, a, b, kind, mode="standard"):
    if kind == "mlp":
        return ad.linear(ad.tanh(ad.linear(z, a)), b)
    gate = ad.linear(z, a) if mode == "linearized" else ad.sigmoid(ad.linear(z, a))
    return gate * ad.linear(z, b)


def lru_layer_forward(layer: LruLayer, u, variant="glu_out", mode="standard"):
    kind = "mlp" if variant == "mlp_in_out" else "glu"
    if variant != "glu_out":
        u = block(u, layer.pre_a, layer.pre_b, kind, mode)
    mod = ad.exp(-ad.exp(layer.nu_log))
    theta = ad.exp(layer.theta_log)
    lam_re = mod * ad.cos(theta)
    lam_im = mod * ad.sin(theta)
    gamma = ad.exp(layer.gamma_log)
    drive = ad.concat([ad.linear(u, layer.b_re) * gamma, ad.linear(u, layer.b_im) * gamma])
    h = ad.complex_diag_scan(lam_re, lam_im, drive)
    n = layer.n_state
    y_tilde = (ad.linear(h[..., :n], layer.c_re) - ad.linear(h[..., n:], layer.c_im)
               + ad.linear(u, layer.d_skip))
    return block(y_tilde, layer.post_a, layer.post_b, kind, mode)


def lru_forward(p: LruParams, x):
    x = as_inputs(x)
    seq = ad.linear(x, p.embed)
    for layer in p.layers:
        seq = lru_layer_forward(layer, seq, p.variant, p.mode)
    return ad.linear(seq, p.readout)


def doubled_glu(w_m, w_x, eps):
    """Standard-sigmoid GLU weights approximating the bilinear gate.

    Returns ``(a, b, r)`` such that ``r @ (sigmoid(a z) * (b z))`` tends to
    ``(w_m z) * (w_x z)`` as ``eps -> 0``: the first half of the doubled
    units carries the scaled gate, the second half has a zero gate and
    supplies the ``1/2`` offset that ``r`` subtracts.
    """
    w_m = np.asarray(w_m, dtype=float)
    w_x = np.asarray(w_x, dtype=float)
    k = w_m.shape[0]
    a = np.vstack((eps * w_m, np.zeros_like(w_m)))
    b = np.vstack((4.0 / eps * w_x, 4.0 / eps * w_x))
    r = np.hstack((np.eye(k), -np.eye(k)))
    return a, b, r
