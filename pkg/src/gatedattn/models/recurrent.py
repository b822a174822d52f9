"""LSTM and GRU stacks with a linear embedding and a linear readout.

No layer normalization, dropout or skip connections. ``mode="linearized"``
swaps designated nonlinearities for the identity:

* LSTM: the tanh of the candidate and of the cell output, and the sigmoids
  of the input gate ``g`` and output gate ``o``; the forget gate keeps its
  sigmoid.
* GRU: the tanh of the candidate.

A gate bias of ``+inf``/``-inf`` pins that gate to its saturation value
(1/0 for sigmoid gates, +-1 for tanh) in either mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .. import autodiff as ad
from .base import value_of
from .batch import as_inputs

MODES = ("standard", "linearized")


def _identity(z):
    return z


def _saturating(pre, bias, act, saturated):
    """``act(pre + bias)`` where infinite bias entries are pinned to
    ``saturated(bias)`` exactly."""
    b = value_of(bias)
    sat = np.isinf(b)
    if not sat.any():
        return act(pre + bias)
    out = act(pre + np.where(sat, 0.0, b)) * (~sat).astype(float)
    return out + np.where(sat, saturated(b), 0.0)


def _sig_limit(b):
    return (b > 0).astype(float)


def _tanh_limit(b):
    return np.sign(b)


@dataclass
class LstmLayer:
    u_f: np.ndarray
    v_f: np.ndarray
    b_f: np.ndarray
    u_c: np.ndarray
    v_c: np.ndarray
    b_c: np.ndarray
    u_g: np.ndarray
    v_g: np.ndarray
    b_g: np.ndarray
    u_o: np.ndarray
    v_o: np.ndarray
    b_o: np.ndarray

    @property
    def n_cells(self):
        return value_of(self.u_f).shape[0]

    @classmethod
    def zeros(cls, n, d_in):
        z = lambda *s: np.zeros(s)
        return cls(z(n, d_in), z(n, n), z(n), z(n, d_in), z(n, n), z(n),
                   z(n, d_in), z(n, n), z(n), z(n, d_in), z(n, n), z(n))


@dataclass
class LstmParams:
    embed: np.ndarray
    layers: list = field(default_factory=list)
    readout: np.ndarray = None
    mode: str = "standard"
    augmented: bool = False

    arch: ClassVar[str] = "lstm"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def d_in(self):
        return value_of(self.embed).shape[1]


def lstm_forward(p: LstmParams, x):
    x = as_inputs(x)
    lin = p.mode == "linearized"
    tanh_c = _identity if lin else ad.tanh
    sig_go = _identity if lin else ad.sigmoid
    seq = ad.linear(x, p.embed)
    steps = value_of(x).shape[1]
    for layer in p.layers:
        n = layer.n_cells
        h = np.zeros(value_of(x).shape[:1] + (n,))
        c = h
        outs = []
        for t in range(steps):
            xt = seq[:, t]
            f = _saturating(ad.linear(xt, layer.u_f) + ad.linear(h, layer.v_f), layer.b_f,
                            ad.sigmoid, _sig_limit)
            cand = _saturating(ad.linear(xt, layer.u_c) + ad.linear(h, layer.v_c), layer.b_c,
                               tanh_c, _tanh_limit)
            g = _saturating(ad.linear(xt, layer.u_g) + ad.linear(h, layer.v_g), layer.b_g,
                            sig_go, _sig_limit)
            o = _saturating(ad.linear(xt, layer.u_o) + ad.linear(h, layer.v_o), layer.b_o,
                            sig_go, _sig_limit)
            c = f * c + g * cand
            h = o * tanh_c(c)
            ad._guard(value_of(c), t)
            outs.append(h)
        seq = ad.stack(outs, axis=1)
    return ad.linear(seq, p.readout)


@dataclass
class GruLayer:
    u_r: np.ndarray
    v_r: np.ndarray
    b_r: np.ndarray
    u_h: np.ndarray
    v_h: np.ndarray
    b_h: np.ndarray
    u_z: np.ndarray
    v_z: np.ndarray
    b_z: np.ndarray

    @property
    def n_cells(self):
        return value_of(self.u_r).shape[0]


@dataclass
class GruParams:
    embed: np.ndarray
    layers: list = field(default_factory=list)
    readout: np.ndarray = None
    mode: str = "standard"
    augmented: bool = False

    arch: ClassVar[str] = "gru"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def d_in(self):
        return value_of(self.embed).shape[1]


def gru_forward(p: GruParams, x):
    x = as_inputs(x)
    act = _identity if p.mode == "linearized" else ad.tanh
    seq = ad.linear(x, p.embed)
    steps = value_of(x).shape[1]
    for layer in p.layers:
        h = np.zeros(value_of(x).shape[:1] + (layer.n_cells,))
        outs = []
        for t in range(steps):
            xt = seq[:, t]
            r = _saturating(ad.linear(xt, layer.u_r) + ad.linear(h, layer.v_r), layer.b_r,
                            ad.sigmoid, _sig_limit)
            cand = _saturating(ad.linear(xt, layer.u_h) + ad.linear(r * h, layer.v_h),
                               layer.b_h, act, _tanh_limit)
            z = _saturating(ad.linear(xt, layer.u_z) + ad.linear(h, layer.v_z), layer.b_z,
                            ad.sigmoid, _sig_limit)
            h = (1.0 - z) * h + z * cand
            ad._guard(value_of(h), t)
            outs.append(h)
        seq = ad.stack(outs, axis=1)
    return ad.linear(seq, p.readout)
