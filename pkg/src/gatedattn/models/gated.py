"""Gated diagonal linear RNNs: input/output gating, side gating, and the
dense-recurrence variant.

Timing convention: ``y_t`` is read from the hidden state that has already
absorbed ``x_t``, i.e. ``h_t = lam * h_{t-1} + g_in(x_t)`` and
``y_t = D g_out(h_t)`` with ``h_0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .. import autodiff as ad
from ..errors import ShapeError
from .base import value_of
from .batch import as_inputs

LAMBDA_MODES = ("raw", "clamped01")


def decode_lambda(raw, mode="raw"):
    """``raw`` mode: ``lam = exp(-exp(nu_log))``; ``clamped01``: the stored
    values are the recurrence weights themselves, clipped to [0, 1]."""
    if mode == "raw":
        return ad.exp(-ad.exp(raw))
    if mode == "clamped01":
        return np.clip(value_of(raw), 0.0, 1.0)
    raise ValueError(f"unknown lambda mode {mode!r}")


def encode_lambda(lam) -> np.ndarray:
    """Inverse of the exponential parametrization for lam in (0, 1)."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise ValueError("exponential parametrization needs 0 < lambda < 1")
    return np.log(-np.log(lam))


def _gate(x, w_m, w_x):
    return ad.linear(x, w_m) * ad.linear(x, w_x)


@dataclass
class GatedRnnParams:
    w_m_in: np.ndarray
    w_x_in: np.ndarray
    lambda_raw: np.ndarray
    w_m_out: np.ndarray
    w_x_out: np.ndarray
    d_readout: np.ndarray
    lambda_mode: str = "raw"
    augmented: bool = False

    arch: ClassVar[str] = "gated_rnn"

    def __post_init__(self):
        n, d_in = value_of(self.w_m_in).shape
        m = value_of(self.w_m_out).shape[0]
        checks = {"w_x_in": (n, d_in), "lambda_raw": (n,), "w_m_out": (m, n),
                  "w_x_out": (m, n)}
        for name, shape in checks.items():
            if value_of(getattr(self, name)).shape != shape:
                raise ShapeError(f"{name} has shape {value_of(getattr(self, name)).shape}, "
                                 f"expected {shape}")
        if value_of(self.d_readout).shape[1] != m:
            raise ShapeError("readout columns must match gated outputs")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"lambda_mode must be one of {LAMBDA_MODES}")

    @property
    def n_hidden(self):
        return value_of(self.w_m_in).shape[0]

    @property
    def n_gated(self):
        return value_of(self.w_m_out).shape[0]

    @property
    def d_in(self):
        return value_of(self.w_m_in).shape[1]

    @property
    def d_out(self):
        return value_of(self.d_readout).shape[0]

    def lam(self) -> np.ndarray:
        return value_of(decode_lambda(value_of(self.lambda_raw), self.lambda_mode))


def gated_rnn_forward(p: GatedRnnParams, x, lambda_mode: str | None = None):
    """Return ``(outputs, hidden_trace)``, both (B, T, ·)."""
    x = as_inputs(x)
    if value_of(x).shape[-1] != p.d_in:
        raise ShapeError(f"input width {value_of(x).shape[-1]} != {p.d_in}")
    lam = decode_lambda(p.lambda_raw, lambda_mode or p.lambda_mode)
    h = ad.diag_scan(lam, _gate(x, p.w_m_in, p.w_x_in))
    y = ad.linear(_gate(h, p.w_m_out, p.w_x_out), p.d_readout)
    return y, h


@dataclass
class SideGatedRnnParams:
    """Output is ``D ((W_side x_t) * h_t)``."""

    w_m_in: np.ndarray
    w_x_in: np.ndarray
    lambda_raw: np.ndarray
    w_side: np.ndarray
    d_readout: np.ndarray
    lambda_mode: str = "raw"
    augmented: bool = False

    arch: ClassVar[str] = "side_gated_rnn"

    def __post_init__(self):
        n, d_in = value_of(self.w_m_in).shape
        for name, shape in {"w_x_in": (n, d_in), "lambda_raw": (n,),
                            "w_side": (n, d_in)}.items():
            if value_of(getattr(self, name)).shape != shape:
                raise ShapeError(f"{name} has shape {value_of(getattr(self, name)).shape}, "
                                 f"expected {shape}")
        if value_of(self.d_readout).shape[1] != n:
            raise ShapeError("readout columns must match hidden units")

    @property
    def n_hidden(self):
        return value_of(self.w_m_in).shape[0]

    @property
    def d_in(self):
        return value_of(self.w_m_in).shape[1]

    @property
    def d_out(self):
        return value_of(self.d_readout).shape[0]

    def lam(self):
        return value_of(decode_lambda(value_of(self.lambda_raw), self.lambda_mode))


def side_gated_rnn_forward(p: SideGatedRnnParams, x, lambda_mode: str | None = None):
    x = as_inputs(x)
    lam = decode_lambda(p.lambda_raw, lambda_mode or p.lambda_mode)
    h = ad.diag_scan(lam, _gate(x, p.w_m_in, p.w_x_in))
    y = ad.linear(ad.linear(x, p.w_side) * h, p.d_readout)
    return y, h


@dataclass
class DenseGatedRnnParams:
    """Gated RNN whose recurrence is a full matrix: ``h_t = A h_{t-1} + g_in(x_t)``."""

    w_m_in: np.ndarray
    w_x_in: np.ndarray
    a_rec: np.ndarray
    w_m_out: np.ndarray
    w_x_out: np.ndarray
    d_readout: np.ndarray
    augmented: bool = False

    arch: ClassVar[str] = "dense_gated_rnn"

    def __post_init__(self):
        n = value_of(self.w_m_in).shape[0]
        if value_of(self.a_rec).shape != (n, n):
            raise ShapeError("recurrence matrix must be (n, n)")

    @property
    def n_hidden(self):
        return value_of(self.w_m_in).shape[0]

    @property
    def d_in(self):
        return value_of(self.w_m_in).shape[1]

    @property
    def d_out(self):
        return value_of(self.d_readout).shape[0]


def dense_gated_rnn_forward(p: DenseGatedRnnParams, x):
    x = as_inputs(x)
    h = ad.dense_scan(p.a_rec, _gate(x, p.w_m_in, p.w_x_in))
    y = ad.linear(_gate(h, p.w_m_out, p.w_x_out), p.d_readout)
    return y, h
