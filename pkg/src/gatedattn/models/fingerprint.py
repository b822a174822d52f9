"""Exact polynomial of a network's single-token (instantaneous) map.

For the architectures built only from linear maps and elementwise products
the response to a lone token, starting from zero state, is a polynomial in
the token coordinates. Propagating one polynomial per coordinate through the
layers yields it exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import NotPolynomialError
from ..poly import PolyVector
from .attention import AttentionParams
from .base import value_of
from .gated import DenseGatedRnnParams, GatedRnnParams, SideGatedRnnParams
from .lru import LruParams
from .recurrent import GruParams, LstmParams


def _lin(w, p: PolyVector) -> PolyVector:
    return value_of(w) @ p


def _affine(w, b, p: PolyVector) -> PolyVector:
    out = _lin(w, p)
    return PolyVector(q + float(bi) for q, bi in zip(out, value_of(b)))


def _gate_poly(w, b, p: PolyVector, linear: bool) -> PolyVector:
    """Linearized gate; infinite-bias rows collapse to their saturation constant."""
    b = value_of(b)
    sat = np.isinf(b)
    if not linear and not np.all(sat):
        raise NotPolynomialError("standard-mode gate is not polynomial")
    out = _affine(w, np.where(sat, 0.0, b), p)
    comps = []
    for q, s, bi in zip(out, sat, b):
        comps.append(q.scale(0.0) + (1.0 if bi > 0 else 0.0) if s else q)
    return PolyVector(comps)


def _cand_poly(w, b, p, linear):
    b = value_of(b)
    sat = np.isinf(b)
    if not linear and not np.all(sat):
        raise NotPolynomialError("standard-mode tanh is not polynomial")
    out = _affine(w, np.where(sat, 0.0, b), p)
    return PolyVector(q.scale(0.0) + float(np.sign(bi)) if s else q
                      for q, s, bi in zip(out, sat, b))


def instantaneous_fingerprint(model, max_degree: int = 4, augmented: bool | None = None):
    """Polynomial map of a single token through ``model``.

    With ``augmented`` (defaulting to the model's own flag) the trailing
    input coordinate is a constant 1: it is substituted and removed, so the
    result is a polynomial in the original token coordinates.
    """
    if augmented is None:
        augmented = bool(getattr(model, "augmented", False))
    d_in = _input_width(model)
    x = PolyVector.variables(d_in)
    y = _propagate(model, x)
    if augmented:
        y = y.substitute(d_in - 1, 1.0).drop_variable(d_in - 1)
    return y


def _input_width(model):
    if isinstance(model, AttentionParams):
        return model.d
    return model.d_in


def _propagate(model, x: PolyVector) -> PolyVector:
    if isinstance(model, AttentionParams):
        v, k, q = _lin(model.w_v, x), _lin(model.w_k, x), _lin(model.w_q, x)
        score = None
        for kj, qj in zip(k, q):
            term = kj * qj
            score = term if score is None else score + term
        return PolyVector(vi * score for vi in v)
    if isinstance(model, (GatedRnnParams, DenseGatedRnnParams)):
        h = _lin(model.w_m_in, x) * _lin(model.w_x_in, x)
        g = _lin(model.w_m_out, h) * _lin(model.w_x_out, h)
        return _lin(model.d_readout, g)
    if isinstance(model, SideGatedRnnParams):
        h = _lin(model.w_m_in, x) * _lin(model.w_x_in, x)
        return _lin(model.d_readout, _lin(model.w_side, x) * h)
    if isinstance(model, LstmParams):
        lin = model.mode == "linearized"
        seq = _lin(model.embed, x)
        for layer in model.layers:
            g = _gate_poly(layer.u_g, layer.b_g, seq, lin)
            cand = _cand_poly(layer.u_c, layer.b_c, seq, lin)
            c = g * cand
            o = _gate_poly(layer.u_o, layer.b_o, seq, lin)
            if not lin:
                raise NotPolynomialError("standard-mode LSTM cell output is tanh")
            seq = o * c
        return _lin(model.readout, seq)
    if isinstance(model, LruParams):
        if model.variant == "mlp_in_out" or model.mode != "linearized":
            raise NotPolynomialError("LRU fingerprint needs linearized GLU blocks")
        seq = _lin(model.embed, x)
        for layer in model.layers:
            u = seq
            if model.variant == "glu_in_out":
                u = _lin(layer.pre_a, u) * _lin(layer.pre_b, u)
            gamma = np.exp(value_of(layer.gamma_log))[:, None]
            w = (value_of(layer.c_re) @ (gamma * value_of(layer.b_re))
                 - value_of(layer.c_im) @ (gamma * value_of(layer.b_im))
                 + value_of(layer.d_skip))
            yt = _lin(w, u)
            seq = _lin(layer.post_a, yt) * _lin(layer.post_b, yt)
        return _lin(model.readout, seq)
    if isinstance(model, GruParams):
        raise NotPolynomialError("GRU gates are sigmoids")
    raise NotPolynomialError(f"no fingerprint for {type(model).__name__}")
