"""Weight constructions that turn linear self-attention into gated RNNs
(and LSTMs), and linear recurrences into decayed attention.

Index conventions are 0-based and row-major: key-value neuron ``i < d*d``
holds entry ``(i // d, i % d)`` of the fast-weight matrix, i.e. the product
``(W_V x)_{i // d} * (W_K x)_{i % d}``. Query neurons follow the key-value
block. Constructions with query neurons expect inputs augmented with a
trailing constant 1 and set ``augmented=True`` on the result.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numerics
from .errors import SingularMatrixError
from .models import (AttentionParams, DecayedAttentionParams, GatedRnnParams, LstmLayer,
                     LstmParams, SideGatedRnnParams, forward)
from .models.base import value_of

RANK_TOL = 1e-10
SATURATION_BIAS = 30.0


def _kv_index(d):
    i = np.arange(d * d)
    return i // d, i % d


def _augment_cols(w):
    return np.hstack((w, np.zeros((w.shape[0], 1))))


def compile_full(p: AttentionParams) -> GatedRnnParams:
    """``d^2 + d`` hidden neurons: ``d^2`` integrators holding the key-value
    sums followed by ``d`` memoryless neurons passing the query through."""
    d = p.d
    rows, cols = _kv_index(d)
    n = d * d + d
    w_x_in = np.zeros((n, d + 1))
    w_m_in = np.zeros((n, d + 1))
    w_x_in[: d * d, :d] = p.w_v[rows]
    w_x_in[d * d:, :d] = p.w_q
    w_m_in[: d * d, :d] = p.w_k[cols]
    w_m_in[d * d:, d] = 1.0
    lam = np.concatenate((np.ones(d * d), np.zeros(d)))
    w_x_out = np.zeros((d * d, n))
    w_x_out[np.arange(d * d), np.arange(d * d)] = 1.0
    w_m_out = np.zeros((d * d, n))
    w_m_out[np.arange(d * d), d * d + cols] = 1.0
    readout = np.zeros((d, d * d))
    readout[rows, np.arange(d * d)] = 1.0
    return GatedRnnParams(w_m_in, w_x_in, lam, w_m_out, w_x_out, readout,
                          lambda_mode="clamped01", augmented=True)


def compile_side(p: AttentionParams) -> SideGatedRnnParams:
    """``d^2`` integrators; the query multiplies the state through the side
    gate, so no constant input and no query neurons are needed."""
    d = p.d
    rows, cols = _kv_index(d)
    readout = np.zeros((d, d * d))
    readout[rows, np.arange(d * d)] = 1.0
    return SideGatedRnnParams(w_m_in=p.w_k[cols].copy(), w_x_in=p.w_v[rows].copy(),
                              lambda_raw=np.ones(d * d), w_side=p.w_q[cols].copy(),
                              d_readout=readout, lambda_mode="clamped01")


def symmetric_reparametrization(p: AttentionParams) -> AttentionParams:
    """Equivalent attention with keys equal to values:
    ``(W_V, W_V^{-T} W_K^T W_Q, W_V)`` as (value, query, key)."""
    try:
        inv = numerics.inverse(p.w_v)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"value matrix is not invertible ({exc}); use compile_full instead", exc.cond
        ) from None
    w_q = inv.T @ p.w_k.T @ p.w_q
    return AttentionParams(w_v=p.w_v.copy(), w_k=p.w_v.copy(), w_q=w_q)


def compile_compact(p: AttentionParams) -> GatedRnnParams:
    """``d(d+1)/2 + d`` hidden neurons.

    After the keys = values reparametrization the fast-weight matrix is
    symmetric, so only its upper triangle is stored. Every ordered pair
    ``(a, b)`` still gets its own gated output, which reads the stored entry
    ``(min, max)`` and query ``b`` and is summed into output ``a``.
    """
    sym = symmetric_reparametrization(p)
    d = p.d
    upper = [(a, b) for a in range(d) for b in range(a, d)]
    slot = {pair: i for i, pair in enumerate(upper)}
    n_kv = len(upper)
    n = n_kv + d
    w_x_in = np.zeros((n, d + 1))
    w_m_in = np.zeros((n, d + 1))
    for i, (a, b) in enumerate(upper):
        w_x_in[i, :d] = sym.w_v[a]
        w_m_in[i, :d] = sym.w_k[b]
    w_x_in[n_kv:, :d] = sym.w_q
    w_m_in[n_kv:, d] = 1.0
    lam = np.concatenate((np.ones(n_kv), np.zeros(d)))
    w_x_out = np.zeros((d * d, n))
    w_m_out = np.zeros((d * d, n))
    readout = np.zeros((d, d * d))
    for j in range(d * d):
        a, b = divmod(j, d)
        w_x_out[j, slot[(min(a, b), max(a, b))]] = 1.0
        w_m_out[j, n_kv + b] = 1.0
        readout[a, j] = 1.0
    return GatedRnnParams(w_m_in, w_x_in, lam, w_m_out, w_x_out, readout,
                          lambda_mode="clamped01", augmented=True)


def _numeric_rank(s, rank_tol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def compile_low_rank(p: AttentionParams, rank_tol: float = RANK_TOL) -> GatedRnnParams:
    """``rank(W_K^T W_Q) * (rank(W_V) + 1)`` hidden neurons.

    With ``W_V = U_V S_V V_V^T`` and ``W_K^T W_Q = U S V^T`` the layer is
    ``U_V sum_t' (S_V V_V^T x)(S U^T x)^T (V^T x_t)``, so only an
    ``r_V x r_KQ`` block of key-values and ``r_KQ`` queries are stored.
    """
    d = p.d
    u_v, s_v, v_v = numerics.svd(p.w_v)
    u_kq, s_kq, v_kq = numerics.svd(p.w_k.T @ p.w_q)
    r_v = _numeric_rank(s_v, rank_tol)
    r_kq = _numeric_rank(s_kq, rank_tol)
    values = (s_v[:r_v, None] * v_v[:, :r_v].T)
    keys = (s_kq[:r_kq, None] * u_kq[:, :r_kq].T)
    queries = v_kq[:, :r_kq].T
    n_kv = r_v * r_kq
    n = n_kv + r_kq
    w_x_in = np.zeros((n, d + 1))
    w_m_in = np.zeros((n, d + 1))
    idx = np.arange(n_kv)
    rows, cols = idx // max(r_kq, 1), idx % max(r_kq, 1)
    w_x_in[:n_kv, :d] = values[rows]
    w_m_in[:n_kv, :d] = keys[cols]
    w_x_in[n_kv:, :d] = queries
    w_m_in[n_kv:, d] = 1.0
    lam = np.concatenate((np.ones(n_kv), np.zeros(r_kq)))
    w_x_out = np.zeros((n_kv, n))
    w_x_out[idx, idx] = 1.0
    w_m_out = np.zeros((n_kv, n))
    w_m_out[idx, n_kv + cols] = 1.0
    summed = np.zeros((r_v, n_kv))
    summed[rows, idx] = 1.0
    readout = u_v[:, :r_v] @ summed
    return GatedRnnParams(w_m_in, w_x_in, lam, w_m_out, w_x_out, readout,
                          lambda_mode="clamped01", augmented=True)


def _logit_bias(lam, saturation=np.inf):
    lam = np.asarray(lam, dtype=np.float64)
    out = np.empty_like(lam)
    out[lam >= 1.0] = saturation
    out[lam <= 0.0] = -saturation
    inner = (lam > 0.0) & (lam < 1.0)
    out[inner] = np.log(lam[inner]) - np.log1p(-lam[inner])
    return out


def compile_lstm_attention(p: AttentionParams, mode: str = "linearized",
                           eps: float = 1e-2) -> LstmParams:
    """Single LSTM layer implementing the attention layer.

    Cell ``i = (a, b)`` integrates ``g * c~ = (W_V x)_a (W_K x)_b`` with the
    forget gate held open, and the output gate multiplies in ``(W_Q x)_b``.

    In ``"standard"`` mode all activations are real: inputs to ``c~``, ``g``
    and ``o`` are scaled by ``eps`` and each cell is quadrupled, pairing the
    scaled sigmoid gates with copies whose gate sits at exactly 1/2, so the
    readout ``+1, -1, -1, +1`` cancels the constant parts. The readout
    rescales by ``16 / eps^3``. The forget bias is the finite surrogate
    ``SATURATION_BIAS``.
    """
    d = p.d
    rows, cols = _kv_index(d)
    k = d * d
    readout = np.zeros((d, k))
    readout[rows, np.arange(k)] = 1.0
    if mode == "linearized":
        layer = LstmLayer.zeros(k, d)
        layer.b_f = np.full(k, np.inf)
        layer.u_c = p.w_k[cols].copy()
        layer.u_g = p.w_v[rows].copy()
        layer.u_o = p.w_q[cols].copy()
        return LstmParams(embed=np.eye(d), layers=[layer], readout=readout, mode="linearized")
    if mode != "standard":
        raise ValueError(f"unknown mode {mode!r}")
    n = 4 * k
    layer = LstmLayer.zeros(n, d)
    layer.b_f = np.full(n, SATURATION_BIAS)
    gate_on = np.array([1.0, 0.0, 1.0, 0.0])
    out_on = np.array([1.0, 1.0, 0.0, 0.0])
    sign = np.array([1.0, -1.0, -1.0, 1.0])
    big_readout = np.zeros((d, n))
    for c in range(4):
        block = slice(c * k, (c + 1) * k)
        layer.u_c[block] = eps * p.w_k[cols]
        layer.u_g[block] = gate_on[c] * eps * p.w_v[rows]
        layer.u_o[block] = out_on[c] * eps * p.w_q[cols]
        big_readout[:, block] = sign[c] * 16.0 / eps**3 * readout
    return LstmParams(embed=np.eye(d), layers=[layer], readout=big_readout, mode="standard")


def compile_lstm_gated_rnn(p: GatedRnnParams) -> LstmParams:
    """Two linearized LSTM layers implementing a gated RNN.

    Layer 1: ``g * c~`` is the input gating and the forget gate equals
    ``lam`` (bias ``logit(lam)``, infinite at exact 0/1). Layer 2 forgets
    everything and its ``g * c~`` is the output gating. Output gates are
    pinned open.
    """
    lam = p.lam()
    n, d_in = p.n_hidden, p.d_in
    m = p.n_gated
    first = LstmLayer.zeros(n, d_in)
    first.b_f = _logit_bias(lam)
    first.u_c = np.array(value_of(p.w_m_in), copy=True)
    first.u_g = np.array(value_of(p.w_x_in), copy=True)
    first.b_o = np.full(n, np.inf)
    second = LstmLayer.zeros(m, n)
    second.b_f = np.full(m, -np.inf)
    second.u_c = np.array(value_of(p.w_m_out), copy=True)
    second.u_g = np.array(value_of(p.w_x_out), copy=True)
    second.b_o = np.full(m, np.inf)
    return LstmParams(embed=np.eye(d_in), layers=[first, second],
                      readout=np.array(value_of(p.d_readout), copy=True),
                      mode="linearized", augmented=p.augmented)


def compile_recurrence_to_decayed_lsa(lam) -> DecayedAttentionParams:
    """Decayed attention computing ``y_t = lam * y_{t-1} + x_t``.

    Every column of the fast-weight matrix carries the recurrence state;
    the constant query ``1/d`` averages the identical columns back out.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim != 1 or np.any(lam < 0) or np.any(lam > 1):
        raise ValueError("lambda must be a vector with entries in [0, 1]")
    d = lam.size
    zero = np.zeros((d, d))
    return DecayedAttentionParams(w_v=np.eye(d), w_k=zero, w_q=zero.copy(),
                                  b_v=np.zeros(d), b_k=np.ones(d), b_q=np.full(d, 1.0 / d),
                                  gamma=1.0 - lam)


@dataclass
class ConstructionReport:
    source_arch: str
    target_arch: str
    hidden_count: int | None
    augmented_width: int | None
    max_abs_deviation: float
    max_rel_deviation: float
    seed: int
    seq_len: int
    n_seq: int

    def to_dict(self):
        return asdict(self)


def _hidden_count(model):
    if hasattr(model, "n_hidden"):
        return int(model.n_hidden)
    if hasattr(model, "layers"):
        return int(sum(value_of(l.u_f if hasattr(l, "u_f") else l.nu_log).shape[0]
                       for l in model.layers))
    return None


def run_on_raw(model, x):
    """Forward on un-augmented inputs, appending the constant when the
    model expects it."""
    if getattr(model, "augmented", False):
        x = np.concatenate((x, np.ones(x.shape[:-1] + (1,))), axis=-1)
    return np.asarray(value_of(forward(model, x)))


def verify_equivalence(model_a, model_b, d: int, seq_len: int = 32, n_seq: int = 8,
                       seed: int = 0) -> ConstructionReport:
    """Run both models on the same standard-normal sequences and record the
    largest deviation between their outputs."""
    x = numerics.Rng(seed, ("verify",)).normal(1.0, (n_seq, seq_len, d))
    ya = run_on_raw(model_a, x)
    yb = run_on_raw(model_b, x)
    dev = np.abs(ya - yb)
    scale = max(float(np.max(np.abs(ya))), float(np.max(np.abs(yb))), 1e-300)
    return ConstructionReport(
        source_arch=model_a.arch, target_arch=model_b.arch,
        hidden_count=_hidden_count(model_b),
        augmented_width=d + 1 if getattr(model_b, "augmented", False) else d,
        max_abs_deviation=float(dev.max()), max_rel_deviation=float(dev.max() / scale),
        seed=seed, seq_len=seq_len, n_seq=n_seq)


COMPILERS = {
    "full": compile_full,
    "compact": compile_compact,
    "low_rank": compile_low_rank,
    "side": compile_side,
    "lstm": compile_lstm_attention,
}
