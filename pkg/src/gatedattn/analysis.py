"""Reverse-engineering tools for trained gated RNNs: recurrence
classification, pruning, linear probes, fingerprint comparison, rank-1 row
merging and the associative-recall bilinear maps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import MergeRefused
from .models import (AttentionParams, GatedRnnParams, SequenceBatch, SideGatedRnnParams,
                     forward, gated_rnn_forward, instantaneous_fingerprint)
from .models.base import value_of
from .poly import Polynomial, coefficient_distance
from .training import model_inputs

LAMBDA_TOL = 1e-3
PRUNE_TOL = 1e-4
RANK1_TOL = 1e-3
COSINE_TOL = 1e-6

INTEGRATOR, MEMORYLESS, OTHER = "integrator", "memoryless", "other"


def classify_lambda(p, tol: float = LAMBDA_TOL) -> list[str]:
    lam = p.lam()
    return [INTEGRATOR if l >= 1.0 - tol else MEMORYLESS if l <= tol else OTHER for l in lam]


def _outputs(model, batch: SequenceBatch) -> np.ndarray:
    return np.asarray(value_of(forward(model, model_inputs(model, batch))))


def _max_deviation(a, b, batch) -> float:
    return float(np.max(np.abs(_outputs(a, batch) - _outputs(b, batch))))


@dataclass
class PruneReport:
    kept_hidden: list
    removed_hidden: list
    kept_gated: list
    removed_gated: list
    lambda_classes: list
    deviation: float | None
    weight_tol: float
    lambda_tol: float

    def to_dict(self):
        return dataclasses.asdict(self)


def _small(rows, tol):
    return np.max(np.abs(rows), axis=1) < tol if rows.size else np.zeros(rows.shape[0], bool)


def prune(p: GatedRnnParams, weight_tol: float = PRUNE_TOL, verify_batch: SequenceBatch | None = None,
          bound: float | None = None, lambda_tol: float = LAMBDA_TOL):
    """Remove hidden and gated-output units that cannot affect the output.

    A hidden unit goes when either input-gating row is below ``weight_tol``
    (relative to that matrix's largest entry) or when both of its
    output-gating columns are. A gated output goes when either gating row or
    its readout column is below tolerance. Removal is repeated until nothing
    changes. The deviation on ``verify_batch`` is measured by running both
    networks; exceeding ``bound`` raises ``ValueError``.
    """
    w = {k: np.array(value_of(getattr(p, k)), dtype=float)
         for k in ("w_m_in", "w_x_in", "w_m_out", "w_x_out", "d_readout")}
    lam_raw = np.array(value_of(p.lambda_raw), dtype=float)
    scale = {k: (np.max(np.abs(v)) if v.size else 0.0) for k, v in w.items()}
    tol = {k: weight_tol * scale[k] for k in w}
    hidden = np.arange(w["w_m_in"].shape[0])
    gated = np.arange(w["w_m_out"].shape[0])
    while True:
        drop_h = (_small(w["w_m_in"], tol["w_m_in"]) | _small(w["w_x_in"], tol["w_x_in"])
                  | (_small(w["w_m_out"].T, tol["w_m_out"]) & _small(w["w_x_out"].T, tol["w_x_out"])))
        drop_g = (_small(w["w_m_out"], tol["w_m_out"]) | _small(w["w_x_out"], tol["w_x_out"])
                  | _small(w["d_readout"].T, tol["d_readout"]))
        if weight_tol <= 0:
            drop_h[:] = False
            drop_g[:] = False
        if not drop_h.any() and not drop_g.any():
            break
        kh, kg = ~drop_h, ~drop_g
        w["w_m_in"], w["w_x_in"] = w["w_m_in"][kh], w["w_x_in"][kh]
        lam_raw = lam_raw[kh]
        w["w_m_out"] = w["w_m_out"][kg][:, kh]
        w["w_x_out"] = w["w_x_out"][kg][:, kh]
        w["d_readout"] = w["d_readout"][:, kg]
        hidden, gated = hidden[kh], gated[kg]
    pruned = GatedRnnParams(w["w_m_in"], w["w_x_in"], lam_raw, w["w_m_out"], w["w_x_out"],
                            w["d_readout"], lambda_mode=p.lambda_mode, augmented=p.augmented)
    deviation = None if verify_batch is None else _max_deviation(p, pruned, verify_batch)
    if bound is not None and deviation is not None and deviation > bound:
        raise ValueError(f"pruning changed the outputs by {deviation:.3g} > {bound:.3g}")
    all_h = np.arange(value_of(p.w_m_in).shape[0])
    all_g = np.arange(value_of(p.w_m_out).shape[0])
    report = PruneReport(
        kept_hidden=hidden.tolist(), removed_hidden=np.setdiff1d(all_h, hidden).tolist(),
        kept_gated=gated.tolist(), removed_gated=np.setdiff1d(all_g, gated).tolist(),
        lambda_classes=classify_lambda(pruned, lambda_tol), deviation=deviation,
        weight_tol=weight_tol, lambda_tol=lambda_tol)
    return pruned, report


def display_order(p, tol: float = LAMBDA_TOL) -> list[int]:
    """Hidden-unit order for weight plots: integrators, then memoryless, then
    the rest, each group sorted by the input coordinate its value gate reads
    most strongly."""
    rank = {INTEGRATOR: 0, MEMORYLESS: 1, OTHER: 2}
    classes = classify_lambda(p, tol)
    block = np.argmax(np.abs(value_of(p.w_x_in)), axis=1)
    return sorted(range(len(classes)), key=lambda i: (rank[classes[i]], int(block[i]), i))


@dataclass
class ProbeReport:
    score_kv: float
    score_q: float
    n_integrators: int
    n_memoryless: int
    kv_weights: list = field(default_factory=list)
    q_weights: list = field(default_factory=list)

    def to_dict(self):
        return dataclasses.asdict(self)


def _probe(states, targets):
    if states.shape[1] == 0:
        return float("nan"), np.zeros((0, targets.shape[1]))
    design = np.hstack((states, np.ones((states.shape[0], 1))))
    coef, r2 = numerics.least_squares(design, targets)
    return float(np.mean(1.0 - r2)), coef


def probe_kv_q(p: GatedRnnParams, teacher: AttentionParams, batch: SequenceBatch,
               hidden_trace: np.ndarray | None = None, tol: float = LAMBDA_TOL) -> ProbeReport:
    """Linear probes from hidden states to the teacher's internals.

    Cumulative key-values ``sum_{t' <= t} v k^T`` are regressed on the
    integrator states and queries ``W_Q x_t`` on the memoryless states; each
    score is the mean over target columns of ``1 - R^2``. Regressions
    include an intercept.
    """
    x = batch.inputs
    if hidden_trace is None:
        _, hidden_trace = gated_rnn_forward(p, model_inputs(p, batch))
    h = np.asarray(value_of(hidden_trace)).reshape(-1, p.n_hidden)
    classes = np.array(classify_lambda(p, tol))
    v = x @ teacher.w_v.T
    k = x @ teacher.w_k.T
    kv = np.cumsum(v[..., :, None] * k[..., None, :], axis=1).reshape(-1, teacher.d**2)
    q = (x @ teacher.w_q.T).reshape(-1, teacher.d)
    s_kv, w_kv = _probe(h[:, classes == INTEGRATOR], kv)
    s_q, w_q = _probe(h[:, classes == MEMORYLESS], q)
    return ProbeReport(score_kv=s_kv, score_q=s_q, n_integrators=int(np.sum(classes == INTEGRATOR)),
                       n_memoryless=int(np.sum(classes == MEMORYLESS)),
                       kv_weights=w_kv.tolist(), q_weights=w_q.tolist())


def fingerprint_distance(model_a, model_b, max_degree: int = 4) -> float:
    fa = instantaneous_fingerprint(model_a, max_degree)
    fb = instantaneous_fingerprint(model_b, max_degree)
    return coefficient_distance(fa, fb, max_degree)


@dataclass
class MergeReport:
    rows: list
    new_row: int
    coefficients: list
    max_ratio: float
    min_cosine: float
    deviation: float | None

    def to_dict(self):
        return dataclasses.asdict(self)


def merge_rank1_rows(p: GatedRnnParams, rows, tol: float = RANK1_TOL, cos_tol: float = COSINE_TOL,
                     verify_batch: SequenceBatch | None = None):
    """Fuse output-gating rows whose combined kernels are one rank-1 matrix.

    For every output ``i`` the kernel ``K_i = sum_j D_ij wm_j wx_j^T`` over
    ``rows`` must satisfy ``s2/s1 <= tol`` and all nonzero kernels must be
    parallel (absolute cosine ``>= 1 - cos_tol``). The rows are then
    replaced by one row ``(sqrt(s) u, sqrt(s) v)`` from the largest kernel
    and the readout column carries each output's proportionality factor.
    """
    rows = sorted(set(int(r) for r in rows))
    if not rows:
        raise MergeRefused("no rows to merge")
    wm = np.array(value_of(p.w_m_out), dtype=float)
    wx = np.array(value_of(p.w_x_out), dtype=float)
    dr = np.array(value_of(p.d_readout), dtype=float)
    kernels = [sum(dr[i, j] * np.outer(wm[j], wx[j]) for j in rows) for i in range(dr.shape[0])]
    norms = np.array([np.linalg.norm(k) for k in kernels])
    if norms.max() == 0.0:
        raise MergeRefused("rows carry no signal")
    live = norms > 1e-12 * norms.max()
    ratios = []
    for k in np.array(kernels, dtype=object)[live]:
        _, s, _ = numerics.svd(k)
        ratios.append(s[1] / s[0] if s.size > 1 else 0.0)
    ref_i = int(np.argmax(norms))
    ref = kernels[ref_i]
    unit = ref / norms[ref_i]
    cosines = [abs(np.sum(kernels[i] * unit)) / norms[i] for i in np.flatnonzero(live)]
    max_ratio, min_cos = float(max(ratios)), float(min(cosines))
    if max_ratio > tol:
        raise MergeRefused(f"combined kernel is not rank 1 (s2/s1 = {max_ratio:.3g})")
    if min_cos < 1.0 - cos_tol:
        raise MergeRefused(f"kernels are not proportional (cosine {min_cos:.9f})")
    u, s, v = numerics.svd(ref)
    new_m = np.sqrt(s[0]) * u[:, 0]
    new_x = np.sqrt(s[0]) * v[:, 0]
    base = np.outer(new_m, new_x)
    coef = np.array([np.sum(k * base) / np.sum(base * base) for k in kernels])
    keep = [j for j in range(wm.shape[0]) if j not in rows]
    merged = dataclasses.replace(
        p, w_m_out=np.vstack((wm[keep], new_m)), w_x_out=np.vstack((wx[keep], new_x)),
        d_readout=np.hstack((dr[:, keep], coef[:, None])))
    deviation = None if verify_batch is None else _max_deviation(p, merged, verify_batch)
    return merged, MergeReport(rows=rows, new_row=len(keep), coefficients=coef.tolist(),
                               max_ratio=max_ratio, min_cosine=min_cos, deviation=deviation)


def _term_name(exp, names):
    return "*".join(f"{names[i]}^{e}" if e > 1 else names[i] for i, e in enumerate(exp) if e)


def icl_polynomial_terms(model, d_x: int = 3, d_y: int = 3, output_offset: int | None = None,
                         max_degree: int = 4) -> dict:
    """Coefficients of ``x_i^2 y_j`` in output ``j`` of the single-token map.

    ``output_offset`` selects which model outputs are the ``y`` predictions
    (defaults to the trailing ``d_y`` outputs). ``residual`` is the norm of
    every other coefficient of those outputs.
    """
    fp = instantaneous_fingerprint(model, max_degree)
    n_out = len(fp)
    offset = n_out - d_y if output_offset is None else output_offset
    names = [f"x{i + 1}" for i in range(d_x)] + [f"y{j + 1}" for j in range(d_y)]
    table = np.zeros((d_y, d_x))
    rest = []
    for j in range(d_y):
        comp: Polynomial = fp[offset + j]
        wanted = {}
        for i in range(d_x):
            exp = [0] * (d_x + d_y)
            exp[i] = 2
            exp[d_x + j] = 1
            wanted[tuple(exp)] = i
        for exp, c in comp.terms.items():
            if exp in wanted:
                table[j, wanted[exp]] = c
            else:
                rest.append(c)
    terms = {_term_name(tuple(2 if k == i else 1 if k == d_x else 0 for k in range(d_x + d_y)),
                        names): float(table[0, i]) for i in range(d_x)}
    return {"terms": terms, "table": table.tolist(),
            "residual": float(np.linalg.norm(rest)) if rest else 0.0}


def _polarized_gate(w_m, w_x, u, w):
    def g(z):
        return (w_m @ z) * (w_x @ z)
    return g(u + w) - g(u) - g(w)


def recall_bilinear_probe(model, T: int | None = None, tol: float = 0.1) -> dict:
    """Bilinear maps ``M(u_i, u_j)`` from the query token to the output for
    one stored ``(x_i, y_j)`` pair, over all canonical basis pairs.

    For a side-gated RNN ``M = D diag(c_ij) W_side`` with ``c_ij`` the
    polarized input gate; for attention ``M`` is the polarized
    ``W_V z (W_K z)^T W_Q``. Only the block mapping a query ``x`` symbol
    to the ``y`` class logits is kept (a T x T matrix; the other rows and
    columns never meet a valid query or label). Each map's rank is judged
    by ``s2/s1 <= tol``; ``peak`` is given in full token coordinates.
    """
    if isinstance(model, SideGatedRnnParams):
        w_m, w_x = value_of(model.w_m_in), value_of(model.w_x_in)
        side, dr = value_of(model.w_side), value_of(model.d_readout)
        width = w_m.shape[1]

        def m_map(u, w):
            return dr @ (_polarized_gate(w_m, w_x, u, w)[:, None] * side)
    elif isinstance(model, AttentionParams):
        width = model.d

        def m_map(u, w):
            return (np.outer(model.w_v @ u, model.w_k @ w)
                    + np.outer(model.w_v @ w, model.w_k @ u)) @ model.w_q
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")
    T = T or width // 2
    eye = np.eye(width)
    maps = []
    for i in range(T):
        for j in range(T, 2 * T):
            m = m_map(eye[i], eye[j])[T:2 * T, :T]
            _, s, _ = numerics.svd(m)
            ratio = 0.0 if s[0] <= 1e-12 * max(1.0, np.abs(m).max()) else float(s[1] / s[0])
            peak = np.unravel_index(int(np.argmax(np.abs(m))), m.shape)
            maps.append({"x": i, "y": j, "ratio": ratio, "rank": int(np.sum(s > tol * s[0])) if s[0] > 0 else 0,
                         "peak": [int(peak[0]) + T, int(peak[1])], "peak_value": float(m[peak]),
                         "matrix": m.tolist()})
    ratios = [m["ratio"] for m in maps]
    return {"maps": maps, "max_ratio": float(max(ratios)), "tol": tol,
            "all_rank1": bool(max(ratios) <= tol)}
