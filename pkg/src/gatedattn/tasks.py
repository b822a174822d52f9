"""Data generators and analytic baselines: teacher-student regression onto
a linear attention layer, in-context linear regression, and associative
recall."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import AttentionParams, SequenceBatch, lsa_forward
from .numerics import Rng


@dataclass
class TeacherStudentSpec:
    d: int = 4
    seq_len: int = 32
    input_std: float = 1.0
    teacher_weight_std: float | None = None  # defaults to 1/sqrt(d)
    teacher_seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")

    @property
    def weight_std(self) -> float:
        if self.teacher_weight_std is None:
            return 1.0 / np.sqrt(self.d)
        return self.teacher_weight_std


def make_teacher(spec: TeacherStudentSpec) -> AttentionParams:
    rng = Rng(spec.teacher_seed, ("teacher",))
    d, std = spec.d, spec.weight_std
    return AttentionParams(w_v=rng.normal(std, (d, d)), w_k=rng.normal(std, (d, d)),
                           w_q=rng.normal(std, (d, d)))


def gen_teacher_student(spec: TeacherStudentSpec, rng: Rng, batch: int,
                        teacher: AttentionParams | None = None) -> SequenceBatch:
    teacher = teacher or make_teacher(spec)
    x = rng.normal(spec.input_std, (batch, spec.seq_len, spec.d))
    return SequenceBatch(x, lsa_forward(teacher, x), np.ones((batch, spec.seq_len)))


@dataclass
class IclRegressionSpec:
    d_x: int = 3
    d_y: int = 3
    T: int = 12
    w_star_var: float = 1.0 / 3.0
    validation_w_star_var: float = 2.0 / 3.0
    input_half_width: float = float(np.sqrt(3.0))

    @property
    def d(self) -> int:
        return self.d_x + self.d_y

    @property
    def input_var(self) -> float:
        return self.input_half_width**2 / 3.0


def _icl_draw(spec: IclRegressionSpec, rng: Rng, batch: int, variant: str):
    var = {"train": spec.w_star_var, "validation": spec.validation_w_star_var}[variant]
    a = spec.input_half_width
    x = rng.uniform(-a, a, (batch, spec.T + 1, spec.d_x))
    w = rng.normal(np.sqrt(var), (batch, spec.d_y, spec.d_x))
    y = np.einsum("byx,btx->bty", w, x)
    return x, y


def icl_batch_from(x, y) -> SequenceBatch:
    """Tokens ``(x_t, y_t)`` for the context and ``(x_{T+1}, 0)`` for the
    query; only the query position is scored."""
    batch, steps, d_y = y.shape
    tokens = np.concatenate((x, y), axis=-1)
    tokens[:, -1, x.shape[-1]:] = 0.0
    targets = np.zeros((batch, steps, d_y))
    targets[:, -1] = y[:, -1]
    mask = np.zeros((batch, steps))
    mask[:, -1] = 1.0
    return SequenceBatch(tokens, targets, mask)


def gen_icl_regression(spec: IclRegressionSpec, rng: Rng, batch: int,
                       variant: str = "train") -> SequenceBatch:
    return icl_batch_from(*_icl_draw(spec, rng, batch, variant))


def gd_baseline_predict(batch: SequenceBatch, eta: float, d_x: int) -> np.ndarray:
    """One gradient step from ``W = 0``: ``eta * sum_t y_t x_t^T x_query``.

    Returns (B, d_y) predictions for the final (query) position.
    """
    x = batch.inputs[:, :-1, :d_x]
    y = batch.inputs[:, :-1, d_x:]
    xq = batch.inputs[:, -1, :d_x]
    return eta * np.einsum("bty,btx,bx->by", y, x, xq)


def gd_as_attention(spec: IclRegressionSpec, eta: float) -> AttentionParams:
    """Linear attention computing the one-step GD prediction in its ``y``
    output rows: values read ``y``, keys read ``x``, queries read ``eta x``."""
    d, dx = spec.d, spec.d_x
    w_v = np.zeros((d, d))
    w_v[dx:, dx:] = np.eye(spec.d_y)
    w_k = np.zeros((d, d))
    w_k[:dx, :dx] = np.eye(dx)
    w_q = np.zeros((d, d))
    w_q[:dx, :dx] = eta * np.eye(dx)
    return AttentionParams(w_v, w_k, w_q)


def optimal_eta(spec: IclRegressionSpec) -> float:
    return 1.0 / (spec.input_var * (spec.T + spec.d_x - 0.2))


def gd_baseline_loss(spec: IclRegressionSpec, eta, n_mc: int, rng: Rng,
                     chunk: int = 20000, variant: str = "train", reduction: str = "mean"):
    """Monte-Carlo estimate of the half squared query error.

    ``reduction="mean"`` averages over output units, matching the training
    loss; ``"sum"`` sums over them. ``eta`` may be a scalar or an array; the
    same tasks are reused for every value so grid comparisons are paired.
    """
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    etas = np.atleast_1d(np.asarray(eta, dtype=np.float64))
    total = np.zeros(etas.size)
    done = 0
    while done < n_mc:
        size = min(chunk, n_mc - done)
        x, y = _icl_draw(spec, rng, size, variant)
        base = np.einsum("bty,btx,bx->by", y[:, :-1], x[:, :-1], x[:, -1])
        err = y[:, -1, None, :] - etas[None, :, None] * base[:, None, :]
        total += 0.5 * np.sum(err**2, axis=(0, 2))
        done += size
    out = total / n_mc
    if reduction == "mean":
        out = out / spec.d_y
    return float(out[0]) if np.ndim(eta) == 0 else out


@dataclass
class AssocRecallSpec:
    """``layout="pairs"``: tokens ``[x_t, y_t]`` then the query ``[x_q, 0]``.
    ``layout="bridged"`` additionally inserts ``[y_t, x_{t+1}]`` between
    consecutive pairs."""

    T: int = 8
    layout: str = "pairs"

    @property
    def width(self) -> int:
        return 2 * self.T

    @property
    def seq_len(self) -> int:
        return self.T + 1 if self.layout == "pairs" else 2 * self.T


def gen_assoc_recall(spec: AssocRecallSpec, rng: Rng, batch: int) -> SequenceBatch:
    """One-hot ``x`` symbols occupy ``[0, T)`` and ``y`` symbols ``[T, 2T)``.

    Every sequence uses each symbol once, pairs them at random and queries a
    uniformly chosen seen ``x``. Targets are one-hot ``y`` classes at the
    final position; ``labels`` holds the class index in ``[0, 2T)``.
    """
    T = spec.T
    if spec.layout not in ("pairs", "bridged"):
        raise ValueError(f"unknown layout {spec.layout!r}")
    eye = np.eye(2 * T)
    tokens = np.zeros((batch, spec.seq_len, 2 * T))
    labels = np.empty(batch, dtype=np.int64)
    for b in range(batch):
        xs = rng.permutation(T)
        ys = T + rng.permutation(T)
        rows = []
        for t in range(T):
            rows.append(eye[xs[t]] + eye[ys[t]])
            if spec.layout == "bridged" and t + 1 < T:
                rows.append(eye[ys[t]] + eye[xs[t + 1]])
        q = int(rng.integers(0, T))
        rows.append(eye[xs[q]])
        tokens[b] = np.stack(rows)
        labels[b] = ys[q]
    targets = np.zeros_like(tokens)
    targets[np.arange(batch), -1, labels] = 1.0
    mask = np.zeros(tokens.shape[:2])
    mask[:, -1] = 1.0
    return SequenceBatch(tokens, targets, mask, labels=labels)


def recall_attention(spec: AssocRecallSpec) -> AttentionParams:
    """Keys and queries read the ``x`` block, values read the ``y`` block."""
    T = spec.T
    sel_x = np.zeros((2 * T, 2 * T))
    sel_x[:T, :T] = np.eye(T)
    sel_y = np.zeros((2 * T, 2 * T))
    sel_y[T:, T:] = np.eye(T)
    return AttentionParams(w_v=sel_y, w_k=sel_x, w_q=sel_x.copy())


def recall_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of sequences whose final-position argmax is the label."""
    return float(np.mean(np.argmax(logits[:, -1], axis=-1) == labels))
