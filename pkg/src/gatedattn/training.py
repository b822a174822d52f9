"""Online training loop: every step draws a fresh batch, takes a gradient
through the tape and applies AdamW on the cosine schedule."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, NonFiniteStateError
from .models import SequenceBatch, augment_constant, forward
from .models.base import flatten, unflatten
from .numerics import Rng
from .optim import OptimState, adamw_step


def _tune_allocator():
    """Keep glibc from returning mid-sized blocks to the OS after every free;
    the training loop reallocates the same few hundred KB arrays each step
    and otherwise pays page faults on every one of them."""
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 64 << 20)   # M_MMAP_THRESHOLD
        libc.mallopt(-1, 128 << 20)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


_tune_allocator()


def mse_loss(y, batch: SequenceBatch):
    """Half squared error, averaged over output units and masked positions."""
    mask = batch.loss_mask[..., None]
    diff = y - batch.targets
    total = (diff * diff * mask).sum()
    return total * (0.5 / (mask.sum() * batch.targets.shape[-1]))


def cross_entropy_loss(logits, batch: SequenceBatch):
    """Mean cross-entropy of the final-position logits against ``labels``."""
    last = logits[:, -1]
    logp = ad.log_softmax(last)
    onehot = np.zeros(ad._val(last).shape)
    onehot[np.arange(onehot.shape[0]), batch.labels] = 1.0
    return (logp * onehot).sum() * (-1.0 / onehot.shape[0])


LOSSES = {"mse": mse_loss, "cross_entropy": cross_entropy_loss}


def model_inputs(model, batch: SequenceBatch):
    return augment_constant(batch.inputs) if getattr(model, "augmented", False) else batch.inputs


def batch_loss(model, batch: SequenceBatch, loss: str = "mse") -> float:
    y = forward(model, model_inputs(model, batch))
    return float(ad._val(LOSSES[loss](y, batch)))


def trainable(model) -> dict:
    """Finite parameter arrays; pinned (infinite) entries are left alone."""
    return {k: np.array(ad._val(v), dtype=np.float64) for k, v in flatten(model).items()
            if np.all(np.isfinite(ad._val(v)))}


def loss_and_grad(model, batch: SequenceBatch, loss: str = "mse"):
    params = trainable(model)
    x = model_inputs(model, batch)
    loss_fn = LOSSES[loss]

    def f(traced):
        return loss_fn(forward(unflatten(model, traced), x), batch)

    return ad.value_and_grad(f, params)


@dataclass
class Schedule:
    iterations: int
    batch: int = 64
    lr0: float = 1e-3
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    eval_every: int | None = None
    checkpoint_every: int = 0
    log_every: int | None = None

    def eval_interval(self) -> int:
        return self.eval_every or max(1, self.iterations // 50)


@dataclass
class TrainResult:
    model: object
    train_trace: list = field(default_factory=list)   # (step, loss)
    eval_trace: list = field(default_factory=list)    # (step, loss)
    checkpoints: list = field(default_factory=list)   # (step, model)
    wall_time: float = 0.0

    @property
    def final_train_loss(self) -> float:
        return self.train_trace[-1][1] if self.train_trace else float("nan")

    @property
    def final_eval_loss(self) -> float:
        return self.eval_trace[-1][1] if self.eval_trace else float("nan")


def train(model, sample: Callable[[Rng, int], SequenceBatch], schedule: Schedule, seed: int,
          loss: str = "mse", evaluate: Callable | None = None,
          callbacks: list | None = None) -> TrainResult:
    """Train ``model`` online.

    ``sample(rng, batch)`` draws a batch; step ``i`` uses the stream
    ``("train", i)`` of ``seed`` so runs are reproducible and independent of
    the evaluation cadence. ``evaluate(model)`` returns a validation loss.
    ``callbacks`` are called as ``cb(step, model, loss)``.

    A non-finite loss or state raises :class:`DivergenceError` carrying the
    last finite model.
    """
    start = time.perf_counter()
    params = trainable(model)
    state = OptimState.for_params(params, lr0=schedule.lr0, lr_min=schedule.lr_min,
                                  weight_decay=schedule.weight_decay,
                                  total_steps=schedule.iterations)
    result = TrainResult(model=model)
    root = Rng(seed)
    log_every = schedule.log_every or schedule.eval_interval()
    every = schedule.eval_interval()
    current = model
    for step in range(schedule.iterations):
        batch = sample(root.split("train", step), schedule.batch)
        try:
            value, grads = loss_and_grad(current, batch, loss)
        except NonFiniteStateError as exc:
            raise DivergenceError(f"state overflow ({exc})", step, current) from exc
        if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergenceError("non-finite loss", step, current)
        if step % log_every == 0:
            result.train_trace.append((step, value))
        params, state = adamw_step(params, grads, state)
        current = unflatten(current, params)
        done = step + 1
        if evaluate is not None and (done % every == 0 or done == schedule.iterations):
            result.eval_trace.append((done, float(evaluate(current))))
        if schedule.checkpoint_every and done % schedule.checkpoint_every == 0:
            result.checkpoints.append((done, current))
        for cb in callbacks or ():
            cb(done, current, value)
    result.train_trace.append((schedule.iterations, value))
    result.model = current
    result.wall_time = time.perf_counter() - start
    return result
