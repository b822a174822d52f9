"""Single import point for gradient computation and optimization, plus a
finite-difference gradient check."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, value_and_grad
from .numerics import Rng
from .optim import OptimState, adamw_step, cosine_lr
from .training import Schedule, TrainResult, loss_and_grad, train

__all__ = ["OptimState", "Schedule", "Tape", "Tensor", "TrainResult", "adamw_step",
           "check_gradients", "cosine_lr", "loss_and_grad", "train", "value_and_grad"]


def check_gradients(loss_fn, params: dict, n_samples: int = 6, h: float = 1e-4,
                    seed: int = 0, floor: float = 1e-8, scale_floor: float = 1e-4) -> dict:
    """Compare tape gradients with fourth-order central differences on
    sampled entries.

    ``loss_fn`` takes a dict of arrays (plain or traced) and returns a scalar.
    Returns ``{name: max relative error}``, where the error of an entry is
    ``|g - fd| / max(|g|, |fd|, floor, scale_floor * max|g|)`` with the last
    maximum taken over every gradient entry; it keeps near-zero entries,
    where differencing noise dominates, from reporting spurious errors.
    """
    _, grads = value_and_grad(loss_fn, params)
    rng = Rng(seed, ("gradcheck",))
    g_max = max((float(np.max(np.abs(g), initial=0.0)) for g in grads.values()), default=0.0)
    denom_floor = max(floor, scale_floor * g_max)
    report = {}
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        flat_idx = rng.permutation(value.size)[:n_samples]
        worst = 0.0
        for i in flat_idx:
            idx = np.unravel_index(int(i), value.shape)
            vals = []
            for step in (2 * h, h, -h, -2 * h):
                shifted = value.copy()
                shifted[idx] += step
                trial = dict(params)
                trial[name] = shifted
                out = loss_fn(trial)
                vals.append(float(out.value if isinstance(out, Tensor) else out))
            fd = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
            g = float(grads[name][idx])
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), denom_floor))
        report[name] = worst
    return report
