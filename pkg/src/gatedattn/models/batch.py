"""Sequence batches shared by every task and model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass
class SequenceBatch:
    """Inputs (B, T, d_in), targets (B, T, d_out) and a (B, T) loss mask.

    ``labels`` optionally carries integer class targets at the masked
    positions (associative recall).
    """

    inputs: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.loss_mask = np.asarray(self.loss_mask, dtype=np.float64)
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ShapeError("inputs and targets must be (batch, time, features)")
        if self.inputs.shape[:2] != self.targets.shape[:2] or self.loss_mask.shape != self.inputs.shape[:2]:
            raise ShapeError(f"inconsistent shapes {self.inputs.shape}, {self.targets.shape}, "
                             f"{self.loss_mask.shape}")
        if np.any(self.loss_mask.sum(axis=1) <= 0):
            raise ValueError("every sequence needs at least one masked position")

    @property
    def batch_size(self):
        return self.inputs.shape[0]

    @property
    def seq_len(self):
        return self.inputs.shape[1]

    def augmented(self) -> "SequenceBatch":
        return SequenceBatch(augment_constant(self.inputs), self.targets, self.loss_mask, self.labels)


def augment_constant(x) -> np.ndarray:
    """Append a trailing constant 1 to every token."""
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate((x, np.ones(x.shape[:-1] + (1,))), axis=-1)


def as_inputs(x):
    """Accept a SequenceBatch, a (B, T, d) array, or a single (T, d) sequence."""
    if isinstance(x, SequenceBatch):
        return x.inputs
    if hasattr(x, "value"):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected (batch, time, features), got {x.shape}")
    return x
