"""Dense linear algebra and seeded sampling on float64 numpy arrays.

Matrices are plain ``np.ndarray`` objects of dtype float64. Complex-valued
quantities use complex128 arrays.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ShapeError, SingularMatrixError

SINGULAR_RTOL = 1e-12


def as_matrix(a, name="a") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def least_squares(a, b):
    """Minimum-norm least squares solution of ``a @ x ~= b``.

    Returns ``(x, r2)`` where ``r2[j]`` is the coefficient of determination of
    target column ``j``. A target column with zero variance gets ``r2 = 1``
    when its residual vanishes and ``0`` otherwise.
    """
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=np.float64)
    vector_target = b.ndim == 1
    if vector_target:
        b = b[:, None]
    if a.shape[0] < 1 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"incompatible system {a.shape} / {b.shape}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = a @ x - b
    rss = np.sum(resid**2, axis=0)
    tss = np.sum((b - b.mean(axis=0)) ** 2, axis=0)
    scale = np.maximum(np.sum(b**2, axis=0), 1.0)
    r2 = np.empty(b.shape[1])
    flat = tss <= 1e-30 * scale
    r2[~flat] = 1.0 - rss[~flat] / tss[~flat]
    r2[flat] = np.where(rss[flat] <= 1e-24 * scale[flat], 1.0, 0.0)
    if vector_target:
        x = x[:, 0]
    return x, r2


def svd(a, tol=1e-15, max_sweeps=60):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``(u, s, v)`` with ``a = u @ diag(s) @ v.T``, singular values in
    descending order, ``u`` of shape (m, k) and ``v`` of shape (n, k) where
    ``k = min(m, n)``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m < n:
        v, s, u = svd(a.T, tol, max_sweeps)
        return u, s, v
    if n == 0:
        return np.zeros((m, 0)), np.zeros(0), np.zeros((0, 0))
    w = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = w[:, p], w[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                w[:, [p, q]] = np.column_stack((c * wp - s * wq, s * wp + c * wq))
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    sing = np.linalg.norm(w, axis=0)
    order = np.argsort(-sing, kind="stable")
    sing = sing[order]
    w = w[:, order]
    v = v[:, order]
    u = np.zeros((m, n))
    cutoff = max(sing[0], 1e-300) * 1e-14 if n else 0.0
    good = sing > cutoff
    u[:, good] = w[:, good] / sing[good]
    if not np.all(good):
        u = _complete_orthonormal(u, good)
    return u, sing, v


def _complete_orthonormal(u, good):
    """Fill the columns of ``u`` not flagged ``good`` with an orthonormal
    complement of the good ones."""
    m, k = u.shape
    basis = u[:, good]
    filled = []
    for e in np.eye(m):
        cand = e - basis @ (basis.T @ e)
        for f in filled:
            cand -= f * (f @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-8:
            filled.append(cand / norm)
            basis = np.column_stack((basis, filled[-1]))
        if len(filled) == k - int(good.sum()):
            break
    out = u.copy()
    out[:, ~good] = np.column_stack(filled) if filled else out[:, ~good]
    return out


def rank(a, rtol=1e-10) -> int:
    _, s, _ = svd(a)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def condition_number(a) -> float:
    _, s, _ = svd(a)
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


def inverse(a, *, with_cond=False):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"inverse needs a square matrix, got {a.shape}")
    _, s, _ = svd(a)
    if s[0] == 0.0 or s[-1] / s[0] < SINGULAR_RTOL:
        cond = float("inf") if s[-1] == 0.0 else float(s[0] / s[-1])
        raise SingularMatrixError(f"matrix is singular to tolerance (cond={cond:.3g})", cond)
    inv = np.linalg.solve(a, np.eye(a.shape[0]))
    if with_cond:
        return inv, float(s[0] / s[-1])
    return inv


class Rng:
    """Counter-based generator (Philox 4x64) keyed by a 64-bit seed.

    Sub-streams are derived deterministically from the seed and a tuple of
    names, so independent purposes (teacher weights, training batches,
    validation batches, ...) never share draws.
    """

    algorithm = "philox4x64"

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(str(p) for p in path)
        key = _derive_key(self.seed, self.path)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, *names) -> "Rng":
        return Rng(self.seed, self.path + tuple(str(n) for n in names))

    @property
    def counter(self) -> int:
        state = self._gen.bit_generator.state["state"]["counter"]
        return int(state[0]) | (int(state[1]) << 64)

    def random(self, size) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def uniform(self, lo, hi, size) -> np.ndarray:
        return lo + (hi - lo) * self.random(size)

    def normal(self, std, size) -> np.ndarray:
        """Box-Muller transform of the uniform counter stream."""
        size = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(size))
        pairs = (count + 1) // 2
        u1 = 1.0 - self.random(pairs)
        u2 = self.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate((radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)))
        return std * z[:count].reshape(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n) -> np.ndarray:
        return self._gen.permutation(n)


def _derive_key(seed: int, path: tuple) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(seed.to_bytes(8, "little"))
    for p in path:
        h.update(b"\x00" + p.encode())
    return int.from_bytes(h.digest(), "little")


def sample_normal(rng: Rng, rows: int, cols: int, std: float) -> np.ndarray:
    if std <= 0:
        raise ValueError("std must be positive")
    return rng.normal(std, (rows, cols))


def sample_uniform(rng: Rng, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    if not lo < hi:
        raise ValueError("need lo < hi")
    return rng.uniform(lo, hi, (rows, cols))
