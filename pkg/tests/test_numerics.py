import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatedattn import numerics
from gatedattn.errors import ShapeError, SingularMatrixError
from gatedattn.numerics import Rng


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_identity(rng):
    a = rng.normal(1.0, (3, 3))
    assert np.array_equal(numerics.matmul(np.eye(3), a), a)


def test_matmul_hand_case():
    out = numerics.matmul([[1, 2], [3, 4]], [[0], [1]])
    assert out.tolist() == [[2.0], [4.0]]


def test_matmul_matches_naive_loop(rng):
    a, b = rng.normal(1.0, (5, 5)), rng.normal(1.0, (5, 5))
    assert np.allclose(numerics.matmul(a, b), naive_matmul(a, b), atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        numerics.matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
       st.integers(1, 6))
def test_matmul_associative(seed, m, n, p, q):
    r = Rng(seed)
    a, b, c = r.normal(1, (m, n)), r.normal(1, (n, p)), r.normal(1, (p, q))
    left = numerics.matmul(numerics.matmul(a, b), c)
    right = numerics.matmul(a, numerics.matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


def test_least_squares_identity(rng):
    b = rng.normal(1.0, (4, 2))
    x, r2 = numerics.least_squares(np.eye(4), b)
    assert np.allclose(x, b)
    assert np.allclose(r2, 1.0)


def test_least_squares_recovers_weights(rng):
    a = rng.normal(1.0, (30, 4))
    w = rng.normal(1.0, (4, 3))
    x, r2 = numerics.least_squares(a, a @ w)
    assert np.max(np.abs(x - w)) <= 1e-10
    assert np.allclose(r2, 1.0)


def test_least_squares_normal_equations(rng):
    a = rng.normal(1.0, (50, 5))
    b = rng.normal(1.0, (50, 2))
    x, _ = numerics.least_squares(a, b)
    assert np.linalg.norm(a.T @ (a @ x - b)) <= 1e-9


def test_least_squares_zero_variance_target():
    a = np.ones((5, 1))
    _, r2 = numerics.least_squares(a, np.full(5, 2.0))
    assert r2[0] == 1.0
    _, r2 = numerics.least_squares(np.zeros((5, 1)), np.full(5, 2.0))
    assert r2[0] == 0.0


def test_least_squares_rank_deficient(rng):
    col = rng.normal(1.0, (10, 1))
    a = np.hstack((col, col))
    x, r2 = numerics.least_squares(a, 3 * col[:, 0])
    assert np.allclose(x, [1.5, 1.5])
    assert r2[0] == pytest.approx(1.0)


def test_svd_diagonal():
    _, s, _ = numerics.svd(np.diag([3.0, 1.0]))
    assert np.allclose(s, [3.0, 1.0])


def test_svd_rank_one(rng):
    u, v = rng.normal(1, 5), rng.normal(1, 4)
    _, s, _ = numerics.svd(np.outer(u, v))
    assert np.sum(s > 1e-10) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 32), st.integers(1, 32))
def test_svd_reconstruction_and_orthonormality(seed, m, n):
    a = Rng(seed).normal(1.0, (m, n))
    u, s, v = numerics.svd(a)
    k = min(m, n)
    assert np.linalg.norm(u @ np.diag(s) @ v.T - a) <= 1e-10 * max(np.linalg.norm(a), 1e-300)
    assert np.max(np.abs(u.T @ u - np.eye(k))) <= 1e-10
    assert np.max(np.abs(v.T @ v - np.eye(k))) <= 1e-10
    assert np.all(np.diff(s) <= 0)


def test_svd_rank_deficient_keeps_orthonormal_u(rng):
    a = np.outer(rng.normal(1, 6), rng.normal(1, 6))
    u, s, v = numerics.svd(a)
    assert np.max(np.abs(u.T @ u - np.eye(6))) <= 1e-10
    assert np.linalg.norm(u @ np.diag(s) @ v.T - a) <= 1e-10 * np.linalg.norm(a)


def test_inverse_cases(rng):
    assert np.allclose(numerics.inverse(np.eye(3)), np.eye(3))
    assert np.allclose(numerics.inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    a = rng.normal(1.0, (4, 4)) + 4 * np.eye(4)
    inv, cond = numerics.inverse(a, with_cond=True)
    assert np.max(np.abs(a @ inv - np.eye(4))) <= 1e-10
    assert cond >= 1.0


def test_inverse_singular():
    with pytest.raises(SingularMatrixError):
        numerics.inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_uniform_variance():
    x = numerics.sample_uniform(Rng(7), 1000, 1000, -math.sqrt(3), math.sqrt(3))
    assert abs(x.var() - 1.0) <= 0.01


def test_normal_variance():
    x = numerics.sample_normal(Rng(7), 1000, 1000, math.sqrt(1 / 3))
    assert abs(x.var() - 1 / 3) <= 0.01
    assert abs(x.mean()) <= 0.005


def test_rng_determinism_and_streams():
    a = Rng(5).normal(1.0, 100)
    b = Rng(5).normal(1.0, 100)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(Rng(5).split("x").random(5), Rng(5).split("y").random(5))
    assert Rng(5).split("x", 1).path == ("x", "1")


def test_rng_frozen_stream():
    # pinned so that platform or library changes that alter the stream are caught
    got = Rng(0).random(3)
    assert got.tolist() == FROZEN_UNIFORM


def test_sampler_argument_checks(rng):
    with pytest.raises(ValueError):
        numerics.sample_normal(rng, 2, 2, 0.0)
    with pytest.raises(ValueError):
        numerics.sample_uniform(rng, 2, 2, 1.0, 1.0)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        numerics.matmul([[np.nan]], [[1.0]])


FROZEN_UNIFORM = [0.5245944158089367, 0.8565894967550898, 0.5293645593485264]
