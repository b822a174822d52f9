import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatedattn import compiler
from gatedattn.compiler import (compile_compact, compile_full, compile_low_rank,
                                compile_lstm_attention, compile_lstm_gated_rnn,
                                compile_recurrence_to_decayed_lsa, compile_side,
                                symmetric_reparametrization, verify_equivalence)
from gatedattn.errors import SingularMatrixError
from gatedattn.models import (AttentionParams, GatedRnnParams, augment_constant,
                              decayed_lsa_forward, forward, lsa_forward, n_params)
from gatedattn.models import init as mi
from gatedattn.numerics import Rng

from helpers import attention, inputs


def deviation(model, p, x):
    return np.max(np.abs(compiler.run_on_raw(model, x) - lsa_forward(p, x)))


def test_full_scalar_hand_case():
    p = AttentionParams(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    g = compile_full(p)
    assert g.n_hidden == 2
    x = np.array([[[1.0], [2.0], [-1.0]]])
    want = np.cumsum(x[0, :, 0] ** 2) * x[0, :, 0]
    assert np.allclose(compiler.run_on_raw(g, x)[0, :, 0], want)


def test_full_counts_d4():
    g = compile_full(attention(4))
    assert (g.n_hidden, g.n_gated, g.d_in) == (20, 16, 5)
    assert g.lambda_mode == "clamped01" and g.augmented


def test_full_layout_zero_based_row_major():
    p = attention(3, 5)
    g = compile_full(p)
    for i in range(9):
        assert np.array_equal(g.w_x_in[i, :3], p.w_v[i // 3])
        assert np.array_equal(g.w_m_in[i, :3], p.w_k[i % 3])
    assert np.array_equal(g.lam(), [1.0] * 9 + [0.0] * 3)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_full_matches_attention(d):
    p = attention(d, d)
    assert deviation(compile_full(p), p, inputs(d, (8, 32, d))) <= 1e-10


def test_compact_count_d4():
    assert compile_compact(attention(4)).n_hidden == 14


def test_compact_symmetric_teacher_noop():
    p = attention(3, 7)
    p = AttentionParams(p.w_v, p.w_v.copy(), p.w_q)
    sym = symmetric_reparametrization(p)
    assert np.allclose(sym.w_q, p.w_q, atol=1e-12)
    assert np.array_equal(sym.w_k, p.w_v)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_compact_matches_attention(d):
    p = attention(d, 10 + d)
    assert deviation(compile_compact(p), p, inputs(d, (8, 32, d))) <= 1e-9


def test_compact_gating_is_binary():
    g = compile_compact(attention(3))
    for w in (g.w_m_out, g.w_x_out, g.d_readout):
        assert set(np.unique(w)) <= {0.0, 1.0}


def test_compact_singular_value_matrix():
    p = attention(3)
    p = AttentionParams(np.diag([1.0, 1.0, 0.0]), p.w_k, p.w_q)
    with pytest.raises(SingularMatrixError, match="compile_full"):
        compile_compact(p)


def low_rank_attention(d, r_v, r_kq, seed):
    r = Rng(seed)
    w_v = r.normal(1, (d, r_v)) @ r.normal(1, (r_v, d))
    w_k = r.normal(1, (r_kq, d))
    w_k = np.vstack((w_k, np.zeros((d - r_kq, d))))
    w_q = r.normal(1, (d, d))
    return AttentionParams(w_v / d, w_k / np.sqrt(d), w_q / np.sqrt(d))


def test_low_rank_count_d12():
    g = compile_low_rank(low_rank_attention(12, 6, 6, 1))
    assert g.n_hidden == 42


def test_low_rank_full_rank_count():
    assert compile_low_rank(attention(4, 2)).n_hidden == 4 * 5


def test_low_rank_rank_two_d6():
    p = low_rank_attention(6, 2, 2, 3)
    g = compile_low_rank(p)
    assert g.n_hidden == 6
    assert deviation(g, p, inputs(3, (8, 32, 6))) <= 1e-9


@pytest.mark.parametrize("d", [2, 4, 6])
def test_low_rank_matches_attention(d):
    p = attention(d, 20 + d)
    assert deviation(compile_low_rank(p), p, inputs(d, (8, 32, d))) <= 1e-9


def test_side_scalar_and_shapes():
    p = AttentionParams(np.full((1, 1), 2.0), np.full((1, 1), 3.0), np.full((1, 1), 0.5))
    s = compile_side(p)
    x = np.array([[[1.0], [-2.0]]])
    want = np.cumsum(6 * x[0, :, 0] ** 2) * 0.5 * x[0, :, 0]
    assert np.allclose(forward(s, x)[0, :, 0], want)
    s4 = compile_side(attention(4))
    assert s4.w_side.shape == (16, 4) and s4.n_hidden == 16 and not s4.augmented


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_side_matches_attention(d):
    p = attention(d, 30 + d)
    assert deviation(compile_side(p), p, inputs(d, (8, 32, d))) <= 1e-10


def test_side_parameter_count_cubic():
    counts = [n_params(compile_side(attention(d))) for d in (2, 4, 8)]
    # 3 d^3 + d^2 (lambda) + d^3 (readout)
    assert counts == [4 * d**3 + d**2 for d in (2, 4, 8)]


def test_lstm_zero_attention():
    z = np.zeros((2, 2))
    lstm = compile_lstm_attention(AttentionParams(z, z, z))
    assert not np.any(forward(lstm, inputs(1, (1, 5, 2))))


def test_lstm_linearized_matches():
    p = attention(2, 40)
    assert deviation(compile_lstm_attention(p), p, inputs(4, (4, 16, 2))) <= 1e-10


def test_lstm_standard_error_shrinks():
    p = attention(2, 41)
    x = inputs(5, (2, 8, 2))
    errs = [deviation(compile_lstm_attention(p, "standard", eps), p, x) for eps in (1e-1, 1e-2)]
    assert errs[1] < errs[0] / 10


def test_lstm_unknown_mode():
    with pytest.raises(ValueError):
        compile_lstm_attention(attention(2), "exact")


def test_logit_bias_half():
    assert compiler._logit_bias([0.5])[0] == 0.0
    assert compiler._logit_bias([1.0, 0.0]).tolist() == [np.inf, -np.inf]


def test_lstm_gated_rnn_tiny_unroll():
    one = np.ones((1, 1))
    g = GatedRnnParams(one, 2 * one, np.array([0.5]), one, one, one, lambda_mode="clamped01")
    lstm = compile_lstm_gated_rnn(g)
    x = np.array([[[1.0], [3.0]]])
    h1 = 2.0
    h2 = 0.5 * h1 + 18.0
    assert np.allclose(forward(lstm, x)[0, :, 0], [h1**2, h2**2])


def test_lstm_gated_rnn_random():
    g = mi.init_gated_rnn(Rng(6), 3, 5, 4, 2)
    lstm = compile_lstm_gated_rnn(g)
    x = inputs(6, (4, 16, 3))
    assert np.max(np.abs(forward(lstm, x) - forward(g, x))) <= 1e-10
    c = compile_compact(attention(3, 6))
    assert np.max(np.abs(compiler.run_on_raw(compile_lstm_gated_rnn(c), x)
                         - compiler.run_on_raw(c, x))) <= 1e-10


def test_decayed_recurrence_cases():
    x = inputs(7, (2, 20, 5))
    for lam in (np.zeros(5), np.ones(5)):
        y = decayed_lsa_forward(compile_recurrence_to_decayed_lsa(lam), x)
        want = x if lam[0] == 0 else np.cumsum(x, axis=1)
        assert np.allclose(y, want, atol=1e-12)
    lam = Rng(7).uniform(0, 1, 5)
    y = decayed_lsa_forward(compile_recurrence_to_decayed_lsa(lam), x)
    ref = np.zeros_like(x)
    state = np.zeros((2, 5))
    for t in range(20):
        state = lam * state + x[:, t]
        ref[:, t] = state
    assert np.max(np.abs(y - ref)) <= 1e-12


def test_decayed_rejects_out_of_range():
    with pytest.raises(ValueError):
        compile_recurrence_to_decayed_lsa([1.5])


def test_verify_equivalence_controls():
    p = attention(3, 8)
    assert verify_equivalence(p, p, 3).max_abs_deviation == 0.0
    g = compile_full(p)
    rep = verify_equivalence(p, g, 3, seq_len=32, n_seq=8, seed=4)
    assert rep.max_abs_deviation <= 1e-10
    assert rep.hidden_count == 12 and rep.augmented_width == 4 and rep.seed == 4
    bad = dataclasses.replace(g, w_x_in=g.w_x_in + 1e-2)
    assert verify_equivalence(p, bad, 3).max_abs_deviation > 1e-3
    assert set(rep.to_dict()) >= {"source_arch", "target_arch", "max_abs_deviation"}


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.sampled_from([1, 2, 32]))
def test_all_compilers_property(seed, d, steps):
    p = attention(d, seed)
    x = inputs(seed, (3, steps, d))
    assert deviation(compile_full(p), p, x) <= 1e-10
    assert deviation(compile_side(p), p, x) <= 1e-10
    assert deviation(compile_low_rank(p), p, x) <= 1e-9
    assert deviation(compile_lstm_attention(p), p, x) <= 1e-10
    try:
        assert deviation(compile_compact(p), p, x) <= 1e-9
    except SingularMatrixError:
        pass


@pytest.mark.parametrize("d", range(1, 9))
def test_hidden_count_identities(d):
    p = attention(d, 50 + d)
    assert compile_full(p).n_hidden == d * d + d
    assert compile_compact(p).n_hidden == d * (d + 1) // 2 + d
    assert compile_side(p).n_hidden == d * d
