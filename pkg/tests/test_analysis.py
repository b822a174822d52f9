import dataclasses

import numpy as np
import pytest

from gatedattn import analysis, compiler, tasks
from gatedattn.errors import MergeRefused
from gatedattn.models import forward, instantaneous_fingerprint
from gatedattn.numerics import Rng

from helpers import attention


@pytest.fixture
def setup():
    spec = tasks.TeacherStudentSpec(d=3, seq_len=10)
    teacher = tasks.make_teacher(spec)
    batch = tasks.gen_teacher_student(spec, Rng(5), 64, teacher)
    return teacher, batch


def test_compact_lambda_classes(setup):
    teacher, _ = setup
    net = compiler.compile_compact(teacher)
    classes = analysis.classify_lambda(net)
    assert classes.count(analysis.INTEGRATOR) == 6
    assert classes.count(analysis.MEMORYLESS) == 3


def test_prune_removes_dead_units(setup):
    teacher, batch = setup
    net = compiler.compile_full(teacher)
    n = net.n_hidden
    # append two dead hidden units: one without input gate, one never read
    pad = dataclasses.replace(
        net,
        w_m_in=np.vstack((net.w_m_in, np.zeros((1, net.w_m_in.shape[1])), np.ones((1, net.w_m_in.shape[1])))),
        w_x_in=np.vstack((net.w_x_in, np.ones((2, net.w_x_in.shape[1])))),
        lambda_raw=np.concatenate((net.lambda_raw, [0.5, 0.5])),
        w_m_out=np.hstack((net.w_m_out, np.zeros((net.w_m_out.shape[0], 2)))),
        w_x_out=np.hstack((net.w_x_out, np.zeros((net.w_x_out.shape[0], 2)))))
    pruned, rep = analysis.prune(pad, verify_batch=batch, bound=1e-12)
    assert rep.removed_hidden == [n, n + 1]
    assert pruned.n_hidden == n
    assert rep.deviation <= 1e-12


def test_prune_bound_violation(setup):
    teacher, batch = setup
    net = compiler.compile_full(teacher)
    shrunk = dataclasses.replace(net, w_m_in=net.w_m_in.copy())
    shrunk.w_m_in[0] *= 1e-6
    with pytest.raises(ValueError):
        analysis.prune(shrunk, verify_batch=batch, bound=1e-12)


def test_probe_on_compiled_network(setup):
    teacher, batch = setup
    rep = analysis.probe_kv_q(compiler.compile_full(teacher), teacher, batch)
    assert rep.n_integrators == 9 and rep.n_memoryless == 3
    assert rep.score_kv < 1e-12 and rep.score_q < 1e-12


def test_probe_detects_missing_state(setup):
    teacher, batch = setup
    net = compiler.compile_full(teacher)
    keep = [0, 1, 2, 9, 10, 11]  # three of nine integrators, all memoryless units
    sub = dataclasses.replace(net, w_m_in=net.w_m_in[keep], w_x_in=net.w_x_in[keep],
                              lambda_raw=net.lambda_raw[keep], w_m_out=net.w_m_out[:, keep],
                              w_x_out=net.w_x_out[:, keep])
    rep = analysis.probe_kv_q(sub, teacher, batch)
    assert rep.n_integrators == 3
    assert rep.score_kv > 1e-2
    assert rep.score_q < 1e-12


@pytest.mark.parametrize("name", ["full", "compact", "low_rank", "side"])
def test_fingerprint_of_compiled(name):
    teacher = attention(3, seed=2)
    assert analysis.fingerprint_distance(teacher, compiler.COMPILERS[name](teacher)) <= 1e-12


def test_fingerprint_separates_models():
    assert analysis.fingerprint_distance(attention(3, 1), attention(3, 2)) > 1e-2


def test_attention_fingerprint_is_cubic():
    fp = instantaneous_fingerprint(attention(4, seed=3))
    for comp in fp:
        assert comp.terms
        assert all(sum(exp) == 3 for exp in comp.terms)


def test_merge_rank1_rows(setup):
    teacher, batch = setup
    net = compiler.compile_full(teacher)
    # split gated row 0 into two copies with halved readout
    wm, wx, dr = net.w_m_out, net.w_x_out, net.d_readout
    split = dataclasses.replace(net, w_m_out=np.vstack((wm, wm[:1])), w_x_out=np.vstack((wx, wx[:1])),
                                d_readout=np.hstack((dr, dr[:, :1] * 0.5)))
    split.d_readout[:, 0] *= 0.5
    merged, rep = analysis.merge_rank1_rows(split, [0, wm.shape[0]], verify_batch=batch)
    assert merged.w_m_out.shape[0] == wm.shape[0]
    assert rep.max_ratio < 1e-12
    assert rep.deviation < 1e-10


def test_merge_refuses_rank2(setup):
    teacher, _ = setup
    net = compiler.compile_full(teacher)
    before = net.w_m_out.copy()
    with pytest.raises(MergeRefused):
        analysis.merge_rank1_rows(net, [0, 1, 2])
    assert np.array_equal(net.w_m_out, before)
    with pytest.raises(MergeRefused):
        analysis.merge_rank1_rows(net, [])


def test_icl_terms_of_gd_model():
    spec = tasks.IclRegressionSpec()
    eta = tasks.optimal_eta(spec)
    for model in (tasks.gd_as_attention(spec, eta), compiler.compile_full(tasks.gd_as_attention(spec, eta))):
        res = analysis.icl_polynomial_terms(model, 3, 3)
        assert np.allclose(res["table"], eta, rtol=1e-12, atol=0)
        assert res["residual"] < 1e-12
        assert set(res["terms"]) == {"x1^2*y1", "x2^2*y1", "x3^2*y1"}


@pytest.mark.parametrize("compiled", [False, True])
def test_recall_probe_rank1(compiled):
    spec = tasks.AssocRecallSpec(T=4)
    model = tasks.recall_attention(spec)
    if compiled:
        model = compiler.compile_side(model)
    res = analysis.recall_bilinear_probe(model, spec.T)
    assert res["all_rank1"]
    assert len(res["maps"]) == 16
    assert all(m["peak"] == [m["y"], m["x"]] for m in res["maps"])


def test_recall_probe_rejects_other_models(setup):
    teacher, _ = setup
    with pytest.raises(TypeError):
        analysis.recall_bilinear_probe(compiler.compile_full(teacher))


def test_display_order_groups_classes(setup):
    teacher, _ = setup
    net = compiler.compile_compact(teacher)
    order = analysis.display_order(net)
    classes = analysis.classify_lambda(net)
    ranks = [("integrator", "memoryless", "other").index(classes[i]) for i in order]
    assert ranks == sorted(ranks)
    assert sorted(order) == list(range(net.n_hidden))


def test_recall_probe_zero_network():
    from gatedattn.models import init as mi
    model = mi.init_side_gated_rnn(Rng(0), 8, 5, 8)
    model = dataclasses.replace(model, d_readout=np.zeros_like(model.d_readout))
    res = analysis.recall_bilinear_probe(model, 4)
    assert all(not np.any(m["matrix"]) and m["rank"] == 0 for m in res["maps"])


def test_prune_deviation_is_remeasured(setup):
    teacher, batch = setup
    net = compiler.compile_compact(teacher)
    noisy = dataclasses.replace(net, w_m_out=net.w_m_out + 1e-7 * np.sign(net.w_m_out))
    pruned, rep = analysis.prune(noisy, weight_tol=1e-3, verify_batch=batch)
    own = np.max(np.abs(forward(noisy, np.concatenate((batch.inputs, np.ones(batch.inputs.shape[:2] + (1,))), -1))
                        - forward(pruned, np.concatenate((batch.inputs, np.ones(batch.inputs.shape[:2] + (1,))), -1))))
    assert own == pytest.approx(rep.deviation, abs=1e-15)
