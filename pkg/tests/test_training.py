import dataclasses

import numpy as np
import pytest

from gatedattn import tasks
from gatedattn.errors import DivergenceError
from gatedattn.models import SequenceBatch
from gatedattn.models import init as mi
from gatedattn.numerics import Rng
from gatedattn.training import Schedule, batch_loss, cross_entropy_loss, mse_loss, train, trainable

SPEC = tasks.TeacherStudentSpec(d=2, seq_len=6)
TEACHER = tasks.make_teacher(SPEC)


def sample(rng, batch):
    return tasks.gen_teacher_student(SPEC, rng, batch, TEACHER)


def student(seed=0):
    return mi.init_gated_rnn(Rng(seed), 3, 6, 6, 2, augmented=True)


def test_mse_respects_mask():
    y = np.ones((1, 3, 2))
    batch = SequenceBatch(np.zeros((1, 3, 1)), np.zeros((1, 3, 2)), np.array([[0.0, 0.0, 1.0]]))
    y[0, :2] = 100.0
    assert float(mse_loss(y, batch)) == pytest.approx(0.5)


def test_cross_entropy_uniform_logits():
    batch = SequenceBatch(np.zeros((2, 1, 4)), np.zeros((2, 1, 4)), np.ones((2, 1)),
                          labels=np.array([0, 3]))
    assert float(cross_entropy_loss(np.zeros((2, 1, 4)), batch)) == pytest.approx(np.log(4))


def test_training_reduces_loss():
    val = sample(Rng(99), 256)
    model = student()
    before = batch_loss(model, val)
    res = train(model, sample, Schedule(iterations=300, batch=32, lr0=1e-2), seed=1,
                evaluate=lambda m: batch_loss(m, val))
    assert res.final_eval_loss < 0.5 * before
    assert len(res.eval_trace) == 50


def test_training_is_deterministic():
    sched = Schedule(iterations=20, batch=8)
    a = train(student(), sample, sched, seed=3)
    b = train(student(), sample, sched, seed=3)
    assert a.train_trace == b.train_trace
    pa, pb = trainable(a.model), trainable(b.model)
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)


def test_zero_learning_rate_freezes():
    model = student()
    res = train(model, sample, Schedule(iterations=5, batch=4, lr0=0.0, lr_min=0.0), seed=0)
    before, after = trainable(model), trainable(res.model)
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_checkpoints_and_callbacks():
    seen = []
    res = train(student(), sample, Schedule(iterations=6, batch=4, checkpoint_every=3), seed=0,
                callbacks=[lambda step, m, loss: seen.append(step)])
    assert [s for s, _ in res.checkpoints] == [3, 6]
    assert seen == list(range(1, 7))


def test_divergence_is_reported():
    model = student()
    big = dataclasses.replace(model, w_x_in=model.w_x_in * 1e6, w_m_in=model.w_m_in * 1e6)

    def loud(rng, batch):
        b = sample(rng, batch)
        return SequenceBatch(b.inputs * 1e6, b.targets, b.loss_mask)

    with pytest.raises(DivergenceError) as info:
        train(big, loud, Schedule(iterations=3, batch=2), seed=0)
    assert info.value.step == 0
    assert info.value.last_good is not None
