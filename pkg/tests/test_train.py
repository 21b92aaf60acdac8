import numpy as np
import pytest

from conftest import random_corpus, toy_separable
from vstg.codec import UNLABELED, CodebookSpec, Corpus, split_corpus
from vstg.errors import DimensionMismatchError, LabelError, UsageError
from vstg.experiment import labeled_corpus
from vstg.model import Gradients, StudentModel, TeacherModel, backward
from vstg.train import (
    AdamState,
    EvalReport,
    TrainConfig,
    adam_step,
    distill_student,
    evaluate,
    make_soft_targets,
    train_student,
    train_teacher,
)

TINY = CodebookSpec(8, 4, 4)


def _const_grads(model, value):
    return Gradients({k: np.full_like(v, value) for k, v in model.params().items()}, np.zeros((1, model.K)))


# -- Adam -------------------------------------------------------------------------


@pytest.mark.parametrize("g", [0.3, -2.0, 1e-3])
def test_adam_first_step_is_lr_sign(g):
    cfg = TrainConfig(learning_rate=1e-3)
    m = StudentModel.init(TINY, 3, 2, 0)
    before = m.copy()
    adam_step(m, _const_grads(m, g), AdamState.for_model(m), cfg)
    for k, v in m.params().items():
        delta = v - before.params()[k]
        exact = -cfg.learning_rate * g / (abs(g) + cfg.epsilon)
        assert np.allclose(delta, exact, rtol=1e-9, atol=0)
        if abs(g) * 1e-6 > cfg.epsilon:
            assert np.allclose(delta, -cfg.learning_rate * np.sign(g), rtol=1e-6, atol=0)


def test_adam_zero_gradient_is_noop():
    cfg = TrainConfig()
    m = TeacherModel.init(TINY, 3, 2, 0)
    before = m.copy()
    state = AdamState.for_model(m)
    for _ in range(5):
        adam_step(m, _const_grads(m, 0.0), state, cfg)
    assert m.same_params(before)
    assert state.step == 5


def test_adam_matches_reference_update():
    cfg = TrainConfig(learning_rate=0.01)
    m = StudentModel.init(TINY, 3, 2, 1)
    state = AdamState.for_model(m)
    codes = random_corpus(TINY, 2, 8, 1).codes
    t = np.arange(8) % 2
    ref = m.w_p.copy()
    mom, vel = np.zeros_like(ref), np.zeros_like(ref)
    for step in range(1, 4):
        g = backward(m, codes, t)
        gw = g["w_p"].copy()
        adam_step(m, g, state, cfg)
        mom = 0.9 * mom + 0.1 * gw
        vel = 0.999 * vel + 0.001 * gw**2
        ref = ref - 0.01 * (mom / (1 - 0.9**step)) / (np.sqrt(vel / (1 - 0.999**step)) + 1e-8)
        assert np.allclose(m.w_p, ref, rtol=1e-12, atol=1e-15)


def test_adam_dense_semantics_moves_unused_rows():
    cfg = TrainConfig(learning_rate=0.1)
    m = StudentModel.init(TINY, 3, 2, 0)
    state = AdamState.for_model(m)
    codes = np.array([[[0, 0, 0], [0, 0, 0]]])
    adam_step(m, backward(m, codes, [1]), state, cfg)
    row7 = m.e1[7].copy()
    adam_step(m, backward(m, codes, [1]), state, cfg)
    # Row 7 never appears, so its moments stay zero and it stays in place.
    assert np.array_equal(m.e1[7], row7)
    # A row used once keeps drifting on momentum after its gradient vanishes.
    m2 = StudentModel.init(TINY, 3, 2, 0)
    s2 = AdamState.for_model(m2)
    adam_step(m2, backward(m2, codes, [1]), s2, cfg)
    other = np.array([[[1, 1, 1], [1, 1, 1]]])
    e1_row0 = m2.e1[0].copy()
    adam_step(m2, backward(m2, other, [1]), s2, cfg)
    assert not np.array_equal(m2.e1[0], e1_row0)


def test_adam_determinism_ten_steps():
    codes = random_corpus(TINY, 2, 16, 2).codes
    t = np.arange(16) % 2

    def run():
        m = TeacherModel.init(TINY, 3, 2, 4)
        st = AdamState.for_model(m)
        for i in range(10):
            adam_step(m, backward(m, codes[i % 2 :: 2], t[i % 2 :: 2]), st, TrainConfig())
        return m

    assert run().same_params(run())


def test_adam_shape_mismatch():
    m = StudentModel.init(TINY, 3, 2, 0)
    g = _const_grads(m, 1.0)
    g.params["w_p"] = np.zeros((2, 3))
    with pytest.raises(DimensionMismatchError):
        adam_step(m, g, AdamState.for_model(m), TrainConfig())


def test_config_validation():
    for kw in ({"learning_rate": 0}, {"beta1": 1.0}, {"batch_size": 0}, {"threshold": 1.0}, {"patience": 0}):
        with pytest.raises(UsageError):
            TrainConfig(**kw)


# -- training ---------------------------------------------------------------------


FAST = TrainConfig(epochs=6, batch_size=32, embed_dim=4, learning_rate=0.01, patience=None)


@pytest.fixture(scope="module")
def toy_splits():
    c = toy_separable(TINY, T=4, n=400, seed=1)
    return split_corpus(c, (0.8, 0.1, 0.1), 0)


def test_soft_targets_zero_teacher(toy_splits):
    train = toy_splits[0]
    t = make_soft_targets(TeacherModel.zeros(TINY, 4, 4), train)
    assert np.all(t == 0.5)
    teacher = TeacherModel.init(TINY, 4, 4, 3)
    a, b = make_soft_targets(teacher, train), make_soft_targets(teacher, train)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a <= 1))
    with pytest.raises(DimensionMismatchError):
        make_soft_targets(TeacherModel.zeros(TINY, 4, 5), train)


def test_oracle_targets_reproduce_hard_training(toy_splits):
    train, val, _ = toy_splits
    hard, hard_log = train_student(train, val, FAST)
    oracle, oracle_log = distill_student(train, val, None, FAST, targets=train.labels.astype(float))
    assert hard.same_params(oracle)
    assert hard_log.lines() == oracle_log.lines()


def test_training_is_deterministic(toy_splits):
    train, val, _ = toy_splits
    t1, l1 = train_teacher(train, val, FAST)
    t2, l2 = train_teacher(train, val, FAST)
    assert t1.same_params(t2) and l1.lines() == l2.lines()
    s1, _ = distill_student(train, val, t1, FAST)
    s2, _ = distill_student(train, val, t2, FAST)
    assert s1.same_params(s2)


def test_toy_corpus_is_learned(toy_splits):
    train, val, test = toy_splits
    teacher, log = train_teacher(train, val, FAST)
    assert log.best_val_accuracy == 1.0
    student, _ = distill_student(train, val, teacher, FAST)
    rep = evaluate(student, test)
    assert rep.accuracy == 1.0 and rep.fp == rep.fn == 0


def test_best_epoch_is_kept_and_early_stop(toy_splits):
    train, val, _ = toy_splits
    cfg = TrainConfig(epochs=40, batch_size=32, embed_dim=4, learning_rate=0.01, patience=2)
    model, log = train_student(train, val, cfg)
    assert log.stopped_early and len(log.records) < 40
    assert log.best_val_accuracy == max(log.val_accuracies)
    assert log.records[log.best_epoch - 1].val_accuracy == log.best_val_accuracy
    assert evaluate(model, val).accuracy == log.best_val_accuracy


def test_log_format(toy_splits):
    train, val, _ = toy_splits
    _, log = train_student(train, val, FAST)
    lines = log.lines()
    assert lines[0] == "epoch,train_loss,val_accuracy"
    assert len(lines) == 1 + 6 + 1
    assert lines[1].startswith("1,")
    assert lines[-1].startswith("summary,best_epoch=")


def test_training_loss_mostly_non_increasing():
    corpus = labeled_corpus(CodebookSpec(), 0.1, 0.5, 10, 2000, seed=3)
    train, val, _ = split_corpus(corpus, (0.8, 0.1, 0.1), 3)
    cfg = TrainConfig(epochs=15, embed_dim=16, patience=None)
    _, log = train_teacher(train, val, cfg)
    losses = log.train_losses
    ok = sum(b <= a for a, b in zip(losses, losses[1:]))
    assert ok >= 0.8 * (len(losses) - 1), losses


def test_unlabeled_rejected(toy_splits):
    train, val, _ = toy_splits
    labels = train.labels.copy()
    labels[3] = UNLABELED
    bad = Corpus(train.spec, train.window_len, train.codes, labels)
    with pytest.raises(LabelError):
        train_teacher(bad, val, FAST)
    with pytest.raises(LabelError):
        evaluate(StudentModel.zeros(TINY, 4, 4), bad)


# -- evaluation ---------------------------------------------------------------------


def test_half_model_accuracy_is_stego_fraction():
    c = random_corpus(TINY, 4, 100, 0, labels=np.arange(100) % 2)
    rep = evaluate(StudentModel.zeros(TINY, 4, 4), c, 0.5)
    assert rep.accuracy == 0.5
    assert rep.tp == 50 and rep.fp == 50 and rep.tn == rep.fn == 0
    assert rep.loss == pytest.approx(np.log(2))


def test_eval_invariants_and_order(toy_splits):
    _, _, test = toy_splits
    m = StudentModel.init(TINY, 4, 4, 8)
    rep = evaluate(m, test)
    assert rep.total == len(test)
    assert rep.accuracy == pytest.approx((rep.tp + rep.tn) / rep.total)
    perm = np.random.default_rng(0).permutation(len(test))
    assert evaluate(m, test.subset(perm)).accuracy == rep.accuracy


def test_eval_report_text():
    text = EvalReport(0.75, 0.5, 3, 1, 3, 1).to_text()
    assert text.splitlines()[0] == "accuracy=0.75"
    assert "total=8" in text
