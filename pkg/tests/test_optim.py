import numpy as np
import pytest

from vidcompress import tensor as T
from vidcompress.optim import SGD, Adam, AdamState, SgdMomentumState, adam_step, sgd_momentum_step
from vidcompress.tensor import NonFiniteError, ShapeError


def test_adam_first_step_moves_by_lr_against_the_gradient_sign():
    # bias correction makes step one exactly lr * g / (|g| + eps)
    p = T.parameter([1.0, -2.0, 0.5])
    adam_step([p], [np.array([0.3, -4.0, 1e-3])], AdamState(lr=0.1))
    np.testing.assert_allclose(p.data, [0.9, -1.9, 0.4], atol=1e-5)


def test_adam_matches_hand_recurrence_over_three_steps():
    with T.precision(np.float64):
        p = T.parameter([0.0])
    st = AdamState(lr=0.01)
    m = v = 0.0
    theta = 0.0
    for t, g in enumerate([1.0, -0.5, 2.0], start=1):
        adam_step([p], [np.array([g])], st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p.data[0] == pytest.approx(theta, abs=1e-12)
    assert st.t == 3


def test_sgd_momentum_recurrence_with_weight_decay():
    with T.precision(np.float64):
        p = T.parameter([1.0])
    st = SgdMomentumState(lr=0.1, momentum=0.9, weight_decay=0.01)
    sgd_momentum_step([p], [np.array([1.0])], st)
    # v = 1 + 0.01 = 1.01; theta = 1 - 0.101
    assert p.data[0] == pytest.approx(0.899)
    sgd_momentum_step([p], [np.array([1.0])], st)
    v = 0.9 * 1.01 + 1.0 + 0.01 * 0.899
    assert p.data[0] == pytest.approx(0.899 - 0.1 * v)


def test_optimizers_reject_bad_grads():
    p = T.parameter([1.0, 2.0])
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(3)], AdamState())
    with pytest.raises(NonFiniteError):
        sgd_momentum_step([p], [np.array([np.nan, 0.0])], SgdMomentumState())


def test_optimizer_classes_minimize_a_quadratic():
    for make in (lambda ps: Adam(ps, lr=0.1), lambda ps: SGD(ps, lr=0.05, momentum=0.9)):
        x = T.parameter([3.0, -2.0])
        opt = make([x])
        for _ in range(200):
            opt.zero_grad()
            T.sum(T.square(x)).backward()
            opt.step()
        assert np.abs(x.data).max() < 1e-2


def test_optimizer_refuses_frozen_tensors():
    with pytest.raises(ValueError):
        Adam([T.Tensor([1.0])])
