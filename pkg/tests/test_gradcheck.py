from __future__ import annotations

import numpy as np
import pytest

from heatvol.net3d.checks import TARGETS
from heatvol.net3d.gradcheck import (
    FunctionOp,
    grad_check,
    grad_check_report,
    loss_grad_check,
    relative_error,
)
from heatvol.net3d.layers import Linear, ReLU, Sequential


def test_relative_error_sign_flip_is_two():
    assert relative_error(1.0, -1.0) == pytest.approx(2.0)
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-5)


def test_linear_layer_is_exact(rng):
    lin = Linear(5, 3, rng=rng, dtype=np.float64, init_std=1.0)
    assert grad_check(lin, rng.standard_normal((2, 5))) < 1e-9


def test_sign_flipped_gradient_is_caught(rng):
    op = FunctionOp(lambda x: x ** 2, lambda x, g: -2 * x * g)
    rep = grad_check_report(op, rng.standard_normal((3, 3)) + 2.0)
    assert rep.max_rel_error == pytest.approx(2.0) and not rep.passed()


def test_scaled_gradient_is_caught(rng):
    op = FunctionOp(np.sin, lambda x, g: 1.01 * np.cos(x) * g)
    assert grad_check(op, rng.standard_normal(10)) > 5e-3


def test_kinks_are_skipped():
    net = Sequential(ReLU())
    x = np.array([[1e-5, 1.0, -1.0]])
    rep = grad_check_report(net, x, epsilon=1e-4)
    assert rep.skipped == 1 and rep.checked == 2 and rep.passed()


def test_loss_grad_check_catches_wrong_gradient(rng):
    assert loss_grad_check(lambda z: (float(np.sum(z ** 3)), 3 * z ** 2),
                           rng.standard_normal(6)) < 1e-5
    assert loss_grad_check(lambda z: (float(np.sum(z ** 3)), 2 * z ** 2),
                           rng.standard_normal(6)) > 0.1


def test_parameters_restored(rng):
    lin = Linear(4, 2, rng=rng, dtype=np.float64)
    before = lin.weight.values.copy()
    grad_check(lin, rng.standard_normal((3, 4)))
    np.testing.assert_array_equal(lin.weight.values, before)


@pytest.mark.parametrize("name", sorted(TARGETS))
def test_standard_targets_pass(name):
    rep = TARGETS[name]()
    assert rep.checked > 0
    assert rep.max_rel_error < 1e-5, rep
