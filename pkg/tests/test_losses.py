from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatvol.net3d.gradcheck import loss_grad_check
from heatvol.net3d.losses import (
    argmax,
    cross_entropy,
    dual_loss,
    late_fuse,
    log_softmax,
    softmax,
)


def test_uniform_logits_loss_is_log_c():
    loss, _ = cross_entropy(np.zeros((4, 10)), [0, 1, 2, 3])
    assert loss == pytest.approx(np.log(10))


def test_gradient_formula(rng):
    z = rng.standard_normal((3, 5))
    y = np.array([4, 0, 2])
    _, g = cross_entropy(z, y)
    expected = softmax(z)
    expected[np.arange(3), y] -= 1
    np.testing.assert_allclose(g, expected / 3)


def test_gradient_matches_finite_differences(rng):
    y = np.array([1, 0, 3])
    err = loss_grad_check(lambda z: cross_entropy(z, y), rng.standard_normal((3, 4)))
    assert err < 1e-7


def test_single_vector():
    loss, g = cross_entropy(np.array([0.0, 0.0]), 1)
    assert loss == pytest.approx(np.log(2)) and g.shape == (2,)


def test_stable_for_large_logits():
    loss, g = cross_entropy(np.array([[1000.0, -1000.0]]), [0])
    assert loss == pytest.approx(0.0) and np.isfinite(g).all()


@pytest.mark.parametrize("labels", [[3], [-1], [0.5]])
def test_bad_labels(labels):
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((1, 3)), np.array(labels))


def test_label_count_mismatch():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((2, 3)), [0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-30, 30)))
def test_softmax_is_distribution(z):
    p = softmax(z)
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    np.testing.assert_allclose(log_softmax(z + 7.0), log_softmax(z), atol=1e-9)


def test_dual_loss_is_sum_and_separates_heads(rng):
    zp, zr = rng.standard_normal((2, 3, 4))
    y = np.array([0, 1, 2])
    loss, (gp, gr) = dual_loss(zp, zr, y)
    assert loss == pytest.approx(cross_entropy(zp, y)[0] + cross_entropy(zr, y)[0])
    np.testing.assert_array_equal(gp, cross_entropy(zp, y)[1])
    np.testing.assert_array_equal(gr, cross_entropy(zr, y)[1])


def test_argmax_ties_go_low():
    assert argmax([1.0, 3.0, 3.0]) == 1
    assert argmax(np.array([[2.0, 2.0], [0.0, 1.0]])).tolist() == [0, 1]


def test_late_fuse_weighted_sum():
    out = late_fuse([np.array([1.0, 0.0]), np.array([0.0, 2.0])], [1.0, 0.5])
    np.testing.assert_array_equal(out, [1.0, 1.0])
    np.testing.assert_array_equal(late_fuse([np.array([1.0, 2.0])] * 2), [2.0, 4.0])


@pytest.mark.parametrize("sets,weights", [
    ([np.zeros(2)], [1.0, 1.0]),
    ([np.zeros(2), np.zeros(3)], None),
    ([np.zeros(2)], [-1.0]),
    ([], None),
])
def test_late_fuse_errors(sets, weights):
    with pytest.raises(ValueError):
        late_fuse(sets, weights)
