from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatvol.errors import ShapeError, UsageError
from heatvol.net3d import functional as F


def conv_oracle(x, w, b, stride, pad):
    """Direct cross-correlation by explicit kernel-offset einsum."""
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in pad))
    kt, kh, kw = w.shape[2:]
    out_sizes = [(x.shape[2 + a] + 2 * pad[a] - w.shape[2 + a]) // stride[a] + 1 for a in range(3)]
    out = np.zeros((x.shape[0], w.shape[0], *out_sizes))
    for dt, dh, dw in itertools.product(range(kt), range(kh), range(kw)):
        xs = xp[:, :, dt:dt + stride[0] * out_sizes[0]:stride[0],
                dh:dh + stride[1] * out_sizes[1]:stride[1],
                dw:dw + stride[2] * out_sizes[2]:stride[2]]
        out += np.einsum("nctij,oc->notij", xs, w[:, :, dt, dh, dw])
    if b is not None:
        out += b[None, :, None, None, None]
    return out


def pool_oracle(x, k, s, p):
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple((q, q) for q in p), constant_values=-np.inf)
    sizes = [(x.shape[2 + a] + 2 * p[a] - k[a]) // s[a] + 1 for a in range(3)]
    out = np.full(x.shape[:2] + tuple(sizes), -np.inf)
    for d in itertools.product(*(range(v) for v in k)):
        sl = tuple(slice(d[a], d[a] + s[a] * sizes[a], s[a]) for a in range(3))
        out = np.maximum(out, xp[(slice(None), slice(None)) + sl])
    return out


CASES = [
    ((2, 3, 4, 7, 7), (4, 3, 3, 3, 3), (1, 1, 1), (1, 1, 1)),
    ((1, 2, 5, 9, 8), (3, 2, 1, 7, 7), (1, 2, 2), (0, 3, 3)),
    ((2, 4, 3, 6, 6), (5, 4, 1, 1, 1), (1, 2, 2), (0, 0, 0)),
    ((1, 2, 6, 5, 5), (2, 2, 3, 1, 1), (2, 1, 1), (1, 0, 0)),
    ((1, 3, 1, 10, 11), (2, 3, 1, 3, 3), (1, 3, 2), (0, 1, 2)),
]


@pytest.mark.parametrize("xs,ws,stride,pad", CASES)
def test_conv_matches_oracle(xs, ws, stride, pad, rng):
    x, w, b = rng.standard_normal(xs), rng.standard_normal(ws), rng.standard_normal(ws[0])
    out, _ = F.conv3d_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(out, conv_oracle(x, w, b, stride, pad), atol=1e-12)


@pytest.mark.parametrize("xs,ws,stride,pad", CASES)
def test_conv_backward_is_adjoint(xs, ws, stride, pad, rng):
    x, w = rng.standard_normal(xs), rng.standard_normal(ws)
    out, cache = F.conv3d_forward(x, w, None, stride, pad)
    g = rng.standard_normal(out.shape)
    gx, gw, gb = F.conv3d_backward(g, cache)
    # <g, conv(x, w)> is bilinear, so its derivatives are exact linear maps
    dx, dw = rng.standard_normal(xs), rng.standard_normal(ws)
    assert np.sum(g * conv_oracle(dx, w, None, stride, pad)) == pytest.approx(np.sum(gx * dx))
    assert np.sum(g * conv_oracle(x, dw, None, stride, pad)) == pytest.approx(np.sum(gw * dw))
    np.testing.assert_allclose(gb, g.sum(axis=(0, 2, 3, 4)))


@pytest.mark.parametrize("xs,ws,stride,pad", CASES[:2])
def test_sparse_path_matches_dense(xs, ws, stride, pad, rng):
    x = rng.standard_normal(xs) * (rng.random(xs) < 0.02)
    w = rng.standard_normal(ws)
    dense, cd = F.conv3d_forward(x, w, None, stride, pad)
    sp, cs = F.conv3d_forward(x, w, None, stride, pad, sparse_input=True)
    assert cs.sparse_cols is not None and cd.sparse_cols is None
    np.testing.assert_allclose(sp, dense, atol=1e-12)
    g = rng.standard_normal(dense.shape)
    _, gw_d, _ = F.conv3d_backward(g, cd, need_input_grad=False)
    gx, gw_s, _ = F.conv3d_backward(g, cs, need_input_grad=False)
    assert gx is None
    np.testing.assert_allclose(gw_s, gw_d, atol=1e-12)


def test_sparse_path_skipped_for_dense_input(rng):
    x = rng.standard_normal((1, 2, 3, 5, 5))
    _, cache = F.conv3d_forward(x, rng.standard_normal((2, 2, 3, 3, 3)), padding=1,
                                sparse_input=True)
    assert cache.sparse_cols is None


def test_conv_dtype_follows_inputs(rng):
    x = rng.standard_normal((1, 2, 3, 5, 5)).astype(np.float32)
    w = rng.standard_normal((2, 2, 1, 3, 3)).astype(np.float32)
    assert F.conv3d_forward(x, w)[0].dtype == np.float32


def test_conv_shape_errors(rng):
    with pytest.raises(ShapeError):
        F.conv3d_forward(rng.standard_normal((1, 2, 3, 5, 5)), rng.standard_normal((2, 3, 1, 1, 1)))
    with pytest.raises(ShapeError):
        F.conv3d_forward(rng.standard_normal((1, 2, 1, 2, 2)), rng.standard_normal((2, 2, 1, 3, 3)))
    with pytest.raises(ShapeError):
        F.conv3d_forward(rng.standard_normal((2, 5, 5)), rng.standard_normal((2, 2, 1, 3, 3)))
    out, cache = F.conv3d_forward(rng.standard_normal((1, 2, 3, 5, 5)),
                                  rng.standard_normal((2, 2, 1, 1, 1)))
    with pytest.raises(ShapeError):
        F.conv3d_backward(np.zeros((1, 2, 3, 5, 4)), cache)


def test_conv_backward_without_forward():
    with pytest.raises(UsageError):
        F.conv3d_backward(np.zeros((1, 1, 1, 1, 1)), None)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2))
def test_output_extent_formula(size, k, s, p):
    if size + 2 * p < k:
        return
    assert F.conv_output_extent(size, k, s, p) == (size + 2 * p - k) // s + 1
    x = np.ones((1, 1, size, size, size))
    out, _ = F.conv3d_forward(x, np.ones((1, 1, k, k, k)), stride=s, padding=p)
    assert out.shape[2:] == (F.conv_output_extent(size, k, s, p),) * 3


@pytest.mark.parametrize("k,s,p", [((1, 3, 3), (1, 2, 2), (0, 1, 1)), ((2, 2, 2), 2, 0)])
def test_maxpool_matches_oracle(k, s, p, rng):
    x = rng.standard_normal((2, 3, 4, 9, 8))
    out, cache = F.max_pool3d_forward(x, k, s, p)
    np.testing.assert_array_equal(out, pool_oracle(x, F._triple(k), F._triple(s), F._triple(p)))
    g = rng.standard_normal(out.shape)
    gx = F.max_pool3d_backward(g, cache)
    assert gx.shape == x.shape and np.sum(gx) == pytest.approx(np.sum(g))


def test_maxpool_routes_to_argmax():
    x = np.zeros((1, 1, 1, 2, 2))
    x[0, 0, 0, 1, 0] = 5
    out, cache = F.max_pool3d_forward(x, (1, 2, 2), (1, 2, 2))
    gx = F.max_pool3d_backward(np.ones_like(out), cache)
    assert out.item() == 5 and gx[0, 0, 0, 1, 0] == 1 and gx.sum() == 1
