"""Array kernels for 3D convolution and pooling on NCTHW data.

Convolutions run on a flat, zero-padded, channel-major grid ``(C, N*T*H*W)``.
On that grid every kernel offset is a constant shift, so an im2col block is
a stack of contiguous row copies; blocks are sized to stay cache-resident.
Strided convolutions are rewritten as stride-1 convolutions: 1-wide kernel
axes are subsampled, wider ones are split into stride phases that are folded
into the channel axis (space-to-depth).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..errors import ShapeError, UsageError
from .tensor import as_array


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(a) for a in v)
    if len(t) != 3:
        raise ValueError(f"expected 3 values, got {v!r}")
    return t


def conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv_output_shape(in_shape, kernel, stride=1, padding=0) -> tuple[int, int, int]:
    """Spatio-temporal output extent ``(T, H, W)`` of a conv or pool."""
    kernel, stride, padding = _triple(kernel), _triple(stride), _triple(padding)
    return tuple(
        conv_output_extent(s, k, st, p)
        for s, k, st, p in zip(in_shape[-3:], kernel, stride, padding)
    )


def _window(offset, stride, out_sizes):
    return tuple(
        slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_sizes)
    )


@dataclass
class ConvCache:
    xf: np.ndarray
    x_shape: tuple
    weight: np.ndarray
    w2: np.ndarray
    geom: "_Geometry"
    sparse_cols: "sparse.csr_matrix | None" = None


@dataclass
class _Geometry:
    """Bookkeeping for mapping a strided conv onto a stride-1 conv over a flat grid."""

    x_shape: tuple          # original (N, C, T, H, W)
    w_shape: tuple          # original (Co, C, kt, kh, kw)
    padding: tuple
    stride: tuple
    out_sizes: tuple        # final (To, Ho, Wo)
    padded: tuple           # padded (Tp, Hp, Wp) before phase split
    sub: tuple              # per-axis subsampling factor for 1-wide kernels
    phases: tuple           # per-axis phase count folded into channels
    grid: tuple             # per-axis grid extent after phase split
    kernel: tuple           # per-axis kernel extent after phase split

    @property
    def offsets(self):
        _, g1, g2 = self.grid
        return [dt * g1 * g2 + dh * g2 + dw
                for dt, dh, dw in itertools.product(*(range(k) for k in self.kernel))]


def _plan(x_shape, w_shape, stride, padding) -> _Geometry:
    out_sizes = conv_output_shape(x_shape, w_shape[2:], stride, padding)
    padded = tuple(s + 2 * p for s, p in zip(x_shape[2:], padding))
    sub, phases, grid, kernel = [], [], [], []
    for n_out, k, s, size in zip(out_sizes, w_shape[2:], stride, padded):
        if s == 1:
            sub.append(1), phases.append(1), grid.append(size), kernel.append(k)
        elif k == 1:
            sub.append(s), phases.append(1), grid.append(n_out), kernel.append(1)
        else:
            kq = -(-k // s)
            sub.append(1), phases.append(s), kernel.append(kq)
            grid.append(max(-(-size // s), n_out + kq - 1))
    return _Geometry(tuple(x_shape), tuple(w_shape), padding, stride, out_sizes, padded,
                     tuple(sub), tuple(phases), tuple(grid), tuple(kernel))


def _to_grid(x, g: _Geometry) -> np.ndarray:
    """NCTHW input -> (C * phases, N * grid) flat channel-major array."""
    n, c = x.shape[:2]
    xp = np.zeros((c, n) + g.padded, dtype=x.dtype)
    pt, ph, pw = g.padding
    t, h, w = x.shape[2:]
    xp[:, :, pt:pt + t, ph:ph + h, pw:pw + w] = x.transpose(1, 0, 2, 3, 4)
    if any(s > 1 for s in g.sub):
        xp = xp[(slice(None), slice(None)) + tuple(
            slice(0, s * (e - 1) + 1, s) if s > 1 else slice(None) for s, e in zip(g.sub, g.grid))]
    if any(p > 1 for p in g.phases):
        full = tuple(e * p for e, p in zip(g.grid, g.phases))
        buf = np.zeros((c, n) + full, dtype=x.dtype)
        crop = tuple(slice(0, min(a, b)) for a, b in zip(xp.shape[2:], full))
        buf[(slice(None), slice(None)) + crop] = xp[(slice(None), slice(None)) + crop]
        (gt, gh, gw), (st, sh, sw) = g.grid, g.phases
        buf = buf.reshape(c, n, gt, st, gh, sh, gw, sw).transpose(0, 3, 5, 7, 1, 2, 4, 6)
        xp = buf.reshape((c * st * sh * sw, n) + g.grid)
    return np.ascontiguousarray(xp).reshape(xp.shape[0], -1)


def _from_grid(gxf, g: _Geometry, dtype) -> np.ndarray:
    """Adjoint of :func:`_to_grid`: flat grid gradient -> NCTHW gradient."""
    n, c = g.x_shape[:2]
    st, sh, sw = g.phases
    gt, gh, gw = g.grid
    gx = gxf.reshape((c, st, sh, sw, n) + g.grid)
    if any(p > 1 for p in g.phases):
        gx = gx.transpose(0, 4, 5, 1, 6, 2, 7, 3).reshape(c, n, gt * st, gh * sh, gw * sw)
    else:
        gx = gx.reshape((c, n) + g.grid)
    gp = np.zeros((c, n) + g.padded, dtype=dtype)
    dst, src = [], []
    for s, e, p in zip(g.sub, gx.shape[2:], g.padded):
        if s > 1:
            dst.append(slice(0, s * (e - 1) + 1, s))
            src.append(slice(None))
        else:
            dst.append(slice(0, min(e, p)))
            src.append(slice(0, min(e, p)))
    gp[(slice(None), slice(None)) + tuple(dst)] = gx[(slice(None), slice(None)) + tuple(src)]
    pt, ph, pw = g.padding
    t, h, w = g.x_shape[2:]
    return np.ascontiguousarray(
        gp[:, :, pt:pt + t, ph:ph + h, pw:pw + w].transpose(1, 0, 2, 3, 4))


def _weight_to_grid(w, g: _Geometry) -> np.ndarray:
    """(Co, C, kt, kh, kw) -> (Co, K) with rows matching the im2col layout."""
    co, c = w.shape[:2]
    st, sh, sw = g.phases
    kt, kh, kw = g.kernel
    if any(p > 1 for p in g.phases):
        full = np.zeros((co, c, kt * st, kh * sh, kw * sw), dtype=w.dtype)
        full[:, :, :w.shape[2], :w.shape[3], :w.shape[4]] = w
        w = full.reshape(co, c, kt, st, kh, sh, kw, sw).transpose(0, 1, 3, 5, 7, 2, 4, 6)
        w = w.reshape(co, c * st * sh * sw, kt, kh, kw)
    # offset-major, channel-minor
    return np.ascontiguousarray(w.transpose(0, 2, 3, 4, 1)).reshape(co, -1)


def _weight_from_grid(gw2, g: _Geometry) -> np.ndarray:
    co, c = g.w_shape[:2]
    st, sh, sw = g.phases
    kt, kh, kw = g.kernel
    cg = c * st * sh * sw
    gw = gw2.reshape(co, kt, kh, kw, cg).transpose(0, 4, 1, 2, 3)
    if any(p > 1 for p in g.phases):
        gw = gw.reshape(co, c, st, sh, sw, kt, kh, kw).transpose(0, 1, 5, 2, 6, 3, 7, 4)
        gw = gw.reshape(co, c, kt * st, kh * sh, kw * sw)
        gw = gw[:, :, :g.w_shape[2], :g.w_shape[3], :g.w_shape[4]]
    return np.ascontiguousarray(gw)


def _chunk(k: int) -> int:
    return int(min(4096, max(128, (1 << 18) // max(k, 1))))


SPARSE_DENSITY = 0.05


def _sparse_cols(xf, offs, span):
    """im2col matrix ``(K, span)`` of a mostly-zero grid, as CSR.

    Row ``i * C + c`` holds channel ``c`` shifted by offset ``i``. Nonzeros of
    ``xf`` come out sorted by (channel, position), so each row is already in
    column order and the CSR arrays can be assembled without sorting.
    """
    n_ch = xf.shape[0]
    c, q = np.nonzero(xf)
    vals = xf[c, q]
    data, indices, counts = [], [], []
    for o in offs:
        p = q - o
        keep = (p >= 0) & (p < span)
        data.append(vals[keep])
        indices.append(p[keep].astype(np.int32))
        counts.append(np.bincount(c[keep], minlength=n_ch))
    indptr = np.zeros(len(offs) * n_ch + 1, dtype=np.int64)
    np.cumsum(np.concatenate(counts), out=indptr[1:])
    return sparse.csr_matrix((np.concatenate(data), np.concatenate(indices), indptr),
                             shape=(len(offs) * n_ch, span))


def conv3d_forward(x, weight, bias=None, stride=1, padding=0, sparse_input=False):
    """Cross-correlate ``x`` (N, C, T, H, W) with ``weight`` (Co, C, kt, kh, kw).

    Returns ``(out, cache)``; pass ``cache`` to :func:`conv3d_backward`.
    Output extent per axis is ``(in + 2 * pad - kernel) // stride + 1``.
    With ``sparse_input`` an input that is at most 5% nonzero (such as a
    heatmap volume) is multiplied through a sparse im2col matrix instead.
    """
    x = as_array(x)
    w = as_array(weight)
    stride, padding = _triple(stride), _triple(padding)
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError(f"expected 5-D input and weight, got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(
            f"input {x.shape} has {x.shape[1]} channels but weight {w.shape} expects {w.shape[1]}")
    out_sizes = conv_output_shape(x.shape, w.shape[2:], stride, padding)
    if min(out_sizes) < 1:
        raise ShapeError(
            f"kernel {tuple(w.shape[2:])} does not fit input {x.shape} with padding {padding}")
    dtype = np.result_type(x, w)
    g = _plan(x.shape, w.shape, stride, padding)
    xf = _to_grid(x.astype(dtype, copy=False), g)
    w2 = _weight_to_grid(w.astype(dtype, copy=False), g)
    offs = g.offsets
    lf = xf.shape[1]
    span = lf - offs[-1]
    y = np.zeros((w.shape[0], lf), dtype=dtype)
    scols = None
    if sparse_input and len(offs) > 1 and np.count_nonzero(xf) <= SPARSE_DENSITY * xf.size:
        scols = _sparse_cols(xf, offs, span)
        y[:, :span] = (scols.T @ w2.T).T
    elif len(offs) == 1:
        np.matmul(w2, xf, out=y)
    else:
        ch = _chunk(w2.shape[1])
        cols = np.empty((len(offs), xf.shape[0], ch), dtype=dtype)
        for a in range(0, span, ch):
            b = min(a + ch, span)
            for i, o in enumerate(offs):
                cols[i, :, :b - a] = xf[:, o + a:o + b]
            np.matmul(w2, cols.reshape(-1, ch)[:, :b - a], out=y[:, a:b])
    n = x.shape[0]
    to, ho, wo = out_sizes
    out = y.reshape((-1, n) + g.grid)[:, :, :to, :ho, :wo].transpose(1, 0, 2, 3, 4)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += as_array(bias).astype(dtype, copy=False)[None, :, None, None, None]
    return out, ConvCache(xf, x.shape, w, w2, g, scols)


def conv3d_backward(grad_out, cache: ConvCache | None, need_input_grad: bool = True):
    """Gradients ``(grad_input, grad_weight, grad_bias)`` of a forward call.

    ``grad_input`` is ``None`` when ``need_input_grad`` is false.
    """
    if cache is None:
        raise UsageError("conv3d_backward called without retained forward state")
    gout = as_array(grad_out)
    g, xf, w2 = cache.geom, cache.xf, cache.w2
    n = g.x_shape[0]
    co = g.w_shape[0]
    expected = (n, co) + g.out_sizes
    if gout.shape != expected:
        raise ShapeError(f"grad_out shape {gout.shape} does not match forward output {expected}")
    gb = gout.sum(axis=(0, 2, 3, 4))
    to, ho, wo = g.out_sizes
    gy = np.zeros((co, n) + g.grid, dtype=xf.dtype)
    gy[:, :, :to, :ho, :wo] = gout.transpose(1, 0, 2, 3, 4)
    gy = gy.reshape(co, -1)
    offs = g.offsets
    lf = xf.shape[1]
    span = lf - offs[-1]
    gxf = np.zeros_like(xf) if need_input_grad else None
    if cache.sparse_cols is not None and not need_input_grad:
        gw2 = np.ascontiguousarray((cache.sparse_cols @ gy[:, :span].T).T, dtype=xf.dtype)
    elif len(offs) == 1:
        gw2 = gy @ xf.T
        if need_input_grad:
            gxf = w2.T @ gy
    else:
        gw2 = np.zeros_like(w2)
        ch = _chunk(w2.shape[1])
        cols = np.empty((len(offs), xf.shape[0], ch), dtype=xf.dtype)
        for a in range(0, span, ch):
            b = min(a + ch, span)
            m = b - a
            for i, o in enumerate(offs):
                cols[i, :, :m] = xf[:, o + a:o + b]
            gw2 += gy[:, a:b] @ cols.reshape(-1, ch)[:, :m].T
            if need_input_grad:
                gcols = (w2.T @ gy[:, a:b]).reshape(len(offs), xf.shape[0], m)
                for i, o in enumerate(offs):
                    gxf[:, o + a:o + b] += gcols[i]
    gw = _weight_from_grid(gw2, g)
    gx = _from_grid(gxf, g, xf.dtype) if need_input_grad else None
    return gx, gw, gb


@dataclass
class PoolCache:
    argmax: np.ndarray
    xp_shape: tuple
    x_shape: tuple
    kernel: tuple
    stride: tuple
    padding: tuple
    out_sizes: tuple


def max_pool3d_forward(x, kernel, stride, padding=0):
    x = as_array(x)
    kernel, stride, padding = _triple(kernel), _triple(stride), _triple(padding)
    out_sizes = conv_output_shape(x.shape, kernel, stride, padding)
    if min(out_sizes) < 1:
        raise ShapeError(f"pool kernel {kernel} does not fit input {x.shape}")
    if any(padding):
        xp = np.pad(
            x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding), constant_values=-np.inf
        )
    else:
        xp = x
    out = np.full(x.shape[:2] + out_sizes, -np.inf, dtype=x.dtype)
    argmax = np.zeros(out.shape, dtype=np.int16)
    for i, off in enumerate(itertools.product(*(range(k) for k in kernel))):
        xs = xp[(slice(None), slice(None)) + _window(off, stride, out_sizes)]
        better = xs > out
        out = np.where(better, xs, out)
        argmax[better] = i
    return out, PoolCache(argmax, xp.shape, x.shape, kernel, stride, padding, out_sizes)


def max_pool3d_backward(grad_out, cache: PoolCache | None):
    if cache is None:
        raise UsageError("max_pool3d_backward called without retained forward state")
    g = as_array(grad_out)
    gxp = np.zeros(cache.xp_shape, dtype=g.dtype)
    for i, off in enumerate(itertools.product(*(range(k) for k in cache.kernel))):
        sl = (slice(None), slice(None)) + _window(off, cache.stride, cache.out_sizes)
        gxp[sl] += np.where(cache.argmax == i, g, 0)
    pt, ph, pw = cache.padding
    t, h, w = cache.x_shape[2:]
    return np.ascontiguousarray(gxp[:, :, pt:pt + t, ph:ph + h, pw:pw + w])
