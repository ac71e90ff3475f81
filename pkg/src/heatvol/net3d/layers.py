"""Layer modules with explicit forward/backward passes.

Every module caches what its backward pass needs during ``forward`` and
consumes it in ``backward(grad_out) -> grad_in``. Parameter gradients are
accumulated into the parameters' ``Tensor.grad``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, UsageError
from . import functional as F
from .tensor import Tensor


class Module:
    training = True

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()

    def _own(self, kind):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and name in getattr(self, kind, ()):
                yield name, value

    def named_parameters(self, prefix: str = ""):
        for name, t in self._own("param_names"):
            yield prefix + name, t
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = ""):
        for name, t in self._own("buffer_names"):
            yield prefix + name, t
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        for _, t in self.named_parameters():
            t.astype(dtype)
        for _, t in self.named_buffers():
            t.astype(dtype)
        return self

    def clear_cache(self) -> None:
        for m in self.modules():
            if hasattr(m, "_cache"):
                m._cache = None


class Identity(Module):
    def forward(self, x):
        return x

    def backward(self, grad):
        return grad


class Conv3d(Module):
    param_names = ("weight", "bias")

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 bias=True, rng=None, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = F._triple(kernel)
        self.stride = F._triple(stride)
        self.padding = F._triple(padding)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * int(np.prod(self.kernel))
        w = rng.standard_normal((out_channels, in_channels) + self.kernel) * np.sqrt(2.0 / fan_in)
        self.weight = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype)) if bias else None
        self.needs_input_grad = True
        self.sparse_input = False
        self._cache = None

    def output_shape(self, in_shape):
        return (in_shape[0], self.out_channels) + F.conv_output_shape(
            in_shape, self.kernel, self.stride, self.padding
        )

    def forward(self, x):
        out, cache = F.conv3d_forward(x, self.weight, self.bias, self.stride, self.padding,
                                      self.sparse_input)
        self._cache = cache if self.training or _keep_cache() else None
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv3d_backward(grad, self._cache, self.needs_input_grad)
        self.weight.accumulate(gw)
        if self.bias is not None:
            self.bias.accumulate(gb)
        self._cache = None
        return gx

    def param_count(self) -> int:
        n = self.weight.size
        return n + (self.bias.size if self.bias is not None else 0)

    def macs(self, in_shape) -> int:
        out = self.output_shape(in_shape)
        return int(np.prod(out[2:])) * self.out_channels * self.in_channels * int(
            np.prod(self.kernel)
        ) * in_shape[0]


class BatchNorm3d(Module):
    """Per-channel batch normalization over (N, T, H, W) with running statistics."""

    param_names = ("gamma", "beta")
    buffer_names = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = Tensor(np.zeros(channels, dtype=dtype))
        self.running_var = Tensor(np.ones(channels, dtype=dtype))
        self._cache = None

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        n, c = x.shape[:2]
        xr = x.reshape(n, c, -1)
        count = xr.shape[0] * xr.shape[2]
        if self.training:
            mean = xr.mean(axis=(0, 2))
            xc = xr - mean[:, None]
            var = np.einsum("ncm,ncm->c", xc, xc) / count
            m = self.momentum
            rm, rv = self.running_mean, self.running_var
            rm.values = ((1 - m) * rm.values + m * mean).astype(rm.dtype)
            unbiased = var * count / max(count - 1, 1)
            rv.values = ((1 - m) * rv.values + m * unbiased).astype(rv.dtype)
        else:
            xc = xr - self.running_mean.values[:, None]
            var = self.running_var.values
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = xc
        xhat *= inv_std[:, None]
        if self.training or _keep_cache():
            self._cache = (xhat, inv_std, self.training)
        out = xhat * self.gamma.values[:, None]
        out += self.beta.values[:, None]
        return out.reshape(x.shape)

    def backward(self, grad):
        if self._cache is None:
            raise UsageError("BatchNorm3d.backward called before forward")
        xhat, inv_std, batch_stats = self._cache
        self._cache = None
        shape = grad.shape
        g = grad.reshape(xhat.shape)
        dbeta = g.sum(axis=(0, 2))
        dgamma = np.einsum("ncm,ncm->c", g, xhat)
        self.gamma.accumulate(dgamma)
        self.beta.accumulate(dbeta)
        scale = (self.gamma.values * inv_std)[:, None]
        if not batch_stats:
            return (g * scale).reshape(shape)
        count = xhat.shape[0] * xhat.shape[2]
        gx = xhat * (-dgamma / count)[:, None]
        gx += g
        gx -= (dbeta / count)[:, None]
        gx *= scale
        return gx.reshape(shape)


class ReLU(Module):
    def __init__(self):
        self._cache = None
        self.last_mask = None

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        mask = x > 0
        if self.training or _keep_cache():
            self._cache = mask
            self.last_mask = mask
        return np.maximum(x, 0)

    def backward(self, grad):
        if self._cache is None:
            raise UsageError("ReLU.backward called before forward")
        mask, self._cache = self._cache, None
        return grad * mask


class MaxPool3d(Module):
    def __init__(self, kernel, stride, padding=0):
        self.kernel = F._triple(kernel)
        self.stride = F._triple(stride)
        self.padding = F._triple(padding)
        self._cache = None

    def output_shape(self, in_shape):
        return tuple(in_shape[:2]) + F.conv_output_shape(
            in_shape, self.kernel, self.stride, self.padding)

    def forward(self, x):
        out, cache = F.max_pool3d_forward(x, self.kernel, self.stride, self.padding)
        self._cache = cache if self.training or _keep_cache() else None
        return out

    def backward(self, grad):
        gx = F.max_pool3d_backward(grad, self._cache)
        self._cache = None
        return gx


class GlobalAvgPool(Module):
    """Mean over (T, H, W); maps (N, C, T, H, W) to (N, C)."""

    def __init__(self):
        self._cache = None

    def output_shape(self, in_shape):
        return tuple(in_shape[:2])

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(2, 3, 4))

    def backward(self, grad):
        if self._cache is None:
            raise UsageError("GlobalAvgPool.backward called before forward")
        shape, self._cache = self._cache, None
        scale = 1.0 / np.prod(shape[2:])
        return np.broadcast_to((grad * scale)[:, :, None, None, None], shape).copy()


class Linear(Module):
    param_names = ("weight", "bias")

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32, init_std=0.01):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor((rng.standard_normal((out_features, in_features)) * init_std).astype(dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))
        self._cache = None

    def output_shape(self, in_shape):
        return (in_shape[0], self.out_features)

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear expects {self.in_features} features, got input {x.shape}")
        self._cache = x
        return x @ self.weight.values.T + self.bias.values

    def backward(self, grad):
        if self._cache is None:
            raise UsageError("Linear.backward called before forward")
        x, self._cache = self._cache, None
        self.weight.accumulate(grad.T @ x)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.values


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def output_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.output_shape(in_shape)
        return in_shape

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


_KEEP = [False]


def _keep_cache() -> bool:
    return _KEEP[0]


class retain_activations:
    """Context manager: keep backward caches even in eval mode."""

    def __enter__(self):
        self._prev = _KEEP[0]
        _KEEP[0] = True

    def __exit__(self, *exc):
        _KEEP[0] = self._prev
