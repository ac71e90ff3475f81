from __future__ import annotations

import numpy as np


class Tensor:
    """Dense array with an optional gradient of the same shape.

    Parameters of every layer are ``Tensor`` objects; activations flow between
    layers as plain ``numpy`` arrays.
    """

    __slots__ = ("values", "grad")

    def __init__(self, values, grad=None):
        self.values = np.asarray(values)
        if grad is not None:
            grad = np.asarray(grad)
            if grad.shape != self.values.shape:
                raise ValueError(
                    f"grad shape {grad.shape} does not match values shape {self.values.shape}"
                )
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.values.dtype, copy=True)
        else:
            self.grad += g

    def astype(self, dtype) -> None:
        self.values = self.values.astype(dtype)
        if self.grad is not None:
            self.grad = self.grad.astype(dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def as_array(x) -> np.ndarray:
    return x.values if isinstance(x, Tensor) else np.asarray(x)
