"""Fully connected network with two rectified hidden layers and a linear output.

Inputs are batches of row vectors, shape ``(batch, inputs)``; a single 1-D
vector is accepted and returned as 1-D. ``backward`` returns gradients summed
over the batch, so duplicating a row doubles its contribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from furnace_control.lib.errors import DimensionError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray


def relu(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.maximum(x, 0.0)


def relu_grad(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.where(x > 0, 1.0, 0.0)


@dataclass(frozen=True)
class ForwardCache:
    x: NDArray[np.float64]
    z1: NDArray[np.float64]
    a1: NDArray[np.float64]
    z2: NDArray[np.float64]
    a2: NDArray[np.float64]


@dataclass(frozen=True)
class Gradients:
    weights: tuple[NDArray[np.float64], ...]
    biases: tuple[NDArray[np.float64], ...]
    inputs: NDArray[np.float64]


class Mlp:
    def __init__(
        self,
        weights: Sequence[NDArray[np.float64]],
        biases: Sequence[NDArray[np.float64]],
    ) -> None:
        if len(weights) != 3 or len(biases) != 3:
            msg = f"expected 3 layers, got {len(weights)} weights and {len(biases)} biases"
            raise DimensionError(msg)
        for w, b in zip(weights, biases, strict=True):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                msg = f"layer shapes disagree: weight {w.shape}, bias {b.shape}"
                raise DimensionError(msg)
        for prev, nxt in zip(weights, weights[1:], strict=False):
            if nxt.shape[1] != prev.shape[0]:
                msg = f"layer {prev.shape} does not feed {nxt.shape}"
                raise DimensionError(msg)
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]

    @classmethod
    def create(cls, sizes: Sequence[int], rng: np.random.Generator) -> Mlp:
        """He-initialized network for ``(inputs, hidden1, hidden2, outputs)``."""
        if len(sizes) != 4 or min(sizes) < 1:
            msg = f"sizes must be four positive integers (got {tuple(sizes)})"
            raise DimensionError(msg)
        weights = [
            rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
            for fan_in, fan_out in zip(sizes, sizes[1:], strict=False)
        ]
        biases = [np.zeros(n) for n in sizes[1:]]
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> Mlp:
        pairs = list(zip(sizes, sizes[1:], strict=False))
        return cls([np.zeros((o, i)) for i, o in pairs], [np.zeros(o) for _, o in pairs])

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *(w.shape[0] for w in self.weights))

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def _as_batch(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if batch.ndim != 2 or batch.shape[1] != self.input_size:
            msg = f"expected input width {self.input_size}, got shape {np.shape(x)}"
            raise DimensionError(msg)
        return batch

    def forward(self, x: NDArray[np.float64]) -> tuple[NDArray[np.float64], ForwardCache]:
        batch = self._as_batch(x)
        w1, w2, w3 = self.weights
        b1, b2, b3 = self.biases
        z1 = batch @ w1.T + b1
        a1 = relu(z1)
        z2 = a1 @ w2.T + b2
        a2 = relu(z2)
        y = a2 @ w3.T + b3
        cache = ForwardCache(batch, z1, a1, z2, a2)
        return (y[0] if np.ndim(x) == 1 else y), cache

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, dy: NDArray[np.float64]) -> Gradients:
        """Gradients of ``sum(dy * y)`` with respect to every parameter."""
        dy = np.atleast_2d(np.asarray(dy, dtype=np.float64))
        if dy.shape != (cache.x.shape[0], self.output_size):
            msg = f"upstream gradient shape {dy.shape} does not match output"
            raise DimensionError(msg)
        w1, w2, w3 = self.weights
        dw3 = dy.T @ cache.a2
        db3 = dy.sum(axis=0)
        dz2 = (dy @ w3) * relu_grad(cache.z2)
        dw2 = dz2.T @ cache.a1
        db2 = dz2.sum(axis=0)
        dz1 = (dz2 @ w2) * relu_grad(cache.z1)
        dw1 = dz1.T @ cache.x
        db1 = dz1.sum(axis=0)
        return Gradients((dw1, dw2, dw3), (db1, db2, db3), dz1 @ w1)

    def apply(self, grads: Gradients, learning_rate: float) -> None:
        """Plain gradient-descent step; pass a negative rate for ascent."""
        for i in range(3):
            self.weights[i] -= learning_rate * grads.weights[i]
            self.biases[i] -= learning_rate * grads.biases[i]

    def parameters(self) -> list[NDArray[np.float64]]:
        """Parameters in ``W1, b1, W2, b2, W3, b3`` order."""
        return [p for pair in zip(self.weights, self.biases, strict=True) for p in pair]

    def set_parameters(self, params: Sequence[NDArray[np.float64]]) -> None:
        current = self.parameters()
        if len(params) != len(current) or any(
            p.shape != c.shape for p, c in zip(params, current, strict=True)
        ):
            msg = "parameter arrays do not match the network shape"
            raise DimensionError(msg)
        self.weights = [np.array(p, dtype=np.float64) for p in params[0::2]]
        self.biases = [np.array(p, dtype=np.float64) for p in params[1::2]]

    def copy(self) -> Mlp:
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(bool(np.isfinite(p).all()) for p in self.parameters())
