"""Analytic fields with gradients, used as exact solutions and loads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class FieldFunction:
    """A vector field R^2 -> R^N with its gradient.

    ``value(x)`` maps points (..., 2) to (..., N) and ``grad(x)`` to
    (..., N, 2). Scalar fields use N = 1.
    """

    value: Callable
    grad: Callable
    components: int = 1
    name: str = "field"

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def sinsin(k: float = 1.0) -> FieldFunction:
    """v(x) = sin(k pi x1) sin(k pi x2)."""
    w = k * np.pi

    def value(x):
        return (np.sin(w * x[..., 0]) * np.sin(w * x[..., 1]))[..., None]

    def grad(x):
        gx = w * np.cos(w * x[..., 0]) * np.sin(w * x[..., 1])
        gy = w * np.sin(w * x[..., 0]) * np.cos(w * x[..., 1])
        return np.stack([gx, gy], axis=-1)[..., None, :]

    return FieldFunction(value, grad, 1, f"sinsin(k={k:g})")


def bubble() -> FieldFunction:
    """v(x) = 16 x1 (1 - x1) x2 (1 - x2)."""

    def value(x):
        a, b = x[..., 0], x[..., 1]
        return (16 * a * (1 - a) * b * (1 - b))[..., None]

    def grad(x):
        a, b = x[..., 0], x[..., 1]
        return np.stack([16 * (1 - 2 * a) * b * (1 - b), 16 * a * (1 - a) * (1 - 2 * b)], axis=-1)[..., None, :]

    return FieldFunction(value, grad, 1, "bubble")


def affine(coeffs, offset=0.0) -> FieldFunction:
    """v(x) = offset + coeffs . x (scalar) or per component for 2D ``coeffs``."""
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    b = np.atleast_1d(np.asarray(offset, dtype=float)) * np.ones(len(c))

    def value(x):
        return x @ c.T + b

    def grad(x):
        return np.broadcast_to(c, x.shape[:-1] + c.shape).copy()

    return FieldFunction(value, grad, len(c), "affine")


def constant_field(value: float = 1.0) -> FieldFunction:
    def val(x):
        return np.full(x.shape[:-1] + (1,), float(value))

    def grad(x):
        return np.zeros(x.shape[:-1] + (1, 2))

    return FieldFunction(val, grad, 1, f"constant({value:g})")


def zero() -> FieldFunction:
    return constant_field(0.0)


REGISTRY = {
    "sinsin": sinsin,
    "bubble": bubble,
    "zero": zero,
    "constant": constant_field,
}


def from_config(spec) -> FieldFunction:
    """Build from a name or ``{"kind": name, **params}``."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "affine":
        return affine(spec["coeffs"], spec.get("offset", 0.0))
    if kind not in REGISTRY:
        raise ValueError(f"unknown field {kind!r}; choose from {sorted(REGISTRY) + ['affine']}")
    return REGISTRY[kind](**spec)
