"""Synthetic test maps sharing the Henon map protocol.

These small biholomorphisms of C^2 (apply / apply_inverse / jacobian /
jacobian_modulus) serve as designed witnesses: exactly solvable hyperbolic
models and maps with a neutral direction that must fail every probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearMap:
    """f(z) = M z for an invertible 2x2 complex matrix M."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2) or np.linalg.det(m) == 0:
            raise ValueError("need an invertible 2x2 matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def jacobian_modulus(self) -> float:
        return float(abs(np.linalg.det(self.matrix)))

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        return z @ self.matrix.T

    def apply_inverse(self, z):
        z = np.asarray(z, dtype=complex)
        return z @ np.linalg.inv(self.matrix).T

    def jacobian(self, z):
        z = np.asarray(z, dtype=complex)
        return np.broadcast_to(self.matrix, z.shape[:-1] + (2, 2)).copy()


@dataclass(frozen=True)
class QuadraticModel:
    """f(x, y) = (a x, b y + q x^2): hyperbolic with an exactly known curved leaf.

    The invariant graph over the expanding axis is y = q x^2 / (a^2 - b),
    which for the default (a, b, q) = (2, 1/2, 1) is y = (2/7) x^2.
    """

    a: complex = 2.0
    b: complex = 0.5
    q: complex = 1.0

    @property
    def jacobian_modulus(self) -> float:
        return float(abs(self.a * self.b))

    @property
    def leaf_coefficient(self) -> complex:
        return self.q / (self.a * self.a - self.b)

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z[..., 0], z[..., 1]
        return np.stack(np.broadcast_arrays(self.a * x, self.b * y + self.q * x * x), axis=-1)

    def apply_inverse(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z[..., 0], z[..., 1]
        u = x / self.a
        return np.stack(np.broadcast_arrays(u, (y - self.q * u * u) / self.b), axis=-1)

    def jacobian(self, z):
        z = np.asarray(z, dtype=complex)
        x = z[..., 0]
        j = np.zeros(np.shape(x) + (2, 2), dtype=complex)
        j[..., 0, 0] = self.a
        j[..., 1, 0] = 2.0 * self.q * x
        j[..., 1, 1] = self.b
        return j


def linear_hyperbolic(expansion=2.0, contraction=0.5) -> LinearMap:
    """Diagonal hyperbolic model f(x, y) = (expansion*x, contraction*y)."""
    return LinearMap(np.diag([complex(expansion), complex(contraction)]))


def neutral_synthetic(contraction=0.5, phase=0.0) -> LinearMap:
    """Map with a neutral (modulus-one) direction: f(x, y) = (e^{i phase} x, c y).

    Backward images along the first axis never shrink, so every asymptotic
    probe must fail on it even though the splitting is still dominated.
    """
    return LinearMap(np.diag([np.exp(1j * phase), complex(contraction)]))


def equal_modulus_synthetic(rate=0.5, phase=0.3) -> LinearMap:
    """Rotationally neutral cocycle: both multipliers share one modulus."""
    return LinearMap(np.diag([rate * np.exp(1j * phase), complex(rate)]))


MODEL_BUILDERS = {
    "linear": lambda params: linear_hyperbolic(
        params.get("expansion", 2.0), params.get("contraction", 0.5)
    ),
    "quadratic": lambda params: QuadraticModel(
        params.get("a", 2.0), params.get("b", 0.5), params.get("q", 1.0)
    ),
    "neutral": lambda params: neutral_synthetic(
        params.get("contraction", 0.5), params.get("phase", 0.0)
    ),
    "equal_modulus": lambda params: equal_modulus_synthetic(
        params.get("rate", 0.5), params.get("phase", 0.3)
    ),
}


def model_from_spec(spec: dict):
    """Build a synthetic model from {"model": {"kind": name, ...params}}."""
    params = dict(spec["model"])
    kind = params.pop("kind")
    try:
        return MODEL_BUILDERS[kind](params)
    except KeyError:
        raise ValueError("unknown synthetic model %r" % kind) from None
