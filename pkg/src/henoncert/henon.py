"""Generalized complex Henon maps.

A generalized Henon map is a finite composition of elementary maps
(x, y) -> (y, p(y) - b*x) with deg(p) >= 2 and b != 0. These are polynomial
automorphisms of C^2 with constant Jacobian determinant; the modulus of that
determinant (written b below) controls dissipation.

All map operations accept either a single point of shape (2,) or a batch of
points of shape (..., 2) and broadcast over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .geometry import check_finite

# Iterates beyond this magnitude are treated as having left every bounded
# region; used as an overflow guard so polynomial evaluation stays finite.
OVERFLOW_LIMIT = 1e150


class EscapeOverflow(RuntimeError):
    """Raised when an iterate exceeds the overflow guard magnitude."""

    def __init__(self, point):
        super().__init__("iterate magnitude beyond overflow guard")
        self.point = point


def _split(z):
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != 2:
        raise ValueError("points live in C^2; expected trailing dimension 2")
    return z[..., 0], z[..., 1]


def _join(x, y):
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


@dataclass(frozen=True)
class ElementaryHenon:
    """One factor (x, y) -> (y, p(y) - b*x)."""

    p: tuple          # polynomial coefficients, ascending degree
    b: complex

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.p)
        if len(coeffs) < 3 or coeffs[-1] == 0:
            raise ValueError("p must have degree >= 2 with nonzero leading coefficient")
        if complex(self.b) == 0:
            raise ValueError("b must be nonzero")
        object.__setattr__(self, "p", coeffs)
        object.__setattr__(self, "b", complex(self.b))

    @property
    def degree(self) -> int:
        return len(self.p) - 1

    def p_at(self, y):
        return npoly.polyval(y, np.asarray(self.p))

    def dp_at(self, y):
        return npoly.polyval(y, npoly.polyder(np.asarray(self.p)))

    def apply(self, z):
        x, y = _split(z)
        return _join(y, self.p_at(y) - self.b * x)

    def apply_inverse(self, z):
        x, y = _split(z)
        return _join((self.p_at(x) - y) / self.b, x)

    def jacobian(self, z):
        _, y = _split(z)
        dp = self.dp_at(y)
        j = np.zeros(np.shape(dp) + (2, 2), dtype=complex)
        j[..., 0, 1] = 1.0
        j[..., 1, 0] = -self.b
        j[..., 1, 1] = dp
        return j


@dataclass(frozen=True)
class GeneralizedHenon:
    """Finite composition of elementary Henon factors, applied left to right."""

    factors: tuple

    def __post_init__(self):
        fs = tuple(self.factors)
        if not fs:
            raise ValueError("need at least one factor")
        for f in fs:
            if not isinstance(f, ElementaryHenon):
                raise TypeError("factors must be ElementaryHenon")
        object.__setattr__(self, "factors", fs)

    @property
    def degree(self) -> int:
        d = 1
        for f in self.factors:
            d *= f.degree
        return d

    @property
    def jacobian_modulus(self) -> float:
        b = 1.0
        for f in self.factors:
            b *= abs(f.b)
        return b

    @property
    def dissipative(self) -> bool:
        return self.jacobian_modulus < 1.0

    def _guard(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) > OVERFLOW_LIMIT) or not np.all(np.isfinite(z.view(float))):
            raise EscapeOverflow(z)
        return z

    def apply(self, z):
        z = self._guard(z)
        for f in self.factors:
            z = self._guard(f.apply(z))
        return z

    def apply_inverse(self, z):
        z = self._guard(z)
        for f in reversed(self.factors):
            z = self._guard(f.apply_inverse(z))
        return z

    def jacobian(self, z):
        z = self._guard(z)
        j = None
        for f in self.factors:
            jf = f.jacobian(z)
            j = jf if j is None else jf @ j
            z = f.apply(z)
        return j

    def iterate(self, z, n: int):
        """n-fold forward (n > 0) or backward (n < 0) image."""
        step = self.apply if n >= 0 else self.apply_inverse
        for _ in range(abs(n)):
            z = step(z)
        return z

    def filtration_radius(self) -> float:
        """Radius R of the escape region {|y| > R, |y| >= |x|}.

        For one factor with p = sum c_i y^i of degree d, any r >= 1 with
            |c_d| r^2 > (1 + |b| + sum_{1<=i<d} |c_i|) r + |c_0|
        satisfies |p(y) - b x| > |y| whenever |y| > r >= |x|, because the
        lower-order terms are dominated after dividing out r^(d-2). R is the
        positive root of that quadratic (clamped to >= 1); for compositions,
        the max over factors, which makes the region invariant for every
        factor and hence for the composite.
        """
        best = 1.0
        for f in self.factors:
            lead = abs(f.p[-1])
            b0 = abs(f.p[0])
            b1 = sum(abs(c) for c in f.p[1:-1]) + 1.0 + abs(f.b)
            r = (b1 + np.sqrt(b1 * b1 + 4.0 * lead * b0)) / (2.0 * lead)
            best = max(best, float(r))
        return best

    def in_escape_region(self, z, radius=None) -> bool:
        x, y = _split(np.asarray(z, dtype=complex))
        r = self.filtration_radius() if radius is None else radius
        return bool(abs(y) > r and abs(y) >= abs(x))

    def escapes(self, z, max_iter: int):
        """First step n <= max_iter at which the orbit enters the escape
        region, or None when it stays out for the whole window.

        Entering the region is monotone: once inside, |y| strictly grows and
        the iterate never leaves, so a single first-passage index suffices.
        An overflow of the iterates counts as escape at that step.
        """
        if max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        r = self.filtration_radius()
        z = np.asarray(z, dtype=complex)
        for n in range(max_iter + 1):
            if self.in_escape_region(z, r):
                return n
            if n == max_iter:
                break
            try:
                z = self.apply(z)
            except EscapeOverflow:
                return n + 1
        return None

    def spec_dict(self) -> dict:
        return {
            "factors": [
                {"p": [[c.real, c.imag] for c in f.p], "b": [f.b.real, f.b.imag]}
                for f in self.factors
            ]
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "GeneralizedHenon":
        """Build from the JSON map-spec format {"factors": [{"p": [...], "b": ...}]}.

        Coefficients may be plain numbers or [re, im] pairs.
        """
        def scalar(v):
            if isinstance(v, (list, tuple)):
                if len(v) != 2:
                    raise ValueError("complex scalar must be [re, im]")
                return complex(v[0], v[1])
            return complex(v)

        factors = []
        for fac in spec["factors"]:
            coeffs = [scalar(c) for c in fac["p"]]
            factors.append(ElementaryHenon(p=tuple(coeffs), b=scalar(fac["b"])))
        return cls(tuple(factors))


def single_factor(p, b) -> GeneralizedHenon:
    return GeneralizedHenon((ElementaryHenon(tuple(p), b),))


@dataclass(frozen=True)
class OrbitSegment:
    """Orbit points f^m(x) and Jacobians for m in [m_minus, m_plus].

    When `period` is set the segment is one full cycle starting at m_minus=0
    and indices wrap modulo the period.
    """

    map: object
    m_minus: int
    points: tuple
    jacobians: tuple
    period: int = None

    def _index(self, m: int) -> int:
        i = m - self.m_minus
        if self.period is not None:
            return i % self.period
        if not (0 <= i < len(self.points)):
            raise IndexError("orbit index %d outside segment" % m)
        return i

    @property
    def m_plus(self) -> int:
        return self.m_minus + len(self.points) - 1

    def point(self, m: int):
        return self.points[self._index(m)]

    def jacobian_at(self, m: int):
        return self.jacobians[self._index(m)]

    def verify(self, tol=1e-10) -> float:
        """Max residual of the defining relations; raises above tol."""
        worst = 0.0
        b = getattr(self.map, "jacobian_modulus", None)
        last = len(self.points) - 1 if self.period is None else len(self.points)
        for i in range(last):
            z = self.points[i]
            znext = self.points[(i + 1) % len(self.points)]
            worst = max(worst, float(np.linalg.norm(self.map.apply(z) - znext)))
        if b is not None:
            for z, j in zip(self.points, self.jacobians):
                worst = max(worst, abs(abs(np.linalg.det(j)) - b))
        if worst > tol:
            raise ValueError("orbit segment fails re-verification (%.3e)" % worst)
        return worst


def orbit_segment(h, x, m_minus: int, m_plus: int, period=None) -> OrbitSegment:
    """Compute an orbit segment with Jacobians attached at every point."""
    if period is not None:
        pts = [np.asarray(x, dtype=complex)]
        for _ in range(period - 1):
            pts.append(h.apply(pts[-1]))
        seg = OrbitSegment(h, 0, tuple(pts), tuple(h.jacobian(p) for p in pts), period)
    else:
        if m_plus < m_minus:
            raise ValueError("empty segment")
        x = np.asarray(x, dtype=complex)
        back = [x]
        for _ in range(-m_minus):
            back.append(h.apply_inverse(back[-1]))
        pts = list(reversed(back))
        for _ in range(m_plus):
            pts.append(h.apply(pts[-1]))
        seg = OrbitSegment(h, m_minus, tuple(pts), tuple(h.jacobian(p) for p in pts))
    check_finite(np.asarray(seg.points), "orbit points")
    return seg
