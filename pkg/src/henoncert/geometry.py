"""Complex linear-algebra primitives: operator norms, adapted frames, polydiscs.

Everything here works on small dense complex arrays (dimension <= 8) and is
pure: no state, safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNITARY_TOL = 1e-12


def _as_complex_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError("expected a 1-d complex vector, got shape %s" % (v.shape,))
    return v


def check_finite(a, what="value"):
    a = np.asarray(a)
    if not np.all(np.isfinite(a.view(float) if a.dtype == complex else a)):
        raise ValueError("non-finite entries in %s" % what)
    return a


def op_norm(m) -> float:
    """Largest singular value of a complex matrix.

    Computed from the Hermitian eigenvalues of M*M, which is exact enough at
    the tiny dimensions used here and avoids a general SVD.
    """
    m = np.asarray(m, dtype=complex)
    check_finite(m, "matrix")
    if m.ndim != 2:
        raise ValueError("expected a matrix")
    w = np.linalg.eigvalsh(m.conj().T @ m)
    return float(np.sqrt(max(w[-1], 0.0)))


def hermitian_angle(u, v) -> float:
    """Principal angle in [0, pi/2] between the complex lines spanned by u, v.

    Phase-invariant: multiplying either vector by a unit complex scalar does
    not change the result.
    """
    u = _as_complex_vector(u)
    v = _as_complex_vector(v)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero vector has no direction")
    c = abs(np.vdot(u, v)) / (nu * nv)
    return float(np.arccos(min(c, 1.0)))


@dataclass(frozen=True)
class UnitaryFrame:
    """Square unitary matrix whose first `split` columns span a marked subspace."""

    matrix: np.ndarray
    split: int = 1

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", q)
        n = q.shape[0]
        if q.shape != (n, n):
            raise ValueError("frame must be square")
        defect = op_norm(q.conj().T @ q - np.eye(n))
        if defect > UNITARY_TOL:
            raise ValueError("columns are not orthonormal (defect %.3e)" % defect)
        if not (0 < self.split <= n):
            raise ValueError("split index out of range")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def orthonormal_frame(direction) -> UnitaryFrame:
    """Unitary frame whose first column is parallel to `direction`.

    Remaining columns are completed by Gram-Schmidt over the complex field
    with one re-orthogonalization pass.
    """
    d = _as_complex_vector(direction)
    check_finite(d, "direction")
    n = len(d)
    nd = np.linalg.norm(d)
    if nd == 0:
        raise ValueError("cannot build a frame from the zero vector")
    cols = [d / nd]
    for k in range(n):
        if len(cols) == n:
            break
        v = np.zeros(n, dtype=complex)
        v[k] = 1.0
        for _ in range(2):  # re-orthogonalize for stability
            for c in cols:
                v = v - np.vdot(c, v) * c
        nv = np.linalg.norm(v)
        if nv < 1e-8:
            continue  # candidate nearly dependent, try next axis
        cols.append(v / nv)
    q = np.column_stack(cols)
    return UnitaryFrame(q, split=1)


def pair_frame(primary, secondary) -> np.ndarray:
    """2x2 chart matrix with unit columns along two given complex lines.

    Used to put a splitting into coordinates: the chart maps e1 to the
    primary line and e2 to the secondary one. Not unitary unless the lines
    are orthogonal; raises if they are (numerically) parallel.
    """
    u = _as_complex_vector(primary)
    v = _as_complex_vector(secondary)
    if len(u) != 2 or len(v) != 2:
        raise ValueError("pair_frame is specific to dimension 2")
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    l = np.column_stack([u, v])
    if abs(np.linalg.det(l)) < 1e-10:
        raise ValueError("directions are parallel; no adapted chart")
    return l


@dataclass(frozen=True)
class Polydisc:
    """Open polydisc: per-coordinate strict discs around a common center."""

    center: np.ndarray
    radii: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _as_complex_vector(self.center)
        r = np.asarray(self.radii, dtype=float)
        if r.ndim == 0:
            r = np.full(len(c), float(r))
        if r.shape != c.shape:
            raise ValueError("radii/center dimension mismatch")
        if np.any(r <= 0):
            raise ValueError("radii must be positive")
        check_finite(c, "center")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radii", r)

    @property
    def dimension(self) -> int:
        return len(self.center)

    def contains(self, z) -> bool:
        """Strict membership test, coordinate by coordinate."""
        z = _as_complex_vector(z)
        if z.shape != self.center.shape:
            raise ValueError("point dimension mismatch")
        return bool(np.all(np.abs(z - self.center) < self.radii))
