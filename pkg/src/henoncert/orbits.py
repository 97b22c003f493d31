"""Periodic orbits: Newton search, multipliers, Lyapunov exponents, and the
uniform-expansion report over the found saddles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .henon import GeneralizedHenon

NEWTON_TOL = 1e-11
VERIFY_TOL = 1e-9
DUPLICATE_TOL = 1e-6   # decoupled from the Newton tolerance on purpose
PARK_LIMIT = 1e8       # seeds beyond this magnitude are abandoned


@dataclass(frozen=True)
class GridSpec:
    """Seed layout for the periodic-orbit Newton search.

    `size` controls a size x size grid over the real (Re x, Re y) slice of
    the filtration bidisc; `random` adds that many seeded complex points for
    maps whose periodic points need not be real.
    """

    size: int = 64
    random: int = 256
    seed: int = 0
    scale: float = 1.0

    def refined(self, factor=1.5) -> "GridSpec":
        return GridSpec(int(self.size * factor), int(self.random * factor),
                        self.seed, self.scale)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A verified cycle with its return-map spectrum.

    multipliers are the eigenvalues of the Jacobian product around the cycle,
    ordered by decreasing modulus; exponents are their log-moduli divided by
    the period, ordered increasingly.
    """

    points: tuple
    period: int
    multipliers: tuple
    exponents: tuple
    classification: str
    residual: float

    @property
    def base(self):
        return self.points[0]

    @property
    def is_saddle(self) -> bool:
        return self.classification == "saddle"


def _point_key(z):
    z = np.asarray(z, dtype=complex)
    return (z[0].real, z[0].imag, z[1].real, z[1].imag)


def _raw_apply(h, z):
    if isinstance(h, GeneralizedHenon):
        for f in h.factors:
            z = f.apply(z)
        return z
    return h.apply(z)


def _raw_step(h, z, jac):
    """One map application with the Jacobian cocycle accumulated, no guards."""
    if isinstance(h, GeneralizedHenon):
        for f in h.factors:
            jac = f.jacobian(z) @ jac
            z = f.apply(z)
        return z, jac
    return h.apply(z), h.jacobian(z) @ jac


def cycle_jacobian(h, points):
    """Ordered product of Jacobians around the cycle."""
    j = np.eye(2, dtype=complex)
    for z in points:
        j = h.jacobian(z) @ j
    return j


def classify(multipliers, tol=1e-9) -> str:
    mods = sorted(abs(m) for m in multipliers)
    if any(abs(m - 1.0) <= tol for m in mods):
        return "neutral"
    if mods[0] < 1.0 < mods[1]:
        return "saddle"
    if mods[1] < 1.0:
        return "attracting"
    return "repelling"


def multipliers(h, points):
    """Eigenvalues of the return derivative, largest modulus first."""
    ev = np.linalg.eigvals(cycle_jacobian(h, points))
    ev = sorted(ev, key=abs, reverse=True)
    return complex(ev[0]), complex(ev[1])


def orbit_from_base(h, z, period: int) -> PeriodicOrbit:
    pts = [np.asarray(z, dtype=complex)]
    for _ in range(period - 1):
        pts.append(h.apply(pts[-1]))
    base_i = min(range(period), key=lambda i: _point_key(pts[i]))
    pts = pts[base_i:] + pts[:base_i]
    residual = float(np.linalg.norm(h.apply(pts[-1]) - pts[0]))
    mu = multipliers(h, pts)
    lams = sorted(np.log(abs(m)) / period for m in mu)
    return PeriodicOrbit(tuple(pts), period, mu, (float(lams[0]), float(lams[1])),
                         classify(mu), residual)


def _search_radius(h) -> float:
    if hasattr(h, "filtration_radius"):
        return h.filtration_radius()
    return 4.0


def _seeds(h, grid: GridSpec) -> np.ndarray:
    r = _search_radius(h) * grid.scale
    t = np.linspace(-r, r, grid.size)
    xs, ys = np.meshgrid(t, t)
    seeds = np.stack([xs.ravel().astype(complex), ys.ravel().astype(complex)], axis=-1)
    if grid.random > 0:
        rng = np.random.default_rng(grid.seed)
        u = rng.uniform(-r, r, size=(grid.random, 4))
        rand = np.stack([u[:, 0] + 1j * u[:, 1], u[:, 2] + 1j * u[:, 3]], axis=-1)
        seeds = np.concatenate([seeds, rand], axis=0)
    return seeds


def _newton_batch(h, n, seeds, max_iter=60):
    """Vectorized Newton for f^n(z) = z; returns converged points and the
    number of seeds dropped for a singular step."""
    z = seeds.astype(complex).copy()
    alive = np.ones(len(z), dtype=bool)
    singular = 0
    eye = np.eye(2, dtype=complex)
    for _ in range(max_iter):
        if not alive.any():
            break
        w = z.copy()
        jac = np.broadcast_to(eye, (len(z), 2, 2)).copy()
        for _ in range(n):
            big = np.abs(w).max(axis=-1) > PARK_LIMIT
            if big.any():
                alive &= ~big
                w[big] = 0.0
            w, jac = _raw_step(h, w, jac)
        g = w - z
        a = jac.copy()
        a[:, 0, 0] -= 1.0
        a[:, 1, 1] -= 1.0
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        sing = np.abs(det) < 1e-14
        if (sing & alive).any():
            singular += int((sing & alive).sum())
            alive &= ~sing
        det = np.where(sing, 1.0, det)
        dz = np.empty_like(z)
        dz[:, 0] = (a[:, 1, 1] * g[:, 0] - a[:, 0, 1] * g[:, 1]) / det
        dz[:, 1] = (a[:, 0, 0] * g[:, 1] - a[:, 1, 0] * g[:, 0]) / det
        step = np.abs(dz).max(axis=-1)
        z[alive] -= dz[alive]
        done = alive & (step < NEWTON_TOL)
        alive &= ~done
        far = np.abs(z).max(axis=-1) > PARK_LIMIT
        alive &= ~far
    return z, singular


def _residual(h, z, n):
    w = np.asarray(z, dtype=complex)
    for _ in range(n):
        w = _raw_apply(h, w)
    return float(np.linalg.norm(w - z))


def _cluster(points):
    """Greedy dedup of near-identical points (tolerance DUPLICATE_TOL)."""
    reps = []
    for z in sorted(points, key=_point_key):
        matched = False
        for r in reversed(reps):
            if z[0].real - r[0].real > DUPLICATE_TOL:
                break
            if np.abs(z - r).max() < DUPLICATE_TOL:
                matched = True
                break
        if not matched:
            reps.append(z)
    return reps


def find_periodic(h, n: int, grid: GridSpec = GridSpec()):
    """All found orbits of exact period n, deduplicated and verified.

    Points whose exact period strictly divides n are filtered out; every
    returned orbit satisfies ||f^n(z) - z|| < VERIFY_TOL at each point.
    """
    if n < 1:
        raise ValueError("period must be >= 1")
    z, _singular = _newton_batch(h, n, _seeds(h, grid))
    good = []
    finite = np.isfinite(z.view(float)).all(axis=1)
    for cand in z[finite]:
        if np.abs(cand).max() > 2 * _search_radius(h) + 10:
            continue
        if _residual(h, cand, n) < VERIFY_TOL:
            good.append(cand)
    unique = _cluster(good)

    orbits = {}
    for z0 in unique:
        # exact period: smallest divisor of n that already closes the orbit
        exact = n
        for m in range(1, n):
            if n % m == 0 and _residual(h, z0, m) < VERIFY_TOL:
                exact = m
                break
        if exact != n:
            continue
        orb = orbit_from_base(h, z0, n)
        key = tuple(round(v, 5) for v in _point_key(orb.base))
        if key not in orbits:
            orbits[key] = orb
    return sorted(orbits.values(), key=lambda o: _point_key(o.base))


def find_fixed_points(h, grid: GridSpec = GridSpec()):
    """Fixed points; solved analytically for single-factor maps.

    A point (x, y) is fixed iff x = y and p(y) - (1 + b) y = 0, so for one
    factor the complete root set comes from the companion matrix of that
    polynomial. Compositions fall back to the period-1 Newton search.
    """
    if isinstance(h, GeneralizedHenon) and len(h.factors) == 1:
        f = h.factors[0]
        poly = list(f.p)
        poly[1] -= 1.0 + f.b
        roots = np.roots(list(reversed(poly)))
        out = []
        for y in roots:
            z = np.array([y, y], dtype=complex)
            out.append(orbit_from_base(h, z, 1))
        return sorted(out, key=lambda o: _point_key(o.base))
    return find_periodic(h, 1, grid)


def find_up_to_period(h, max_period: int, grid: GridSpec = GridSpec()):
    orbits = []
    for n in range(1, max_period + 1):
        orbits.extend(find_fixed_points(h, grid) if n == 1 else find_periodic(h, n, grid))
    return orbits


def expanding_directions(h, orbit: PeriodicOrbit):
    """Unit vectors spanning the expanding eigendirection along the cycle."""
    jac = cycle_jacobian(h, orbit.points)
    ev, vecs = np.linalg.eig(jac)
    order = np.argsort(-np.abs(ev))
    if abs(abs(ev[order[0]]) - abs(ev[order[1]])) < 1e-12:
        raise ValueError("multipliers have equal modulus; no expanding direction")
    v = vecs[:, order[0]]
    dirs = [v / np.linalg.norm(v)]
    for z in orbit.points[:-1]:
        v = h.jacobian(z) @ dirs[-1]
        dirs.append(v / np.linalg.norm(v))
    return dirs


def orbit_log_average(h, points, directions) -> float:
    """Average of log ||Df restricted to the given line|| around the cycle.

    Invariant under cyclic re-basing because it is a plain sum.
    """
    if len(points) != len(directions):
        raise ValueError("need one direction per orbit point")
    total = 0.0
    for z, v in zip(points, directions):
        total += float(np.log(np.linalg.norm(h.jacobian(z) @ v)))
    return total / len(points)


@dataclass
class ExpansionReport:
    """Per-orbit expansion rates and the fitted uniform-expansion constants."""

    rates: list                 # (orbit, chi) pairs
    chi_min: float
    lambda1: float
    big_c: float
    alarm: bool
    alarm_threshold: float
    witness: PeriodicOrbit = None
    margin: float = 0.0

    def as_dict(self) -> dict:
        return {
            "chi_min": self.chi_min,
            "lambda1": self.lambda1,
            "C": self.big_c,
            "zero_exponent_alarm": self.alarm,
            "alarm_threshold": self.alarm_threshold,
            "orbit_count": len(self.rates),
        }


def uniform_expansion_report(h, orbits, alarm_threshold=0.02, margin=0.0) -> ExpansionReport:
    """Expansion-at-the-period summary over a set of found orbits.

    chi(p) is the cycle average of log ||Df|_F||; for saddles this equals the
    positive Lyapunov exponent. The fitted (C, lambda1) are a reporting
    convention: lambda1 = exp(-chi_min + margin) and C the smallest envelope
    constant over the sample.
    """
    if not orbits:
        raise ValueError("need at least one orbit")
    rates = []
    for orb in orbits:
        try:
            dirs = expanding_directions(h, orb)
            chi = orbit_log_average(h, orb.points, dirs)
        except ValueError:
            chi = orb.exponents[1]  # equal-modulus cycle: use the exponent itself
        rates.append((orb, float(chi)))
    chi_min = min(r for _, r in rates)
    witness = min(rates, key=lambda t: t[1])[0]
    lambda1 = float(np.exp(-chi_min + margin))
    big_c = 1.0
    for orb, chi in rates:
        big_c = max(big_c, float(np.exp(-chi * orb.period) / lambda1 ** orb.period))
    alarm = chi_min < alarm_threshold
    return ExpansionReport(rates, float(chi_min), lambda1, big_c, alarm,
                           alarm_threshold, witness, margin)
