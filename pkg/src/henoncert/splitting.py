"""Invariant directions E/F along orbits and dominated-splitting checks.

The direction fields are produced by power iteration of the Jacobian cocycle:
F(x) is the most-expanded forward push of a generic vector from deep in the
backward orbit, E(x) the analogue under the inverse map. Domination is then
certified on a finite horizon by envelope-fitting the determinant-normalized
contraction ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import hermitian_angle
from .henon import EscapeOverflow

ANGLE_TOL = 1e-9
DEPTH_CAP = 2048

START_VECTORS = (
    np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0),
)


class SplittingUnresolved(Exception):
    """Internal marker: power iteration failed to settle on a direction."""


@dataclass(frozen=True)
class SplittingData:
    """E/F directions along an orbit window plus finite-horizon constants.

    lam / mu / big_c are estimates of the partial-hyperbolicity constants
    (forward contraction on E, backward contraction on F) fitted on `horizon`
    steps; with a finite sample big_c is a lower estimate only.
    """

    points: tuple
    m_minus: int
    e_dirs: tuple
    f_dirs: tuple
    min_angle: float
    invariance_residual: float
    resolved: bool
    message: str
    depth_used: int
    lam: float
    mu: float
    big_c: float
    horizon: int
    b: float
    period: int = None

    def _index(self, m: int) -> int:
        i = m - self.m_minus
        if self.period is not None:
            return i % self.period
        if not (0 <= i < len(self.points)):
            raise IndexError("orbit index %d outside splitting window" % m)
        return i

    def point(self, m: int):
        return self.points[self._index(m)]

    def e_dir(self, m: int):
        return self.e_dirs[self._index(m)]

    def f_dir(self, m: int):
        return self.f_dirs[self._index(m)]


def _orbit_walker(h, x, period):
    """Returns point(m) giving f^m(x); wraps exactly on periodic orbits."""
    if period is not None:
        cycle = [np.asarray(x, dtype=complex)]
        for _ in range(period - 1):
            cycle.append(h.apply(cycle[-1]))
        return lambda m: cycle[m % period]

    cache_fwd = [np.asarray(x, dtype=complex)]
    cache_bwd = [np.asarray(x, dtype=complex)]

    def point(m):
        if m >= 0:
            while len(cache_fwd) <= m:
                cache_fwd.append(h.apply(cache_fwd[-1]))
            return cache_fwd[m]
        while len(cache_bwd) <= -m:
            cache_bwd.append(h.apply_inverse(cache_bwd[-1]))
        return cache_bwd[-m]

    return point


def _push_forward(h, point, m0, depth, v):
    """Direction of Df^depth at f^(m0-depth)(x) applied to v."""
    w = v.astype(complex)
    for k in range(m0 - depth, m0):
        w = h.jacobian(point(k)) @ w
        n = np.linalg.norm(w)
        if n == 0 or not np.isfinite(n):
            raise SplittingUnresolved("cocycle push degenerated")
        w = w / n
    return w


def _pull_backward(h, point, m0, depth, v):
    """Direction of Df^-depth at f^(m0+depth)(x) applied to v."""
    w = v.astype(complex)
    for k in range(m0 + depth, m0, -1):
        w = np.linalg.solve(h.jacobian(point(k - 1)), w)
        n = np.linalg.norm(w)
        if n == 0 or not np.isfinite(n):
            raise SplittingUnresolved("cocycle pull degenerated")
        w = w / n
    return w


def _converge_direction(stepper, depth0=8, tol=ANGLE_TOL, cap=DEPTH_CAP):
    """Depth-doubling power iteration with the fixed start vectors."""
    rng = np.random.default_rng(7)
    starts = list(START_VECTORS)
    for _ in range(3):
        u = rng.normal(size=2) + 1j * rng.normal(size=2)
        starts.append(u / np.linalg.norm(u))
    last_err = None
    for v in starts:
        depth = depth0
        try:
            prev = stepper(depth, v)
            while depth <= cap:
                cur = stepper(2 * depth, v)
                if hermitian_angle(prev, cur) < tol:
                    return cur, 2 * depth
                prev = cur
                depth *= 2
        except (SplittingUnresolved, EscapeOverflow, np.linalg.LinAlgError) as err:
            last_err = err
            continue
    raise SplittingUnresolved(str(last_err) if last_err else "angle did not settle")


def _log_norms(h, point, m0, horizon, v, forward=True):
    """Cumulative log norms of the cocycle applied to v (no normalization lost)."""
    w = v.astype(complex)
    logs = []
    total = 0.0
    for k in range(horizon):
        if forward:
            w = h.jacobian(point(m0 + k)) @ w
        else:
            w = np.linalg.solve(h.jacobian(point(m0 - k - 1)), w)
        n = np.linalg.norm(w)
        total += float(np.log(n))
        logs.append(total)
        w = w / n
    return logs


def _envelope_fit(log_values):
    """Least-squares slope plus the smallest constant dominating the data."""
    n = np.arange(1, len(log_values) + 1, dtype=float)
    y = np.asarray(log_values, dtype=float)
    slope = float(np.polyfit(n, y, 1)[0]) if len(y) > 1 else y[0]
    c = float(np.exp(np.max(y - slope * n)))
    return np.exp(slope), c


def compute_directions(h, x, window=(0, 0), period=None, depth0=8,
                       tol=ANGLE_TOL, cap=DEPTH_CAP, horizon=60) -> SplittingData:
    """Resolve E and F at every point of the orbit window.

    Directions are computed independently at each point, so the reported
    invariance residual (angle between Df.F(x_m) and F(x_{m+1})) is a real
    self-consistency measure rather than a tautology. Failure to converge is
    reported through `resolved`/`message`, not raised.
    """
    m_minus, m_plus = (0, period - 1) if period is not None else window
    point = _orbit_walker(h, x, period)
    b = float(getattr(h, "jacobian_modulus"))

    e_dirs, f_dirs = [], []
    depth_used = 0
    try:
        for m in range(m_minus, m_plus + 1):
            f_dir, df = _converge_direction(
                lambda d, v, m=m: _push_forward(h, point, m, d, v), depth0, tol, cap)
            e_dir, de = _converge_direction(
                lambda d, v, m=m: _pull_backward(h, point, m, d, v), depth0, tol, cap)
            f_dirs.append(f_dir)
            e_dirs.append(e_dir)
            depth_used = max(depth_used, df, de)
    except SplittingUnresolved as err:
        pts = tuple(point(m) for m in range(m_minus, m_plus + 1))
        return SplittingData(pts, m_minus, (), (), 0.0, float("nan"), False,
                             "splitting unresolved: %s" % err, depth_used,
                             float("nan"), float("nan"), float("nan"),
                             horizon, b, period)

    pts = tuple(point(m) for m in range(m_minus, m_plus + 1))
    angles = [hermitian_angle(e, f) for e, f in zip(e_dirs, f_dirs)]

    residual = 0.0
    count = len(pts) if period is not None else len(pts) - 1
    for i in range(count):
        nxt = (i + 1) % len(pts)
        residual = max(residual,
                       hermitian_angle(h.jacobian(pts[i]) @ f_dirs[i], f_dirs[nxt]),
                       hermitian_angle(h.jacobian(pts[i]) @ e_dirs[i], e_dirs[nxt]))

    lam, c1 = _envelope_fit(_log_norms(h, point, m_minus, horizon, e_dirs[0], forward=True))
    inv_mu, c2 = _envelope_fit(_log_norms(h, point, m_minus, horizon, f_dirs[0], forward=False))
    return SplittingData(pts, m_minus, tuple(e_dirs), tuple(f_dirs),
                         float(min(angles)), float(residual), True, "",
                         depth_used, float(lam), float(1.0 / inv_mu),
                         float(max(c1, c2)), horizon, b, period)


def axis_splitting(h, x, horizon=60, period=1) -> SplittingData:
    """Splitting along the coordinate axes, for diagonal test cocycles whose
    directions are invariant but not dominated (power iteration would never
    settle there)."""
    e = np.array([0.0, 1.0], dtype=complex)
    f = np.array([1.0, 0.0], dtype=complex)
    pts = tuple([np.asarray(x, dtype=complex)] * period)
    b = float(getattr(h, "jacobian_modulus"))
    return SplittingData(pts, 0, (e,) * period, (f,) * period, float(np.pi / 2),
                         0.0, True, "axis splitting (assumed)", 0,
                         float("nan"), float("nan"), float("nan"), horizon, b, period)


@dataclass(frozen=True)
class DominationCertificate:
    """Finite-horizon domination evidence for one base point."""

    rho_f: tuple        # b^n / ||Df^n v_F||^2
    rho_e: tuple        # b^-n / ||Df^-n v_E||^2
    lam: float          # fitted envelope rate, must be < 1 to pass
    big_c: float
    passed: bool
    b: float
    horizon: int
    min_angle: float
    mu_estimate: float
    lam0: float = None
    mu0: float = None

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu_estimate,
            "C": self.big_c,
            "lambda0": self.lam0,
            "mu0": self.mu0,
            "horizon": self.horizon,
            "min_angle": self.min_angle,
            "pass": self.passed,
        }


def domination_check(h, data: SplittingData, horizon=None) -> DominationCertificate:
    """Evaluate both families of determinant-normalized ratios and fit the
    envelope rate; passes iff both are dominated by C*lam^n with lam < 1."""
    if not data.resolved:
        raise ValueError("splitting unresolved; no domination check possible")
    horizon = horizon or data.horizon
    point = _orbit_walker(h, data.points[0], data.period)
    log_b = np.log(data.b)

    fwd = _log_norms(h, point, data.m_minus, horizon, data.f_dirs[0], forward=True)
    bwd = _log_norms(h, point, data.m_minus, horizon, data.e_dirs[0], forward=False)
    n = np.arange(1, horizon + 1, dtype=float)
    log_rho_f = n * log_b - 2.0 * np.asarray(fwd)
    log_rho_e = -n * log_b - 2.0 * np.asarray(bwd)

    lam_f, c_f = _envelope_fit(log_rho_f)
    lam_e, c_e = _envelope_fit(log_rho_e)
    lam = float(max(lam_f, lam_e))
    big_c = float(max(c_f, c_e))
    passed = lam < 1.0 - 1e-9

    lam0 = mu0 = None
    if passed:
        lam0, mu0 = partial_hyperbolicity_constants(lam, data.b)
    return DominationCertificate(tuple(np.exp(log_rho_f)), tuple(np.exp(log_rho_e)),
                                 lam, big_c, passed, data.b, horizon,
                                 data.min_angle, data.mu, lam0, mu0)


def partial_hyperbolicity_constants(cert, b=None):
    """Derive the splitting rates (lam0, mu0) = (sqrt(b*lam), sqrt(b/lam)).

    lam0 < mu0 holds exactly when lam < 1; for b < 1 the slow direction is
    genuinely stable (lam0 < 1), and for b = 1 the pair straddles 1.
    """
    if isinstance(cert, DominationCertificate):
        lam = cert.lam
        b = cert.b if b is None else b
    else:
        lam = float(cert)
        if b is None:
            raise ValueError("b is required when passing a bare rate")
    if not (0.0 < lam < 1.0):
        raise ValueError("invalid certificate: need 0 < lambda < 1, got %g" % lam)
    lam0 = float(np.sqrt(b * lam))
    mu0 = float(np.sqrt(b / lam))
    assert (lam0 < mu0) == (lam < 1.0)
    if b < 1.0:
        assert lam0 < 1.0
    if b == 1.0:
        assert lam0 < 1.0 < mu0
    return lam0, mu0
