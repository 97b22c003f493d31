"""Sampled probes on center-unstable leaves.

Three asymptotic behaviors are probed on a converged leaf family: backward
controllability (small leaf pieces stay small and eventually shrink under
the inverse map), the overlap certificate (quantified nesting of backward
images inside fixed topological balls), and forward expansiveness (every
off-base leaf point separates from the base orbit beyond a uniform
constant). Probes are evidence at a sampled resolution, never proofs;
reports carry their sample spec and an explicit effective horizon.

Distances on leaves use chart coordinates, which match the induced leaf
distance up to the Lipschitz factor (1 + gamma); tolerance budgets account
for that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .henon import EscapeOverflow

GRAPH_TOL = 1e-6


@dataclass(frozen=True)
class SampleSpec:
    angles: int = 16
    radii: int = 8

    def leaf_points(self, radius):
        """Nonzero leaf coordinates on concentric circles."""
        rho = np.linspace(radius / self.radii, radius, self.radii)
        theta = 2.0 * np.pi * np.arange(self.angles) / self.angles
        pts = (rho[:, None] * np.exp(1j * theta)[None, :]).ravel()
        return pts


def _forward_base(solution, n):
    """f^n of the base point, exact along the stored (possibly wrapped) orbit."""
    fam = solution.family
    return fam.bases[fam.slot(fam.base_slot + n)]


def _effective_horizon(solution, horizon, graph_tol):
    """Cap the backward horizon so transverse drift stays under the
    membership tolerance: residuals off the true leaf grow like lam^-n."""
    residual = max(solution.invariance_residual, 1e-15)
    lam = solution.family.lam
    if lam >= 1.0:
        return horizon
    budget = np.log(graph_tol / (2.0 * residual)) / np.log(1.0 / lam)
    return max(1, min(horizon, int(budget)))


def _backward_membership(h, solution, u, n, radius, graph_tol):
    """Is f^-n(embed(u)) inside the radius-piece of the backward leaf?"""
    z = solution.base.embed(u)
    try:
        for _ in range(n):
            z = h.apply_inverse(z)
    except EscapeOverflow:
        return False, float("inf"), float("inf")
    chart = solution.chart_backward(n)
    hv = chart.to_chart(z)
    coord, off = abs(hv[0]), abs(hv[1] - chart.graph(hv[0]))
    return bool(coord < radius and off < graph_tol), coord, off


@dataclass
class BackwardReport:
    """Outcome of the dynamically-defined probe."""

    passed: bool
    r0: float
    r1: float
    n_uniform: int          # least N with f^-n images inside radius r0 for n >= N
    horizon: int
    effective_horizon: int
    graph_tol: float
    witness: tuple = None   # (leaf coordinate, n) of the first violation
    spec: SampleSpec = field(default_factory=SampleSpec)

    def as_dict(self):
        return {"pass": self.passed, "r0": self.r0, "r1": self.r1,
                "N": self.n_uniform, "horizon": self.horizon,
                "effective_horizon": self.effective_horizon,
                "graph_tol": self.graph_tol,
                "witness": None if self.witness is None else
                [self.witness[0].real, self.witness[0].imag, self.witness[1]]}


def dynamically_defined_probe(h, solution, r1=None, r0=None, spec=SampleSpec(),
                              horizon=24, graph_tol=GRAPH_TOL) -> BackwardReport:
    """Backward controllability of the cu-leaf at a sampled resolution.

    Finds by bisection the largest r0 such that sampled points of the
    r0-piece have all backward images (up to the effective horizon) inside
    the r1-piece of the matching backward leaf, then the least N after which
    images of the r1-piece sit inside radius r0. Passing an explicit r0
    skips the bisection for the N computation. A violation is reported with
    its witness rather than raised.
    """
    if solution.kind != "cu":
        raise ValueError("probe expects a cu-leaf family")
    r = solution.base.size
    if r1 is None:
        r1 = 0.8 * r
    if not (0 < r1 <= r):
        raise ValueError("need 0 < r1 <= leaf size")
    n_eff = _effective_horizon(solution, horizon, graph_tol)

    def contained(rad_small, rad_big, n):
        for u in spec.leaf_points(rad_small):
            ok, _, _ = _backward_membership(h, solution, u, n, rad_big, graph_tol)
            if not ok:
                return u
        return None

    def all_steps(rad_small, rad_big):
        for n in range(1, n_eff + 1):
            w = contained(rad_small, rad_big, n)
            if w is not None:
                return w, n
        return None

    if r0 is None:
        lo, hi = 0.0, r1
        witness = None
        for _ in range(24):
            mid = 0.5 * (lo + hi) if lo > 0 else (0.95 * r1 if hi == r1 else 0.5 * hi)
            bad = all_steps(mid, r1)
            if bad is None:
                lo = mid
            else:
                hi = mid
                witness = bad
        if lo == 0.0:
            return BackwardReport(False, 0.0, r1, -1, horizon, n_eff, graph_tol,
                                  witness, spec)
        r0 = lo
    else:
        bad = all_steps(r0, r1)
        if bad is not None:
            return BackwardReport(False, r0, r1, -1, horizon, n_eff, graph_tol,
                                  bad, spec)

    # least N with the r1-piece mapped inside radius r0 for every n >= N
    n_uniform = None
    for n_start in range(1, n_eff + 1):
        ok = True
        for n in range(n_start, n_eff + 1):
            if contained(r1, r0, n) is not None:
                ok = False
                break
        if ok:
            n_uniform = n_start
            break
    if n_uniform is None:
        w = contained(r1, r0, n_eff)
        return BackwardReport(False, r0, r1, -1, horizon, n_eff, graph_tol,
                              (w if w is not None else 0j, n_eff), spec)
    return BackwardReport(True, float(r0), float(r1), n_uniform, horizon,
                          n_eff, graph_tol, None, spec)


@dataclass
class OverlapCertificate:
    """Quantified nesting data for backward leaf images.

    radii are strictly ordered r_minus1 < r0 < r1 < r2 < r; the topological
    balls are realized as chart discs of radius `ball_radius` between
    r_minus1 and r0.
    """

    passed: bool
    r_minus1: float
    r0: float
    r1: float
    r2: float
    leaf_radius: float
    n_steps: int
    ball_radius: float
    items: dict
    margin: float

    def as_dict(self):
        return {"pass": self.passed, "r_minus1": self.r_minus1, "r0": self.r0,
                "r1": self.r1, "r2": self.r2, "r": self.leaf_radius,
                "N": self.n_steps, "ball_radius": self.ball_radius,
                "margin": self.margin,
                "items": {k: (v is None) for k, v in self.items.items()}}


def overlap_certificate(h, solution, r2=None, spec=SampleSpec(), horizon=24,
                        graph_tol=GRAPH_TOL) -> OverlapCertificate:
    """Construct overlap radii from the backward probe and verify the three
    nesting inclusions on samples. Any failing item is reported with its
    witness in `items`; the certificate then carries passed=False."""
    r = solution.base.size
    if r2 is None:
        r2 = 0.8 * r
    margin = r - r2  # chart-coordinate proxy for the boundary gap
    probe = dynamically_defined_probe(h, solution, r1=r2, spec=spec,
                                      horizon=horizon, graph_tol=graph_tol)
    n_eff = probe.effective_horizon
    if not probe.passed:
        return OverlapCertificate(False, 0, 0, 0, r2, r, -1, 0,
                                  {"item1": (probe.witness, "backward containment"),
                                   "item2": None, "item3": None}, margin)
    r1 = probe.r0
    r0 = 0.5 * r1
    eps = 0.05 * r0
    r_minus1 = 0.5 * r0
    ball_radius = 0.5 * (r_minus1 + r0)

    def backward_inside(rad_from, rad_to, n):
        for u in spec.leaf_points(rad_from):
            ok, coord, off = _backward_membership(h, solution, u, n, rad_to, graph_tol)
            if not ok:
                return (u, n)
        return None

    # least N shrinking the r1-piece strictly inside r0
    n_steps = None
    for n_start in range(1, n_eff + 1):
        if all(backward_inside(r1, r0 - eps, n) is None
               for n in range(n_start, n_eff + 1)):
            n_steps = n_start
            break
    if n_steps is None:
        return OverlapCertificate(False, r_minus1, r0, r1, r2, r, -1, ball_radius,
                                  {"item1": ((0j, n_eff), "no shrink step"),
                                   "item2": None, "item3": None}, margin)

    items = {"item1": None, "item2": None, "item3": None}
    for n in range(n_steps, n_eff + 1):
        w = backward_inside(r1, r0 - eps, n)
        if w is not None:
            items["item1"] = (w, "backward image left the r0 disc")
            break

    # item 2: r_minus1 piece at the backward point maps forward inside the
    # r1 piece at the base, and backward images fit in the ball
    back_chart = solution.chart_backward(n_steps)
    base_chart = solution.base
    for u in spec.leaf_points(r_minus1):
        z = back_chart.embed(u)
        for _ in range(n_steps):
            z = h.apply(z)
        hv = base_chart.to_chart(z)
        if not (abs(hv[0]) < r1 and abs(hv[1] - base_chart.graph(hv[0])) < graph_tol):
            items["item2"] = ((u, n_steps), "forward image misses the r1 piece")
            break
    if items["item2"] is None:
        w = backward_inside(r1, ball_radius, n_steps)
        if w is not None:
            items["item2"] = (w, "backward image not inside the ball")

    # item 3: forward iterates of the ball stay in the r piece along the way
    for k in range(0, n_steps + 1):
        target = solution.chart_backward(n_steps - k)
        done = False
        for u in spec.leaf_points(ball_radius):
            z = back_chart.embed(u)
            try:
                for _ in range(k):
                    z = h.apply(z)
            except EscapeOverflow:
                items["item3"] = ((u, k), "forward iterate escaped")
                done = True
                break
            hv = target.to_chart(z)
            if not (abs(hv[0]) < r and abs(hv[1] - target.graph(hv[0])) < graph_tol):
                items["item3"] = ((u, k), "iterate left the r piece")
                done = True
                break
        if done:
            break

    passed = all(v is None for v in items.values())
    return OverlapCertificate(passed, r_minus1, r0, r1, r2, r, n_steps,
                              ball_radius, items, margin)


@dataclass
class ExpansivenessReport:
    """First separation times of leaf samples from the base orbit."""

    passed: bool
    constant: float
    sample_radius: float
    times: list               # (leaf coordinate, n) per separated sample
    failures: list            # leaf coordinates still close at the horizon
    sup_n: int
    horizon: int
    inconclusive: bool
    spec: SampleSpec = field(default_factory=SampleSpec)

    def as_dict(self):
        return {"pass": self.passed, "c": self.constant,
                "sample_radius": self.sample_radius, "sup_n": self.sup_n,
                "horizon": self.horizon, "inconclusive": self.inconclusive,
                "separated": len(self.times), "failed": len(self.failures)}


def forward_expansive_probe(h, solution, c, spec=SampleSpec(),
                            horizon=200) -> ExpansivenessReport:
    """First-passage separation of sampled leaf points from the base orbit.

    Samples live on the leaf at radius eps = min(size/4, c/2), strictly off
    the base point. Non-separation within the horizon is inconclusive, never
    a pass.
    """
    r = solution.base.size
    eps = min(0.25 * r, 0.5 * c)
    times, failures = [], []
    for u in spec.leaf_points(eps):
        y = solution.base.embed(u)
        hit = None
        for n in range(1, horizon + 1):
            x = _forward_base(solution, n)
            try:
                y = h.apply(y)
            except EscapeOverflow:
                hit = n  # left every bounded set, certainly separated
                break
            if np.linalg.norm(y - x) > c:
                hit = n
                break
        if hit is None:
            failures.append(u)
        else:
            times.append((u, hit))
    sup_n = max((n for _, n in times), default=0)
    return ExpansivenessReport(not failures, float(c), float(eps), times,
                               failures, sup_n, horizon, bool(failures), spec)


@dataclass
class UPlusReport:
    escaping: bool
    inconclusive: bool
    first_time: int
    max_iter: int

    def as_dict(self):
        return {"escaping": self.escaping, "inconclusive": self.inconclusive,
                "first_time": self.first_time, "max_iter": self.max_iter}


def uplus_probe(h, solution, max_iter=100, spec=SampleSpec()) -> UPlusReport:
    """Does the sampled leaf meet the escape region within max_iter steps?

    Bounded-window non-escape is inconclusive by construction. Requires a
    map exposing the filtration escape test.
    """
    if not hasattr(h, "escapes"):
        return UPlusReport(False, True, -1, max_iter)
    best = None
    for u in spec.leaf_points(solution.base.size):
        t = h.escapes(solution.base.embed(u), max_iter)
        if t is not None:
            best = t if best is None else min(best, t)
    if best is None:
        return UPlusReport(False, True, -1, max_iter)
    return UPlusReport(True, False, int(best), max_iter)
