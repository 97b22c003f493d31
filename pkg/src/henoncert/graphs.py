"""Graph-transform engine for stable / center-unstable leaves.

The pipeline follows the classical Hadamard-Perron construction: conjugate
the map into adapted charts along an orbit so the linear part splits into an
expanding block A and a contracting block B with small nonlinear remainders,
then iterate the graph transform

    (T phi)(w) = F_phi(G_phi^{-1}(w)),
    G_phi(x) = A x + alpha(x, phi(x)),   F_phi(x) = B phi(x) + beta(x, phi(x)),

on the space of Lipschitz graphs over the expanding coordinate. Graphs are
truncated holomorphic polynomials: the limit leaf is holomorphic, the
operator preserves that class, and the approximation-residual diagnostic
guards the truncation. Coefficients are stored against the scaled variable
z / radius so recovery through circle sampling stays well conditioned at
every degree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .geometry import pair_frame

DEFAULT_DEGREE = 16
METRIC_SAMPLES = 256


class ParamsViolation(RuntimeError):
    """Fixed-point iteration stopped contracting; parameters inadmissible."""


class StepFailed(RuntimeError):
    """Node inversion failed inside one transform step."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class TransformParams:
    """Admissible rate/cone/nonlinearity budget for the graph transform.

    lam bounds the contracting block, mu lower-bounds the expanding one,
    gamma is the Lipschitz cone and delta the allowed C1 size of the
    nonlinear remainders on the localization polydisc of radius `radius`.
    """

    lam: float
    mu: float
    gamma: float
    delta: float
    radius: float

    def __post_init__(self):
        if not (0 < self.lam < self.mu):
            raise ParamsViolation("need 0 < lam < mu")
        gmax = min(1.0, np.sqrt(self.mu / self.lam) - 1.0)
        if not (0 < self.gamma < gmax):
            raise ParamsViolation("gamma %.3g outside (0, %.3g)" % (self.gamma, gmax))
        dmax = self.delta_max(self.lam, self.mu, self.gamma)
        if not (0 < self.delta < dmax):
            raise ParamsViolation("delta %.3g outside (0, %.3g)" % (self.delta, dmax))
        if not (self.lam_prime < self.mu_prime):
            raise ParamsViolation("rate gap closed: lam' >= mu'")

    @staticmethod
    def delta_max(lam, mu, gamma) -> float:
        g = gamma
        return min((mu - lam) / (g + 2.0 + 1.0 / g),
                   (mu - (1.0 + g) ** 2 * lam) / ((1.0 + g) * (g * g + 2.0 * g + 2.0)))

    @property
    def lam_prime(self) -> float:
        return (1.0 + self.gamma) * (self.lam + self.delta * (1.0 + self.gamma))

    @property
    def mu_prime(self) -> float:
        return self.mu / (1.0 + self.gamma) - self.delta

    @property
    def lip_step(self) -> float:
        # single-step vertical Lipschitz factor of the localized maps
        return self.lam + 2.0 * self.delta

    @property
    def expansion_floor(self) -> float:
        # lower bound for |G_phi(x)| / |x|
        return self.mu - self.delta * (1.0 + self.gamma)

    @property
    def graph_radius(self) -> float:
        # domain radius kept consistent under G^{-1}: r = radius / floor
        return self.radius / max(self.expansion_floor, 1.0)

    @classmethod
    def choose(cls, lam, mu, radius, delta_measured, gamma=None) -> "TransformParams":
        """Pick admissible (gamma, delta) covering a measured nonlinearity."""
        if gamma is None:
            gamma = 0.5 * min(1.0, np.sqrt(mu / lam) - 1.0)
        dmax = cls.delta_max(lam, mu, gamma)
        delta = max(1.05 * delta_measured, 1e-9 * dmax)
        if delta >= dmax:
            raise ParamsViolation(
                "measured nonlinearity %.3g exceeds budget %.3g" % (delta_measured, dmax))
        return cls(lam, mu, gamma, delta, radius)


class LipschitzGraph:
    """Polynomial graph phi(z) = sum_j a_j z^j on |z| <= radius, phi(0) = 0.

    Internally the coefficients are stored in the scaled variable u = z/r,
    phi = sum_j b_j u^j with b_j = a_j r^j, which keeps circle-sampling
    recovery well conditioned; `coefficients` converts back on demand.
    """

    def __init__(self, scaled, radius):
        b = np.asarray(scaled, dtype=complex)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("need coefficients up to degree >= 1")
        if b[0] != 0:
            raise ValueError("constant term must be zero")
        if not (radius > 0):
            raise ValueError("radius must be positive")
        self.scaled = b
        self.radius = float(radius)

    @classmethod
    def zero(cls, radius, degree=DEFAULT_DEGREE) -> "LipschitzGraph":
        return cls(np.zeros(degree + 1, dtype=complex), radius)

    @classmethod
    def from_coefficients(cls, coeffs, radius) -> "LipschitzGraph":
        a = np.asarray(coeffs, dtype=complex)
        powers = float(radius) ** np.arange(len(a))
        return cls(a * powers, radius)

    @property
    def degree(self) -> int:
        return len(self.scaled) - 1

    @property
    def coefficients(self) -> np.ndarray:
        return self.scaled / self.radius ** np.arange(len(self.scaled))

    @property
    def tail(self) -> float:
        return float(abs(self.scaled[-1]))

    def __call__(self, z):
        return npoly.polyval(np.asarray(z, dtype=complex) / self.radius, self.scaled)

    def derivative(self, z):
        d = npoly.polyder(self.scaled)
        return npoly.polyval(np.asarray(z, dtype=complex) / self.radius, d) / self.radius

    def lipschitz_bound(self, samples=512) -> float:
        """Max of |phi'| over the boundary circle (maximum principle)."""
        theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        return float(np.abs(self.derivative(self.radius * np.exp(1j * theta))).max())


def graph_metric(phi: LipschitzGraph, psi: LipschitzGraph, samples=METRIC_SAMPLES) -> float:
    """Projective distance sup |phi(z) - psi(z)| / |z|.

    Approximated over circles at radii {r, r/2, r/4}; since the quotient is
    holomorphic (both graphs vanish at 0), its true sup is attained on the
    outer circle, so the inner radii only add redundancy.
    """
    if abs(phi.radius - psi.radius) > 1e-15 * max(phi.radius, psi.radius):
        raise ValueError("graphs live on different domain radii")
    theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    ring = np.exp(1j * theta)
    worst = 0.0
    for scale in (1.0, 0.5, 0.25):
        z = phi.radius * scale * ring
        worst = max(worst, float((np.abs(phi(z) - psi(z)) / np.abs(z)).max()))
    return worst


@dataclass(frozen=True)
class _Step:
    """One localized map between consecutive chart slots."""

    fhat: object
    jhat: object
    a_block: complex
    b_block: complex
    offdiag: float


@dataclass(frozen=True)
class LocalizedFamily:
    """Charts and normal-form maps along an orbit window.

    Slot j holds the chart at one orbit point; step j maps slot j to slot
    j+1 in the family's own forward time (the underlying map for cu leaves,
    its inverse for stable ones). With `period` set, indices wrap.
    """

    kind: str
    bases: tuple
    charts: tuple
    inv_charts: tuple
    steps: tuple
    radius: float
    delta_measured: float
    base_slot: int
    period: int = None

    @property
    def n_slots(self) -> int:
        return len(self.bases)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def lam(self) -> float:
        return max(abs(s.b_block) for s in self.steps)

    @property
    def mu(self) -> float:
        return min(abs(s.a_block) for s in self.steps)

    @property
    def offdiag(self) -> float:
        return max(s.offdiag for s in self.steps)

    def slot(self, j: int) -> int:
        if self.period is not None:
            return j % self.period
        if not (0 <= j < self.n_slots):
            raise IndexError("slot %d outside family window" % j)
        return j

    def params(self, gamma=None) -> TransformParams:
        return TransformParams.choose(self.lam, self.mu, self.radius,
                                      self.delta_measured, gamma)


def _make_step(h, z_from, z_to, l_from, linv_to, backward: bool) -> _Step:
    if backward:
        def fhat(hv):
            return linv_to @ (h.apply_inverse(z_from + l_from @ hv) - z_to)

        def jhat(hv):
            w = h.apply_inverse(z_from + l_from @ hv)
            return linv_to @ np.linalg.inv(h.jacobian(w)) @ l_from
    else:
        def fhat(hv):
            return linv_to @ (h.apply(z_from + l_from @ hv) - z_to)

        def jhat(hv):
            return linv_to @ h.jacobian(z_from + l_from @ hv) @ l_from

    j0 = jhat(np.zeros(2, dtype=complex))
    off = max(abs(j0[0, 1]), abs(j0[1, 0]))
    return _Step(fhat, jhat, complex(j0[0, 0]), complex(j0[1, 1]), off)


def _sample_points(radius, angles=8, rads=(1.0, 0.5)):
    pts = []
    for s1 in rads:
        for s2 in rads:
            for t1 in range(angles):
                t2 = (t1 * 3) % angles  # decorrelate the two phases
                pts.append(np.array([
                    radius * s1 * np.exp(2j * np.pi * t1 / angles),
                    radius * s2 * np.exp(2j * np.pi * t2 / angles)], dtype=complex))
    return pts


def measure_delta(steps, radius) -> float:
    """Sampled C1 size of the nonlinear remainders on the radius-polydisc."""
    worst = 0.0
    for st in steps:
        d0 = np.diag([st.a_block, st.b_block])
        for hv in _sample_points(radius):
            img = st.fhat(hv) - d0 @ hv
            jac = st.jhat(hv) - d0
            worst = max(worst, float(np.abs(img).max()),
                        float(np.linalg.norm(jac[0])), float(np.linalg.norm(jac[1])))
    return worst


def localize(h, data, radius, kind="cu", gamma=None, auto_radius=True) -> LocalizedFamily:
    """Build adapted charts and normal-form maps from a resolved splitting.

    Charts are built on the splitting frame [F | E] (unit columns), so the
    linearization at each orbit point is genuinely block diagonal and the
    remainders start at second order. If the sampled nonlinearity exceeds
    the admissible budget at the requested radius, the radius is bisected
    down to the largest admissible one.
    """
    if not data.resolved:
        raise ValueError("cannot localize with an unresolved splitting")
    if kind not in ("cu", "stable"):
        raise ValueError("kind must be 'cu' or 'stable'")

    n = len(data.points)
    if kind == "cu":
        order = list(range(n))
        charts = [pair_frame(data.f_dirs[i], data.e_dirs[i]) for i in order]
    else:
        order = [(-i) % n for i in range(n)] if data.period is not None else list(range(n))[::-1]
        charts = [pair_frame(data.e_dirs[i], data.f_dirs[i]) for i in order]
    bases = [data.points[i] for i in order]
    inv_charts = [np.linalg.inv(c) for c in charts]

    def build_steps():
        steps = []
        count = n if data.period is not None else n - 1
        for j in range(count):
            k = (j + 1) % n
            steps.append(_make_step(h, bases[j], bases[k], charts[j], inv_charts[k],
                                    backward=(kind == "stable")))
        return tuple(steps)

    steps = build_steps()
    lam = max(abs(s.b_block) for s in steps)
    mu = min(abs(s.a_block) for s in steps)
    if gamma is None:
        gamma = 0.5 * min(1.0, np.sqrt(mu / lam) - 1.0)
    budget = 0.9 * TransformParams.delta_max(lam, mu, gamma)

    r = float(radius)
    delta = measure_delta(steps, r)
    if delta >= budget:
        if not auto_radius:
            raise ParamsViolation(
                "nonlinearity %.3g over budget %.3g at radius %.3g" % (delta, budget, r))
        lo, hi = 0.0, r
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if measure_delta(steps, mid) < budget:
                lo = mid
            else:
                hi = mid
        r = 0.9 * lo
        delta = measure_delta(steps, r)
        if not (delta < budget) or r <= 0:
            raise ParamsViolation("no admissible localization radius found")

    base_slot = 0
    if data.period is None:
        base_slot = order.index(-data.m_minus)  # slot holding ambient index 0
    return LocalizedFamily(kind, tuple(bases), tuple(charts), tuple(inv_charts),
                           steps, r, delta, base_slot, data.period)


def _invert_g(step: _Step, phi: LipschitzGraph, w, x0, tol, max_iter=60):
    """Damped one-variable Newton for G_phi(x) = w, seeded at x0."""
    x = complex(x0)

    def g_val(x):
        hv = np.array([x, phi(x)], dtype=complex)
        return step.fhat(hv)[0]

    def g_der(x):
        hv = np.array([x, phi(x)], dtype=complex)
        j = step.jhat(hv)
        return j[0, 0] + j[0, 1] * phi.derivative(x)

    err = abs(g_val(x) - w)
    for _ in range(max_iter):
        if err < tol:
            return x
        d = g_der(x)
        if d == 0:
            break
        stepx = -(g_val(x) - w) / d
        damp = 1.0
        while damp > 1e-4:
            cand = x + damp * stepx
            cand_err = abs(g_val(cand) - w)
            if cand_err < err:
                x, err = cand, cand_err
                break
            damp *= 0.5
        else:
            break
    if err < tol:
        return x
    raise StepFailed("node inversion stalled at residual %.3e" % err, node=w)


def graph_transform_step(family: LocalizedFamily, m: int, phi: LipschitzGraph,
                         newton_tol=None):
    """One application of the graph transform across step m of the family.

    The image graph is evaluated at 4*degree equispaced nodes on the domain
    circle (2x oversampling of the Nyquist degree), each node inverted
    through G by damped Newton, and the polynomial recovered by discrete
    Fourier inversion. The constant term is forced to zero and reported.
    """
    step = family.steps[m % family.n_steps if family.period is not None else m]
    r = phi.radius
    deg = phi.degree
    nodes = 4 * deg
    if newton_tol is None:
        newton_tol = 1e-13 * max(1.0, r)
    w = r * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    values = np.empty(nodes, dtype=complex)
    guess = w[0] / step.a_block
    inv_res = 0.0
    for i in range(nodes):
        x = _invert_g(step, phi, w[i], guess, newton_tol)
        hv = np.array([x, phi(x)], dtype=complex)
        out = step.fhat(hv)
        inv_res = max(inv_res, abs(out[0] - w[i]))
        values[i] = out[1]
        rot = np.exp(2j * np.pi / nodes)
        guess = x * rot
    coeffs = np.fft.fft(values) / nodes
    scaled = coeffs[: deg + 1].copy()
    forced = abs(scaled[0])
    scaled[0] = 0.0
    psi = LipschitzGraph(scaled, r)
    report = {"inversion_residual": float(inv_res),
              "forced_constant": float(forced),
              "tail": psi.tail}
    return psi, report


@dataclass(frozen=True)
class LeafChart:
    """A leaf through one orbit point: chart frame plus graph plus embedding."""

    base_point: np.ndarray
    frame: np.ndarray
    graph: LipschitzGraph
    size: float
    kind: str

    def embed(self, u):
        """Ambient image of leaf coordinates u (scalar or array)."""
        u = np.asarray(u, dtype=complex)
        hv = np.stack(np.broadcast_arrays(u, self.graph(u)), axis=-1)
        return self.base_point + hv @ self.frame.T

    def to_chart(self, z):
        """Chart coordinates (leaf coordinate, transverse offset) of z."""
        z = np.asarray(z, dtype=complex)
        return (z - self.base_point) @ np.linalg.inv(self.frame).T

    @property
    def tangency_defect(self) -> float:
        """|a1|: how far the leaf tilts off the marked direction at the base."""
        return float(abs(self.graph.coefficients[1]))


@dataclass
class LeafSolution:
    """Converged family of leaf charts with its convergence history."""

    family: LocalizedFamily
    params: TransformParams
    charts: dict
    history: list
    iterations: int
    invariance_residual: float

    @property
    def base(self) -> LeafChart:
        return self.charts[self.family.base_slot]

    @property
    def kind(self) -> str:
        return self.family.kind

    def chart_backward(self, n: int) -> LeafChart:
        """Leaf chart at the n-th backward image of the base point
        (for cu families, slots run forward in map time)."""
        if self.family.kind != "cu":
            raise ValueError("backward indexing is for cu families")
        j = self.family.base_slot - n
        if self.family.period is None and j < 0:
            raise IndexError("window too short for %d backward steps" % n)
        return self.charts[self.family.slot(j)]

    def contraction_ratios(self):
        h = [x for x in self.history if x > 0]
        return [h[i + 1] / h[i] for i in range(len(h) - 1)]


def solve_leaf(family: LocalizedFamily, params: TransformParams = None,
               init: LipschitzGraph = None, degree=DEFAULT_DEGREE,
               tol=1e-12, max_iter=200) -> LeafSolution:
    """Iterate the graph transform from phi = 0 to its fixed family.

    Convergence is declared when every slot moves by less than `tol` in the
    graph metric; five consecutive growing increments abort with
    ParamsViolation. Afterwards the invariance of the graphs under the maps
    is re-verified by sampling.
    """
    if params is None:
        params = family.params()
    r = params.graph_radius
    n = family.n_slots
    if init is None:
        init = LipschitzGraph.zero(r, degree)
    if abs(init.radius - r) > 1e-12 * r:
        init = LipschitzGraph.from_coefficients(init.coefficients, r)
    graphs = {j: init for j in range(n)}

    history = []
    grow = 0
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        new = {}
        if family.period is not None:
            for j in range(family.n_steps):
                new[(j + 1) % n], _ = graph_transform_step(family, j, graphs[j])
        else:
            new[0], _ = graph_transform_step(family, 0, graphs[0])
            for j in range(family.n_steps):
                new[j + 1], _ = graph_transform_step(family, j, graphs[j])
        inc = max(graph_metric(new[j], graphs[j]) for j in range(n))
        history.append(inc)
        graphs = new
        if inc < tol:
            break
        if len(history) >= 2 and history[-1] > history[-2]:
            grow += 1
            if grow >= 5:
                raise ParamsViolation("graph metric grew for 5 consecutive steps")
        else:
            grow = 0
    else:
        raise ParamsViolation("no convergence within %d iterations" % max_iter)

    residual = invariance_residual(family, graphs)
    charts = {j: LeafChart(family.bases[j], family.charts[j], graphs[j], r, family.kind)
              for j in range(n)}
    return LeafSolution(family, params, charts, history, iterations, residual)


def invariance_residual(family: LocalizedFamily, graphs: dict, samples=32) -> float:
    """Sampled residual of f_m(graph phi_m) lying on graph phi_{m+1}."""
    n = family.n_slots
    worst = 0.0
    for j in range(family.n_steps):
        phi = graphs[j]
        nxt = graphs[(j + 1) % n]
        u = phi.radius * 0.7 * np.exp(2j * np.pi * np.arange(samples) / samples)
        for x in u:
            img = family.steps[j].fhat(np.array([x, phi(x)], dtype=complex))
            worst = max(worst, abs(img[1] - nxt(img[0])))
    return worst


def approximation_residual(family: LocalizedFamily, solution: LeafSolution,
                           samples=64) -> float:
    """Pointwise transform vs recovered polynomial at off-node samples.

    Small residual together with spectral coefficient decay is the numeric
    certificate that the polynomial truncation is faithful (holomorphy of
    the limit makes the class invariant).
    """
    n = family.n_slots
    worst = 0.0
    for j in range(family.n_steps):
        phi = solution.charts[j].graph
        psi = solution.charts[(j + 1) % n].graph
        r = phi.radius
        # interleave between the recovery nodes, on two radii
        offset = np.pi / (4 * phi.degree)
        for scale in (1.0, 0.5):
            w = scale * r * np.exp(1j * (2 * np.pi * np.arange(samples) / samples + offset))
            for wi in w:
                x = _invert_g(family.steps[j], phi, wi, wi / family.steps[j].a_block,
                              1e-13 * max(1.0, r))
                val = family.steps[j].fhat(np.array([x, phi(x)], dtype=complex))[1]
                worst = max(worst, abs(val - psi(wi)))
    return worst
