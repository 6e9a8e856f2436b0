"""Single-chart ODE backend: geodesics, parallel transport and Jacobi fields.

A :class:`ChartMetric` wraps a metric ``q -> g(q)`` in one coordinate chart.
Christoffel symbols come from an analytic callback when one is supplied and
from central differences of ``g`` otherwise.  Integration is classical RK4 on
a fixed grid so that trajectories are reproducible bit for bit.

Built-in charts double as independent oracles for the closed forms in
:mod:`geowalk.manifolds`.
"""
import csv
import dataclasses
import math

import numpy as np

from .errors import DivergenceError, GridMismatchError, MetricEvaluationError
from .manifolds import get_manifold

_METRIC_FD_STEP = 1e-5
_CHRISTOFFEL_FD_STEP = 1e-4


class ChartMetric:
    """Riemannian metric on an open subset of ``R^d``.

    Parameters
    ----------
    dimension : int
    metric_fn : callable
        ``q -> (d, d)`` symmetric positive-definite array.
    christoffel_fn : callable, optional
        ``q -> (d, d, d)`` array ``G[k, i, j]`` of second-kind symbols.
        Finite differences of ``metric_fn`` are used when omitted.
    name : str, optional
    """

    def __init__(self, dimension, metric_fn, christoffel_fn=None, name="custom"):
        self.dimension = int(dimension)
        self._metric_fn = metric_fn
        self._christoffel_fn = christoffel_fn
        self.name = name

    def __repr__(self):
        return f"ChartMetric({self.name!r}, dimension={self.dimension})"

    def metric(self, q):
        try:
            g = np.asarray(self._metric_fn(np.asarray(q, float)), float)
        except Exception as exc:  # user callbacks may fail in arbitrary ways
            raise MetricEvaluationError(f"metric evaluation failed at {q}: {exc}") from exc
        if g.shape != (self.dimension, self.dimension):
            raise MetricEvaluationError(f"metric has shape {g.shape}, expected "
                                        f"{(self.dimension, self.dimension)}")
        return g

    def christoffel(self, q):
        q = np.asarray(q, float)
        if self._christoffel_fn is not None:
            try:
                return np.asarray(self._christoffel_fn(q), float)
            except Exception as exc:
                raise MetricEvaluationError(f"Christoffel evaluation failed at {q}: {exc}") from exc
        return self._christoffel_fd(q)

    def _christoffel_fd(self, q):
        d = self.dimension
        h = _METRIC_FD_STEP
        dg = np.empty((d, d, d))  # dg[l, i, j] = d_l g_ij
        for l in range(d):
            e = np.zeros(d)
            e[l] = h
            dg[l] = (self.metric(q + e) - self.metric(q - e)) / (2 * h)
        ginv = np.linalg.inv(self.metric(q))
        # G^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
        lower = np.empty((d, d, d))  # lower[l, i, j]
        for l in range(d):
            for i in range(d):
                for j in range(d):
                    lower[l, i, j] = dg[i, j, l] + dg[j, i, l] - dg[l, i, j]
        return 0.5 * np.einsum("kl,lij->kij", ginv, lower)

    def christoffel_derivative(self, q):
        """``dG[m, k, i, j] = d_m G^k_ij`` by central differences."""
        q = np.asarray(q, float)
        d = self.dimension
        h = _CHRISTOFFEL_FD_STEP
        out = np.empty((d, d, d, d))
        for m in range(d):
            e = np.zeros(d)
            e[m] = h
            out[m] = (self.christoffel(q + e) - self.christoffel(q - e)) / (2 * h)
        return out

    def riemann(self, q):
        """``R[k, l, i, j]`` with ``R(d_i, d_j) d_l = R[k, l, i, j] d_k``."""
        G = self.christoffel(q)
        dG = self.christoffel_derivative(q)
        term = (np.einsum("ikjl->klij", dG) - np.einsum("jkil->klij", dG)
                + np.einsum("kim,mjl->klij", G, G) - np.einsum("kjm,mil->klij", G, G))
        return term

    def inner(self, q, a, b):
        return float(a @ self.metric(q) @ b)

    def norm(self, q, a):
        return math.sqrt(max(self.inner(q, a, a), 0.0))

    def validate(self, points, tol=1e-10):
        """Check symmetry, positive definiteness and Christoffel symmetry at ``points``."""
        for q in np.atleast_2d(points):
            g = self.metric(q)
            asym = np.max(np.abs(g - g.T))
            if asym > tol:
                raise MetricEvaluationError(f"metric asymmetric by {asym:.2e} at {q}")
            if np.min(np.linalg.eigvalsh(0.5 * (g + g.T))) <= 0:
                raise MetricEvaluationError(f"metric not positive definite at {q}")
            G = self.christoffel(q)
            if np.max(np.abs(G - G.transpose(0, 2, 1))) > 1e-6:
                raise MetricEvaluationError(f"Christoffel symbols not symmetric at {q}")
        return True


def _sphere_polar_metric(q):
    return np.diag([1.0, math.sin(q[0]) ** 2])


def _sphere_polar_christoffel(q):
    th = q[0]
    G = np.zeros((2, 2, 2))
    G[0, 1, 1] = -math.sin(th) * math.cos(th)
    G[1, 0, 1] = G[1, 1, 0] = math.cos(th) / math.sin(th)
    return G


def _hyperbolic_polar_metric(q):
    return np.diag([1.0, math.sinh(q[0]) ** 2])


def _hyperbolic_polar_christoffel(q):
    rho = q[0]
    G = np.zeros((2, 2, 2))
    G[0, 1, 1] = -math.sinh(rho) * math.cosh(rho)
    G[1, 0, 1] = G[1, 1, 0] = math.cosh(rho) / math.sinh(rho)
    return G


def get_chart(chart_id):
    """Built-in charts: ``"sphere2-polar"``, ``"hyperbolic2-polar"``, ``"flat:<d>"``."""
    if isinstance(chart_id, ChartMetric):
        return chart_id
    if chart_id == "sphere2-polar":
        return ChartMetric(2, _sphere_polar_metric, _sphere_polar_christoffel, chart_id)
    if chart_id == "hyperbolic2-polar":
        return ChartMetric(2, _hyperbolic_polar_metric, _hyperbolic_polar_christoffel, chart_id)
    if chart_id.startswith("flat:"):
        d = int(chart_id.split(":", 1)[1])
        return ChartMetric(d, lambda q: np.eye(d), lambda q: np.zeros((d, d, d)), chart_id)
    raise ValueError(f"unknown chart id {chart_id!r}")


# --- coordinate conversions for the built-in charts -----------------------

def chart_to_ambient(chart_id, q, dq=None):
    """Map chart coordinates (and optionally a chart vector) to ambient ones."""
    q = np.asarray(q, float)
    if chart_id.startswith("flat:"):
        return q if dq is None else (q, np.asarray(dq, float))
    a, phi = q[..., 0], q[..., 1]
    if chart_id == "sphere2-polar":
        s, c = np.sin(a), np.cos(a)
        x = np.stack([s * np.cos(phi), s * np.sin(phi), c], axis=-1)
        d_a = np.stack([c * np.cos(phi), c * np.sin(phi), -s], axis=-1)
        d_phi = np.stack([-s * np.sin(phi), s * np.cos(phi), np.zeros_like(a)], axis=-1)
    elif chart_id == "hyperbolic2-polar":
        s, c = np.sinh(a), np.cosh(a)
        x = np.stack([c, s * np.cos(phi), s * np.sin(phi)], axis=-1)
        d_a = np.stack([s, c * np.cos(phi), c * np.sin(phi)], axis=-1)
        d_phi = np.stack([np.zeros_like(a), -s * np.sin(phi), s * np.cos(phi)], axis=-1)
    else:
        raise ValueError(f"no embedding known for chart {chart_id!r}")
    if dq is None:
        return x
    dq = np.asarray(dq, float)
    return x, dq[..., :1] * d_a + dq[..., 1:2] * d_phi


def ambient_to_chart(chart_id, x, v=None):
    """Inverse of :func:`chart_to_ambient` away from the chart's singular set."""
    x = np.asarray(x, float)
    if chart_id.startswith("flat:"):
        return x if v is None else (x, np.asarray(v, float))
    if chart_id == "sphere2-polar":
        a = np.arccos(np.clip(x[..., 2], -1.0, 1.0))
        phi = np.arctan2(x[..., 1], x[..., 0])
        s, c = np.sin(a), np.cos(a)
        e_a = np.stack([c * np.cos(phi), c * np.sin(phi), -s], axis=-1)
        e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(a)], axis=-1)
        scale = s
    elif chart_id == "hyperbolic2-polar":
        a = np.arccosh(np.maximum(x[..., 0], 1.0))
        phi = np.arctan2(x[..., 2], x[..., 1])
        s, c = np.sinh(a), np.cosh(a)
        e_a = np.stack([s, c * np.cos(phi), c * np.sin(phi)], axis=-1)
        e_phi = np.stack([np.zeros_like(a), -np.sin(phi), np.cos(phi)], axis=-1)
        scale = s
        # e_a is Minkowski-unit; its Minkowski pairing flips the first sign
        e_a = e_a * np.array([-1.0, 1.0, 1.0])
    else:
        raise ValueError(f"no embedding known for chart {chart_id!r}")
    q = np.stack([a, phi], axis=-1)
    if v is None:
        return q
    v = np.asarray(v, float)
    da = np.sum(v * e_a, axis=-1)
    dphi = np.sum(v * e_phi, axis=-1) / scale
    return q, np.stack([da, dphi], axis=-1)


# --- trajectories ------------------------------------------------------------

@dataclasses.dataclass
class OdeTrajectory:
    """Samples of an RK4 integration on a uniform grid.

    ``states`` has one row per time; columns are position, velocity and then
    any carried fields (transported vector, or Jacobi field and its covariant
    derivative), each ``dimension`` wide.
    """

    metric: ChartMetric
    times: np.ndarray
    states: np.ndarray
    fields: tuple = ("x", "xdot")

    @property
    def dimension(self):
        return self.metric.dimension

    def field(self, name):
        i = self.fields.index(name)
        d = self.dimension
        return self.states[:, i * d:(i + 1) * d]

    @property
    def positions(self):
        return self.field("x")

    @property
    def velocities(self):
        return self.field("xdot")

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def duration(self):
        return float(self.times[-1])

    def energy(self):
        """``0.5 g(xdot, xdot)`` at every sample."""
        return np.array([0.5 * self.metric.inner(q, v, v)
                         for q, v in zip(self.positions, self.velocities)])

    def speeds(self):
        return np.sqrt(2.0 * self.energy())

    def field_norms(self, name):
        return np.array([self.metric.norm(q, a) for q, a in zip(self.positions, self.field(name))])

    def to_csv(self, path):
        d = self.dimension
        header = ["t"] + [f"{f}{i + 1}" for f in self.fields for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in row])


def _geodesic_rhs(G, qd):
    return -np.einsum("kij,i,j->k", G, qd, qd)


def _rk4(rhs, y0, duration, step, fields, metric):
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(math.ceil(duration / step - 1e-12)) if duration > 0 else 0
    h = duration / n if n else 0.0
    times = np.arange(n + 1) * h
    if n:
        times[-1] = duration
    states = np.empty((n + 1, y0.size))
    states[0] = y0
    y = y0
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state after step {i + 1}", last_valid_time=float(times[i]))
        states[i + 1] = y
    return OdeTrajectory(metric, times, states, fields)


def integrate_geodesic(metric, start, velocity, duration, step=1e-3):
    """RK4 integration of ``x'' + G(x', x') = 0``."""
    metric = get_chart(metric)
    d = metric.dimension
    y0 = np.concatenate([np.asarray(start, float), np.asarray(velocity, float)])

    def rhs(y):
        q, qd = y[:d], y[d:]
        return np.concatenate([qd, _geodesic_rhs(metric.christoffel(q), qd)])

    return _rk4(rhs, y0, float(duration), float(step), ("x", "xdot"), metric)


def _augmented(metric, geodesic, extra0, extra_rhs, fields):
    """Re-run the geodesic RK4 with extra carried components.

    Intermediate RK4 stages need the geodesic between grid points, so the
    whole system is integrated afresh and the position/velocity columns are
    required to reproduce ``geodesic`` exactly.
    """
    metric = get_chart(metric)
    if geodesic.metric is not metric and (geodesic.metric.name != metric.name
                                          or geodesic.metric.dimension != metric.dimension
                                          or metric.name == "custom"):
        raise GridMismatchError("trajectory was integrated with a different metric")
    d = metric.dimension
    y0 = np.concatenate([geodesic.states[0, :2 * d], np.concatenate(extra0)])

    def rhs(y):
        q, qd = y[:d], y[d:2 * d]
        G = metric.christoffel(q)
        return np.concatenate([qd, _geodesic_rhs(G, qd), extra_rhs(q, qd, G, y[2 * d:])])

    n = geodesic.n_steps
    step = geodesic.duration / n if n else 1.0
    traj = _rk4(rhs, y0, geodesic.duration, step, fields, metric)
    if traj.states.shape[0] != geodesic.states.shape[0] or not np.array_equal(
            traj.states[:, :2 * d], geodesic.states[:, :2 * d]):
        raise GridMismatchError("trajectory grid does not match this metric's RK4 grid")
    return traj


def integrate_transport(metric, geodesic, v0):
    """Parallel transport ``v' + G(x', v) = 0`` along an integrated geodesic."""
    v0 = np.asarray(v0, float)

    def extra(q, qd, G, v):
        return -np.einsum("kij,i,j->k", G, qd, v)

    return _augmented(metric, geodesic, [v0], extra, ("x", "xdot", "v"))


def integrate_jacobi(metric, geodesic, j0, jdot0):
    """Jacobi equation ``D_t^2 J + R(J, x') x' = 0`` as a first-order system.

    Carries ``J`` and ``P = D_t J`` in chart components:
    ``J' = P - G(x', J)`` and ``P' = -G(x', P) - R(J, x') x'``.
    """
    metric = get_chart(metric)
    d = metric.dimension
    j0 = np.asarray(j0, float)
    jdot0 = np.asarray(jdot0, float)

    def extra(q, qd, G, y):
        J, P = y[:d], y[d:]
        R = metric.riemann(q)
        rjj = np.einsum("klij,i,j,l->k", R, J, qd, qd)
        Jd = P - np.einsum("kij,i,j->k", G, qd, J)
        Pd = -np.einsum("kij,i,j->k", G, qd, P) - rjj
        return np.concatenate([Jd, Pd])

    return _augmented(metric, geodesic, [j0, jdot0], extra, ("x", "xdot", "J", "DJ"))


def jacobi_via_dexp(manifold, base, w, u, t_grid):
    """Jacobi field ``J(t) = d(Exp_base)_{t w}(t u)`` sampled on ``t_grid``.

    This is the variation field of ``s -> Exp_base(t (w + s u))`` with
    ``J(0) = 0`` and ``D_t J(0) = u``.
    """
    m = get_manifold(manifold)
    base = m.check_point(base)
    w = m.check_tangent(base, w)
    u = m.check_tangent(base, u)
    t = np.asarray(t_grid, float)
    return np.stack([m._dexp(base, ti * w, ti * u) for ti in t.ravel()]).reshape(t.shape + base.shape)


def symmetry_lemma_defect(manifold, base, v, u, t, h):
    """Defect ``|D_s d_t G - D_t d_s G|`` for ``G(s, t) = Exp(t (v + s u))``.

    The inner derivatives are exact (transported velocity and the differential
    of Exp); the outer covariant derivatives are forward differences of the
    ambient field projected onto the tangent plane, so the defect is O(h).
    """
    m = get_manifold(manifold)
    base = np.asarray(base, float)
    v = np.asarray(v, float)
    u = np.asarray(u, float)
    here = m._exp(base, t * v)

    def d_t(s, tt):
        w = v + s * u
        return m._transport(base, tt * w, w)

    def d_s(s, tt):
        return m._dexp(base, tt * (v + s * u), tt * u)

    ds_dt = m.proj(here, (d_t(h, t) - d_t(0.0, t)) / h)
    dt_ds = m.proj(here, (d_s(0.0, t + h) - d_s(0.0, t)) / h)
    return float(m.norm(here, ds_dt - dt_ds))
