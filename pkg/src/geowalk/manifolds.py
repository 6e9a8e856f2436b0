"""Closed-form geometry of the built-in manifolds.

Three spaces share one interface: Euclidean space ``R^d``, the unit sphere
``S^2`` embedded in ``R^3`` and the hyperbolic plane ``H^2`` on the upper sheet
of the hyperboloid ``-x0^2 + x1^2 + x2^2 = -1``.  Points and tangent vectors
are plain ``numpy`` arrays in ambient coordinates; every operation broadcasts
over leading axes so Monte-Carlo code can push whole replica batches through.

Tangent vectors carry no base point of their own.  Public methods check the
tangency constraint against the base they are used with and raise
:class:`~geowalk.errors.AnchorMismatchError` when it fails; the underscore
variants skip the check for inner loops.
"""
import abc
import math

import numpy as np

from .errors import AnchorMismatchError, CutLocusError, ManifoldMismatchError

_TANGENT_TOL = 1e-9
_POINT_TOL = 1e-9
_FRAME_PIVOT_TOL = 1e-6


def _norm_last(a):
    return np.sqrt(np.sum(a * a, axis=-1))


class Manifold(abc.ABC):
    """Common interface of the built-in Riemannian manifolds."""

    #: manifold identifier, e.g. ``"sphere2"``
    id = None
    #: intrinsic dimension
    dim = None
    #: size of the coordinate vectors
    ambient_dim = None
    #: sectional curvature (constant on all built-ins)
    curvature = None

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r})"

    def __eq__(self, other):
        return isinstance(other, Manifold) and other.id == self.id

    def __hash__(self):
        return hash(self.id)

    # --- metric -----------------------------------------------------------

    @abc.abstractmethod
    def inner(self, x, u, v):
        """Riemannian inner product of ``u`` and ``v`` in ``T_x``."""

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    @abc.abstractmethod
    def proj(self, x, a):
        """Orthogonal projection of an ambient vector onto ``T_x``."""

    @abc.abstractmethod
    def normalize(self, x):
        """Push coordinates back onto the constraint surface."""

    @property
    @abc.abstractmethod
    def origin(self):
        """Canonical base point."""

    # --- checks -----------------------------------------------------------

    def check_point(self, x, tol=_POINT_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise ManifoldMismatchError(
                f"{self.id} expects {self.ambient_dim} coordinates, got {x.shape[-1]}")
        defect = self._constraint_defect(x)
        if np.any(defect > tol):
            raise ManifoldMismatchError(
                f"point is off {self.id} (constraint defect {np.max(defect):.3e})")
        return x

    def check_tangent(self, x, v, tol=_TANGENT_TOL):
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.ambient_dim:
            raise AnchorMismatchError(
                f"{self.id} tangent vectors have {self.ambient_dim} components, got {v.shape[-1]}")
        defect = self._tangency_defect(x, v)
        if np.any(defect > tol):
            raise AnchorMismatchError(
                f"vector is not tangent at its base point (defect {np.max(defect):.3e})")
        return v

    def _constraint_defect(self, x):
        return np.zeros(x.shape[:-1])

    def _tangency_defect(self, x, v):
        return np.zeros(np.broadcast_shapes(x.shape, v.shape)[:-1])

    # --- exponential map and friends --------------------------------------

    def exp(self, x, v):
        """Riemannian exponential ``Exp_x(v)``."""
        x = self.check_point(x)
        v = self.check_tangent(x, v)
        return self._exp(x, v)

    def log(self, x, y, on_cut="raise"):
        """Principal inverse exponential: the shortest ``v`` with ``Exp_x v = y``.

        ``on_cut="canonical"`` returns the canonical representative for pairs
        on the cut locus instead of raising :class:`CutLocusError`.
        """
        x = self.check_point(x)
        y = self.check_point(y)
        v, cut = self._log(x, y)
        if on_cut == "raise" and np.any(cut):
            reps = [v] if v.ndim == 1 else []
            raise CutLocusError("points are conjugate along a continuum of minimal geodesics",
                                representatives=reps)
        return v

    def log_all(self, x, y, max_wraps=2):
        """All preimages of ``y`` under ``Exp_x``, sorted by norm (single points)."""
        x = self.check_point(x)
        y = self.check_point(y)
        v, cut = self._log(x, y)
        if cut:
            raise CutLocusError("points are conjugate along a continuum of minimal geodesics",
                                representatives=[v])
        return [v]

    def dist(self, x, y):
        """Riemannian distance."""
        return self._dist(np.asarray(x, float), np.asarray(y, float))

    def transport(self, x, v, u):
        """Parallel transport of ``u`` along ``t -> Exp_x(t v)``, ``t in [0, 1]``."""
        x = self.check_point(x)
        v = self.check_tangent(x, v)
        u = self.check_tangent(x, u)
        return self._transport(x, v, u)

    def transport_between(self, x, y, u, on_cut="raise"):
        """Transport ``u`` from ``x`` to ``y`` along a minimal geodesic."""
        v = self.log(x, y, on_cut=on_cut)
        return self.transport(x, v, u)

    def transport_path(self, points, u, on_cut="raise"):
        """Transport ``u`` along the piecewise geodesic through ``points``."""
        points = [np.asarray(p, float) for p in points]
        u = self.check_tangent(points[0], u)
        for a, b in zip(points[:-1], points[1:]):
            u = self.transport_between(a, b, u, on_cut=on_cut)
        return u

    def geodesic(self, x, v, t):
        """Points ``Exp_x(t v)`` for an array of times ``t``."""
        t = np.asarray(t, float)
        return self._exp(x, t[..., None] * v)

    def geodesic_velocity(self, x, v, t):
        """Velocities of ``t -> Exp_x(t v)`` (the transported ``v``)."""
        t = np.asarray(t, float)
        return self._transport(x, t[..., None] * v, v)

    @abc.abstractmethod
    def _exp(self, x, v):
        ...

    @abc.abstractmethod
    def _log(self, x, y):
        """Return ``(v, cut)`` where ``cut`` flags cut-locus pairs."""

    @abc.abstractmethod
    def _dist(self, x, y):
        ...

    @abc.abstractmethod
    def _transport(self, x, v, u):
        ...

    # --- curvature and Jacobi fields --------------------------------------

    def curvature_tensor(self, x, u, v, w):
        """``R(u, v) w = K (<v, w> u - <u, w> v)`` for constant curvature ``K``."""
        x = self.check_point(x)
        for a in (u, v, w):
            self.check_tangent(x, a)
        return self._curvature_tensor(x, u, v, w)

    def _curvature_tensor(self, x, u, v, w):
        k = self.curvature
        return k * (self.inner(x, v, w)[..., None] * u - self.inner(x, u, w)[..., None] * v)

    def dexp(self, x, w, u):
        """``d(Exp_x)_w(u)``, a vector at ``Exp_x(w)``."""
        x = self.check_point(x)
        w = self.check_tangent(x, w)
        u = self.check_tangent(x, u)
        return self._dexp(x, w, u)

    def dexp_inv(self, x, w, u):
        """Inverse of ``d(Exp_x)_w`` applied to ``u`` in ``T_{Exp_x w}``."""
        x = self.check_point(x)
        w = self.check_tangent(x, w)
        u = self.check_tangent(self._exp(x, w), u)
        return self._dexp_inv(x, w, u)

    @abc.abstractmethod
    def _dexp(self, x, w, u):
        ...

    @abc.abstractmethod
    def _dexp_inv(self, x, w, u):
        ...

    @abc.abstractmethod
    def jacobi_field(self, x, v, j0, jdot0, t, order=0):
        """Closed-form Jacobi field along ``t -> Exp_x(t v)``.

        Returns ``D_t^order J(t)`` for the field with ``J(0) = j0`` and
        ``D_t J(0) = jdot0``.  ``t`` may be an array; the result gains its
        shape in front of the ambient axis.
        """

    # --- misc -------------------------------------------------------------

    def injectivity_radius(self, x=None):
        """Injectivity radius at ``x`` (constant on built-ins, so ``x`` may be a set)."""
        return math.inf

    def frame(self, x):
        """Orthonormal tangent frame at ``x``, shape ``(..., ambient_dim, dim)``.

        Gram-Schmidt of the ambient basis vectors projected onto ``T_x``, in
        index order, skipping vectors whose residual is (nearly) zero.
        """
        x = np.asarray(x, float)
        batch = x.shape[:-1]
        frame = np.zeros(batch + (self.ambient_dim, self.dim))
        count = np.zeros(batch, dtype=int)
        for j in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[j] = 1.0
            r = self.proj(x, np.broadcast_to(e, x.shape))
            for _ in range(2):
                for i in range(self.dim):
                    fi = frame[..., :, i]
                    r = r - self.inner(x, r, fi)[..., None] * fi
            r = self.proj(x, r)  # subtraction drifts off T_x where |x| is large
            nr = self.norm(x, r)
            take = (count < self.dim) & (nr > _FRAME_PIVOT_TOL)
            if not np.any(take):
                continue
            col = np.where(take, count, 0)
            unit = r / np.where(nr > 0, nr, 1.0)[..., None]
            onehot = (np.arange(self.dim) == col[..., None]) & take[..., None]
            frame = frame + unit[..., :, None] * onehot[..., None, :]
            count = count + take
        return frame

    def coords_in_frame(self, x, v, frame=None):
        """Components of ``v`` in the frame at ``x``."""
        if frame is None:
            frame = self.frame(x)
        return np.stack([self.inner(x, v, frame[..., :, i]) for i in range(self.dim)], axis=-1)

    def random_point(self, rng, size=(), spread=1.0):
        """Random point within distance ``spread`` of the origin."""
        size = (size,) if np.isscalar(size) else tuple(size)
        base = np.broadcast_to(self.origin, size + (self.ambient_dim,))
        v = self.random_tangent(base, rng, max_norm=spread)
        return self.normalize(self._exp(base, v))

    def random_tangent(self, x, rng, max_norm=1.0, min_norm=0.0):
        """Tangent vector at ``x`` with uniform direction and norm in ``[min_norm, max_norm)``."""
        x = np.asarray(x, float)
        c = rng.standard_normal(x.shape[:-1] + (self.dim,))
        c /= _norm_last(c)[..., None]
        rho = rng.uniform(min_norm, max_norm, size=x.shape[:-1])
        return np.einsum("...ij,...j->...i", self.frame(x), c * rho[..., None])


class Euclidean(Manifold):
    """Flat ``R^d``: ``Exp_x v = x + v``."""

    curvature = 0.0

    def __init__(self, dim):
        self.dim = int(dim)
        self.ambient_dim = self.dim
        self.id = f"euclidean:{self.dim}"

    @property
    def origin(self):
        return np.zeros(self.dim)

    def inner(self, x, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def proj(self, x, a):
        return np.asarray(a, float)

    def normalize(self, x):
        return x

    def _exp(self, x, v):
        return x + v

    def _log(self, x, y):
        v = y - x
        return v, np.zeros(v.shape[:-1], dtype=bool) if v.ndim > 1 else False

    def _dist(self, x, y):
        return _norm_last(y - x)

    def _transport(self, x, v, u):
        return np.broadcast_to(u, np.broadcast_shapes(np.shape(x), np.shape(v), np.shape(u))).copy()

    def _dexp(self, x, w, u):
        return self._transport(x, w, u)

    def _dexp_inv(self, x, w, u):
        return self._transport(x, w, u)

    def frame(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def jacobi_field(self, x, v, j0, jdot0, t, order=0):
        t = np.asarray(t, float)[..., None]
        if order == 0:
            return j0 + t * jdot0
        if order == 1:
            return np.broadcast_to(jdot0, np.broadcast_shapes(t.shape, np.shape(jdot0))).copy()
        return np.zeros(np.broadcast_shapes(t.shape, np.shape(jdot0)))


class _ConstantCurvatureSurface(Manifold):
    """Shared closed forms for ``S^2`` (K=+1) and ``H^2`` (K=-1) in ambient R^3."""

    dim = 2
    ambient_dim = 3
    _metric = None  # diagonal of the ambient bilinear form

    def inner(self, x, u, v):
        return np.sum(np.asarray(u) * np.asarray(v) * self._metric, axis=-1)

    def proj(self, x, a):
        k = self.curvature
        return a - k * self.inner(x, x, a)[..., None] * x

    def _c(self, theta):
        return np.cos(theta) if self.curvature > 0 else np.cosh(theta)

    def _s(self, theta):
        return np.sin(theta) if self.curvature > 0 else np.sinh(theta)

    def _s_over(self, theta):
        """``S(theta)/theta`` with the removable singularity filled."""
        if self.curvature > 0:
            return np.sinc(theta / np.pi)
        small = np.abs(theta) < 1e-4
        th = np.where(small, 1.0, theta)
        return np.where(small, 1.0 + theta ** 2 / 6.0, np.sinh(th) / th)

    def _tangency_defect(self, x, v):
        scale = 1.0 + _norm_last(np.abs(x)) * _norm_last(np.abs(v))
        return np.abs(self.inner(x, x, v)) / scale

    def _split(self, x, v):
        theta = self.norm(x, v)
        safe = np.where(theta > 0, theta, 1.0)
        e = v / safe[..., None]
        return theta, e

    def _exp(self, x, v):
        theta, e = self._split(x, v)
        y = self._c(theta)[..., None] * x + (self._s_over(theta))[..., None] * v
        return self.normalize(y)

    def _geodesic_unit_velocity(self, x, e, theta):
        k = self.curvature
        return -k * self._s(theta)[..., None] * x + self._c(theta)[..., None] * e

    def _transport(self, x, v, u):
        theta, e = self._split(x, v)
        a = self.inner(x, u, e)[..., None]
        k = self.curvature
        out = u + a * (-k * self._s(theta)[..., None] * x + (self._c(theta) - 1.0)[..., None] * e)
        return self.proj(self._exp(x, v), out)

    def _dexp(self, x, w, u):
        theta, e = self._split(x, w)
        a = self.inner(x, u, e)[..., None]
        u_perp = u - a * e
        y = self._exp(x, w)
        vel = self._geodesic_unit_velocity(x, e, theta)
        return self.proj(y, a * vel + self._s_over(theta)[..., None] * u_perp)

    def _dexp_inv(self, x, w, u):
        theta, e = self._split(x, w)
        vel = self._geodesic_unit_velocity(x, e, theta)
        b = self.inner(x, u, vel)[..., None]
        u_perp = u - b * vel
        return self.proj(x, b * e + u_perp / self._s_over(theta)[..., None])

    def jacobi_field(self, x, v, j0, jdot0, t, order=0):
        x, v, j0, jdot0 = (np.asarray(a, float) for a in (x, v, j0, jdot0))
        t = np.asarray(t, float)
        c = float(self.norm(x, v))
        if c > 0:
            e = v / c
            alpha = self.inner(x, j0, e)
            beta = self.inner(x, jdot0, e)
        else:
            e = np.zeros_like(v)
            alpha = beta = 0.0
        a_perp = j0 - alpha * e
        b_perp = jdot0 - beta * e
        ct = c * t
        unit_vel = self._geodesic_unit_velocity(x, e, ct)
        # normal part: f(t) A + g(t) B with f = C(ct), g = S(ct)/c
        f, g = self._normal_coefficients(c, t, order)
        normal = f[..., None] * a_perp + g[..., None] * b_perp
        if order == 0:
            tang = (alpha + beta * t)[..., None] * unit_vel
        elif order == 1:
            tang = beta * unit_vel
        else:
            tang = 0.0 * unit_vel
        return tang + normal

    def _normal_coefficients(self, c, t, k):
        ct = c * t
        if self.curvature > 0:
            f = c ** k * np.cos(ct + k * np.pi / 2)
            if c > 0:
                g = c ** (k - 1) * np.sin(ct + k * np.pi / 2)
            else:
                g = t if k == 0 else (np.ones_like(t) if k == 1 else np.zeros_like(t))
        else:
            even = k % 2 == 0
            f = c ** k * (np.cosh(ct) if even else np.sinh(ct))
            if c > 0:
                g = c ** (k - 1) * (np.sinh(ct) if even else np.cosh(ct))
            else:
                g = t if k == 0 else (np.ones_like(t) if k == 1 else np.zeros_like(t))
        if c == 0 and k > 0:
            f = np.zeros_like(t)
        return np.asarray(f, float), np.asarray(g, float)


class Sphere2(_ConstantCurvatureSurface):
    """Unit sphere ``S^2`` in ambient ``R^3``."""

    id = "sphere2"
    curvature = 1.0
    _metric = np.ones(3)

    @property
    def origin(self):
        return np.array([0.0, 0.0, 1.0])

    def _constraint_defect(self, x):
        return np.abs(_norm_last(x) - 1.0)

    def normalize(self, x):
        return x / _norm_last(x)[..., None]

    def _log(self, x, y):
        c = np.sum(x * y, axis=-1)
        u = y - c[..., None] * x
        nu = _norm_last(u)
        theta = np.arctan2(nu, c)
        cut = (nu <= 1e-12) & (c < 0)
        safe = np.where(nu > 0, nu, 1.0)
        v = (theta / safe)[..., None] * u
        if np.any(cut):
            canon = self.frame(x)[..., :, 0] * np.pi
            v = np.where(cut[..., None], canon, v)
        v = self.proj(x, v)
        return v, cut

    def _dist(self, x, y):
        return 2.0 * np.arcsin(np.clip(_norm_last(x - y) / 2.0, 0.0, 1.0))

    def injectivity_radius(self, x=None):
        return math.pi

    def log_all(self, x, y, max_wraps=2):
        """Every ``v`` with ``Exp_x v = y`` and ``|v| <= (2 max_wraps + 1) pi``.

        Ordered by norm.  Antipodal pairs raise :class:`CutLocusError` whose
        ``representatives`` list one canonical preimage per wrap count.
        """
        x = self.check_point(x)
        y = self.check_point(y)
        limit = (2 * max_wraps + 1) * math.pi + 1e-12
        v, cut = self._log(x, y)
        canon = self.frame(x)[:, 0]
        if cut:
            reps = [(2 * k + 1) * math.pi * canon for k in range(max_wraps + 1)]
            raise CutLocusError("antipodal points: every direction is a minimal geodesic",
                                representatives=reps)
        theta = float(np.sqrt(np.dot(v, v)))
        if theta == 0.0:
            e = canon
            out = [np.zeros(3)]
            k = 1
            while 2 * math.pi * k <= limit:
                out.append(2 * math.pi * k * e)
                k += 1
            return out
        e = v / theta
        cands = []
        k = 0
        while theta + 2 * math.pi * k <= limit:
            cands.append((theta + 2 * math.pi * k) * e)
            k += 1
        k = 0
        while 2 * math.pi - theta + 2 * math.pi * k <= limit:
            cands.append(-(2 * math.pi - theta + 2 * math.pi * k) * e)
            k += 1
        cands.sort(key=lambda w: float(np.dot(w, w)))
        cands[0] = v
        return cands


class Hyperbolic2(_ConstantCurvatureSurface):
    """Hyperbolic plane on the hyperboloid ``-x0^2 + x1^2 + x2^2 = -1``, ``x0 > 0``."""

    id = "hyperbolic2"
    curvature = -1.0
    _metric = np.array([-1.0, 1.0, 1.0])

    @property
    def origin(self):
        return np.array([1.0, 0.0, 0.0])

    def _constraint_defect(self, x):
        q = self.inner(x, x, x)
        return np.abs(q + 1.0) / (1.0 + np.abs(x[..., 0]) ** 2) + (x[..., 0] <= 0)

    def normalize(self, x):
        x = np.array(x, float, copy=True)
        x[..., 0] = np.sqrt(1.0 + x[..., 1] ** 2 + x[..., 2] ** 2)
        return x

    def _log(self, x, y):
        c = self.inner(x, x, y)
        u = y + c[..., None] * x
        nu = np.sqrt(np.maximum(self.inner(x, u, u), 0.0))
        theta = np.arcsinh(nu)
        safe = np.where(nu > 0, nu, 1.0)
        v = self.proj(x, (theta / safe)[..., None] * u)
        return v, np.zeros(v.shape[:-1], dtype=bool) if v.ndim > 1 else False

    def _dist(self, x, y):
        d = x - y
        q = np.maximum(self.inner(x, d, d), 0.0)
        return 2.0 * np.arcsinh(np.sqrt(q) / 2.0)


_REGISTRY = {"sphere2": Sphere2, "hyperbolic2": Hyperbolic2}


def get_manifold(manifold_id):
    """Look up a built-in manifold by id (``"euclidean:<d>"``, ``"sphere2"``, ``"hyperbolic2"``)."""
    if isinstance(manifold_id, Manifold):
        return manifold_id
    if manifold_id.startswith("euclidean:"):
        return Euclidean(int(manifold_id.split(":", 1)[1]))
    try:
        return _REGISTRY[manifold_id]()
    except KeyError:
        raise ValueError(f"unknown manifold id {manifold_id!r}") from None


# Module-level conveniences mirroring the manifold methods.

def exp_map(manifold, base, v):
    return get_manifold(manifold).exp(base, v)


def log_map(manifold, base, target, max_wraps=2):
    return get_manifold(manifold).log_all(base, target, max_wraps=max_wraps)


def distance(manifold, p, q):
    return get_manifold(manifold).dist(p, q)


def parallel_transport(manifold, path, v):
    """Transport ``v`` along a geodesic ``(start, velocity)`` or a list of points."""
    m = get_manifold(manifold)
    if isinstance(path, tuple) and len(path) == 2:
        start, velocity = path
        return m.transport(start, velocity, v)
    return m.transport_path(path, v)


def injectivity_radius(manifold, p=None):
    return get_manifold(manifold).injectivity_radius(p)


def riemann_curvature(manifold, p, u, v, w):
    return get_manifold(manifold).curvature_tensor(p, u, v, w)


def differential_exp(manifold, base, w, u):
    return get_manifold(manifold).dexp(base, w, u)
