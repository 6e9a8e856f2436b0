"""Isotropic increment laws on tangent spaces.

A :class:`MeasureFamily` assigns to every point ``x`` a law on ``T_x M`` by
drawing coordinates from a rotation-invariant radial law and mapping them
through an orthonormal frame at ``x``.  Rotation invariance makes the result
independent of which frame is used, so the family is automatically consistent
with parallel transport along any curve.

The log-MGF of an isotropic law depends on ``|lambda|`` only.  Writing
``t = r s`` and ``theta`` for the angle between ``lambda`` and the increment,

* shell in ``R^d``:  ``E exp(t cos theta)`` with angular weight ``sin^{d-2} theta``;
* ball in ``R^d``:   the first coordinate has density ``(1 - u^2)^{(d-1)/2}``,
  i.e. angular weight ``sin^d theta``.

Both are evaluated by adaptive quadrature; one-dimensional laws use closed forms.
"""
import dataclasses
import functools
import math
import warnings

import numpy as np
from scipy import integrate

from .errors import ManifoldMismatchError
from .manifolds import get_manifold
from .stats import energy_two_sample_test

KINDS = ("uniform-sphere-shell", "rademacher-radial", "uniform-ball", "two-point-1d")
# rademacher-radial is |X| = r with uniform direction, the same law as the shell
_SHELL_KINDS = ("uniform-sphere-shell", "rademacher-radial", "two-point-1d")

@dataclasses.dataclass(frozen=True)
class RadialSpec:
    """Radial law of the increments: kind, support radius and dimension."""

    kind: str
    r: float
    dimension: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown increment kind {self.kind!r}; expected one of {KINDS}")
        if not self.r > 0:
            raise ValueError("support radius must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.kind == "two-point-1d" and self.dimension != 1:
            raise ValueError("two-point-1d lives in dimension 1")

    @property
    def is_shell(self):
        return self.kind in _SHELL_KINDS

    def to_dict(self):
        return dataclasses.asdict(self)


def _log1p_exp_neg(t):
    return np.log1p(np.exp(-t))


def _quad(f, lo, hi, epsabs=0.0):
    # near-zero moments trip the roundoff heuristic without losing accuracy
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=200)[0]


def _angular_log_integral(t, power):
    """``log E exp(t (cos th - 1))`` under angular weight ``sin^power`` and the tilted mean of cos.

    For ``t <= 1`` the log is taken through ``log1p`` of an ``expm1``
    integral, which keeps full relative accuracy as ``t -> 0``.
    """
    w = lambda th: math.sin(th) ** power
    den = _quad(w, 0.0, math.pi)
    if t <= 1.0:
        ex = lambda th: math.expm1(t * math.cos(th)) * w(th)
        g = lambda th: math.cos(th) * math.exp(t * math.cos(th)) * w(th)
        excess = _quad(ex, 0.0, math.pi) / den
        mom = _quad(g, 0.0, math.pi, epsabs=1e-17) / den
        return math.log1p(excess) - t, mom / (1.0 + excess)
    f = lambda th: math.exp(t * (math.cos(th) - 1.0)) * w(th)
    g = lambda th: math.cos(th) * f(th)
    # the integrand concentrates in a sqrt(1/t) window near 0 for large t
    cut = min(math.pi, 12.0 / math.sqrt(t))
    pieces = [(0.0, cut)] + ([(cut, math.pi)] if cut < math.pi else [])
    num = sum(_quad(f, lo, hi) for lo, hi in pieces)
    mom = sum(_quad(g, lo, hi) for lo, hi in pieces)
    return math.log(num / den), mom / num


@functools.lru_cache(maxsize=4096)
def _radial_log_mgf(kind, dimension, t):
    """``(Lambda, E_tilt[cos theta])`` for radius-1 increments at ``t = r s``."""
    d = dimension
    if d == 1:
        if kind in _SHELL_KINDS:
            val = t + _log1p_exp_neg(2 * t) - math.log(2.0)
            return float(val), math.tanh(t)
        # uniform on [-1, 1]: log(sinh t / t), derivative coth t - 1/t
        if t < 1e-4:
            return t * t / 6.0 - t ** 4 / 180.0, t / 3.0 - t ** 3 / 45.0
        val = t + math.log1p(-math.exp(-2 * t)) - math.log(2 * t)
        return val, 1.0 / math.tanh(t) - 1.0 / t
    power = d - 2 if kind in _SHELL_KINDS else d
    log_ratio, mean_cos = _angular_log_integral(t, power)
    return t + log_ratio, mean_cos


@dataclasses.dataclass(frozen=True)
class LogMgfProfile:
    """Radial log-MGF ``s -> Lambda(lambda)`` for ``|lambda| = s``.

    ``value`` and ``derivative`` accept scalars.  ``radius`` is the support
    bound ``r``; ``boundary_rate`` is ``-log P(<X, e> = r)`` for a unit ``e``
    (finite only when the law has an atom at the boundary in that direction).
    """

    value: callable
    derivative: callable = None
    radius: float = math.inf
    boundary_rate: float = math.inf
    name: str = "profile"

    def __call__(self, s):
        return self.value(s)


def quadratic_profile(scale=1.0):
    """``s -> scale * s^2 / 2``, self-conjugate when ``scale = 1``."""
    return LogMgfProfile(lambda s: 0.5 * scale * s * s, lambda s: scale * s,
                         radius=math.inf, boundary_rate=math.inf, name=f"quadratic:{scale}")


class MeasureFamily:
    """Isotropic family ``{mu_x}`` on a manifold.

    Parameters
    ----------
    radial : RadialSpec
    manifold : str or Manifold
        Defaults to ``euclidean:<dimension>``.  The radial dimension must
        equal the manifold's intrinsic dimension.
    """

    #: whether the walk should hand the sampler a frame transported from the
    #: start point instead of the frame-policy frame at the current point
    uses_transported_frame = False
    isotropic = True

    def __init__(self, radial, manifold=None):
        self.radial = radial
        self.manifold = get_manifold(manifold or f"euclidean:{radial.dimension}")
        if self.manifold.dim != radial.dimension:
            raise ManifoldMismatchError(
                f"{radial.kind} in dimension {radial.dimension} does not fit {self.manifold.id}")

    def __repr__(self):
        return f"MeasureFamily({self.radial.kind!r}, r={self.radial.r}, {self.manifold.id!r})"

    @classmethod
    def from_config(cls, spec, manifold=None):
        """Build from ``{"kind", "r", "dimension"}``."""
        return cls(RadialSpec(spec["kind"], float(spec["r"]), int(spec["dimension"])), manifold)

    @property
    def r(self):
        return self.radial.r

    # --- sampling ------------------------------------------------------------

    def sample_coords(self, rng, shape=()):
        """Increment coordinates in an orthonormal frame, shape ``shape + (d,)``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        d = self.radial.dimension
        r = self.radial.r
        if d == 1 and self.radial.kind != "uniform-ball":
            return r * (2.0 * rng.integers(0, 2, size=shape + (1,)) - 1.0)
        if d == 1:
            return rng.uniform(-r, r, size=shape + (1,))
        u = rng.standard_normal(shape + (d,))
        u /= np.sqrt(np.sum(u * u, axis=-1, keepdims=True))
        if self.radial.kind == "uniform-ball":
            u *= (r * rng.random(shape) ** (1.0 / d))[..., None]
        else:
            u *= r
        return u

    def sample(self, x, rng, size=None, frame=None):
        """Tangent vectors at ``x`` distributed as ``mu_x``.

        With ``size`` the draws are stacked in front of ``x``'s shape.  A
        caller-supplied ``frame`` (``(..., ambient, d)``) replaces the frame policy.
        """
        x = np.asarray(x, float)
        shape = x.shape[:-1] if size is None else (
            ((size,) if np.isscalar(size) else tuple(size)) + x.shape[:-1])
        if frame is None:
            frame = self.manifold.frame(x)
        c = self.sample_coords(rng, shape)
        return np.einsum("...ij,...j->...i", frame, c)

    # --- log-MGF -------------------------------------------------------------

    def log_mgf(self, s):
        """``Lambda(lambda)`` for ``|lambda| = s``."""
        s = float(s)
        if s < 0:
            raise ValueError("lambda norm must be nonnegative")
        if s == 0.0:
            return 0.0
        return _radial_log_mgf(self.radial.kind, self.radial.dimension, self.radial.r * s)[0]

    def log_mgf_derivative(self, s):
        s = float(s)
        if s == 0.0:
            return 0.0
        return self.radial.r * _radial_log_mgf(self.radial.kind, self.radial.dimension,
                                               self.radial.r * s)[1]

    def log_mgf_at(self, x, lam):
        """``Lambda_x(lam)`` for a tangent vector ``lam`` at ``x``."""
        return self.log_mgf(float(self.manifold.norm(x, lam)))

    @property
    def boundary_rate(self):
        # atom of <X, e> at r exists only for the symmetric two-point law in 1-D
        if self.radial.dimension == 1 and self.radial.is_shell:
            return math.log(2.0)
        return math.inf

    @property
    def profile(self):
        return LogMgfProfile(self.log_mgf, self.log_mgf_derivative, radius=self.radial.r,
                             boundary_rate=self.boundary_rate, name=self.radial.kind)


def sample_increment(family, at, rng, size=None):
    """Draw increments at ``at`` from ``family``."""
    return family.sample(at, rng, size=size)


def log_mgf(family, lambda_norm):
    return family.log_mgf(lambda_norm)


@dataclasses.dataclass(frozen=True)
class ConsistencyReport:
    start: tuple
    end: tuple
    n_samples: int
    statistic: float
    p_value: float
    alpha: float
    mgf_max_defect: float
    mgf_tolerance: float

    @property
    def two_sample_passed(self):
        return self.p_value > self.alpha

    @property
    def mgf_passed(self):
        return self.mgf_max_defect <= self.mgf_tolerance

    @property
    def passed(self):
        return self.two_sample_passed and self.mgf_passed


def check_consistency(family, curve, n_samples, rng, alpha=0.001, lambda_grid=(0.5, 1.0, 2.0, 5.0),
                      mgf_tolerance=1e-10, n_permutations=999, seed=0):
    """Compare ``mu_z`` with the transport of ``mu_y`` along a piecewise geodesic.

    ``curve`` is a sequence of points; ``y`` is the first and ``z`` the last.
    Runs a two-sample energy test between transported draws from ``mu_y``
    and direct draws from ``mu_z`` (in frame coordinates at ``z``), and checks
    ``Lambda_y(lam) = Lambda_z(tau lam)`` on frame directions scaled by
    ``lambda_grid``.
    """
    m = family.manifold
    pts = [np.asarray(p, float) for p in curve]
    for p in pts:
        if p.shape[-1] != m.ambient_dim:
            raise ManifoldMismatchError("curve does not live on the family's manifold")
        m.check_point(p)
    y, z = pts[0], pts[-1]

    def carry(vectors):
        for a, b in zip(pts[:-1], pts[1:]):
            w = m.log(a, b, on_cut="canonical")
            vectors = m._transport(np.broadcast_to(a, vectors.shape), np.broadcast_to(w, vectors.shape),
                                   vectors)
        return vectors

    from_y = carry(family.sample(y, rng, size=n_samples))
    at_z = family.sample(z, rng, size=n_samples)
    frame_z = m.frame(z)
    a = m.coords_in_frame(np.broadcast_to(z, from_y.shape), from_y, np.broadcast_to(frame_z, from_y.shape + (m.dim,)))
    b = m.coords_in_frame(np.broadcast_to(z, at_z.shape), at_z, np.broadcast_to(frame_z, at_z.shape + (m.dim,)))
    test = energy_two_sample_test(a, b, n_permutations=n_permutations, seed=seed, alpha=alpha)

    frame_y = m.frame(y)
    defect = 0.0
    for s in lambda_grid:
        for i in range(m.dim):
            lam = s * frame_y[:, i]
            lam_z = carry(lam[None, :])[0]
            defect = max(defect, abs(family.log_mgf_at(y, lam) - family.log_mgf_at(z, lam_z)))
    return ConsistencyReport(tuple(y.tolist()), tuple(z.tolist()), int(n_samples), test.statistic,
                             test.p_value, alpha, float(defect), mgf_tolerance)
