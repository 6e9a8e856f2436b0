"""Legendre transforms, the manifold rate function and Monte-Carlo ball rates.

For an isotropic increment law the log-MGF depends on ``|lambda|`` only, and
the supremum defining the conjugate is attained with ``lambda`` parallel to
``v``.  Everything here therefore works with scalar profiles ``s -> Lambda(s)``.
"""
import csv
import dataclasses
import io
import json
import math

import numpy as np
from scipy import optimize

from .errors import CutLocusError, NonConvexProfileError, PreconditionError
from .walks import simulate_endpoints

LEGENDRE_TOL = 1e-9
MIN_RELIABLE_HITS = 50
MIN_REPLICAS = 10_000


@dataclasses.dataclass(frozen=True)
class LegendreResult:
    value: float
    argmax: float
    infinite: bool = False

    def __float__(self):
        return self.value


def check_profile_convexity(profile, s_max, n_points=17, tol=1e-10):
    """Raise :class:`NonConvexProfileError` if second differences dip below ``-tol``."""
    s = np.linspace(0.0, s_max, n_points)
    vals = np.array([profile(x) for x in s])
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    bad = np.nonzero(second < -tol * max(1.0, np.max(np.abs(vals))))[0]
    if bad.size:
        i = int(bad[0]) + 1
        raise NonConvexProfileError(f"log-MGF profile is not convex near s = {s[i]:.6g} "
                                    f"(second difference {second[i - 1]:.3e})")


def _objective(profile, v):
    return lambda s: s * v - profile(s)


def _bracket(profile, v):
    """Smallest doubling ``s_hi`` where the objective has started to decrease."""
    hi = 1.0
    deriv = profile.derivative
    for _ in range(200):
        if deriv is not None:
            if deriv(hi) > v:
                return hi
        elif hi * v - profile(hi) < 0.5 * hi * v - profile(0.5 * hi):
            return hi
        hi *= 2.0
    raise ArithmeticError("could not bracket the Legendre maximizer")


def legendre_transform(profile, v_norm, check_convexity=True):
    """``sup_{s >= 0} s * v_norm - Lambda(s)`` with its argmax.

    Returns ``+inf`` (flagged) beyond the support radius; at the radius the
    value is the profile's ``boundary_rate`` with an infinite argmax.
    """
    v = float(v_norm)
    if v < 0:
        raise ValueError("v_norm must be nonnegative")
    r = profile.radius
    if v > r:
        return LegendreResult(math.inf, math.inf, True)
    if v == 0.0:
        return LegendreResult(0.0, 0.0, False)
    if v == r:
        return LegendreResult(profile.boundary_rate, math.inf, math.isinf(profile.boundary_rate))
    hi = _bracket(profile, v)
    if check_convexity:
        check_profile_convexity(profile, hi)
    if profile.derivative is not None:
        lo = 0.0 if hi == 1.0 else 0.5 * hi
        s_star = optimize.brentq(lambda s: profile.derivative(s) - v, lo, hi,
                                 xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    else:
        res = optimize.minimize_scalar(lambda s: -(s * v - profile(s)), bounds=(0.0, hi),
                                       method="bounded", options={"xatol": LEGENDRE_TOL * 1e-3})
        s_star = float(res.x)
    value = s_star * v - profile(s_star)
    return LegendreResult(float(max(value, 0.0)), float(s_star), False)


class RateProfile:
    """Radial Cramér rate ``s -> Lambda*(v)`` for ``|v| = s`` with memoization."""

    def __init__(self, profile):
        self.profile = profile
        self.domain_radius = profile.radius
        self._cache = {}

    def __call__(self, v):
        v = float(v)
        if v not in self._cache:
            self._cache[v] = legendre_transform(self.profile, v, check_convexity=not self._cache).value
        return self._cache[v]

    def argmax(self, v):
        return legendre_transform(self.profile, v, check_convexity=False).argmax

    def biconjugate(self, s):
        """``sup_{0 <= v <= r} s v - Lambda*(v)``, which should give back ``Lambda(s)``."""
        r = self.domain_radius
        if math.isinf(r):
            r = 2.0 * _bracket(self.profile, 1.0) * max(1.0, s)
        res = optimize.minimize_scalar(lambda v: -(s * v - self(v)), bounds=(0.0, r),
                                       method="bounded", options={"xatol": 1e-13, "maxiter": 500})
        best = -res.fun
        if not math.isinf(self(r)):
            best = max(best, s * r - self(r))
        return float(best)


def lambda_star(profile, v_norm):
    return legendre_transform(profile, v_norm).value


def rate_function(family, x0, x, max_wraps=2):
    """``I_M(x) = min Lambda*(|v|)`` over preimages ``v`` of ``x`` under ``Exp_{x0}``."""
    m = family.manifold
    try:
        preimages = m.log_all(x0, x, max_wraps=max_wraps)
    except CutLocusError as exc:
        preimages = exc.representatives
    norms = [float(m.norm(x0, v)) for v in preimages]
    profile = family.profile
    return min(legendre_transform(profile, s, check_convexity=False).value for s in norms)


def _ball_grid(manifold, center, eps, n_radial=201, n_angular=72, seed=0):
    """Points ``Exp_center(rho u)`` covering the closed ball of radius ``eps``."""
    frame = manifold.frame(center)
    d = manifold.dim
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif d == 2:
        ang = 2 * np.pi * np.arange(n_angular) / n_angular
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        g = np.random.default_rng(seed).standard_normal((256, d))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    rho = np.linspace(0.0, eps, n_radial)
    vecs = (rho[:, None, None] * (dirs @ frame.T)[None, :, :]).reshape(-1, manifold.ambient_dim)
    return manifold._exp(np.broadcast_to(center, vecs.shape), vecs)


def inf_over_ball(family, x0, center, eps, n_radial=201):
    """``inf_{y in B(center, eps)} I_M(y)`` on a grid with ``n_radial`` radial samples.

    The rate is nondecreasing in the preimage norm and the shortest preimage
    norm is the distance, so the grid minimum of ``d(x0, y)`` decides it.
    """
    m = family.manifold
    center = np.asarray(center, float)
    grid = _ball_grid(m, center, eps, n_radial)
    closest = float(np.min(m.dist(np.broadcast_to(x0, grid.shape), grid)))
    return legendre_transform(family.profile, closest, check_convexity=False).value


@dataclasses.dataclass
class RateReport:
    target: list
    epsilon: float
    n_values: list
    replicas: int
    hit_counts: list
    empirical_rates: list
    confidence: list
    analytic_rate: float
    inf_over_ball_rate: float
    seed: int

    @property
    def unreliable(self):
        return [h < MIN_RELIABLE_HITS for h in self.hit_counts]

    @property
    def unavailable(self):
        return [h == 0 for h in self.hit_counts]

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["unreliable"] = self.unreliable
        d["unavailable"] = self.unavailable
        return _json_safe(d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["n", "hits", "empirical_rate", "stderr", "analytic_rate", "inf_over_ball_rate",
                    "unreliable"])
        for n, h, e, se, bad in zip(self.n_values, self.hit_counts, self.empirical_rates,
                                    self.confidence, self.unreliable):
            w.writerow([n, h, _fmt(e), _fmt(se), _fmt(self.analytic_rate),
                        _fmt(self.inf_over_ball_rate), int(bad)])
        return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(float(x))


def _json_safe(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def ball_hits(family, x0, center, eps, n, replicas, seed):
    """Number of replicas whose endpoint lands in the open ball ``B(center, eps)``."""
    ends = simulate_endpoints(family, x0, n, replicas, seed)
    m = family.manifold
    d = m.dist(ends, np.broadcast_to(np.asarray(center, float), ends.shape))
    return int(np.count_nonzero(d < eps))


def empirical_rate(hits, replicas, n):
    """``(-(1/n) log p, delta-method standard error)``; ``(None, None)`` without hits."""
    if hits == 0:
        return None, None
    p = hits / replicas
    return -math.log(p) / n, math.sqrt((1 - p) / (p * replicas)) / n


def estimate_ball_rate(family, x0, center, eps, n_list, replicas, seed):
    """Monte-Carlo ``-(1/n) log P(S_n in B(center, eps))`` for each ``n``."""
    if replicas < MIN_REPLICAS:
        raise PreconditionError(f"replicas = {replicas} is below the minimum {MIN_REPLICAS}")
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if not n_list:
        raise PreconditionError("n_list is empty")
    m = family.manifold
    x0 = m.check_point(np.asarray(x0, float))
    center = m.check_point(np.asarray(center, float))
    hits, rates, ses = [], [], []
    for n in n_list:
        h = ball_hits(family, x0, center, eps, int(n), int(replicas), seed)
        e, se = empirical_rate(h, replicas, n)
        hits.append(h)
        rates.append(e)
        ses.append(se)
    return RateReport(center.tolist(), float(eps), [int(n) for n in n_list], int(replicas), hits, rates,
                      ses, rate_function(family, x0, center), inf_over_ball(family, x0, center, eps),
                      int(seed))


@dataclasses.dataclass
class LdpComparison:
    report: RateReport
    reference: float
    tolerance: float
    passed: bool
    reason: str


def compare_rate(report, tolerance):
    """Pass/fail of the largest-``n`` estimate against the inf-over-ball rate."""
    ref = report.inf_over_ball_rate
    if math.isinf(ref):
        ok = all(h == 0 for h in report.hit_counts)
        return LdpComparison(report, ref, tolerance, ok,
                             "unreachable target: no hits expected" if ok else "hits beyond support")
    rate = report.empirical_rates[-1]
    if rate is None:
        return LdpComparison(report, ref, tolerance, False, "no hits at the largest n")
    ok = abs(rate - ref) <= tolerance * ref if ref > 0 else abs(rate) <= tolerance
    return LdpComparison(report, ref, tolerance, ok,
                         f"empirical {rate:.6g} vs reference {ref:.6g}")


def verify_ldp(family, x0, targets, eps, n_list, replicas, seed, tolerance=0.2):
    """Run :func:`estimate_ball_rate` per target and compare against inf-over-ball ``I_M``."""
    out = []
    m = family.manifold
    for i, t in enumerate(targets):
        t = m.check_point(np.asarray(t, float))
        report = estimate_ball_rate(family, x0, t, eps, n_list, replicas, seed + i)
        out.append(compare_rate(report, tolerance))
    return out


def growth_rate_identity(C, r, m, v_norm, return_flag=False):
    """``m^2 (v - r)^2 / (4 C r^2)``; zero (flagged) when ``v <= r``."""
    if C <= 0 or r <= 0:
        raise ValueError("C and r must be positive")
    below = v_norm <= r
    value = 0.0 if below else m * m * (v_norm - r) ** 2 / (4.0 * C * r * r)
    return (value, below) if return_flag else value


def growth_rate_grid_sup(C, r, m, v_norm, s_max=None, n_grid=2_000_001):
    """Grid supremum of ``s v - r s - C r^2 s^2 / m^2`` over ``s >= 0``."""
    kappa = C * r * r / (m * m)
    if s_max is None:
        s_max = max(1.0, 2.0 * max(v_norm - r, 0.0) / (2 * kappa))
    s = np.linspace(0.0, s_max, n_grid)
    return float(np.max(s * (v_norm - r) - kappa * s * s))


def regularized_conjugate(profile, v_norm, C, r, m):
    """``sup_s s v - Lambda(s) - (C r^2 / m^2) s^2`` (finite for every ``v``)."""
    kappa = C * r * r / (m * m)
    v = float(v_norm)
    if v <= 0:
        return 0.0
    deriv = profile.derivative
    if deriv is None:
        raise ValueError("regularized conjugate needs the profile derivative")
    g = lambda s: v - deriv(s) - 2 * kappa * s
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
    s_star = optimize.brentq(g, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return float(s_star * v - profile(s_star) - kappa * s_star * s_star)
