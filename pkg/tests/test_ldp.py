import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geowalk.errors import NonConvexProfileError, PreconditionError
from geowalk.ldp import (RateProfile, ball_hits, check_profile_convexity, compare_rate, empirical_rate,
                         estimate_ball_rate, growth_rate_grid_sup, growth_rate_identity, inf_over_ball,
                         lambda_star, legendre_transform, rate_function, regularized_conjugate, verify_ldp)
from geowalk.manifolds import Sphere2
from geowalk.measures import LogMgfProfile, MeasureFamily, RadialSpec, quadratic_profile

import oracles

S2 = Sphere2()
TWO_POINT = MeasureFamily(RadialSpec("two-point-1d", 1.0, 1))
SHELL_S2 = MeasureFamily(RadialSpec("uniform-sphere-shell", 0.5, 2), "sphere2")
BALL_S2 = MeasureFamily(RadialSpec("uniform-ball", 0.5, 2), "sphere2")


# --- scalar Legendre transform ---------------------------------------------------------

def test_quadratic_is_self_conjugate():
    res = legendre_transform(quadratic_profile(), 1.0)
    assert res.value == pytest.approx(0.5, abs=1e-14)
    assert res.argmax == pytest.approx(1.0, abs=1e-12)


def test_two_point_conjugate_matches_closed_form_and_brute_force():
    value = lambda_star(TWO_POINT.profile, 0.5)
    assert value == pytest.approx(0.130812035941137, abs=1e-14)
    assert value == pytest.approx(oracles.two_point_rate(0.5), abs=1e-14)
    assert value == pytest.approx(oracles.brute_force_conjugate(TWO_POINT.log_mgf, 0.5), abs=1e-8)


def test_conjugate_at_zero_and_support_edges():
    assert legendre_transform(TWO_POINT.profile, 0.0).value == 0.0
    edge = legendre_transform(TWO_POINT.profile, 1.0)
    assert edge.value == pytest.approx(math.log(2.0)) and math.isinf(edge.argmax)
    beyond = legendre_transform(TWO_POINT.profile, 1.2)
    assert math.isinf(beyond.value) and beyond.infinite
    assert math.isinf(legendre_transform(SHELL_S2.profile, 0.5).value)
    with pytest.raises(ValueError):
        legendre_transform(TWO_POINT.profile, -0.1)


@pytest.mark.parametrize("fam", [TWO_POINT, SHELL_S2, BALL_S2], ids=lambda f: f.radial.kind)
def test_matches_brute_force_grid(fam):
    r = fam.r
    for frac in (0.1, 0.4, 0.8):
        v = frac * r
        s_max = 2 * legendre_transform(fam.profile, v).argmax + 1
        brute = oracles.brute_force_conjugate(fam.log_mgf, v, s_max=s_max, step=s_max * 2e-5)
        assert lambda_star(fam.profile, v) == pytest.approx(brute, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 40.0), frac=st.floats(0.0, 0.999))
def test_fenchel_young(s, frac):
    for fam in (TWO_POINT, SHELL_S2):
        v = frac * fam.r
        assert s * v <= fam.log_mgf(s) + lambda_star(fam.profile, v) + 1e-8


@pytest.mark.parametrize("fam", [TWO_POINT, SHELL_S2, BALL_S2], ids=lambda f: f.radial.kind)
def test_argmax_solves_first_order_condition(fam):
    for frac in (0.05, 0.5, 0.95):
        v = frac * fam.r
        res = legendre_transform(fam.profile, v)
        assert fam.log_mgf_derivative(res.argmax) == pytest.approx(v, abs=1e-6)


@pytest.mark.parametrize("fam", [TWO_POINT, SHELL_S2], ids=lambda f: f.radial.kind)
def test_biconjugate_recovers_log_mgf(fam):
    rate = RateProfile(fam.profile)
    for s in (0.0, 0.5, 2.0, 5.0, 10.0):
        assert rate.biconjugate(s) == pytest.approx(fam.log_mgf(s), abs=1e-6)


def test_biconjugate_quadratic():
    rate = RateProfile(quadratic_profile(2.0))
    assert rate.biconjugate(1.5) == pytest.approx(2.25, abs=1e-6)


@pytest.mark.parametrize("fam", [TWO_POINT, SHELL_S2, BALL_S2], ids=lambda f: f.radial.kind)
def test_rate_strictly_convex_and_differentiable(fam):
    rate = RateProfile(fam.profile)
    grid = np.linspace(0.02, 0.98, 25) * fam.r
    vals = np.array([rate(v) for v in grid])
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            mid = rate(0.5 * (grid[i] + grid[j]))
            assert mid < 0.5 * (vals[i] + vals[j]) - 1e-12
    # central differences converge to the argmax (the derivative of the conjugate) at second order
    for v in grid[::6]:
        exact = rate.argmax(v)
        errs = [abs((rate(v + h) - rate(v - h)) / (2 * h) - exact) for h in (1e-2 * fam.r, 5e-3 * fam.r)]
        assert math.log2(errs[0] / errs[1]) >= 1.9


def test_nonconvex_profile_rejected():
    bumpy = LogMgfProfile(lambda s: 0.5 * s * s + 0.3 * math.sin(3 * s), lambda s: s + 0.9 * math.cos(3 * s))
    with pytest.raises(NonConvexProfileError):
        legendre_transform(bumpy, 2.0)
    with pytest.raises(NonConvexProfileError):
        check_profile_convexity(bumpy, 5.0)


def test_profile_without_derivative():
    prof = LogMgfProfile(lambda s: math.log(math.cosh(s)), None, radius=1.0, boundary_rate=math.log(2))
    assert legendre_transform(prof, 0.5).value == pytest.approx(0.130812035941137, abs=1e-9)


# --- manifold rate function -------------------------------------------------------------

def test_rate_at_start_is_zero():
    assert rate_function(SHELL_S2, S2.origin, S2.origin) == 0.0
    assert rate_function(TWO_POINT, np.zeros(1), np.zeros(1)) == 0.0


def test_flat_rate_function():
    assert rate_function(TWO_POINT, np.zeros(1), np.array([0.5])) == pytest.approx(0.130812035941137, abs=1e-14)


def test_rate_beyond_support_is_infinite():
    x = S2.exp(S2.origin, [0.6, 0, 0])
    assert math.isinf(rate_function(SHELL_S2, S2.origin, x))


def test_rate_uses_shortest_preimage():
    wide = MeasureFamily(RadialSpec("uniform-ball", 5.0, 2), "sphere2")
    x = S2.exp(S2.origin, [2.5, 0, 0])
    assert rate_function(wide, S2.origin, x) == pytest.approx(lambda_star(wide.profile, 2.5), abs=1e-14)
    antipode = np.array([0, 0, -1.0])
    assert rate_function(wide, S2.origin, antipode) == pytest.approx(lambda_star(wide.profile, math.pi))


def test_inf_over_ball_uses_nearest_point():
    target = S2.exp(S2.origin, [0.3, 0, 0])
    assert inf_over_ball(SHELL_S2, S2.origin, target, 0.05) == pytest.approx(lambda_star(SHELL_S2.profile, 0.25),
                                                                          rel=1e-9)
    assert inf_over_ball(SHELL_S2, S2.origin, S2.origin, 0.05) == 0.0


# --- Monte-Carlo ball rates ----------------------------------------------------------------

def test_ball_covering_support_always_hit():
    hits = ball_hits(SHELL_S2, S2.origin, S2.origin, 0.5 + 0.01, 50, 10_000, seed=0)
    assert hits == 10_000
    assert empirical_rate(hits, 10_000, 50) == (0.0, 0.0)


def test_four_step_enumeration():
    p = oracles.binomial_ball_probability(4, 1.0, 0.01)
    assert p == 1 / 16
    assert -math.log(p) / 4 == pytest.approx(math.log(2.0), abs=1e-15)
    rep = estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([1.0]), 0.01, [4], 160_000, seed=1)
    rate, se = rep.empirical_rates[0], rep.confidence[0]
    assert abs(rate - math.log(2.0)) <= 4 * se


def test_unreachable_target_report():
    x = S2.exp(S2.origin, [0.9, 0, 0])
    rep = estimate_ball_rate(SHELL_S2, S2.origin, x, 0.05, [10, 20], 10_000, seed=2)
    assert rep.hit_counts == [0, 0] and rep.unavailable == [True, True]
    assert math.isinf(rep.analytic_rate) and math.isinf(rep.inf_over_ball_rate)
    assert compare_rate(rep, 0.2).passed
    data = json.loads(rep.to_json())
    assert data["analytic_rate"] == "inf" and data["empirical_rates"] == [None, None]
    assert rep.to_csv().splitlines()[1].startswith("10,0,,,inf,inf,1")


def test_rate_report_preconditions():
    with pytest.raises(PreconditionError):
        estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([0.5]), 0.05, [10], 100, seed=0)
    with pytest.raises(PreconditionError):
        estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([0.5]), 0.0, [10], 10_000, seed=0)
    with pytest.raises(PreconditionError):
        estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([0.5]), 0.05, [], 10_000, seed=0)


def test_flat_rate_matches_exact_binomial_at_moderate_n():
    # n = 20 and 30 keep the lattice S_n/n off the ball's boundary
    rep = estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([0.5]), 0.05, [20, 30], 200_000, seed=3)
    for n, rate, se in zip(rep.n_values, rep.empirical_rates, rep.confidence):
        exact = -math.log(oracles.binomial_ball_probability(n, 0.5, 0.05)) / n
        assert abs(rate - exact) <= 4 * se
    assert rep.unreliable == [False, False]


def test_verify_ldp_runs_per_target():
    near = S2.exp(S2.origin, [0.1, 0, 0])
    far = S2.exp(S2.origin, [0.9, 0, 0])
    out = verify_ldp(SHELL_S2, S2.origin, [near, far], 0.05, [10], 10_000, seed=4, tolerance=1.0)
    assert len(out) == 2 and out[1].passed


def test_empirical_rate_without_hits():
    assert empirical_rate(0, 1000, 10) == (None, None)


# --- growth-rate identity and regularized conjugates ------------------------------------------

def test_growth_rate_identity_examples():
    assert growth_rate_identity(1.0, 1.0, 2, 2.0) == 1.0
    assert growth_rate_grid_sup(1.0, 1.0, 2, 2.0) == pytest.approx(1.0, abs=1e-6)
    assert growth_rate_identity(1.0, 1.0, 2, 1.0, return_flag=True) == (0.0, True)
    assert growth_rate_identity(0.7, 0.3, 6, 0.9) == 4 * growth_rate_identity(0.7, 0.3, 3, 0.9)
    with pytest.raises(ValueError):
        growth_rate_identity(0.0, 1.0, 2, 2.0)


@settings(max_examples=50, deadline=None)
@given(C=st.floats(0.1, 5), r=st.floats(0.1, 2), m=st.integers(1, 16), excess=st.floats(0.01, 3))
def test_growth_rate_identity_matches_grid(C, r, m, excess):
    v = r + excess
    exact = growth_rate_identity(C, r, m, v)
    assert growth_rate_grid_sup(C, r, m, v) == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_regularized_conjugates_increase_to_the_rate():
    prof = TWO_POINT.profile
    for frac in (0.3, 0.6, 0.9):
        vals = [regularized_conjugate(prof, frac, 0.25, 1.0, m) for m in (1, 2, 4, 8, 16, 32)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= lambda_star(prof, frac)
        assert lambda_star(prof, frac) - vals[-1] <= 1e-3
    assert regularized_conjugate(prof, 1.5, 1.0, 1.0, 4) < math.inf
