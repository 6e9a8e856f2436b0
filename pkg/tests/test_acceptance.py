"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance.

Every test reports a single pass/fail line through the ``acceptance`` fixture;
the lines are repeated in the terminal summary.  Criteria that cannot be met
as stated are still run as stated and left to fail.
"""
import json
import math
import os

import numpy as np
import pytest

from geowalk.charts import (ambient_to_chart, chart_to_ambient, integrate_geodesic, integrate_jacobi,
                            integrate_transport, jacobi_via_dexp)
from geowalk.cli import main
from geowalk.ldp import (RateProfile, estimate_ball_rate, growth_rate_grid_sup, growth_rate_identity,
                         inf_over_ball, lambda_star, legendre_transform, rate_function, regularized_conjugate)
from geowalk.lemmas import verify_lemma
from geowalk.manifolds import Hyperbolic2, Sphere2, get_manifold
from geowalk.measures import MeasureFamily, RadialSpec
from geowalk.rng import stream
from geowalk.stats import empirical_mgf, energy_two_sample_test
from geowalk.walks import run_rescaled_walk

import oracles

S2, H2 = Sphere2(), Hyperbolic2()
CURVED = [S2, H2]
CHART = {"sphere2": "sphere2-polar", "hyperbolic2": "hyperbolic2-polar"}
SHELL = MeasureFamily(RadialSpec("uniform-sphere-shell", 0.5, 2), "sphere2")
TWO_POINT = MeasureFamily(RadialSpec("two-point-1d", 1.0, 1))


# --- 1: geometry round trip -----------------------------------------------------------------

def test_geometry_round_trip(acceptance):
    worst_log, worst_iso = 0.0, 0.0
    # H2 has no cut locus; it gets the sphere's scale because hyperboloid coordinates
    # grow like cosh(distance) and rounding in Minkowski products grows with their square
    for m, v_max in ((S2, math.pi), (H2, math.pi)):
        rng = np.random.default_rng(101)
        x = m.random_point(rng, size=1000, spread=1.0)
        v = m.random_tangent(x, rng, v_max)
        v = v * np.minimum(1.0, 0.999999 * v_max / m.norm(x, v))[..., None]  # strictly inside
        back = m.log(x, m.exp(x, v))
        worst_log = max(worst_log, float(np.max(m.norm(x, back - v))))
        a, b = m.random_tangent(x, rng, 1.0), m.random_tangent(x, rng, 1.0)
        y = m.exp(x, v)
        ta, tb = m.transport(x, v, a), m.transport(x, v, b)
        worst_iso = max(worst_iso, float(np.max(np.abs(m.inner(y, ta, tb) - m.inner(x, a, b)))))
    ok = acceptance(1, worst_log <= 1e-9 and worst_iso <= 1e-12,
                    f"max |log exp v - v| = {worst_log:.2e} (<= 1e-9), "
                    f"transport isometry defect = {worst_iso:.2e} (<= 1e-12)")
    assert ok


# --- 2: chart integrators vs closed forms -------------------------------------------------

def _chart_initial(m, rng, duration):
    """Random unit-ish initial data whose geodesic keeps clear of the polar chart's singular set."""
    while True:
        x = m.exp(m.origin, m.frame(m.origin)[:, 0] * rng.uniform(0.5, 1.5))
        v = m.random_tangent(x, rng, 1.0, 0.5)
        t = np.linspace(0, duration, 201)
        pts = m.geodesic(x, v, t)
        polar = np.arccos(np.clip(pts[:, 2], -1, 1)) if m.id == "sphere2" else np.arccosh(pts[:, 0])
        if polar.min() > 0.3 and (m.id != "sphere2" or polar.max() < math.pi - 0.3):
            return x, v


def test_chart_integrators_match_closed_forms(acceptance):
    duration, step = 2.0, 1e-3
    worst = {"geodesic": 0.0, "transport": 0.0, "jacobi": 0.0}
    ratios = []
    for m in CURVED:
        chart = CHART[m.id]
        rng = np.random.default_rng(202)
        for _ in range(4):
            x, v = _chart_initial(m, rng, duration)
            u = m.random_tangent(x, rng, 1.0, 0.5)
            q, qv = ambient_to_chart(chart, x, v)
            _, qu = ambient_to_chart(chart, x, u)
            geo = integrate_geodesic(chart, q, qv, duration, step)
            t = geo.times
            worst["geodesic"] = max(worst["geodesic"], float(np.max(
                np.linalg.norm(chart_to_ambient(chart, geo.positions) - m.geodesic(x, v, t), axis=-1))))
            tr = integrate_transport(chart, geo, qu)
            _, tr_amb = chart_to_ambient(chart, tr.positions, tr.field("v"))
            closed = np.stack([m.transport(x, ti * v, u) for ti in t])
            worst["transport"] = max(worst["transport"], float(np.max(np.linalg.norm(tr_amb - closed, axis=-1))))
            jac = integrate_jacobi(chart, geo, np.zeros(2), qu)
            _, j_amb = chart_to_ambient(chart, jac.positions, jac.field("J"))
            closed = jacobi_via_dexp(m.id, x, v, u, t)
            worst["jacobi"] = max(worst["jacobi"], float(np.max(np.linalg.norm(j_amb - closed, axis=-1))))
        q0, qd = np.array([1.0, 0.2]), np.array([0.6, 0.9])
        x0, v0 = chart_to_ambient(chart, q0, qd)
        exact = m.exp(x0, duration * v0)
        errs = [np.linalg.norm(chart_to_ambient(chart, integrate_geodesic(chart, q0, qd, duration, h).positions[-1])
                               - exact) for h in (0.1, 0.05)]
        ratios.append(errs[0] / errs[1])
    ok = max(worst.values()) <= 1e-6 and min(ratios) >= 12
    acceptance(2, ok, ", ".join(f"{k} {e:.2e}" for k, e in worst.items())
               + f" (<= 1e-6); RK4 halving ratios {', '.join(f'{r:.1f}' for r in ratios)} (>= 12)")
    assert ok


# --- 3: Jacobi laws -------------------------------------------------------------------------

def test_jacobi_laws(acceptance):
    defects = {}
    for m in CURVED:
        rep = verify_lemma("jacobi-inner-product", m.id, seed=303)
        defects[m.id] = max(rep.checks["closed_form_defect"]["value"], rep.checks["ode_defect"]["value"])
    geo = integrate_geodesic("sphere2-polar", [math.pi / 2, 0.0], [0.0, 1.0], 2.0, 1e-3)
    jac = integrate_jacobi("sphere2-polar", geo, [0.0, 0.0], [1.0, 0.0])
    sine_ode = float(np.max(np.abs(jac.field_norms("J") - np.sin(jac.times))))
    x0, v0 = chart_to_ambient("sphere2-polar", [math.pi / 2, 0.0], [0.0, 1.0])
    J = jacobi_via_dexp("sphere2", x0, v0, np.array([0.0, 0.0, -1.0]), jac.times)
    sine_dexp = float(np.max(np.abs(np.linalg.norm(J, axis=-1) - np.sin(jac.times))))
    ok = max(defects.values()) <= 1e-6 and max(sine_ode, sine_dexp) <= 1e-5
    acceptance(3, ok, f"inner-product identity defect S2 {defects['sphere2']:.2e}, H2 {defects['hyperbolic2']:.2e}"
               f" (<= 1e-6); |J| = sin t: ODE {sine_ode:.2e}, dexp {sine_dexp:.2e} (<= 1e-5)")
    assert ok


# --- 4: Taylor orders ---------------------------------------------------------------------

def test_taylor_orders(acceptance):
    parts, ok = [], True
    for lemma, lo, hi in (("inverse-exp-taylor", 1.9, 2.1), ("dexp-vs-transport", 1.8, 2.2),
                          ("inverse-dexp-vs-transport", 1.8, 2.2)):
        for m in CURVED:
            rep = verify_lemma(lemma, m.id, seed=404)
            held = rep.checks["held_out_constant"]["passed"]
            good = lo <= rep.fitted_order <= hi and held
            ok &= good
            parts.append(f"{lemma}/{m.id} order {rep.fitted_order:.3f}{'' if held else ' held-out FAIL'}")
        flat = max(max(s["measured"] for s in verify_lemma(lemma, f"euclidean:{d}", seed=404).samples)
                   for d in (2, 3))
        ok &= flat <= 1e-12
        parts.append(f"{lemma}/flat defect {flat:.1e}")
    acceptance(4, ok, "; ".join(parts))
    assert ok


# --- 5: geodesic spreading ------------------------------------------------------------------

def test_geodesic_spreading(acceptance):
    rep = verify_lemma("geodesic-spreading", "sphere2", {"n_pairs": 1000}, seed=505)
    first = rep.checks["first_order_coefficient"]
    held = rep.checks["held_out_constant"]
    pairs = len({s["params"]["pair"] for s in rep.samples})
    ok = first["value"] <= 1e-5 and held["passed"] and pairs == 1000
    acceptance(5, ok, f"first-order coefficient error {first['value']:.2e} (<= 1e-5); held-out C_hat "
               f"{held['C_hat']:.3g} vs worst test ratio {held['max_test_ratio']:.3g} over {pairs} pairs")
    assert ok


# --- 6: comparison bound --------------------------------------------------------------------

@pytest.mark.slow
def test_comparison_bound(acceptance):
    rep = verify_lemma("comparison-bound", "sphere2",
                       {"r": 0.5, "n_values": [256, 512, 1024], "slope_n": 1024, "slope_m": [2, 4, 8, 16]},
                       seed=606)
    slope = rep.checks["slope_in_m"]["value"]
    held = rep.checks["held_out_constant"]
    ok = slope <= -2.5 and held["passed"]
    acceptance(6, ok, f"slope in m at n = 1024: {slope:.3f} (<= -2.5); single C_hat over n in "
               f"{{256, 512, 1024}}: {'holds' if held['passed'] else 'violated'} "
               f"(C_hat {held['C_hat']:.3g}, worst {held['max_test_ratio']:.3g})")
    assert ok


# --- 7: i.i.d. pullback -------------------------------------------------------------------

def test_iid_pullback(acceptance):
    n, walks = 100, 1000
    coords = lambda v: S2.coords_in_frame(np.broadcast_to(S2.origin, v.shape), v)
    pulled = coords(np.concatenate([run_rescaled_walk(SHELL, S2.origin, n, seed=707, replica=i).transported_increments
                                    for i in range(walks)]))
    direct = coords(SHELL.sample(S2.origin, stream(708), size=len(pulled)))
    test = energy_two_sample_test(pulled, direct, seed=709)
    worst = 0.0
    for lam_norm in (0.5, 1.0, 2.0):
        for angle in (0.0, 2.0):
            lam = lam_norm * np.array([math.cos(angle), math.sin(angle)])
            mean, se = empirical_mgf(pulled, lam)
            worst = max(worst, abs(mean - math.exp(SHELL.log_mgf(lam_norm))) / se)
    ok = len(pulled) == 100_000 and test.p_value > 0.001 and worst <= 3.0
    acceptance(7, ok, f"energy two-sample p = {test.p_value:.3f} (> 0.001) on {len(pulled)} samples; "
               f"worst MGF deviation {worst:.2f} standard errors (<= 3)")
    assert ok


# --- 8: flat Cramér reproduction ----------------------------------------------------------

def test_flat_cramer(acceptance):
    enum_rate = -math.log(oracles.binomial_ball_probability(4, 1.0, 0.01)) / 4
    n, eps = 100, 0.05
    rep = estimate_ball_rate(TWO_POINT, np.zeros(1), np.array([0.5]), eps, [n], 1_000_000, seed=808)
    emp = rep.empirical_rates[0]
    exact = -math.log(oracles.binomial_ball_probability(n, 0.5, eps)) / n
    ref = inf_over_ball(TWO_POINT, np.zeros(1), np.array([0.5]), eps)
    rel_exact = abs(emp - exact) / exact if emp is not None else math.inf
    rel_ref = abs(emp - ref) / ref if emp is not None else math.inf
    ok = (abs(enum_rate - math.log(2)) <= 1e-15 and rel_exact <= 0.15 and rel_ref <= 0.20
          and lambda_star(TWO_POINT.profile, 0.5) == pytest.approx(0.130812, abs=1e-6))
    acceptance(8, ok, f"enumeration {enum_rate:.15f} = log 2; n = 100: empirical {emp} "
               f"({rep.hit_counts[0]} hits), exact binomial {exact:.5f} (rel {rel_exact:.1%} <= 15%), "
               f"inf-over-ball {ref:.5f} (rel {rel_ref:.1%} <= 20%)")
    assert ok


def test_flat_exact_rate_is_far_from_limit_at_n_100():
    """Why the 20% comparison in criterion 8 cannot hold: the exact finite-n rate itself misses it."""
    exact = -math.log(oracles.binomial_ball_probability(100, 0.5, 0.05)) / 100
    ref = inf_over_ball(TWO_POINT, np.zeros(1), np.array([0.5]), 0.05)
    assert ref == pytest.approx(lambda_star(TWO_POINT.profile, 0.45), rel=1e-9)
    assert (exact - ref) / ref > 0.20


# --- 9: manifold Cramér -------------------------------------------------------------------

@pytest.mark.slow
def test_manifold_cramer(acceptance):
    target = S2.exp(S2.origin, 0.3 * S2.frame(S2.origin)[:, 0])
    rep = estimate_ball_rate(SHELL, S2.origin, target, 0.05, [200], 1_000_000, seed=909)
    emp, ref = rep.empirical_rates[0], rep.inf_over_ball_rate
    rel = abs(emp - ref) / ref if emp is not None else math.inf
    ok = rel <= 0.20
    shown = f"empirical rate {emp:.5f}, rel {rel:.1%}" if emp is not None else "no empirical rate"
    acceptance(9, ok, f"n = 200, 1e6 replicas: {rep.hit_counts[0]} hits, {shown} (<= 20%); "
               f"inf-over-ball I_M {ref:.5f}, expected hits about {1e6 * math.exp(-200 * ref):.1e}")
    assert ok


def test_manifold_cramer_reachable_scale():
    """Closer target where hits are plentiful: rates stay above I_M and fall toward it as n grows."""
    target = S2.exp(S2.origin, 0.15 * S2.frame(S2.origin)[:, 0])
    rep = estimate_ball_rate(SHELL, S2.origin, target, 0.05, [25, 50, 100], 100_000, seed=910)
    ref = rep.inf_over_ball_rate
    assert ref == pytest.approx(inf_over_ball(SHELL, S2.origin, target, 0.05))
    assert rate_function(SHELL, S2.origin, target) > ref
    rates, ses = rep.empirical_rates, rep.confidence
    assert all(r - 3 * s >= ref for r, s in zip(rates, ses))
    assert rates[0] > rates[1] > rates[2]


# --- 10: Legendre and convexity suite -----------------------------------------------------

def test_legendre_convexity_suite(acceptance):
    families = [TWO_POINT, SHELL, MeasureFamily(RadialSpec("uniform-ball", 0.5, 2), "sphere2")]
    fy, bic, convex_ok, diff_ok = 0.0, 0.0, True, True
    for fam in families:
        r = fam.r
        rate = RateProfile(fam.profile)
        for v in np.linspace(0.0, 0.98, 15) * r:
            res = legendre_transform(fam.profile, v)
            for s in np.linspace(0.0, 40.0, 81):
                fy = max(fy, s * v - fam.log_mgf(s) - res.value)
        if not math.isinf(r):
            for s in (0.0, 0.5, 2.0, 5.0, 10.0):
                bic = max(bic, abs(rate.biconjugate(s) - fam.log_mgf(s)))
        grid = np.linspace(0.02, 0.98, 25) * r
        vals = np.array([rate(v) for v in grid])
        for i in range(len(grid)):
            for j in range(i + 1, len(grid)):
                convex_ok &= rate(0.5 * (grid[i] + grid[j])) < 0.5 * (vals[i] + vals[j])
        for v in grid[::6]:
            errs = [abs((rate(v + h) - rate(v - h)) / (2 * h) - rate.argmax(v)) for h in (1e-2 * r, 5e-3 * r)]
            diff_ok &= math.log2(errs[0] / errs[1]) >= 1.9
    growth = 0.0
    for C, r, m, v in ((1.0, 1.0, 2, 2.0), (0.7, 0.3, 6, 0.9), (2.5, 0.5, 16, 3.0), (0.2, 1.5, 1, 1.6)):
        exact = growth_rate_identity(C, r, m, v)
        growth = max(growth, abs(growth_rate_grid_sup(C, r, m, v) - exact) / max(1.0, abs(exact)))
    monotone, gap = True, 0.0
    for frac in (0.3, 0.6, 0.9):
        seq = [regularized_conjugate(TWO_POINT.profile, frac, 0.25, 1.0, m) for m in (1, 2, 4, 8, 16, 32, 64)]
        monotone &= all(b >= a for a, b in zip(seq, seq[1:])) and seq[-1] <= lambda_star(TWO_POINT.profile, frac)
        gap = max(gap, lambda_star(TWO_POINT.profile, frac) - seq[-1])
    ok = fy <= 1e-8 and bic <= 1e-6 and convex_ok and diff_ok and growth <= 1e-6 and monotone and gap <= 1e-3
    acceptance(10, ok, f"Fenchel-Young defect {max(fy, 0.0):.1e} (<= 1e-8); biconjugacy {bic:.1e} (<= 1e-6); "
               f"strict convexity {'ok' if convex_ok else 'FAIL'}; differentiability {'ok' if diff_ok else 'FAIL'}; "
               f"growth-rate identity {growth:.1e} (<= 1e-6); regularized conjugates "
               f"{'monotone' if monotone else 'NOT monotone'}, gap at m = 64 {gap:.1e}")
    assert ok


# --- 11: reproducibility ------------------------------------------------------------------

def _outputs(out_dir):
    return {f: open(os.path.join(out_dir, f), "rb").read() for f in sorted(os.listdir(out_dir)) if f != "manifest.json"}


def test_reproducibility(acceptance, tmp_path):
    configs = {
        "simulate": {"manifold": "sphere2", "family": {"kind": "uniform-ball", "r": 0.5},
                     "walk": {"n": [16, 32], "replicas": 20, "m": 4, "pullback": True}},
        "rate": {"manifold": "sphere2", "family": {"kind": "uniform-sphere-shell", "r": 0.5},
                 "walk": {"n": [10, 20], "replicas": 20_000},
                 "targets": [{"distance": 0.1}, {"distance": 0.2, "direction": [0.0, 1.0]}]},
        "verify": {"manifold": "hyperbolic2", "family": {"kind": "uniform-sphere-shell", "r": 0.5},
                   "lemmas": {"ids": ["all"], "overrides": {
                       "comparison-bound": {"n_values": [64, 128], "replicas": 100, "slope_n": 128},
                       "mgf-upper": {"n": 32, "replicas": 5000, "fit_replicas": 100}}}},
        "legendre": {"manifold": "euclidean:3", "family": {"kind": "uniform-ball", "r": 2.0}},
    }
    same, detail = True, []
    for command, cfg in configs.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps({**cfg, "seed": 11}))
        runs = []
        for tag, jobs in (("a", "1"), ("b", "2")):
            out = tmp_path / f"{command}_{tag}"
            main([command, "--config", str(path), "--out", str(out), "--jobs", jobs])
            runs.append(_outputs(out))
        match = runs[0] == runs[1] and len(runs[0]) > 1
        same &= match
        detail.append(f"{command} {len(runs[0])} files {'identical' if match else 'DIFFER'}")
    acceptance(11, same, "; ".join(detail))
    assert same
