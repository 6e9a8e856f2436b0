"""Run every lemma experiment on both curved surfaces and print a verdict table."""
import sys

from geowalk import LEMMA_IDS, verify_lemma

manifolds = sys.argv[1:] or ["sphere2", "hyperbolic2"]
print(f"{'lemma':28s} {'manifold':12s} {'order':>7s} {'constant':>10s}  verdict")
for manifold in manifolds:
    for lemma_id in LEMMA_IDS:
        rep = verify_lemma(lemma_id, manifold, seed=0)
        order = "" if rep.fitted_order != rep.fitted_order else f"{rep.fitted_order:.3f}"
        const = "" if rep.fitted_constant != rep.fitted_constant else f"{rep.fitted_constant:.3g}"
        print(f"{lemma_id:28s} {manifold:12s} {order:>7s} {const:>10s}  {rep.verdict}")
        if lemma_id == "comparison-bound":
            slope = rep.checks["slope_in_m"]
            print(f"{'':41s} slope in m {slope['value']:.2f} (informational, threshold {slope['threshold']})")
