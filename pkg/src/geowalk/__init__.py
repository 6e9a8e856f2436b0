"""Geodesic random walks on Riemannian manifolds and their large deviations.

Closed-form geometry on constant-curvature surfaces, chart-based ODE oracles,
isotropic increment laws, rescaled walks with transported frames, Legendre
rate functions with Monte-Carlo ball-rate estimates, and numerical checks of
the geometric estimates the walk LDP relies on.
"""
__version__ = "0.1.0"

from .errors import (AnchorMismatchError, CutLocusError, DivergenceError, GeowalkError,
                     ManifoldMismatchError, NonConvexProfileError, PreconditionError,
                     UnknownLemmaError)
from .manifolds import (Euclidean, Hyperbolic2, Manifold, Sphere2, differential_exp, distance,
                        exp_map, get_manifold, injectivity_radius, log_map, parallel_transport,
                        riemann_curvature)
from .charts import (ChartMetric, OdeTrajectory, get_chart, integrate_geodesic, integrate_jacobi,
                     integrate_transport, jacobi_via_dexp)
from .measures import MeasureFamily, RadialSpec, check_consistency, log_mgf, sample_increment
from .walks import (WalkTrajectory, psi_m, pullback_vectors, run_rescaled_walk, simulate_endpoints,
                    simulate_walks, subdivide_walk, transported_increment_sum)
from .ldp import (RateProfile, RateReport, estimate_ball_rate, inf_over_ball, legendre_transform,
                  rate_function, regularized_conjugate, verify_ldp)
from .lemmas import LEMMA_IDS, LemmaReport, fit_order, verify_lemma
from .config import ConfigError, ExperimentConfig
