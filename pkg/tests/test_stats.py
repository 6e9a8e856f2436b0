import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geowalk.stats import _projection_constant, empirical_mgf, energy_two_sample_test


def _energy_distance_exact(a, b):
    """Brute-force multivariate energy distance for small samples."""
    def mean_dist(p, q):
        return np.mean(np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1))
    return 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)


def test_same_law_passes_and_shift_fails():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((20_000, 2))
    b = rng.standard_normal((20_000, 2))
    assert energy_two_sample_test(a, b).passed
    assert not energy_two_sample_test(a, b + [0.1, 0.0]).passed


def test_rotated_anisotropic_law_fails():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((20_000, 2)) * [1.0, 0.5]
    b = rng.standard_normal((20_000, 2)) * [0.5, 1.0]
    assert not energy_two_sample_test(a, b).passed


def test_one_dimensional_statistic_is_exact():
    rng = np.random.default_rng(2)
    a = rng.standard_normal(300)
    b = rng.standard_normal(200) + 0.3
    res = energy_two_sample_test(a, b, n_permutations=1)
    assert res.statistic == pytest.approx(_energy_distance_exact(a[:, None], b[:, None]), rel=1e-12)


def test_sliced_statistic_approximates_energy_distance():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((400, 2))
    b = rng.standard_normal((400, 2)) * 1.5
    res = energy_two_sample_test(a, b, n_permutations=1, n_directions=180)
    assert res.statistic == pytest.approx(_energy_distance_exact(a, b), rel=0.02)


def test_projection_constant():
    assert _projection_constant(2) == pytest.approx(math.pi / 2, rel=1e-14)
    assert _projection_constant(3) == pytest.approx(2.0, rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n_perm=st.integers(1, 50))
def test_p_value_range(seed, n_perm):
    rng = np.random.default_rng(seed)
    res = energy_two_sample_test(rng.random((50, 3)), rng.random((40, 3)), n_permutations=n_perm, seed=seed)
    assert 1 / (n_perm + 1) <= res.p_value <= 1.0
    assert res.statistic >= 0


def test_deterministic_given_seed():
    rng = np.random.default_rng(4)
    a, b = rng.random((500, 2)), rng.random((500, 2))
    assert energy_two_sample_test(a, b, seed=5) == energy_two_sample_test(a, b, seed=5)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        energy_two_sample_test(np.zeros((3, 2)), np.zeros((3, 3)))


def test_empirical_mgf():
    x = np.array([[0.0, 1.0], [0.0, -1.0]])
    mean, se = empirical_mgf(x, [0.0, 1.0])
    assert mean == pytest.approx(math.cosh(1.0))
    assert se == pytest.approx(math.sinh(1.0), rel=1e-12)  # sample sd sqrt(2) sinh 1 over sqrt(2)
