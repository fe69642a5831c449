import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampletransfer import linear
from sampletransfer.linear import FeatureMap, LinearQ, OneHotFeatures

# exp(-25/32) and exp(-25/16), from mpmath at 30 digits
E_25_32 = 0.457833361771614260902146840654
E_25_16 = 0.209611387151097822524110127972


def test_default_dimension():
    fm = FeatureMap()
    assert fm.dim == 20
    assert fm.centers == (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


def test_feature_values():
    fm = FeatureMap()
    phi = fm.features(np.array([0.0, 5.0]), np.array([0, 1]))
    # x = 0, left block, center 0 and the constant
    assert phi[0, 4] == 1.0 and phi[0, 9] == 1.0
    assert abs(phi[0, 3] - E_25_32) < 1e-12
    assert np.all(phi[0, 10:] == 0.0)
    # x = 5, right block starts at index 10
    assert np.all(phi[1, :10] == 0.0)
    assert phi[1, 15] == 1.0 and phi[1, 19] == 1.0
    assert abs(phi[1, 14] - E_25_32) < 1e-12


def test_raw_width_convention():
    fm = FeatureMap(width_convention="raw")
    phi = fm.features(np.array([0.0]), np.array([0]))
    assert abs(phi[0, 3] - E_25_16) < 1e-12
    with pytest.raises(ValueError):
        FeatureMap(width_convention="other")


def test_least_squares_exact_solution():
    alpha = linear.least_squares_fit(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0, 2.0]))
    np.testing.assert_allclose(alpha, [1.0, 1.0], atol=1e-12)


def test_least_squares_rank_deficient_min_norm():
    # two identical columns: any split of 2 fits, the minimum-norm one is (1, 1)
    alpha = linear.least_squares_fit(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([2.0, 2.0]))
    np.testing.assert_allclose(alpha, [1.0, 1.0], atol=1e-12)


def test_least_squares_rejects_bad_input():
    with pytest.raises(ValueError):
        linear.least_squares_fit(np.ones((3, 2)), np.ones(2))
    with pytest.raises(ValueError):
        linear.least_squares_fit(np.array([[1.0, np.nan]]), np.ones(1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(25, 200))
def test_normal_equations_hold(seed, n):
    rng = np.random.default_rng(seed)
    fm = FeatureMap()
    phi = fm.features(rng.uniform(-20, 20, n), rng.integers(0, 2, n))
    p = rng.normal(size=n) * 10
    alpha = linear.least_squares_fit(phi, p)
    resid = phi.T @ (phi @ alpha - p)
    scale = np.linalg.norm(phi) ** 2 * np.linalg.norm(alpha) + np.linalg.norm(phi) * np.linalg.norm(p)
    assert np.linalg.norm(resid) <= 1e-8 * scale


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), v_max=st.floats(0.1, 100))
def test_truncation_bound(seed, v_max):
    rng = np.random.default_rng(seed)
    q = LinearQ(rng.normal(size=20) * 100, FeatureMap(), v_max)
    xs = np.linspace(-20, 20, 401)
    for a in (0, 1):
        assert np.all(np.abs(q(xs, a)) <= v_max)
    vals, _ = q.greedy(xs)
    assert np.all(np.abs(vals) <= v_max)


def test_truncation_example():
    fm = FeatureMap()
    alpha = np.zeros(20)
    alpha[9] = 1e6  # left constant
    q = LinearQ(alpha, fm, 10.0)
    assert q(0.0, 0)[0] == 10.0
    assert q.raw(0.0, 0)[0] == 1e6


def test_greedy_tie_goes_left():
    q = LinearQ.zero(FeatureMap(), 10.0)
    a, v = linear.greedy_value(q, 3.0)
    assert a == 0 and v == 0.0


def test_greedy_matches_explicit_max():
    rng = np.random.default_rng(3)
    q = LinearQ(rng.normal(size=20), FeatureMap(), 1.5)
    xs = rng.uniform(-20, 20, 300)
    vals, acts = q.greedy(xs)
    both = np.column_stack([q(xs, 0), q(xs, 1)])
    np.testing.assert_allclose(vals, both.max(axis=1), atol=1e-12)
    np.testing.assert_array_equal(acts, np.argmax(both, axis=1))


def test_linear_q_immutable():
    q = LinearQ.zero(FeatureMap(), 1.0)
    with pytest.raises(ValueError):
        q.alpha[0] = 1.0
    with pytest.raises(ValueError):
        LinearQ(np.zeros(3), FeatureMap(), 1.0)


def test_one_hot_features():
    fm = OneHotFeatures(4)
    phi = fm.features(np.array([0, 3]), np.array([1, 0]))
    assert phi.shape == (2, 8)
    assert phi[0, 4] == 1.0 and phi[1, 3] == 1.0 and phi.sum() == 2.0


def test_gram_diagnostic():
    fm = FeatureMap()
    rng = np.random.default_rng(0)
    dense = linear.gram_min_eigenvalue(fm, rng.uniform(-20, 20, 5000), rng.integers(0, 2, 5000))
    assert dense.omega > 0 and not dense.ill_conditioned
    sparse = linear.gram_min_eigenvalue(fm, np.zeros(5), np.zeros(5, dtype=int))
    assert sparse.ill_conditioned


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    q = LinearQ(rng.normal(size=20), FeatureMap(), 50.0)
    path = tmp_path / "w.txt"
    linear.save_weights(q, path)
    text = path.read_text().splitlines()
    assert text[0] == "# d=20" and len(text) == 22
    back = linear.load_weights(path, FeatureMap())
    np.testing.assert_array_equal(back.alpha, q.alpha)
    assert back.v_max == 50.0
    path.write_text("# d=3\n# v_max=1\n1.0\n")
    with pytest.raises(ValueError):
        linear.load_weights(path, FeatureMap())


def test_feature_vector_helper():
    v = linear.feature_vector(FeatureMap(), 0.0, 1)
    assert v.shape == (20,) and math.isclose(v[13], E_25_32, abs_tol=1e-12)
