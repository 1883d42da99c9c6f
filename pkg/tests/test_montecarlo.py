import numpy as np
import pytest

from crystalwalk.errors import ModeMismatchError
from crystalwalk.montecarlo import (clt_report, endpoint_chi2, expected_drift,
                                    fourth_moment_constant, increment_report, sample_paths,
                                    step_drift_residual)


def test_empty_and_zero_time(square):
    S = sample_paths(square, 16, [0.5], 0, seed=1)
    assert S.scaled_points.shape == (1, 0, 2)
    S = sample_paths(square, 16, [0.0, 1.0], 50, seed=1)
    np.testing.assert_array_equal(S.scaled_points[0], 0.0)
    assert S.scaled_points.shape == (2, 50, 2)


def test_seed_determinism_and_chunk_independence(hexagonal_nonsym):
    a = sample_paths(hexagonal_nonsym, 32, [0.5, 1.0], 300, seed=9, chunk=64)
    b = sample_paths(hexagonal_nonsym, 32, [0.5, 1.0], 300, seed=9, chunk=1000)
    c = sample_paths(hexagonal_nonsym, 32, [0.5, 1.0], 300, seed=10)
    np.testing.assert_array_equal(a.scaled_points, b.scaled_points)
    assert not np.array_equal(a.scaled_points, c.scaled_points)
    ra = clt_report(a, hexagonal_nonsym, "first_kind").as_dict()
    rb = clt_report(b, hexagonal_nonsym, "first_kind").as_dict()
    np.testing.assert_array_equal(ra["empirical_cov"], rb["empirical_cov"])


def test_argument_checks(square):
    with pytest.raises(ValueError):
        sample_paths(square, 2, [1.0], 10, seed=0)
    with pytest.raises(ValueError):
        sample_paths(square, 16, [1.0], 10, seed=0, mode="third_kind")
    S = sample_paths(square, 16, [1.0], 10, seed=0)
    with pytest.raises(ModeMismatchError):
        clt_report(S, square, "second_kind")


def test_first_kind_moments(square):
    S = sample_paths(square, 64, [0.5, 1.0], 20000, seed=3)
    rep = clt_report(S, square, "first_kind")
    assert rep.passed, rep.as_dict()
    np.testing.assert_array_equal(rep.expected_mean, 0.0)
    np.testing.assert_allclose(rep.expected_cov[1], np.eye(2))
    assert "Bonferroni" in rep.note


def test_second_kind_drift(hexagonal_nonsym):
    A = hexagonal_nonsym
    S = sample_paths(A, 64, [1.0], 20000, seed=4, mode="second_kind")
    rep = clt_report(S, A, "second_kind")
    np.testing.assert_allclose(rep.expected_mean[0], expected_drift(A), atol=1e-14)
    assert rep.passed, rep.as_dict()


def test_increment_covariance(hexagonal):
    S = sample_paths(hexagonal, 64, [0.25, 1.0], 20000, seed=5)
    rep = increment_report(S, 0, 1)
    np.testing.assert_allclose(rep.expected_cov[0], 0.75 * np.eye(2))
    assert rep.passed


def test_fourth_moment_constant_stable(square):
    cs = [fourth_moment_constant(sample_paths(square, n, [0.25, 0.5, 1.0], 5000, seed=6))
          for n in (32, 64)]
    assert 0 < cs[0] and 0.5 <= cs[1] / cs[0] <= 2.0


def test_step_drift_exact(hexagonal_nonsym, square):
    assert step_drift_residual(hexagonal_nonsym) < 1e-12
    assert step_drift_residual(square) < 1e-12


def test_endpoint_chi2(triangular):
    res = endpoint_chi2(triangular, 8, 20000, seed=11)
    assert res.passed and res.bins > 5
