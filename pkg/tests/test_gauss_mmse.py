import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmuse.errors import SingularCovarianceError
from pmuse.gauss_mmse import (
    STUDY_CASES,
    GaussianJoint,
    RegularizationWarning,
    ThreeBusReading,
    cond_mean_closed,
    cond_mean_integral,
    fit_gaussian,
    three_bus_samples,
)


def test_bivariate_textbook_case():
    j = GaussianJoint(("x", "z"), [0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    assert cond_mean_closed(j, "x", ["z"], [2.0]) == pytest.approx(1.0)
    assert cond_mean_integral(j, "x", ["z"], [2.0]) == pytest.approx(1.0, abs=1e-9)


def test_independent_given_leaves_mean():
    j = GaussianJoint(("x", "z"), [3.0, 1.0], [[2.0, 0.0], [0.0, 1.0]])
    assert cond_mean_closed(j, "x", ["z"], [10.0]) == pytest.approx(3.0)


def test_empty_and_constant_conditioning_give_unconditional_mean():
    j = GaussianJoint(("x", "z"), [3.0, 1.0], [[2.0, 0.0], [0.0, 0.0]])
    assert cond_mean_closed(j, "x", [], []) == pytest.approx(3.0)
    assert cond_mean_closed(j, "x", ["z"], [1.0]) == pytest.approx(3.0)


def test_duplicate_conditioning_variable_regularizes_and_is_unchanged():
    j = GaussianJoint(("x", "a", "b"), [0, 0, 0], [[1, 0.6, 0.6], [0.6, 1, 1], [0.6, 1, 1]])
    with pytest.warns(RegularizationWarning):
        dup = cond_mean_closed(j, "x", ["a", "b"], [1.5, 1.5])
    assert dup == pytest.approx(cond_mean_closed(j, "x", ["a"], [1.5]), abs=1e-6)


def test_singular_after_regularization_raises():
    j = GaussianJoint(("x", "a", "b"), [0, 0, 0], [[1, 0.1, 0.1], [0.1, 1e12, 1e12], [0.1, 1e12, 1e12]])
    with pytest.raises(SingularCovarianceError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cond_mean_closed(j, "x", ["a", "b"], [0.0, 0.0])


def test_vectorised_rows_match_single_calls(rng):
    a = rng.normal(size=(4, 4))
    j = GaussianJoint(tuple("wxyz"), rng.normal(size=4), a @ a.T + np.eye(4))
    z = rng.normal(size=(5, 2))
    many = cond_mean_closed(j, "w", ["x", "z"], z)
    assert np.allclose(many, [cond_mean_closed(j, "w", ["x", "z"], r) for r in z])


def test_fit_gaussian_recovers_parameters(rng):
    mu = np.array([1.0, -2.0, 0.5])
    a = rng.normal(size=(3, 3))
    cov = a @ a.T + 0.5 * np.eye(3)
    x = rng.multivariate_normal(mu, cov, size=10_000)
    j = fit_gaussian(x, ["a", "b", "c"])
    se = np.sqrt(np.diag(cov) / len(x))
    assert np.all(np.abs(j.mu - mu) < 4 * se)
    with pytest.raises(ValueError):
        GaussianJoint(("a", "b"), [0, 0], [[1, 2], [2, 1]])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_closed_form_matches_quadrature(seed):
    r = np.random.default_rng(seed)
    d = int(r.integers(2, 5))
    a = r.normal(size=(d, d))
    cov = a @ a.T + 0.1 * np.eye(d)
    j = GaussianJoint(tuple(f"v{i}" for i in range(d)), r.normal(size=d), cov)
    given_ = [f"v{i}" for i in range(1, d)]
    z = j.mu[1:] + r.normal(size=d - 1) * np.sqrt(np.diag(cov)[1:])
    closed = cond_mean_closed(j, "v0", given_, z)
    quad = cond_mean_integral(j, "v0", given_, z)
    assert abs(closed - quad) < 1e-6


def test_three_bus_samples_shape_and_currents():
    s = three_bus_samples(200, seed=0)
    assert s.shape == (200, 5)
    # no line charging on 1-2: |I12| equals |I21|
    assert np.allclose(s[:, 1], s[:, 2])
    assert np.all(s[:, 0] > 0.5)


def test_study_case_definitions():
    assert STUDY_CASES[1] == ("angV1",)
    assert STUDY_CASES[5] == ("|I12|", "|I3|")
    assert ThreeBusReading(labels="literal", draws="independent")
    with pytest.raises(ValueError):
        ThreeBusReading(labels="other")
