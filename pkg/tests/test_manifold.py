import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcurv.manifold import (QUOTIENT, SPHERE, chart_at, geodesic_distance,
                            integrate, make_model, orthonormal_basis,
                            random_point, sphere_volume)


def test_sphere_volume_closed_forms():
    assert abs(sphere_volume(5) - math.pi ** 3) < 1e-12
    assert abs(sphere_volume(4) - 8.0 * math.pi ** 2 / 3.0) < 1e-12
    assert abs(sphere_volume(1) - 2.0 * math.pi) < 1e-12


def test_integrate_constant_matches_volume(s5):
    val, err = integrate(s5, lambda x: np.ones(len(x)), rel_tol=1e-8)
    assert abs(val - sphere_volume(5)) < 1e-6 * sphere_volume(5)
    assert err < 1e-6 * sphere_volume(5)


def test_integrate_quotient_is_half_cover(q5):
    val, _ = integrate(q5, lambda x: np.ones(len(x)), rel_tol=1e-8)
    assert abs(val - 0.5 * sphere_volume(5)) < 1e-6 * sphere_volume(5)


def test_integrate_coordinate_square(s5):
    # int of x_0^2 over the unit 5-sphere is vol / ambient dimension
    val, _ = integrate(s5, lambda x: x[:, 0] ** 2, rel_tol=1e-8)
    assert abs(val - sphere_volume(5) / 6.0) < 1e-6


def test_integrate_rejects_bad_tolerance(s5):
    with pytest.raises(ValueError):
        integrate(s5, lambda x: np.ones(len(x)), rel_tol=1.0)


def test_orthonormal_basis_properties(e1):
    basis = orthonormal_basis(e1)
    assert basis.shape == (6, 5)
    assert np.allclose(basis.T @ basis, np.eye(5), atol=1e-12)
    assert np.allclose(basis.T @ e1, 0.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_chart_roundtrip(seed):
    from qcurv.operators import gjms_constants
    model = make_model(SPHERE, 5)
    rng = np.random.default_rng(seed)
    pole = random_point(model, rng)
    chart = chart_at(model, gjms_constants(5, 1), pole)
    x = random_point(model, rng)
    if 1.0 + x @ pole < 1e-6:  # stay away from the antipode
        return
    w = chart.to_chart(x)
    back = chart.from_chart(w)[0]
    assert np.allclose(back, x, atol=1e-10)
    # |w| = 2 tan(d/2)
    d = geodesic_distance(model, x, pole)
    assert abs(np.linalg.norm(w) - 2.0 * math.tan(d / 2.0)) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_quotient_distance_respects_identification(seed):
    model = make_model(QUOTIENT, 5)
    rng = np.random.default_rng(seed)
    x = random_point(model, rng)
    y = random_point(model, rng)
    d1 = geodesic_distance(model, x, y)
    d2 = geodesic_distance(model, x, -y)
    assert abs(d1 - d2) < 1e-12
    assert d1 <= math.pi / 2.0 + 1e-12
