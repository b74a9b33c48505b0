import math

import numpy as np
import pytest
from fastcore.test import test_close, test_eq
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lanemden.core import ProblemParams
from lanemden.errors import (
    CapabilityError,
    DomainError,
    RangeError,
    RegimeError,
    SingularPointError,
    ValidationError,
)
from lanemden.families import bubble, critical_homogeneous, homogeneous_singular, lower_critical_profile
from lanemden.transforms import (
    CylinderPoint,
    Domain,
    FieldEvaluator,
    cylindrical_field,
    fd_gradient,
    fd_laplacian,
    from_cylindrical,
    kelvin,
    lower_critical_from_phi,
    lower_critical_to_phi,
    rescale,
    residual,
    to_cylindrical,
)
from lanemden.utils import generate_sample_points


def test_field_shapes():
    u = bubble(4, 2, np.zeros(4), 1.0, [0.6, 0.8])
    x = generate_sample_points(4, 7)
    test_eq(u(x).shape, (7, 2))
    test_eq(u.gradient(x).shape, (7, 2, 4))
    test_eq(u.laplacian(x).shape, (7, 2))
    test_eq(u(np.zeros(4)).shape, (2,))
    test_eq(u(x.reshape(7, 1, 4)).shape, (7, 1, 2))
    with pytest.raises(ValidationError):
        u(np.zeros(3))


def test_domain_checks():
    u = critical_homogeneous(3, 1, [1.0])
    with pytest.raises(SingularPointError):
        u(np.zeros(3))
    v = lower_critical_profile(4, 1, [1.0])
    with pytest.raises(DomainError):
        v(np.array([1.5, 0, 0, 0]))
    with pytest.raises(ValidationError):
        Domain("annulus", radius=1.0, inner=2.0)
    with pytest.raises(ValidationError):
        Domain("disk")


def test_missing_capabilities():
    u = FieldEvaluator(3, 1, 5.0, lambda x: np.ones((len(x), 1)), allow_fd_gradient=False)
    assert not u.has_gradient
    with pytest.raises(CapabilityError):
        u.gradient(np.ones((1, 3)))
    with pytest.raises(CapabilityError):
        u.laplacian(np.ones((1, 3)))


def test_fd_gradient_matches_analytic():
    u = bubble(4, 1, [0.2, 0, 0, 0], 1.0, [1.0])
    x = generate_sample_points(4, 20, seed=1)
    np.testing.assert_allclose(fd_gradient(u, x), u.gradient(x), atol=1e-9)


def test_fd_laplacian_matches_analytic():
    u = bubble(4, 1, np.zeros(4), 1.0, [1.0])
    x = generate_sample_points(4, 20, seed=2)
    np.testing.assert_allclose(fd_laplacian(u, x), u.laplacian(x), rtol=1e-7, atol=1e-9)
    v = lower_critical_profile(4, 1, [1.0])
    y = generate_sample_points(4, 20, r_min=0.2, r_max=0.5, seed=3)
    np.testing.assert_allclose(fd_laplacian(v, y), v.laplacian(y), rtol=1e-4)


def test_fd_laplacian_stays_in_domain():
    u = critical_homogeneous(3, 1, [1.0])
    with pytest.raises(DomainError):
        fd_laplacian(u, np.array([0.015, 0, 0]), h=0.01)
    with pytest.raises(RangeError):
        fd_laplacian(u, np.array([0.5, 0, 0]), h=0.0)


@pytest.mark.parametrize(
    "u",
    [
        bubble(4, 1, np.zeros(4), 1.0, [1.0]),
        bubble(3, 2, [0.1, -0.2, 0.3], 0.7, [0.6, 0.8]),
        critical_homogeneous(3, 1, [1.0]),
        homogeneous_singular(ProblemParams(5, 1, 2.0), [1.0]),
    ],
    ids=["bubble4", "shifted-bubble3", "critical-homogeneous3", "homogeneous5"],
)
def test_families_solve_the_equation(u):
    x = generate_sample_points(u.n, 30, r_min=0.5, r_max=1.5, seed=4)
    res = np.linalg.norm(residual(u, x), axis=-1)
    scale = np.linalg.norm(u(x), axis=-1) ** u.alpha
    assert (res / scale).max() < 1e-6


def test_off_center_bubble_residual():
    z = [0.5, 0.0, 0.0, 0.0]
    u = bubble(4, 1, z, 1.0, [1.0])
    x = generate_sample_points(4, 100, r_min=0.05, r_max=1.0, center=z, seed=11)
    res = np.linalg.norm(residual(u, x), axis=-1)
    scale = np.linalg.norm(u(x), axis=-1) ** u.alpha
    assert (res / scale).max() < 1e-5


def test_critical_homogeneous_amplitude():
    u = critical_homogeneous(3, 1, [1.0])
    test_close(u(np.array([1.0, 0, 0]))[0], 0.70711, eps=1e-5)
    w = critical_homogeneous(6, 1, [1.0])
    test_close(w(np.array([0, 0, 0, 0, 0, 1.0]))[0], 4.0)


def test_cylinder_point():
    p = CylinderPoint.from_point([0.0, 0.0, 2.0])
    test_close(p.t, -math.log(2))
    np.testing.assert_allclose(p.to_point(), [0, 0, 2.0])
    with pytest.raises(ValidationError):
        CylinderPoint(0.0, [1.0, 1.0, 0.0])
    with pytest.raises(SingularPointError):
        CylinderPoint.from_point(np.zeros(3))


def test_bubble_in_cylindrical_variables(critical4):
    u = bubble(4, 1, np.zeros(4), 1.0, [1.0])
    for t in (-1.0, 0.0, 0.5, 2.0):
        theta = np.array([0.5, 0.5, 0.5, 0.5])
        v = to_cylindrical(u, CylinderPoint(t, theta), critical4)
        test_close(v[0], math.sqrt(2) / math.cosh(t), eps=1e-12)


def test_from_cylindrical_inverts(critical4):
    u = bubble(4, 1, [0.3, 0, 0, 0], 1.0, [1.0])
    x = generate_sample_points(4, 5, seed=5)
    for xi in x:
        back = from_cylindrical(lambda p: to_cylindrical(u, p, critical4), xi, critical4)
        np.testing.assert_allclose(back, u(xi), rtol=1e-12)
    with pytest.raises(SingularPointError):
        from_cylindrical(lambda p: np.ones(1), np.zeros(4), critical4)


def test_cylindrical_field_of_constant_profile(critical4):
    u = cylindrical_field(
        lambda t: np.ones((len(t), 1)),
        critical4,
        dv=lambda t: np.zeros((len(t), 1)),
        radial=True,
    )
    ref = critical_homogeneous(4, 1, [1.0])
    x = generate_sample_points(4, 10, seed=6)
    np.testing.assert_allclose(u(x), ref(x), rtol=1e-13)
    np.testing.assert_allclose(u.gradient(x), ref.gradient(x), rtol=1e-12)


def test_lower_critical_round_trip():
    u = lower_critical_profile(4, 1, [1.0])
    theta = np.array([0.0, 1.0, 0.0, 0.0])
    for t in (0.5, 3.0, 10.0):
        test_close(lower_critical_to_phi(u, CylinderPoint(t, theta))[0], 2.0, eps=1e-10)
    x = np.array([0.1, 0.2, 0.0, -0.3])
    back = lower_critical_from_phi(lambda p: lower_critical_to_phi(u, p), x, 4)
    np.testing.assert_allclose(back, u(x), rtol=1e-12)
    with pytest.raises(DomainError):
        lower_critical_to_phi(u, CylinderPoint(-0.1, theta))
    with pytest.raises(DomainError):
        lower_critical_from_phi(lambda p: np.ones(1), np.array([2.0, 0, 0, 0]), 4)
    with pytest.raises(RegimeError):
        lower_critical_to_phi(bubble(4, 1, np.zeros(4), 1.0, [1.0]), CylinderPoint(1.0, theta))


def test_kelvin_fixes_bubble_on_its_sphere():
    u = bubble(4, 1, np.zeros(4), 1.0, [1.0])
    uk = kelvin(u, np.zeros(4), 1.0)
    x = generate_sample_points(4, 10, r_min=0.2, r_max=3.0, seed=7)
    np.testing.assert_allclose(uk(x), u(x), rtol=1e-12)
    np.testing.assert_allclose(uk.weight(x), 1.0)
    with pytest.raises(CapabilityError):
        uk.laplacian(x)


def test_kelvin_fixes_critical_homogeneous():
    u = critical_homogeneous(4, 1, [1.0])
    uk = kelvin(u, np.zeros(4), 1.0)
    x = generate_sample_points(4, 10, r_min=0.2, r_max=3.0, seed=8)
    np.testing.assert_allclose(uk(x), u(x), rtol=1e-12)


def test_kelvin_subcritical_weight():
    u = homogeneous_singular(ProblemParams(5, 1, 2.0), [1.0])
    z = np.array([0.5, 0, 0, 0, 0])
    uk = kelvin(u, z, 2.0)
    x = z + generate_sample_points(5, 10, r_min=0.5, r_max=1.5, seed=9)
    d = np.linalg.norm(x - z, axis=1)
    # (alpha-1) mu = 1 for n=5, alpha=2
    np.testing.assert_allclose(uk.weight(x), 2.0 / d)
    res = np.linalg.norm(residual(uk, x), axis=-1)
    assert (res / np.linalg.norm(uk(x), axis=-1) ** 2).max() < 1e-5
    with pytest.raises(SingularPointError):
        uk(z)
    with pytest.raises(RangeError):
        kelvin(u, z, 0.0)


def test_rescale_of_unit_bubble():
    u = bubble(4, 1, np.zeros(4), 1.0, [1.0])
    ur = rescale(u, 2.0)
    test_close(ur(np.zeros(4))[0], 2 * math.sqrt(8))
    ref = bubble(4, 1, np.zeros(4), 0.5, [1.0])
    x = generate_sample_points(4, 10, seed=10)
    np.testing.assert_allclose(ur(x), ref(x), rtol=1e-13)
    np.testing.assert_allclose(ur.gradient(x), ref.gradient(x), rtol=1e-12)
    np.testing.assert_allclose(ur.laplacian(x), ref.laplacian(x), rtol=1e-12)
    with pytest.raises(RangeError):
        rescale(u, -1.0)


def test_rescale_scales_the_domain():
    v = rescale(lower_critical_profile(3, 1, [1.0]), 0.5)
    test_eq(v.domain.radius, 2.0)
    v(np.array([1.5, 0, 0]))


@settings(deadline=None, max_examples=25)
@given(st.floats(0.05, 20.0))
def test_homogeneous_solution_is_scale_invariant(r):
    u = homogeneous_singular(ProblemParams(5, 1, 2.0), [1.0])
    x = generate_sample_points(5, 5, seed=11)
    np.testing.assert_allclose(rescale(u, r)(x), u(x), rtol=1e-12)


@settings(deadline=None, max_examples=25)
@given(st.floats(0.1, 5.0), st.floats(-1.0, 1.0))
def test_rescale_maps_bubbles_to_bubbles(r, shift):
    z = np.array([shift, 0.0, 0.0])
    u = bubble(3, 1, z, 1.0, [1.0])
    ref = bubble(3, 1, z / r, 1.0 / r, [1.0])
    x = generate_sample_points(3, 5, seed=12)
    np.testing.assert_allclose(rescale(u, r)(x), ref(x), rtol=1e-11)


_POINTS4 = st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4).map(np.array)


@settings(deadline=None, max_examples=25)
@given(_POINTS4)
def test_kelvin_is_an_involution(y):
    z, r = np.array([0.5, -0.3, 0.0, 0.2]), 0.8
    assume(np.linalg.norm(y - z) > 0.05)
    u = bubble(4, 2, [0.1, 0.2, -0.4, 0.0], 0.6, [0.6, 0.8])
    twice = kelvin(kelvin(u, z, r), z, r)
    np.testing.assert_allclose(twice(y), u(y), rtol=1e-10)
    test_close(twice.weight(y[None])[0], 1.0, eps=1e-10)


@settings(deadline=None, max_examples=25)
@given(_POINTS4)
def test_kelvin_about_the_bubble_sphere(y):
    a, lam = np.array([0.5, 0.0, 0.0, 0.0]), 0.7
    assume(np.linalg.norm(y - a) > 0.05)
    u = bubble(4, 1, a, lam, [1.0])
    np.testing.assert_allclose(kelvin(u, a, lam)(y), u(y), rtol=1e-11)


@settings(deadline=None, max_examples=25)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_rescale_composes(r, s):
    u = bubble(3, 2, [0.3, -0.1, 0.2], 0.8, [0.6, 0.8])
    x = generate_sample_points(3, 8, r_min=0.05, r_max=2.0, seed=13)
    twice, once = rescale(rescale(u, r), s), rescale(u, r * s)
    np.testing.assert_allclose(twice(x), once(x), rtol=1e-12)
    np.testing.assert_allclose(twice.gradient(x), once.gradient(x), rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(twice.laplacian(x), once.laplacian(x), rtol=1e-11, atol=1e-12)
