import math
from fractions import Fraction

import numpy as np
import pytest
from fastcore.test import test_close, test_eq, test_fail
from hypothesis import given
from hypothesis import strategies as st

from lanemden.core import (
    ProblemParams,
    Regime,
    apriori_amplitude,
    build_sphere_quadrature,
    critical_kappa_floor,
    derive_constants,
    integrate_sphere,
    lower_critical_amplitude,
    lower_critical_energy_levels,
    regime_of,
)
from lanemden.errors import CapabilityError, NumericError, RangeError, ValidationError


def test_subcritical_constants():
    c = derive_constants(ProblemParams(5, 1, 2.0))
    test_eq(c.regime, Regime.INTERMEDIATE)
    test_close(c.lambda_, 2.0)
    test_close(c.mu, 1.0)
    test_close(c.lambda_bar, 8 / 3)
    test_close(c.scaling_exponent, 2.0)
    test_close(c.serrin_exponent, 5 / 3)
    test_close(c.sobolev_exponent, 7 / 3)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 10])
def test_critical_constants(n):
    c = derive_constants(ProblemParams.critical(n))
    test_eq(c.regime, Regime.CRITICAL)
    assert c.mu == 0.0
    test_close(c.lambda_, (n - 2) ** 2 / 4)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_serrin_constants(n):
    c = derive_constants(ProblemParams.serrin(n))
    test_eq(c.regime, Regime.SERRIN)
    assert c.lambda_ == 0.0
    assert c.lambda_bar == 0.0


def test_below_serrin_has_no_lambda_bar():
    c = derive_constants(ProblemParams(5, 2, 1.5))
    test_eq(c.regime, Regime.BELOW_SERRIN)
    assert c.lambda_ < 0
    assert c.lambda_bar is None


def test_sphere_normalizations():
    c = derive_constants(ProblemParams.critical(4))
    test_close(c.ball_volume, math.pi**2 / 2)
    test_close(c.sphere_area, 2 * math.pi**2)
    c3 = derive_constants(ProblemParams.critical(3))
    test_close(c3.sphere_area, 4 * math.pi)


def test_to_dict_uses_lambda_key():
    d = derive_constants(ProblemParams(5, 1, 2.0)).to_dict()
    test_eq(d["regime"], "Intermediate")
    test_close(d["lambda"], 2.0)
    assert "lambda_" not in d


@pytest.mark.parametrize(
    "n, m, alpha, exc",
    [
        (2, 1, 2.0, RangeError),
        (4, 0, 2.0, RangeError),
        (4, 1, 1.0, RangeError),
        (4, 1, 0.5, RangeError),
        (4, 1, 3.5, RangeError),
        (4, 1, math.inf, RangeError),
        (4.0, 1, 2.0, ValidationError),
        (4, True, 2.0, ValidationError),
    ],
)
def test_invalid_params(n, m, alpha, exc):
    with pytest.raises(exc):
        ProblemParams(n, m, alpha)


def test_boundaries_match_within_tolerance():
    test_eq(ProblemParams(4, 1, 3.0 + 1e-13).regime, Regime.CRITICAL)
    test_eq(ProblemParams(4, 1, 2.0 - 1e-13).regime, Regime.SERRIN)
    test_eq(ProblemParams(4, 1, 2.0 - 1e-9).regime, Regime.BELOW_SERRIN)
    test_eq(ProblemParams(4, 1, 2.0 + 1e-9).regime, Regime.INTERMEDIATE)


_ORDER = [Regime.BELOW_SERRIN, Regime.SERRIN, Regime.INTERMEDIATE, Regime.CRITICAL]


def _exact_regime(n, a):
    serrin, sobolev = Fraction(n, n - 2), Fraction(n + 2, n - 2)
    if a == sobolev:
        return Regime.CRITICAL
    if a == serrin:
        return Regime.SERRIN
    return Regime.BELOW_SERRIN if a < serrin else Regime.INTERMEDIATE


# alpha = 1 + k/80 up to the Sobolev exponent 1 + 4/(n-2)
_REGIME_GRID = [(n, 1 + Fraction(k, 80)) for n in range(3, 13) for k in range(1, 320 // (n - 2) + 1)]


def test_regime_matches_exact_arithmetic():
    test_eq(len(_REGIME_GRID), 935)
    for n, a in _REGIME_GRID:
        test_eq(regime_of(ProblemParams(n, 1, float(a))), _exact_regime(n, a))


@pytest.mark.parametrize("n", range(3, 13))
def test_regime_boundaries(n):
    serrin, sobolev = n / (n - 2), (n + 2) / (n - 2)
    for alpha, tag in [(serrin, Regime.SERRIN), (sobolev, Regime.CRITICAL)]:
        for shift in (0.0, -1e-13, 1e-13):
            if alpha + shift > sobolev + 1e-12:
                continue
            params = ProblemParams(n, 1, alpha + shift)
            test_eq(regime_of(params), tag)
            test_eq(derive_constants(params).regime, tag)
    test_eq(regime_of(ProblemParams(n, 1, serrin - 1e-9)), Regime.BELOW_SERRIN)
    test_eq(regime_of(ProblemParams(n, 1, serrin + 1e-9)), Regime.INTERMEDIATE)
    test_eq(regime_of(ProblemParams(n, 1, sobolev - 1e-9)), Regime.INTERMEDIATE)


@given(
    st.integers(3, 12),
    st.floats(0.0, 1.0, exclude_min=True),
    st.floats(0.0, 1.0, exclude_min=True),
)
def test_regime_is_monotone_in_alpha(n, s1, s2):
    sobolev = (n + 2) / (n - 2)
    lo, hi = sorted((s1, s2))
    a1 = 1 + lo * (sobolev - 1)
    a2 = 1 + hi * (sobolev - 1)
    r1 = regime_of(ProblemParams(n, 1, a1))
    r2 = regime_of(ProblemParams(n, 1, a2))
    assert _ORDER.index(r1) <= _ORDER.index(r2)


@given(st.integers(3, 12), st.floats(0.0, 1.0, exclude_min=True, exclude_max=True))
def test_lambda_sign_follows_regime(n, s):
    alpha = 1 + s * 4 / (n - 2)
    c = derive_constants(ProblemParams(n, 1, alpha))
    if c.regime is Regime.BELOW_SERRIN:
        assert c.lambda_ < 0
    elif c.regime is Regime.INTERMEDIATE:
        assert c.lambda_ > 0 and c.mu > 0


def test_apriori_amplitude():
    test_close(apriori_amplitude(ProblemParams.critical(4)), 2.0)
    test_close(apriori_amplitude(ProblemParams(5, 1, 2.0)), 10.0)


def test_kappa_floor():
    test_close(critical_kappa_floor(3), -1 / 12)
    test_close(critical_kappa_floor(4), -0.5)
    test_close(critical_kappa_floor(6), -64 / 3)


def test_lower_critical_levels():
    test_eq(lower_critical_energy_levels(4), (0.0, -8 / 3))
    test_close(lower_critical_energy_levels(3)[1], -1 / 8)
    test_close(lower_critical_amplitude(4), 2.0)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_sphere_quadrature_moments(n):
    q = build_sphere_quadrature(n, 6)
    area = derive_constants(ProblemParams.critical(n)).sphere_area
    test_eq(q.nodes.shape, (6 ** (n - 1), n))
    np.testing.assert_allclose(np.linalg.norm(q.nodes, axis=1), 1.0, rtol=1e-14)
    test_close(integrate_sphere(q, lambda x: np.ones(len(x))), area, eps=1e-12)
    test_close(integrate_sphere(q, lambda x: x[:, 0] ** 2), area / n, eps=1e-12)
    test_close(
        integrate_sphere(q, lambda x: x[:, -1] ** 4), 3 * area / (n * (n + 2)), eps=1e-12
    )
    assert abs(integrate_sphere(q, lambda x: x[:, 0] ** 3 * x[:, 1])) < 1e-12


def test_integrate_sphere_keeps_trailing_axes():
    q = build_sphere_quadrature(3, 4)
    out = integrate_sphere(q, lambda x: x**2)
    test_eq(out.shape, (3,))
    np.testing.assert_allclose(out, 4 * math.pi / 3)


def test_quadrature_errors():
    test_fail(lambda: build_sphere_quadrature(7), contains="n=6")
    with pytest.raises(CapabilityError):
        build_sphere_quadrature(7)
    with pytest.raises(ValidationError):
        build_sphere_quadrature(4, 1)
    q = build_sphere_quadrature(3, 4)
    with pytest.raises(ValidationError):
        integrate_sphere(q, np.ones(3))
    values = np.ones(len(q))
    values[5] = np.nan
    with pytest.raises(NumericError):
        integrate_sphere(q, values)
