import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ostop.diffusion import Interval, green, make_brownian
from ostop.errors import DegeneracyError, DomainError
from ostop.measure import MeasureSpec
from ostop.reward import sigma_measure
from ostop.value import (coefficients, evaluate, evaluate_integral, exit_coefficients,
                         feller_generator, green_integral, one_sided_derivatives, stopping_set,
                         verify_inversion, verify_solution)

from conftest import kinked_problem, quintic_problem

R = Interval(-math.inf, math.inf)


class TestCoefficients:
    model, reward = quintic_problem(2.0)

    @given(a=st.floats(-3, 1), w=st.floats(0.1, 2))
    def test_value_matching(self, a, w):
        b = a + w
        k1, k2 = coefficients(self.model, self.reward.g, Interval(a, b))
        for x in (a, b):
            v = k1 * self.model.phi(x) + k2 * self.model.psi(x)
            assert v == pytest.approx(self.reward.g(x), abs=1e-9 * (1 + abs(self.reward.g(x))))

    def test_one_sided_cases(self):
        m, g = self.model, self.reward.g
        k1, k2 = coefficients(m, g, Interval(1.5, math.inf))
        assert k2 == 0 and k1 == pytest.approx(g(1.5) / m.phi(1.5))
        k1, k2 = coefficients(m, g, Interval(-math.inf, -1.0))
        assert k1 == 0 and k2 == pytest.approx(g(-1.0) / m.psi(-1.0))

    def test_vectorised_matches_scalar(self):
        lo = np.array([-3.0, -1.0, -math.inf, 1.0])
        hi = np.array([-1.0, 1.0, 0.5, math.inf])
        k1, k2 = exit_coefficients(self.model, self.reward.g, lo, hi)
        for i in range(4):
            assert (k1[i], k2[i]) == coefficients(self.model, self.reward.g, Interval(lo[i], hi[i]))

    def test_whole_line_is_degenerate(self):
        with pytest.raises(DegeneracyError):
            coefficients(self.model, self.reward.g, R)


class TestStoppingSet:
    def test_complement(self):
        got = stopping_set(R, [Interval(-2, -1), Interval(0, 1), Interval(3, math.inf)])
        assert got == [Interval(-math.inf, -2), Interval(-1, 0), Interval(1, 3)]

    def test_shared_endpoint_is_a_point(self):
        got = stopping_set(R, [Interval(-math.inf, 0), Interval(0, 1)])
        assert got == [Interval(0, 0), Interval(1, math.inf)]

    def test_empty_continuation(self):
        assert stopping_set(R, []) == [R]


def test_green_integral_of_point_mass_from_either_side():
    m = make_brownian(1.0)
    mu = MeasureSpec(atoms=((1.0, 3.0),))
    for x in (0.0, 1.0, 2.5):
        got = green_integral(m, mu, Interval(1.0, 1.0), x)
        assert got == pytest.approx(3.0 * green(m, x, 1.0), rel=1e-14)


@pytest.mark.parametrize("alpha", [2.0, 1.5])
def test_quintic_inversion(alpha):
    model, reward = quintic_problem(alpha)
    grid = np.linspace(-4, 4, 41)
    chk = verify_inversion(model, reward, grid, window=Interval(-10, 10))
    assert chk.residual < 1e-4 * np.max(np.abs(reward.g(grid)))
    # g grows polynomially, psi and phi exponentially
    assert chk.decay_right < 1e-2 and chk.decay_left < 1e-2


def test_represented_inversion():
    model, reward = kinked_problem()
    chk = verify_inversion(model, reward, np.linspace(-3, 5, 33))
    assert chk.residual < 1e-8


def test_evaluate_shapes_and_domain(quintic2):
    assert isinstance(quintic2(0.0), float)
    assert quintic2(np.zeros((2, 3))).shape == (2, 3)
    with pytest.raises(DomainError):
        evaluate(quintic2, math.nan)


@given(x=st.floats(-4, 4))
@settings(max_examples=25, deadline=None)
def test_evaluate_matches_green_representation(quintic2, x):
    sigma = sigma_measure(quintic2.model, quintic2.reward)
    alt = evaluate_integral(quintic2.model, sigma, quintic2.stopping(), x)
    v = quintic2(x)
    assert abs(alt - v) <= 1e-6 * max(1.0, abs(v))


def test_one_sided_derivatives_exact_on_quadratics():
    f = lambda t: np.where(np.asarray(t) >= 0, 3 * np.asarray(t) ** 2 + 2 * t, -t)
    r, l = one_sided_derivatives(f, 0.0, 1e-3)
    assert r == pytest.approx(2.0, abs=1e-9) and l == pytest.approx(-1.0, abs=1e-9)


def test_feller_generator_on_exponential():
    m = make_brownian(2.0, drift=0.3, volatility=0.7)
    x = np.linspace(-1, 1, 11)
    lv = feller_generator(m, m.psi, x, 1e-3)
    assert_allclose(lv, 2.0 * m.psi(x), rtol=1e-5)


@pytest.mark.parametrize("fixture", ["quintic2", "quintic15", "kinked"])
def test_verification_report(fixture, request):
    sol = request.getfixturevalue(fixture)
    rep = verify_solution(sol)
    assert rep.majorant_min_gap >= -1e-8
    assert rep.stop_region_max_gap == 0.0
    assert rep.smooth_fit_max < 1e-3
    assert rep.harmonicity_max < 1e-4 * max(1.0, rep.harmonicity_scale)
    assert rep.representation_max < 1e-6
    assert rep.stop_sigma_min >= 0
