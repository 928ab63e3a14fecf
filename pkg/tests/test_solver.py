import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.optimize import fsolve

from ostop.config import geometric_brownian
from ostop.diffusion import Interval, make_brownian
from ostop.errors import DegeneracyError, InvalidParameterError, ResolutionError
from ostop.reward import (RewardSpec, Smooth, piecewise_linear_reward, polynomial_reward,
                          sigma_measure)
from ostop.solver import (SolverOptions, check_condition, enlarge, negative_set,
                          negative_support, solve)
from ostop.measure import MeasureSpec, restrict_sigma
from ostop.value import verify_solution

from conftest import QUINTIC, kinked_problem, quintic_problem

# Free-boundary oracle: value matching plus smooth fit at both ends, solved
# with scipy.optimize.fsolve from rounded starting points (frozen outputs).
FREE_BOUNDARY = {
    2.0: [(-3.228760770085322, -0.502223993655215), (-0.36247885636276733, 1.431787670130098),
          (1.7765640896781805, math.inf)],
    1.5: [(-3.5322502623635375, 1.4642060123578784), (1.7639021940059516, math.inf)],
}


def free_boundary(alpha, a0, b0):
    """Independent solve of V = g, V' = g' at a and b with V = k1 e^{-gx} + k2 e^{gx}."""
    p = np.polynomial.Polynomial(QUINTIC)
    dp, gam = p.deriv(), math.sqrt(2 * alpha)

    def eq(v):
        a, b, k1, k2 = v
        val = lambda x: k1 * np.exp(-gam * x) + k2 * np.exp(gam * x)
        der = lambda x: gam * (-k1 * np.exp(-gam * x) + k2 * np.exp(gam * x))
        return [val(a) - p(a), val(b) - p(b), der(a) - dp(a), der(b) - dp(b)]

    return fsolve(eq, [a0, b0, 0.5, 0.5], xtol=1e-13)[:2]


@pytest.mark.parametrize("alpha", [2.0, 1.5])
def test_negative_set_matches_polynomial_roots(alpha):
    # (alpha - L) g for the quintic is -alpha x^5 + (5 alpha + 10) x^3 - (4 alpha + 15) x
    roots = np.roots([-alpha, 0, 5 * alpha + 10, 0, -(4 * alpha + 15), 0]).real
    roots.sort()
    model, reward = quintic_problem(alpha)
    got = negative_set(model, reward)
    expected = [(roots[0], roots[1]), (roots[2], roots[3]), (roots[4], math.inf)]
    assert len(got) == 3
    for iv, (lo, hi) in zip(got, expected):
        assert iv.lo == pytest.approx(lo, abs=1e-8) and iv.hi == pytest.approx(hi, abs=1e-8)


@pytest.mark.parametrize("alpha", [2.0, 1.5])
def test_free_boundary_oracle_is_reproducible(alpha):
    for lo, hi in FREE_BOUNDARY[alpha]:
        if math.isfinite(hi):
            assert_allclose(free_boundary(alpha, round(lo, 2), round(hi, 2)), [lo, hi], atol=1e-9)


def test_alpha2_matches_free_boundary(quintic2):
    assert quintic2.merges == []
    for c, (lo, hi) in zip(quintic2.continuation, FREE_BOUNDARY[2.0]):
        assert c.lo == pytest.approx(lo, abs=1e-7)
        assert c.hi == pytest.approx(hi, abs=1e-7) if math.isfinite(hi) else c.hi == math.inf


def test_alpha15_merges_once(quintic15):
    assert len(quintic15.merges) == 1
    rec = quintic15.merges[0]
    assert rec.kind == "merge" and len(rec.replaced) == 2
    assert rec.n.lo == pytest.approx(-3.2107, abs=1e-3) and rec.n.hi == pytest.approx(1.1654, abs=1e-3)
    for c, (lo, hi) in zip(quintic15.continuation, FREE_BOUNDARY[1.5]):
        assert c.lo == pytest.approx(lo, abs=1e-7)
        if math.isfinite(hi):
            assert c.hi == pytest.approx(hi, abs=1e-7)


def test_conditions_hold_at_every_pair(quintic2, quintic15, kinked):
    for sol in (quintic2, quintic15, kinked):
        for rep in sol.diagnostics:
            assert rep.satisfied
            assert rep.i_phi <= 0 and rep.i_psi <= 0
            for res, tol in ((rep.ii_residual, rep.ii_tol), (rep.iii_residual, rep.iii_tol)):
                if res is not None:
                    assert abs(res) <= tol


def test_negative_set_inside_continuation(quintic2, quintic15, kinked):
    for sol in (quintic2, quintic15, kinked):
        for n in sol.negative:
            assert any(c.covers(n) for c in sol.continuation)


def test_kinked_reward(kinked):
    (lo1, hi1), (lo2, hi2) = [(c.lo, c.hi) for c in kinked.continuation]
    assert lo1 == -math.inf and hi1 == pytest.approx(1 / math.sqrt(2), abs=1e-9)
    k = kinked.intervals
    assert k[0].k2 == pytest.approx(1 / (math.e * math.sqrt(2)), abs=1e-9)
    # on (a, b) the reward is 2 - x then x - 2: V = g, V' = g' at both ends
    r2 = math.sqrt(2)

    def eq(v):
        a, b, k1, k2 = v
        val = lambda x: k1 * math.exp(-r2 * x) + k2 * math.exp(r2 * x)
        der = lambda x: r2 * (-k1 * math.exp(-r2 * x) + k2 * math.exp(r2 * x))
        return [val(a) - (2 - a), val(b) - (b - 2), der(a) + 1, der(b) - 1]

    a, b, k1, k2 = fsolve(eq, [1.15, 2.85, 4.0, 0.01], xtol=1e-13)
    assert_allclose([lo2, hi2, k[1].k1, k[1].k2], [a, b, k1, k2], rtol=1e-7)


def test_represented_negative_support():
    model, reward = kinked_problem()
    parts = negative_support(reward.kind.nu, SolverOptions(), model.domain)
    assert parts[0].lo == -math.inf and abs(parts[0].hi) < 1e-8
    assert parts[1] == Interval(2.0, 2.0)


def test_perpetual_put_closed_form():
    # GBM with drift = rate: exercise boundary K * (2r/v^2) / (1 + 2r/v^2)
    r, v = 0.05, 0.3
    model = geometric_brownian(r, r, v)
    reward = piecewise_linear_reward(model, [[0.5, 0.5], [1.0, 0.0], [2.0, 0.0]])
    sol = solve(model, reward, SolverOptions(work_window=Interval(1e-3, 10)))
    assert sol.negative == [Interval(1.0, 1.0)]
    (c,) = sol.continuation
    ratio = 2 * r / v**2
    assert c.lo == pytest.approx(ratio / (1 + ratio), abs=1e-9) and c.hi == math.inf
    rep = verify_solution(sol, work_window=Interval(1e-3, 10))
    assert rep.smooth_fit_max < 1e-6 and rep.majorant_min_gap >= -1e-8


def test_excessive_reward_stops_everywhere():
    model = make_brownian(100.0)
    sol = solve(model, polynomial_reward(model, [1, 0, 1]))
    assert sol.stop_everywhere and sol.continuation == []
    assert sol(0.3) == pytest.approx(1.09)


def test_negative_reward_is_degenerate():
    model = make_brownian(1.0)
    with pytest.raises(DegeneracyError):
        solve(model, polynomial_reward(model, [-1.0]))


def test_fine_oscillation_needs_resolution():
    model = make_brownian(1.0)
    wiggly = RewardSpec(lambda x: np.ones_like(x), Smooth(lambda x: np.sin(300 * np.asarray(x))))
    with pytest.raises(ResolutionError):
        negative_set(model, wiggly, SolverOptions(scan_points=200))


def test_enlarge_single_pair():
    model, reward = quintic_problem(2.0)
    sigma = sigma_measure(model, reward)
    negs = negative_set(model, reward)
    c = enlarge(model, sigma, negs[1], negs)
    assert c.lo == pytest.approx(FREE_BOUNDARY[2.0][1][0], abs=1e-7)
    rep = check_condition(model, restrict_sigma(sigma, negs[1], negs), negs[1], c)
    assert rep.satisfied


def test_condition_rejects_a_wrong_interval():
    model, reward = quintic_problem(2.0)
    sigma = sigma_measure(model, reward)
    negs = negative_set(model, reward)
    sigma_n = restrict_sigma(sigma, negs[1], negs)
    rep = check_condition(model, sigma_n, negs[1], Interval(-0.3, 1.3))
    assert not rep.satisfied


def test_options_validated():
    with pytest.raises(InvalidParameterError):
        SolverOptions(work_window=Interval(-math.inf, 0))
    with pytest.raises(InvalidParameterError):
        SolverOptions(root_tol=0)


@given(alpha=st.floats(1.0, 3.0))
@settings(max_examples=8, deadline=None)
def test_solutions_verify_across_rates(alpha):
    sol = solve(*quintic_problem(alpha))
    rep = verify_solution(sol)
    assert rep.majorant_min_gap >= -1e-8
    assert rep.smooth_fit_max < 1e-3
    assert rep.harmonicity_max < 1e-4 * max(1.0, rep.harmonicity_scale)
    cs = sol.continuation
    assert all(a.hi < b.lo for a, b in zip(cs, cs[1:]))
