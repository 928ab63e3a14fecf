"""Negative set, interval enlargement and the merge loop.

The continuation region is grown from the negative set ``{(alpha - L) g < 0}``:
each negative interval ``N`` is enlarged to the interval ``C`` on which both
``int_C phi d sigma_N`` and ``int_C psi d sigma_N`` vanish, and overlapping
enlargements are merged and enlarged again until the pieces are disjoint.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .diffusion import DiffusionModel, Interval, with_reference
from .errors import (ConsistencyError, ConvergenceError, DegeneracyError,
                     InvalidParameterError, QuadratureError, ResolutionError)
from .measure import MeasureSpec, QuadratureOptions, integrate_detail, restrict_sigma
from .reward import Represented, RewardSpec, sigma_measure
from .value import IntervalSolution, MergeRecord, Solution, coefficients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairNC:
    n: Interval
    c: Interval

    def __post_init__(self):
        if not self.c.covers(self.n):
            raise InvalidParameterError(f"N={self.n} is not inside C={self.c}")


@dataclass(frozen=True)
class SolverOptions:
    work_window: Interval = Interval(-10.0, 10.0)
    scan_points: int = 2001
    root_tol: float = 1e-9
    enlarge_tol: float = 1e-9
    max_enlarge_iters: int = 500
    gap_tol: float = 1e-7
    # relative part of the tolerance used by check_condition
    condition_rtol: float = 1e-6
    condition_grid: int = 101
    quadrature: QuadratureOptions = QuadratureOptions()

    def __post_init__(self):
        if not self.work_window.bounded:
            raise InvalidParameterError("work_window must be bounded")
        if self.scan_points < 100:
            raise InvalidParameterError("scan_points must be at least 100")
        for name in ("root_tol", "enlarge_tol", "gap_tol", "condition_rtol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.max_enlarge_iters < 1 or self.condition_grid < 3:
            raise InvalidParameterError("iteration and grid counts must be positive")


@dataclass
class ConditionReport:
    n: Interval
    c: Interval
    i_phi: float
    i_psi: float
    ii_residual: Optional[float]
    iii_residual: Optional[float]
    iv_max: float
    satisfied: bool
    ii_tol: Optional[float] = None
    iii_tol: Optional[float] = None
    iv_tol: float = 0.0
    iterations: int = 0


# ---------------------------------------------------------------- negative set

def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    """Boundary between ``pred(lo)`` and ``not pred(lo)`` on ``[lo, hi]``."""
    p_lo = pred(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scan_negative(func, domain: Interval, opts: SolverOptions):
    win = opts.work_window
    lo, hi = max(win.lo, domain.lo), min(win.hi, domain.hi)
    xs = np.linspace(lo, hi, opts.scan_points)
    # the state space is open: never evaluate on its boundary
    xs = xs[domain.contains(xs)]
    vals = np.asarray(func(xs), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidParameterError("generator of the reward is not finite on the scan grid")
    neg = vals < 0
    mids = 0.5 * (xs[:-1] + xs[1:])
    mneg = np.asarray(func(mids), dtype=float) < 0
    missed = (neg[:-1] == neg[1:]) & (mneg != neg[:-1])
    if np.any(missed):
        x = mids[np.argmax(missed)]
        raise ResolutionError(
            f"sign changes near x={x:g} are finer than the scan spacing {xs[1] - xs[0]:g}; "
            "increase scan_points"
        )

    def is_neg(x):
        return bool(np.asarray(func(np.array([x])), dtype=float)[0] < 0)

    out = []
    i, n = 0, len(xs)
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        left = domain.lo if i == 0 else _bisect(is_neg, xs[i - 1], xs[i], opts.root_tol)
        right = domain.hi if j == n - 1 else _bisect(is_neg, xs[j], xs[j + 1], opts.root_tol)
        out.append(Interval(left, right))
        i = j + 1
    return out


def negative_set(model: DiffusionModel, reward: RewardSpec, opts: Optional[SolverOptions] = None):
    """Maximal open intervals where ``(alpha - L) g < 0``.

    An empty list means the reward is alpha-excessive: stopping at once is
    optimal everywhere.
    """
    opts = opts or SolverOptions()
    if isinstance(reward.kind, Represented):
        return negative_support(reward.kind.nu, opts, model.domain)
    return _scan_negative(reward.kind.alg, model.domain, opts)


def negative_support(nu: MeasureSpec, opts: Optional[SolverOptions] = None,
                     domain: Interval = Interval(-math.inf, math.inf)):
    """Intervals where the density of ``nu`` is negative, plus singletons at negative atoms."""
    opts = opts or SolverOptions()
    parts = _scan_negative(nu.density, domain, opts)
    for p, m in nu.atoms:
        if m < 0 and not any(iv.contains(p) for iv in parts):
            parts.append(Interval(p, p))
    return sorted(parts, key=lambda iv: (iv.lo, iv.hi))


# ------------------------------------------------------------------ enlarge

def _distance(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b)


class _Integrals:
    """Integrals against ``sigma_N`` that keep N's own atom when N is a point."""

    def __init__(self, sigma_n: MeasureSpec, n: Interval, q: QuadratureOptions):
        self.sigma_n, self.n, self.q = sigma_n, n, q

    def detail(self, f, lo, hi, mu=None, breakpoints=()):
        n = self.n
        closed = (n.is_point and lo == n.lo, n.is_point and hi == n.hi)
        if hi < lo or (hi == lo and not (closed[0] or closed[1])):
            return 0.0, 0.0
        res = integrate_detail(mu or self.sigma_n, f, Interval(lo, hi), self.q, closed, breakpoints)
        return res.value, res.magnitude

    def __call__(self, f, lo, hi):
        return self.detail(f, lo, hi)[0]

    def signed(self, f, lo, hi):
        """Like ``__call__`` but maps a divergent tail to an infinity of its sign."""
        try:
            return self(f, lo, hi)
        except QuadratureError as exc:
            if exc.reason != "divergent":
                raise
            return math.copysign(math.inf, exc.estimate) if exc.estimate != 0 else math.nan


def _crossing(F, start: float, direction: int, model: DiffusionModel, opts: SolverOptions) -> float:
    """Boundary of ``{z : F(z) < 0}`` moving outward from ``start``.

    ``F`` is monotone outward (it only gains non-negative mass), so the
    boundary is bracketed between ``start`` and the first probe where ``F``
    turns non-negative.  Returns the domain end when ``F`` stays negative.
    """
    end = model.domain.lo if direction < 0 else model.domain.hi
    if F(start) >= 0:
        return start
    edge = opts.work_window.lo if direction < 0 else opts.work_window.hi
    step = direction * (edge - start)
    if step <= 0:
        step = 1.0
    prev = start
    while True:
        z = start + direction * step
        if direction * (z - end) >= 0:
            z = end
        if z == end:
            fz = _signed_value(F, z)
            if fz < 0 or math.isnan(fz):
                return end
            if math.isinf(end):
                # F changes sign beyond every probe so far: keep doubling
                z = start + direction * step
            else:
                break
        fz = F(z)
        if fz >= 0:
            break
        if math.isinf(end) and _signed_value(F, end) < 0:
            return end
        if step > opts.quadrature.tail_limit:
            return end
        prev = z
        step *= 2.0
    if fz == 0:
        return z
    lo, hi = (z, prev) if direction < 0 else (prev, z)
    return brentq(F, lo, hi, xtol=opts.root_tol, rtol=4 * np.finfo(float).eps, maxiter=200)


def _signed_value(F, z):
    try:
        return F(z)
    except QuadratureError as exc:
        if exc.reason != "divergent":
            raise
        return math.copysign(math.inf, exc.estimate) if exc.estimate != 0 else math.nan


def _enlarge(model: DiffusionModel, sigma: MeasureSpec, n: Interval, negative, opts: SolverOptions,
             seed: Optional[Interval] = None):
    dom = model.domain
    if n.lo <= dom.lo and n.hi >= dom.hi:
        return dom, None, 0
    sigma_n = restrict_sigma(sigma, n, negative)
    ints = _Integrals(sigma_n, n, opts.quadrature)
    phi, psi = model.phi, model.psi

    # equalise the two integrals over N; zero sets are unchanged by the positive factor
    scale = 1.0
    i_phi, i_psi = ints.signed(phi, n.lo, n.hi), ints.signed(psi, n.lo, n.hi)
    if math.isfinite(i_phi) and math.isfinite(i_psi) and i_phi < -opts.quadrature.abs_tol and i_psi < 0:
        scale = i_psi / i_phi

    def left_end(y):
        if n.lo <= dom.lo:
            return dom.lo
        return _crossing(lambda z: scale * ints(phi, z, y), n.lo, -1, model, opts)

    def right_end(x):
        if n.hi >= dom.hi:
            return dom.hi
        return _crossing(lambda z: ints(psi, x, z), n.hi, +1, model, opts)

    seed = seed or n
    x, y = seed.lo, seed.hi
    for it in range(1, opts.max_enlarge_iters + 1):
        x_new = left_end(y)
        y_new = right_end(x_new)
        moved = max(_distance(x_new, x), _distance(y_new, y))
        x, y = x_new, y_new
        log.debug("enlarge %s iter %d: (%r, %r) moved %.3g", n, it, x, y, moved)
        if moved < opts.enlarge_tol:
            break
    else:
        raise ConvergenceError(f"enlargement of {n} did not converge in {opts.max_enlarge_iters} "
                               f"iterations", last=Interval(x, y))
    c = Interval(x, y)
    report = check_condition(model, sigma_n, n, c, opts)
    report.iterations = it
    if not report.satisfied:
        raise ConsistencyError(f"enlarged pair N={n}, C={c} fails the continuation condition",
                               report)
    return c, report, it


def enlarge(model: DiffusionModel, sigma: MeasureSpec, n: Interval, negative,
            opts: Optional[SolverOptions] = None, seed: Optional[Interval] = None) -> Interval:
    """Smallest interval ``C`` around ``N`` making ``(N, C)`` a valid continuation pair.

    Alternates ``x <- inf{z <= a : int_(z,y) phi d sigma_N < 0}`` and
    ``y <- sup{z >= b : int_(x,z) psi d sigma_N < 0}`` from ``y = seed.hi``
    until both ends settle.  ``seed`` defaults to ``N``; merges pass the hull
    of the intervals being merged.
    """
    return _enlarge(model, sigma, n, negative, opts or SolverOptions(), seed)[0]


def check_condition(model: DiffusionModel, sigma_n: MeasureSpec, n: Interval, c: Interval,
                    opts: Optional[SolverOptions] = None) -> ConditionReport:
    """Evaluate the four requirements on a candidate pair ``(N, C)``.

    (i) both integrals over ``N`` are non-positive; (ii)/(iii) the ``phi`` and
    ``psi`` integrals over ``C`` vanish when the matching end of ``C`` is
    interior; (iv) ``int_C G(x, .) d sigma_N <= 0`` on a grid of ``x`` in ``C``.
    Each check allows ``abs_tol + condition_rtol * int |integrand|``.
    """
    opts = opts or SolverOptions()
    dom = model.domain
    ints = _Integrals(sigma_n, n, opts.quadrature)
    abs_tol, rtol = opts.quadrature.abs_tol, opts.condition_rtol
    i_phi = ints.signed(model.phi, n.lo, n.hi)
    i_psi = ints.signed(model.psi, n.lo, n.hi)
    ok = i_phi <= abs_tol and i_psi <= abs_tol

    ii = ii_tol = iii = iii_tol = None
    if c.lo > dom.lo:
        ii, mag = ints.detail(model.phi, c.lo, c.hi)
        ii_tol = abs_tol + rtol * mag
        ok = ok and abs(ii) <= ii_tol
    if c.hi < dom.hi:
        iii, mag = ints.detail(model.psi, c.lo, c.hi)
        iii_tol = abs_tol + rtol * mag
        ok = ok and abs(iii) <= iii_tol

    win = opts.work_window
    lo, hi = max(c.lo, win.lo), min(c.hi, win.hi)
    iv_max, iv_tol = -math.inf, 0.0
    if hi > lo:
        w = model.wronskian
        for x in np.linspace(lo, hi, opts.condition_grid + 2)[1:-1]:
            left, lmag = ints.detail(model.psi, c.lo, x)
            right, rmag = ints.detail(model.phi, x, c.hi)
            fx, px = float(model.phi(x)), float(model.psi(x))
            val = (fx * left + px * right) / w
            tol = abs_tol + rtol * (fx * lmag + px * rmag) / w
            if val - tol > iv_max - iv_tol:
                iv_max, iv_tol = val, tol
        ok = ok and iv_max <= iv_tol
    return ConditionReport(n, c, i_phi, i_psi, ii, iii, iv_max, bool(ok), ii_tol, iii_tol, iv_tol)


# -------------------------------------------------------------------- solve

def _disjoint(pairs, gap_tol):
    return all(a.c.hi + gap_tol < b.c.lo for a, b in zip(pairs, pairs[1:]))


def solve(model: DiffusionModel, reward: RewardSpec, opts: Optional[SolverOptions] = None) -> Solution:
    """Continuation region and value function of the discounted stopping problem."""
    opts = opts or SolverOptions()
    model = with_reference(model, opts.work_window)
    dom = model.domain
    sigma = sigma_measure(model, reward)
    negative = negative_set(model, reward, opts)
    log.info("negative set: %s", ", ".join(map(str, negative)) or "empty")
    if not negative:
        return Solution([], reward, model, negative=[])

    theta, reports = [], []
    for n in negative:
        c, rep, it = _enlarge(model, sigma, n, negative, opts)
        log.info("base step: N=%s -> C=%s (%d iterations)", n, c, it)
        theta.append(PairNC(n, c))
        reports.append(rep)

    merges = []
    while True:
        for p in theta:
            if p.c.lo <= dom.lo and p.c.hi >= dom.hi:
                raise DegeneracyError(
                    "continuation region is the whole state space; the reward must be "
                    "non-negative and satisfy the inversion formula"
                )
        if _disjoint(theta, opts.gap_tol):
            break
        k = len(theta)
        lefts = [j for j in range(1, k) if theta[j].c.lo <= dom.lo]
        rights = [j for j in range(k - 1) if theta[j].c.hi >= dom.hi]
        if lefts:
            j = max(lefts)
            idx = list(range(0, j + 1))
            new_n, kind = Interval(dom.lo, theta[j].n.hi), "left"
        elif rights:
            j = min(rights)
            idx = list(range(j, k))
            new_n, kind = Interval(theta[j].n.lo, dom.hi), "right"
        else:
            j = next(j for j in range(k - 1) if theta[j].c.hi + opts.gap_tol >= theta[j + 1].c.lo)
            idx = [j, j + 1]
            new_n, kind = Interval(theta[j].n.lo, theta[j + 1].n.hi), "merge"
        seed = theta[idx[0]].c
        for i in idx[1:]:
            seed = seed.hull(theta[i].c)
        c, rep, it = _enlarge(model, sigma, new_n, negative, opts, seed=seed)
        log.info("%s: %s -> N=%s, C=%s", kind, [str(theta[i].n) for i in idx], new_n, c)
        merges.append(MergeRecord(kind, tuple(theta[i].n for i in idx), new_n, c))
        theta = theta[:idx[0]] + [PairNC(new_n, c)] + theta[idx[-1] + 1:]
        reports = reports[:idx[0]] + [rep] + reports[idx[-1] + 1:]
        if len(merges) > len(negative):
            raise ConvergenceError("merge loop exceeded the number of negative components")

    intervals = [IntervalSolution(p.c, *coefficients(model, reward.g, p.c)) for p in theta]
    for n in negative:
        if not any(p.c.covers(n) for p in theta):
            raise ConsistencyError(f"negative component {n} is not inside the continuation region")
    return Solution(intervals, reward, model, reports, list(negative), theta, merges, len(merges))
