"""Value function assembly and the identities a solution must satisfy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import DiffusionModel, Interval
from .errors import DegeneracyError
from .measure import MeasureSpec, QuadratureOptions, integrate
from .reward import RewardSpec, sigma_measure


@dataclass(frozen=True)
class IntervalSolution:
    c: Interval
    k1: float
    k2: float


@dataclass(frozen=True)
class MergeRecord:
    """One re-entry of the iterative step: ``replaced`` pairs collapse into ``n`` -> ``c``."""

    kind: str  # "left", "right" or "merge"
    replaced: tuple
    n: Interval
    c: Interval


@dataclass
class Solution:
    intervals: list
    reward: RewardSpec
    model: DiffusionModel
    diagnostics: list = field(default_factory=list)
    negative: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    merges: list = field(default_factory=list)
    iterations: int = 0

    @property
    def continuation(self):
        return [iv.c for iv in self.intervals]

    @property
    def stop_everywhere(self) -> bool:
        return not self.intervals

    def stopping(self):
        return stopping_set(self.model.domain, self.continuation)

    def __call__(self, x):
        return evaluate(self, x)


@dataclass(frozen=True)
class InversionCheck:
    residual: float
    # |g|/psi at the right window edge and |g|/phi at the left one
    decay_right: float
    decay_left: float


@dataclass
class VerificationReport:
    inversion_residual: float
    majorant_min_gap: float
    stop_region_max_gap: float
    smooth_fit_max: float
    harmonicity_max: float
    harmonicity_scale: float = 0.0
    representation_max: float = 0.0
    stop_sigma_min: float = 0.0
    decay_right: float = 0.0
    decay_left: float = 0.0
    contact_points: list = field(default_factory=list)
    smooth_fit: list = field(default_factory=list)


@dataclass(frozen=True)
class VerifyOptions:
    """Grids used by :func:`verify_solution`.

    ``window`` defaults to the hull of all finite interval endpoints padded by
    one unit on each side, clipped to the solver's work window.
    """

    window: Optional[Interval] = None
    grid_points: int = 401
    inversion_points: int = 21
    representation_points: int = 50
    fit_step: float = 1e-5
    harmonic_step: float = 1e-3
    quadrature: QuadratureOptions = QuadratureOptions()


def exit_coefficients(model: DiffusionModel, g, lo, hi):
    """Vectorised ``(k1, k2)`` of ``k1 phi + k2 psi`` matching ``g`` at finite ends.

    An end at the domain boundary drops the corresponding solution; both ends
    at the boundary gives ``(0, 0)`` (the process is never stopped).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    left_open = lo <= model.domain.lo
    right_open = hi >= model.domain.hi
    both = ~left_open & ~right_open
    k1 = np.zeros(lo.shape)
    k2 = np.zeros(lo.shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if np.any(both):
            a, b = lo[both], hi[both]
            ga, gb = g(a), g(b)
            pa, pb = model.psi(a), model.psi(b)
            fa, fb = model.phi(a), model.phi(b)
            den = pa * fb - pb * fa
            if np.any(np.abs(den) < 1e-300):
                raise DegeneracyError("degenerate interval: coefficient system is singular")
            k1[both] = (gb * pa - ga * pb) / den
            k2[both] = (ga * fb - gb * fa) / den
        only_right = left_open & ~right_open
        if np.any(only_right):
            b = hi[only_right]
            k2[only_right] = g(b) / model.psi(b)
        only_left = right_open & ~left_open
        if np.any(only_left):
            a = lo[only_left]
            k1[only_left] = g(a) / model.phi(a)
    return k1, k2


def coefficients(model: DiffusionModel, g, c: Interval):
    """Coefficients ``(k1, k2)`` of the value function on a continuation interval."""
    if c.lo <= model.domain.lo and c.hi >= model.domain.hi:
        raise DegeneracyError("continuation interval equals the whole state space")
    k1, k2 = exit_coefficients(model, g, c.lo, c.hi)
    return float(k1), float(k2)


def _harmonic(model, k1, k2, x):
    out = np.zeros_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        if k1 != 0.0:
            out = out + k1 * model.phi(x)
        if k2 != 0.0:
            out = out + k2 * model.psi(x)
    return out


def evaluate(solution: Solution, x):
    """``g`` on the stopping region, ``k1 phi + k2 psi`` on each continuation interval."""
    model = solution.model
    model.check_inside(x)
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).astype(float)
    out = np.array(solution.reward.g(flat), dtype=float)
    for iv in solution.intervals:
        mask = iv.c.contains(flat)
        if np.any(mask):
            out[mask] = _harmonic(model, iv.k1, iv.k2, flat[mask])
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def stopping_set(domain: Interval, continuation: Sequence[Interval]):
    """Closed complement of a union of disjoint open intervals inside ``domain``."""
    comps = []
    cur = domain.lo
    for c in sorted(continuation, key=lambda c: c.lo):
        if c.lo > cur:
            comps.append(Interval(cur, c.lo))
        elif c.lo == cur and cur > domain.lo:
            # two continuation intervals share an endpoint
            comps.append(Interval(cur, cur))
        cur = max(cur, c.hi)
    if cur < domain.hi:
        comps.append(Interval(cur, domain.hi))
    return comps


def green_integral(model: DiffusionModel, mu: MeasureSpec, over: Interval, x: float,
                   opts: Optional[QuadratureOptions] = None, closed=(True, True)) -> float:
    """``int_over G(x, y) mu(dy)``, split at the kernel's kink ``y = x``."""
    w = model.wronskian
    if over.is_point:
        p = over.lo
        mass = sum(m for q, m in mu.atoms if q == p) if (closed[0] or closed[1]) else 0.0
        lo, hi = min(x, p), max(x, p)
        return float(model.psi(lo) * model.phi(hi)) * mass / w
    total = 0.0
    left_hi = min(over.hi, x)
    if left_hi > over.lo or (left_hi == over.lo and closed[0]):
        part = integrate(mu, model.psi, Interval(over.lo, left_hi), opts,
                         closed=(closed[0], closed[1] if left_hi == over.hi else True))
        total += float(model.phi(x)) * part / w
    right_lo = max(over.lo, x)
    if over.hi > right_lo:
        part = integrate(mu, model.phi, Interval(right_lo, over.hi), opts,
                         closed=(closed[0] if right_lo == over.lo and over.lo > x else False, closed[1]))
        total += float(model.psi(x)) * part / w
    return total


def evaluate_integral(model: DiffusionModel, sigma: MeasureSpec, stopping: Sequence[Interval],
                      x: float, opts: Optional[QuadratureOptions] = None) -> float:
    """``int_S G(x, y) sigma(dy)`` summed over the (closed) stopping components."""
    model.check_inside(x)
    return sum(green_integral(model, sigma, s, float(x), opts) for s in stopping)


def verify_inversion(model: DiffusionModel, reward: RewardSpec, grid, opts=None,
                     window: Optional[Interval] = None) -> InversionCheck:
    """Largest ``|g(x) - int_I G(x, y) sigma(dy)|`` over ``grid``.

    Also returns the decay ratios ``|g|/psi`` and ``|g|/phi`` at the right and
    left edge of ``window`` (default: the grid's own range).
    """
    sigma = sigma_measure(model, reward)
    grid = np.asarray(grid, dtype=float)
    res = 0.0
    for x in grid:
        rep = green_integral(model, sigma, model.domain, float(x), opts)
        res = max(res, abs(float(reward.g(np.array(x))) - rep))
    window = window or Interval(float(grid.min()), float(grid.max()))
    hi, lo = np.array(window.hi), np.array(window.lo)
    with np.errstate(over="ignore", divide="ignore"):
        right = float(abs(reward.g(hi)) / model.psi(hi)) if math.isfinite(window.hi) else 0.0
        left = float(abs(reward.g(lo)) / model.phi(lo)) if math.isfinite(window.lo) else 0.0
    return InversionCheck(res, right, left)


def default_window(solution: Solution, work_window: Interval) -> Interval:
    ends = [e for iv in solution.intervals for e in (iv.c.lo, iv.c.hi) if math.isfinite(e)]
    ends += [e for n in solution.negative for e in (n.lo, n.hi) if math.isfinite(e)]
    if not ends:
        return work_window
    lo, hi = min(ends) - 1.0, max(ends) + 1.0
    return Interval(max(lo, work_window.lo), min(hi, work_window.hi))


def one_sided_derivatives(f, x: float, h: float):
    """Second-order one-sided differences ``(right, left)`` at ``x``."""
    pts = np.array([x, x + h, x + 2 * h, x - h, x - 2 * h])
    v = np.asarray(f(pts), dtype=float)
    right = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    left = (3.0 * v[0] - 4.0 * v[3] + v[4]) / (2.0 * h)
    return float(right), float(left)


def feller_generator(model: DiffusionModel, f, x, h: float):
    """``(d/dm)(d/ds) f`` by second differences with step ``h``."""
    x = np.asarray(x, dtype=float)
    fx, fp, fm = f(x), f(x + h), f(x - h)
    ds_up = h * model.scale_density(x + 0.5 * h)
    ds_dn = h * model.scale_density(x - 0.5 * h)
    dm = h * model.speed_density(x)
    return ((fp - fx) / ds_up - (fx - fm) / ds_dn) / dm


def verify_solution(solution: Solution, opts: Optional[VerifyOptions] = None,
                    work_window: Interval = Interval(-10.0, 10.0)) -> VerificationReport:
    """Check the numerically testable consequences of optimality."""
    opts = opts or VerifyOptions()
    model, reward = solution.model, solution.reward
    window = opts.window or default_window(solution, work_window)
    g = reward.g
    xs = np.linspace(window.lo, window.hi, opts.grid_points)
    xs = xs[model.domain.contains(xs)]
    v = evaluate(solution, xs)
    gx = g(xs)
    majorant = float(np.min(v - gx))
    in_c = np.zeros(xs.shape, dtype=bool)
    for c in solution.continuation:
        in_c |= c.contains(xs)
    stop_gap = float(np.max(np.abs(v[~in_c] - gx[~in_c]), initial=0.0))

    sigma = sigma_measure(model, reward)
    stop_vals = list(np.asarray(sigma.density(xs[~in_c]), dtype=float))
    for s in solution.stopping():
        stop_vals += [m for p, m in sigma.atoms if s.lo <= p <= s.hi]
    stop_sigma_min = float(min(stop_vals)) if stop_vals else 0.0

    contact, fits = [], []
    for c in solution.continuation:
        for b in (c.lo, c.hi):
            if math.isfinite(b) and model.domain.contains(b):
                r, l = one_sided_derivatives(lambda t: evaluate(solution, t), b, opts.fit_step)
                contact.append(b)
                fits.append(abs(r - l))
    harm, harm_scale = 0.0, 0.0
    h = opts.harmonic_step
    for iv in solution.intervals:
        lo = max(iv.c.lo, window.lo) + 2 * h
        hi = min(iv.c.hi, window.hi) - 2 * h
        if hi <= lo:
            continue
        grid = np.linspace(lo, hi, opts.grid_points)
        f = lambda t, iv=iv: _harmonic(model, iv.k1, iv.k2, np.asarray(t, dtype=float))
        av = model.alpha * f(grid)
        lv = feller_generator(model, f, grid, h)
        harm = max(harm, float(np.max(np.abs(av - lv))))
        harm_scale = max(harm_scale, float(np.max(np.abs(av))))

    inv_grid = np.linspace(window.lo, window.hi, opts.inversion_points)
    inv = verify_inversion(model, reward, inv_grid, opts.quadrature, work_window)

    rep_pts = np.linspace(window.lo, window.hi, opts.representation_points + 2)[1:-1]
    stopping = solution.stopping()
    rep = 0.0
    vr = evaluate(solution, rep_pts)
    for x, vx in zip(rep_pts, vr):
        alt = evaluate_integral(model, sigma, stopping, float(x), opts.quadrature)
        rep = max(rep, abs(alt - vx) / max(1.0, abs(vx)))
    return VerificationReport(
        inversion_residual=inv.residual,
        majorant_min_gap=majorant,
        stop_region_max_gap=stop_gap,
        smooth_fit_max=max(fits, default=0.0),
        harmonicity_max=harm,
        harmonicity_scale=harm_scale,
        representation_max=float(rep),
        stop_sigma_min=stop_sigma_min,
        decay_right=inv.decay_right,
        decay_left=inv.decay_left,
        contact_points=contact,
        smooth_fit=fits,
    )
