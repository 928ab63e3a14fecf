"""Solver-independent evaluation of interval stopping policies.

A policy is described by its closed stopping set; the process is stopped at
the first entry into it.  Starting inside a gap ``(a, b)`` of the stopping
set the value is ``k1 phi + k2 psi`` with ``g(a)``, ``g(b)`` as boundary data
(an infinite end contributes nothing), so policies can be valued exactly and
searched exhaustively on a grid, or simulated for Brownian models.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diffusion import DiffusionModel, Interval
from .errors import BudgetError, InvalidParameterError
from .value import Solution, exit_coefficients


@dataclass(frozen=True)
class StoppingPolicy:
    """Stop at the first entry into the union of closed intervals ``stop_set``.

    An empty ``stop_set`` never stops.  Intervals with an infinite end are
    closed relative to the state space.
    """

    stop_set: tuple = ()

    def __post_init__(self):
        comps = tuple(sorted(self.stop_set, key=lambda s: s.lo))
        for a, b in zip(comps, comps[1:]):
            if b.lo <= a.hi:
                raise InvalidParameterError(f"stopping components {a} and {b} overlap")
        object.__setattr__(self, "stop_set", comps)

    @classmethod
    def from_gaps(cls, domain: Interval, gaps: Sequence[Interval]) -> "StoppingPolicy":
        """Policy whose continuation region is the union of the open ``gaps``."""
        gaps = sorted(gaps, key=lambda c: c.lo)
        comps, prev = [], None
        for c in gaps:
            start = domain.lo if prev is None else prev
            if c.lo < start:
                raise InvalidParameterError("gaps overlap or leave the state space")
            if c.lo > start or prev is not None:
                # adjacent gaps leave their shared end as a one-point stopping set
                comps.append(Interval(start, c.lo))
            prev = c.hi
        if prev is None:
            comps.append(Interval(domain.lo, domain.hi))
        elif prev < domain.hi:
            comps.append(Interval(prev, domain.hi))
        return cls(tuple(comps))

    @classmethod
    def from_solution(cls, solution: Solution) -> "StoppingPolicy":
        return cls(tuple(solution.stopping()))

    def stops(self, x: float) -> bool:
        return any(s.lo <= x <= s.hi for s in self.stop_set)

    def gap(self, domain: Interval, x: float) -> Optional[Interval]:
        """The open gap of the stopping set containing ``x``, or None when ``x`` stops."""
        if self.stops(x):
            return None
        lo = max((s.hi for s in self.stop_set if s.hi < x), default=domain.lo)
        hi = min((s.lo for s in self.stop_set if s.lo > x), default=domain.hi)
        return Interval(lo, hi)


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float = 0.0

    def __post_init__(self):
        if not self.stderr >= 0:
            raise InvalidParameterError("stderr must be non-negative")


def _gap_value(model, g, a, b, x):
    k1, k2 = exit_coefficients(model, g, a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(k1 != 0, k1 * model.phi(x), 0.0) + np.where(k2 != 0, k2 * model.psi(x), 0.0)
    return out


def policy_value(model: DiffusionModel, g: Callable, policy: StoppingPolicy, x: float) -> OracleEstimate:
    """Exact expected discounted reward of ``policy`` started at ``x``."""
    model.check_inside(x)
    x = float(x)
    gap = policy.gap(model.domain, x)
    if gap is None:
        return OracleEstimate(float(g(np.array(x))))
    return OracleEstimate(float(_gap_value(model, g, gap.lo, gap.hi, x)))


# -------------------------------------------------------------- brute force

@dataclass
class BruteForceResult:
    eval_points: np.ndarray
    values: np.ndarray
    policies: list
    # best value per eval point for each gap count
    by_template: dict = field(default_factory=dict)


def _candidates(model: DiffusionModel, window: Interval, step: float) -> np.ndarray:
    n = int(round(window.width / step))
    grid = window.lo + step * np.arange(n + 1)
    grid = grid[model.domain.contains(grid)]
    return np.concatenate(([model.domain.lo], grid, [model.domain.hi]))


def brute_force(model: DiffusionModel, g: Callable, templates: Sequence[int], step: float,
                eval_points: Sequence[float], window: Interval = Interval(-5.0, 5.0),
                budget: float = 5e7) -> BruteForceResult:
    """Best policy with ``n`` gaps (``n`` in ``templates``) whose ends lie on a grid.

    Gap ends range over the grid on ``window`` plus the two ends of the state
    space.  Tuples ``a1 < b1 <= a2 < b2 <= ...`` are searched exhaustively,
    using that the value at ``x`` depends only on the gap containing ``x``:
    the optimum over ``n``-gap tuples is the best feasible gap around ``x``
    (or stopping at once, if ``x`` can be left uncovered).
    """
    if not window.bounded:
        raise InvalidParameterError("brute-force search needs a bounded window")
    if not step > 0:
        raise InvalidParameterError("grid step must be positive")
    if any(int(n) != n or n < 0 for n in templates) or not templates:
        raise InvalidParameterError("templates must be non-negative gap counts")
    xs = np.asarray(eval_points, dtype=float)
    model.check_inside(xs)
    cand = _candidates(model, window, step)
    m = len(cand)
    i, j = np.triu_indices(m, k=1)
    if len(i) * len(xs) > budget:
        raise BudgetError(f"{len(i)} gaps x {len(xs)} points exceeds budget {budget:g}; "
                          "use a coarser grid")
    k1, k2 = exit_coefficients(model, g, cand[i], cand[j])
    # gaps available to the left of cand[i] and to the right of cand[j]
    room = i + (m - 1 - j)

    values = np.full(len(xs), -np.inf)
    best = [None] * len(xs)
    by_template = {}
    for n in sorted(set(int(t) for t in templates)):
        vals_n = np.full(len(xs), -np.inf)
        for p, x in enumerate(xs):
            left = int(np.searchsorted(cand, x, side="right"))
            right = m - int(np.searchsorted(cand, x, side="left"))
            cands = []
            if (left - 1) + (right - 1) >= n:
                cands.append((float(g(np.array(x))), None))
            if n > 0:
                ok = (cand[i] < x) & (x < cand[j]) & (room >= n - 1)
                if np.any(ok):
                    with np.errstate(over="ignore", invalid="ignore"):
                        v = (np.where(k1[ok] != 0, k1[ok] * model.phi(x), 0.0)
                             + np.where(k2[ok] != 0, k2[ok] * model.psi(x), 0.0))
                    q = int(np.argmax(v))
                    idx = np.flatnonzero(ok)[q]
                    cands.append((float(v[q]), (int(i[idx]), int(j[idx]))))
            if not cands:
                continue
            v, arg = max(cands, key=lambda c: c[0])
            vals_n[p] = v
            if v > values[p]:
                values[p] = v
                gaps = [] if arg is None else [Interval(cand[arg[0]], cand[arg[1]])]
                best[p] = _complete(model, cand, gaps, n, x)
        by_template[n] = vals_n
    return BruteForceResult(xs, values, best, by_template)


def _complete(model, cand, gaps, n, x):
    """Fill a partial gap list up to ``n`` gaps away from ``x`` (values at ``x`` are unaffected)."""
    used = [(c.lo, c.hi) for c in gaps]
    lo = gaps[0].lo if gaps else x
    hi = gaps[0].hi if gaps else x
    left = [c for c in cand if c <= lo][::-1]
    right = [c for c in cand if c >= hi]
    while len(used) < n and len(left) >= 2:
        used.append((left[1], left[0]))
        left = left[1:]
    while len(used) < n and len(right) >= 2:
        used.append((right[0], right[1]))
        right = right[1:]
    return StoppingPolicy.from_gaps(model.domain, [Interval(a, b) for a, b in used])


def enumerate_policies(model: DiffusionModel, g: Callable, n_gaps: int, candidates: Sequence[float],
                       x: float, budget: float = 1e6):
    """Literal enumeration of every ``n_gaps`` tuple over ``candidates``; returns (value, policy).

    Walks all monotone tuples; meant as a cross-check of :func:`brute_force`
    on small grids.
    """
    cand = sorted(set(float(c) for c in candidates) | {model.domain.lo, model.domain.hi})
    if math.comb(len(cand) + 2 * n_gaps - 1, 2 * n_gaps) > budget:
        raise BudgetError("too many tuples for literal enumeration")
    best = (-math.inf, None)
    for ends in itertools.combinations_with_replacement(range(len(cand)), 2 * n_gaps):
        pairs = [(ends[2 * k], ends[2 * k + 1]) for k in range(n_gaps)]
        if any(a >= b for a, b in pairs):
            continue
        if any(pairs[k][1] > pairs[k + 1][0] for k in range(n_gaps - 1)):
            continue
        policy = StoppingPolicy.from_gaps(model.domain, [Interval(cand[a], cand[b]) for a, b in pairs])
        v = policy_value(model, g, policy, x).value
        if v > best[0]:
            best = (v, policy)
    return best


# -------------------------------------------------------------- Monte Carlo

def _simulate(model, g, gap, x0, n, dt, cutoff, rng):
    drift = model.params["drift"]
    vol = model.params["volatility"]
    alpha = model.alpha
    a, b = gap.lo, gap.hi
    sd = vol * math.sqrt(dt)
    v2dt = vol * vol * dt
    t_max = -math.log(cutoff) / alpha
    payoff = np.zeros(n)
    idx = np.arange(n)
    x = np.full(n, float(x0))
    t = 0.0
    ga = float(g(np.array(a))) if math.isfinite(a) else 0.0
    gb = float(g(np.array(b))) if math.isfinite(b) else 0.0
    while idx.size and t < t_max:
        x1 = x + drift * dt + sd * rng.standard_normal(idx.size)
        u = rng.random(idx.size)
        hit = np.zeros(idx.size, dtype=bool)
        tau = np.full(idx.size, t + dt)
        level = np.zeros(idx.size)
        for bound, gval in ((a, ga), (b, gb)):
            if not math.isfinite(bound):
                continue
            crossed = (x1 - bound) * (x - bound) <= 0
            crossed &= ~hit
            frac = np.where(crossed, (x - bound) / np.where(x == x1, 1.0, x - x1), 0.0)
            tau = np.where(crossed, t + dt * np.clip(frac, 0.0, 1.0), tau)
            # crossing and return within the step, from the Brownian bridge law
            bridge = ~crossed & ~hit & (u < np.exp(-2.0 * (bound - x) * (bound - x1) / v2dt))
            tau = np.where(bridge, t + 0.5 * dt, tau)
            level = np.where(crossed | bridge, gval, level)
            hit |= crossed | bridge
        if np.any(hit):
            payoff[idx[hit]] = np.exp(-alpha * tau[hit]) * level[hit]
        idx, x = idx[~hit], x1[~hit]
        t += dt
    return payoff


def monte_carlo_value(model: DiffusionModel, g: Callable, policy: StoppingPolicy, x: float,
                      n_paths: int = 100_000, dt: float = 1e-3, seed: int = 0,
                      batch: int = 10_000, workers: int = 1, cutoff: float = 1e-9) -> OracleEstimate:
    """Simulated value of ``policy`` for a Brownian model with drift.

    Paths take exact Gaussian steps; a crossing of a gap end is timed by
    linear interpolation, and a crossing hidden inside a step is detected
    with the Brownian-bridge probability.  A path still running once the
    discount drops below ``cutoff`` pays nothing.  Batches draw from
    independent child seeds and are combined by index, so the estimate
    depends only on ``seed`` (not on ``workers``).
    """
    if model.family != "brownian":
        raise InvalidParameterError("Monte Carlo is available for Brownian models only")
    if not (dt > 0 and math.isfinite(dt)):
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if int(n_paths) != n_paths or n_paths < 2:
        raise InvalidParameterError(f"n_paths must be an integer >= 2, got {n_paths}")
    if not 0 < cutoff < 1:
        raise InvalidParameterError("cutoff must lie in (0, 1)")
    model.check_inside(x)
    gap = policy.gap(model.domain, float(x))
    if gap is None:
        return OracleEstimate(float(g(np.array(float(x)))), 0.0)
    if not (math.isfinite(gap.lo) or math.isfinite(gap.hi)):
        return OracleEstimate(0.0, 0.0)

    sizes = [batch] * (int(n_paths) // batch)
    if n_paths % batch:
        sizes.append(int(n_paths) % batch)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(k):
        rng = np.random.default_rng(seeds[k])
        return _simulate(model, g, gap, float(x), sizes[k], dt, cutoff, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]
    pay = np.concatenate(parts)
    return OracleEstimate(float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(pay.size)))
