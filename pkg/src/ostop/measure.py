"""Signed measures (Lebesgue density plus atoms) and integration against them.

Integration uses vectorised adaptive Gauss-Kronrod (7, 15) panels.  Panels are
split at every atom and listed breakpoint so the density is smooth on each one.
Unbounded ends are truncated once the integrand bound drops below
``tail_epsilon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .diffusion import Interval
from .errors import InvalidParameterError, QuadratureError

Func = Callable[[np.ndarray], np.ndarray]

# Kronrod nodes on [0, 1] (descending) and weights, from QUADPACK qk15.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:7], [0.0], _XGK[:7][::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[:7][::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = [_WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0]]

_EPS = np.finfo(float).eps


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class MeasureSpec:
    """``density(x) dx + sum(mass * delta_loc)``.

    ``breakpoints`` lists points where the density may be non-smooth (kinks of
    the reward, edges of a restriction); quadrature panels never straddle them.
    """

    density: Func = _zero
    atoms: tuple = ()
    breakpoints: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(p), float(m)) for p, m in self.atoms)
        locs = [p for p, _ in atoms]
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise InvalidParameterError("atom locations must be strictly increasing")
        if any(not math.isfinite(p) or not math.isfinite(m) for p, m in atoms):
            raise InvalidParameterError("atoms must be finite")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "breakpoints", tuple(sorted({float(b) for b in self.breakpoints})))

    def without_atoms(self) -> "MeasureSpec":
        return replace(self, atoms=())

    def absolute(self) -> "MeasureSpec":
        """Total variation measure ``|mu|``."""
        dens = self.density
        return MeasureSpec(lambda x: np.abs(dens(x)), tuple((p, abs(m)) for p, m in self.atoms),
                           self.breakpoints)


@dataclass(frozen=True)
class QuadratureOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_subdivisions: int = 2 ** 14
    tail_epsilon: float = 1e-13
    # truncation point search stops this far from the finite end
    tail_limit: float = 200.0
    # initial panels are no wider than this
    panel_width: float = 1.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "tail_epsilon", "tail_limit", "panel_width"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.max_subdivisions < 16:
            raise InvalidParameterError("max_subdivisions must be at least 16")


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    magnitude: float  # integral of |f * density| over the same range
    panels: int


def _gk_panels(h, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(h(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(vals)):
        i, j = np.argwhere(~np.isfinite(vals))[0]
        raise QuadratureError(f"non-finite integrand at x={x[i, j]!r}", "numeric")
    k = half * (vals @ KRONROD_WEIGHTS)
    g = half * (vals @ GAUSS_WEIGHTS)
    resabs = np.abs(half) * (np.abs(vals) @ KRONROD_WEIGHTS)
    mean = (vals @ KRONROD_WEIGHTS) * 0.5
    resasc = np.abs(half) * (np.abs(vals - mean[:, None]) @ KRONROD_WEIGHTS)
    err = np.abs(k - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(resasc > 0, resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5), err)
    err = np.maximum(scaled, 50.0 * _EPS * resabs)
    return k, err, resabs


def _adaptive(h, points: Sequence[float], opts: QuadratureOptions) -> QuadResult:
    edges = []
    for lo, hi in zip(points[:-1], points[1:]):
        if hi <= lo:
            continue
        n = max(1, int(math.ceil((hi - lo) / opts.panel_width)))
        cuts = np.linspace(lo, hi, n + 1)
        edges.append(np.column_stack([cuts[:-1], cuts[1:]]))
    if not edges:
        return QuadResult(0.0, 0.0, 0.0, 0)
    panels = np.vstack(edges)
    a, b = panels[:, 0], panels[:, 1]
    done_val = done_err = done_abs = 0.0
    count = len(a)
    while True:
        k, err, resabs = _gk_panels(h, a, b)
        total = done_val + k.sum()
        total_err = done_err + err.sum()
        magnitude = done_abs + resabs.sum()
        tol = max(opts.abs_tol, opts.rel_tol * magnitude)
        if total_err <= tol:
            return QuadResult(float(total), float(total_err), float(magnitude), count)
        share = tol / max(count, 1)
        split = err > share
        if not split.any():
            split[np.argmax(err)] = True
        keep = ~split
        done_val += k[keep].sum()
        done_err += err[keep].sum()
        done_abs += resabs[keep].sum()
        count += int(split.sum())
        if count > opts.max_subdivisions:
            raise QuadratureError(
                f"subdivision budget exhausted: estimate {total!r} +/- {total_err!r}",
                "accuracy", float(total), float(total_err),
            )
        a, b = a[split], b[split]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])


def _tail_end(h_abs, start: float, direction: int, opts: QuadratureOptions) -> float:
    """First ``start + direction * d`` (d doubling) beyond which ``h_abs`` stays below epsilon."""
    d = 1.0
    while d <= opts.tail_limit:
        x = start + direction * d
        probe = x + direction * np.linspace(0.0, d, 17)
        with np.errstate(over="ignore", invalid="ignore"):
            bound = np.asarray(h_abs(probe), dtype=float)
        if np.all(np.isfinite(bound)) and bound.max() < opts.tail_epsilon:
            return x
        d *= 2.0
    return math.nan


def _finite_points(lo, hi, extra):
    pts = {lo, hi}
    pts.update(p for p in extra if lo < p < hi)
    return sorted(pts)


def integrate_detail(
    mu: MeasureSpec,
    f: Func,
    over: Interval,
    opts: QuadratureOptions | None = None,
    closed: tuple = (False, False),
    breakpoints: Sequence[float] = (),
) -> QuadResult:
    """Integrate ``f`` against ``mu`` over ``over``; see :func:`integrate`."""
    opts = opts or QuadratureOptions()
    lo, hi = over.lo, over.hi
    atom_sum = 0.0
    atom_abs = 0.0
    for p, m in mu.atoms:
        inside = (lo < p < hi) or (closed[0] and p == lo) or (closed[1] and p == hi)
        if inside:
            fp = float(np.asarray(f(np.array([p])), dtype=float)[0])
            if not math.isfinite(fp):
                raise QuadratureError(f"non-finite integrand at atom {p!r}", "numeric")
            atom_sum += fp * m
            atom_abs += abs(fp * m)
    if over.is_point:
        return QuadResult(atom_sum, 0.0, atom_abs, 0)

    dens = mu.density

    def h(x):
        return np.asarray(f(x), dtype=float) * np.asarray(dens(x), dtype=float)

    def h_bound(x):
        return np.abs(h(x))

    cuts = list(mu.breakpoints) + [p for p, _ in mu.atoms] + list(breakpoints)
    finite_cuts = [c for c in cuts if math.isfinite(c)]
    a, b = lo, hi
    if math.isinf(lo) or math.isinf(hi):
        inner = [c for c in finite_cuts if lo < c < hi]
        if math.isfinite(lo):
            anchor_lo = anchor_hi = lo
        elif math.isfinite(hi):
            anchor_lo = anchor_hi = hi
        else:
            anchor_lo = anchor_hi = 0.0
        if inner:
            anchor_lo = min(anchor_lo, min(inner)) if math.isinf(lo) else anchor_lo
            anchor_hi = max(anchor_hi, max(inner)) if math.isinf(hi) else anchor_hi
        if math.isinf(hi):
            b = _tail_end(h_bound, anchor_hi, +1, opts)
        if math.isinf(lo):
            a = _tail_end(h_bound, anchor_lo, -1, opts)
        if math.isnan(a) or math.isnan(b):
            # report the partial integral up to the search limit
            a2 = anchor_lo - opts.tail_limit if math.isnan(a) else a
            b2 = anchor_hi + opts.tail_limit if math.isnan(b) else b
            try:
                est = _adaptive(h, _finite_points(a2, b2, finite_cuts), opts).value + atom_sum
            except QuadratureError as exc:
                est = exc.estimate + atom_sum
            raise QuadratureError(
                f"integrand does not decay on {over}", "divergent", est, math.inf
            )
    res = _adaptive(h, _finite_points(a, b, finite_cuts), opts)
    return QuadResult(res.value + atom_sum, res.error, res.magnitude + atom_abs, res.panels)


def integrate(
    mu: MeasureSpec,
    f: Func,
    over: Interval,
    opts: QuadratureOptions | None = None,
    closed: tuple = (False, False),
    breakpoints: Sequence[float] = (),
) -> float:
    """``int_over f(x) density(x) dx + sum of f(p) * mass(p)`` for atoms ``p`` in ``over``.

    Atoms sitting exactly on an endpoint are excluded unless the matching flag
    in ``closed`` is set.  A singleton ``over`` picks up only its own atom (when
    closed).  ``breakpoints`` adds panel boundaries, e.g. the kink of a Green
    kernel.

    Raises :class:`QuadratureError` on a non-finite integrand, exhausted
    subdivision budget, or a non-decaying unbounded tail.
    """
    return integrate_detail(mu, f, over, opts, closed, breakpoints).value


def restrict_sigma(sigma: MeasureSpec, d: Interval, negative_set: Sequence[Interval]) -> MeasureSpec:
    """The hybrid measure equal to ``sigma`` on ``d`` and to its positive part elsewhere.

    Outside ``d`` the density is zeroed on every member of ``negative_set`` and
    clipped at zero, and only non-negative atoms survive.  A singleton ``d``
    keeps its own atom.
    """
    negs = [n for n in negative_set if not n.is_point]
    dens = sigma.density

    def in_d(x):
        if d.is_point:
            return np.zeros_like(x, dtype=bool)
        return (x > d.lo) & (x < d.hi)

    def density(x):
        x = np.asarray(x, dtype=float)
        val = np.asarray(dens(x), dtype=float)
        inside = in_d(x)
        outside = np.maximum(val, 0.0)
        for n in negs:
            outside = np.where(n.contains(x), 0.0, outside)
        return np.where(inside, val, outside)

    atoms = []
    for p, m in sigma.atoms:
        in_domain = (d.lo <= p <= d.hi) if d.is_point else (d.lo < p < d.hi)
        if in_domain or m >= 0:
            atoms.append((p, m))
    extra = [e for n in negs for e in (n.lo, n.hi) if math.isfinite(e)]
    extra += [e for e in (d.lo, d.hi) if math.isfinite(e)]
    return MeasureSpec(density, tuple(atoms), tuple(sigma.breakpoints) + tuple(extra))
