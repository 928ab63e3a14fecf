"""One-dimensional regular diffusions described by their fundamental solutions.

A diffusion on ``I = (l, r)`` enters the solver only through

* ``phi`` / ``psi``: the decreasing / increasing positive solutions of
  ``alpha * u = L u``,
* the scale density ``s'`` and the speed density ``m'`` (w.r.t. Lebesgue),
* the Wronskian ``(psi'/s') phi - psi (phi'/s')``, a positive constant.

All callables take and return numpy arrays (scalars work too).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InvalidParameterError

Func = Callable[[np.ndarray], np.ndarray]

INF = math.inf


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lo, hi)`` with possibly infinite ends.

    ``lo == hi`` is allowed and denotes the singleton ``{lo}``; it is the only
    closed case and is used for negative atoms of a representing measure.
    """

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise InvalidParameterError(f"bad interval ({self.lo}, {self.hi})")
        if lo == hi and math.isinf(lo):
            raise InvalidParameterError("singleton at infinity")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_point:
            return x == self.lo
        return (x > self.lo) & (x < self.hi)

    def __contains__(self, x) -> bool:
        return bool(self.contains(x))

    def covers(self, other: "Interval") -> bool:
        """True when ``other`` is a subset of ``self`` (a point on the boundary counts)."""
        if other.is_point:
            return self.lo <= other.lo <= self.hi
        return self.lo <= other.lo and other.hi <= self.hi

    def clip(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), max(min(self.hi, other.hi), max(self.lo, other.lo)))

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __str__(self):
        if self.is_point:
            return f"{{{self.lo:g}}}"
        return f"({self.lo:g}, {self.hi:g})"


@dataclass(frozen=True)
class DiffusionModel:
    domain: Interval
    alpha: float
    phi: Func
    psi: Func
    scale_density: Func
    speed_density: Func
    wronskian: float
    dphi: Optional[Func] = None
    dpsi: Optional[Func] = None
    # d/dx log s'(x); needed to apply the generator to a smooth reward
    log_scale_slope: Optional[Func] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def check_inside(self, *xs):
        for x in xs:
            arr = np.asarray(x, dtype=float)
            if not np.all(self.domain.contains(arr)):
                raise DomainError(f"point(s) {x!r} outside the state space {self.domain}")

    def generator(self, g: Func, dg: Func, d2g: Func) -> Func:
        """Return ``x -> L g(x)`` for a twice differentiable ``g``.

        Uses ``L = (1/m') d/dx (1/s') d/dx``, which expands to
        ``(g'' - g' (log s')') / (s' m')``.
        """
        slope = self.log_scale_slope or _fd_log_slope(self.scale_density)

        def lg(x):
            x = np.asarray(x, dtype=float)
            return (d2g(x) - dg(x) * slope(x)) / (self.scale_density(x) * self.speed_density(x))

        return lg


def _fd_log_slope(s: Func, rel_step: float = 1e-6) -> Func:
    def slope(x):
        x = np.asarray(x, dtype=float)
        h = rel_step * (1.0 + np.abs(x))
        return (np.log(s(x + h)) - np.log(s(x - h))) / (2.0 * h)

    return slope


def fd_wronskian(phi: Func, psi: Func, scale_density: Func, x, rel_step: float = 1e-6):
    """Central-difference Wronskian ``(psi' phi - psi phi') / s'`` at ``x``."""
    x = np.asarray(x, dtype=float)
    h = rel_step * (1.0 + np.abs(x))
    dpsi = (psi(x + h) - psi(x - h)) / (2.0 * h)
    dphi = (phi(x + h) - phi(x - h)) / (2.0 * h)
    return (dpsi * phi(x) - psi(x) * dphi) / scale_density(x)


def make_brownian(alpha: float, drift: float = 0.0, volatility: float = 1.0) -> DiffusionModel:
    """Brownian motion with constant drift and volatility on the real line.

    ``psi = exp(g+ x)`` and ``phi = exp(g- x)`` where ``g+ > 0 > g-`` solve
    ``(v^2/2) g^2 + drift g - alpha = 0``.  The scale density is
    ``exp(-2 drift x / v^2)`` and the speed density ``2 / (v^2 s'(x))``, so
    the standard case has ``s' = 1``, ``m' = 2`` and Wronskian ``2 sqrt(2 alpha)``.
    """
    alpha, drift, volatility = float(alpha), float(drift), float(volatility)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if not (volatility > 0 and math.isfinite(volatility)):
        raise InvalidParameterError(f"volatility must be positive, got {volatility}")
    if not math.isfinite(drift):
        raise InvalidParameterError(f"drift must be finite, got {drift}")

    v2 = volatility * volatility
    disc = math.sqrt(drift * drift + 2.0 * alpha * v2)
    gp = (-drift + disc) / v2
    gm = (-drift - disc) / v2
    c = -2.0 * drift / v2

    def psi(x):
        return np.exp(gp * np.asarray(x, dtype=float))

    def phi(x):
        return np.exp(gm * np.asarray(x, dtype=float))

    def dpsi(x):
        return gp * psi(x)

    def dphi(x):
        return gm * phi(x)

    def scale_density(x):
        return np.exp(c * np.asarray(x, dtype=float))

    def speed_density(x):
        return (2.0 / v2) * np.exp(-c * np.asarray(x, dtype=float))

    def log_scale_slope(x):
        return np.full_like(np.asarray(x, dtype=float), c)

    return DiffusionModel(
        domain=Interval(-INF, INF),
        alpha=alpha,
        phi=phi,
        psi=psi,
        scale_density=scale_density,
        speed_density=speed_density,
        # (psi' phi - psi phi') / s' = (gp - gm) exp((gp + gm - c) x) and gp + gm = c
        wronskian=gp - gm,
        dphi=dphi,
        dpsi=dpsi,
        log_scale_slope=log_scale_slope,
        family="brownian",
        params={"alpha": alpha, "drift": drift, "volatility": volatility},
    )


def make_custom(
    domain: Interval,
    alpha: float,
    phi: Func,
    psi: Func,
    scale_density: Func,
    speed_density: Func,
    reference: Optional[float] = None,
    rel_step: float = 1e-6,
    **kwargs,
) -> DiffusionModel:
    """Build a model from user-supplied function handles.

    The Wronskian is evaluated once by central differences at ``reference``
    (the domain midpoint when bounded, otherwise 0).  Use
    :func:`wronskian_spread` to confirm it is constant.
    """
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if reference is None:
        reference = 0.5 * (domain.lo + domain.hi) if domain.bounded else 0.0
        if not domain.contains(reference):
            reference = domain.lo + 1.0 if math.isfinite(domain.lo) else domain.hi - 1.0
    w = float(fd_wronskian(phi, psi, scale_density, reference, rel_step))
    if not w > 0:
        raise InvalidParameterError(f"non-positive Wronskian {w} at x={reference}")
    return DiffusionModel(domain, float(alpha), phi, psi, scale_density, speed_density, w, **kwargs)


def with_reference(model: DiffusionModel, window: Interval, rel_step: float = 1e-6) -> DiffusionModel:
    """Recompute a custom model's Wronskian at the midpoint of ``window``."""
    if model.family == "brownian":
        return model
    x0 = 0.5 * (window.lo + window.hi)
    w = float(fd_wronskian(model.phi, model.psi, model.scale_density, x0, rel_step))
    return DiffusionModel(
        model.domain, model.alpha, model.phi, model.psi, model.scale_density,
        model.speed_density, w, model.dphi, model.dpsi, model.log_scale_slope,
        model.family, dict(model.params),
    )


def green(model: DiffusionModel, x, y):
    """Green kernel ``psi(min(x,y)) phi(max(x,y)) / w`` w.r.t. the speed measure."""
    model.check_inside(x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    out = model.psi(lo) * model.phi(hi) / model.wronskian
    return float(out) if out.ndim == 0 else out


def laplace_hitting(model: DiffusionModel, x, z):
    """``E_x exp(-alpha * T_z)`` for the first hitting time of level ``z``."""
    model.check_inside(x, z)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        up = model.psi(x) / model.psi(z)
        down = model.phi(x) / model.phi(z)
    out = np.where(x < z, up, np.where(x > z, down, 1.0))
    return float(out) if out.ndim == 0 else out


def wronskian_spread(model: DiffusionModel, xs, rel_step: float = 1e-6) -> float:
    """Relative spread ``(max - min) / w`` of the finite-difference Wronskian on ``xs``."""
    w = fd_wronskian(model.phi, model.psi, model.scale_density, np.asarray(xs, dtype=float), rel_step)
    return float((np.max(w) - np.min(w)) / model.wronskian)


def validate(model: DiffusionModel, xs, rtol: float = 1e-6) -> None:
    """Check positivity, monotonicity and Wronskian constancy on a sorted grid."""
    xs = np.sort(np.asarray(xs, dtype=float))
    model.check_inside(xs)
    ph, ps = model.phi(xs), model.psi(xs)
    if np.any(ph <= 0) or np.any(ps <= 0):
        raise InvalidParameterError("phi and psi must be strictly positive")
    if np.any(np.diff(ph) >= 0):
        raise InvalidParameterError("phi must be strictly decreasing")
    if np.any(np.diff(ps) <= 0):
        raise InvalidParameterError("psi must be strictly increasing")
    w = fd_wronskian(model.phi, model.psi, model.scale_density, xs)
    bad = np.abs(w - model.wronskian) > rtol * model.wronskian
    if np.any(bad):
        raise InvalidParameterError(
            f"Wronskian not constant: stored {model.wronskian}, observed {w[bad][0]} "
            f"at x={xs[bad][0]}"
        )
