"""Reward functions and the representing measure they induce."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .diffusion import DiffusionModel, Interval
from .errors import InvalidParameterError
from .measure import MeasureSpec

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Smooth:
    """``alg`` evaluates ``(alpha - L) g``."""

    alg: Func


@dataclass(frozen=True)
class Represented:
    """``g = int G(., y) nu(dy)`` for the signed measure ``nu``."""

    nu: MeasureSpec


@dataclass(frozen=True)
class RewardSpec:
    g: Func
    kind: Union[Smooth, Represented]
    exceptional_points: tuple = ()

    @property
    def smooth(self) -> bool:
        return isinstance(self.kind, Smooth)

    def __call__(self, x):
        return self.g(x)


def sigma_measure(model: DiffusionModel, reward: RewardSpec) -> MeasureSpec:
    """``sigma(dy) = (alpha - L) g(y) m(dy)``, or ``nu`` for a represented reward."""
    if isinstance(reward.kind, Represented):
        return reward.kind.nu
    alg = reward.kind.alg
    speed = model.speed_density

    def density(x):
        x = np.asarray(x, dtype=float)
        return alg(x) * speed(x)

    return MeasureSpec(density, (), tuple(reward.exceptional_points))


def polynomial_reward(model: DiffusionModel, coefficients: Sequence[float]) -> RewardSpec:
    """Polynomial reward, coefficients in ascending order; ``(alpha - L) g`` is exact."""
    coefficients = [float(c) for c in coefficients]
    if not coefficients or not np.all(np.isfinite(coefficients)):
        raise InvalidParameterError("polynomial coefficients must be finite and non-empty")
    p = np.polynomial.Polynomial(coefficients)
    dp, d2p = p.deriv(1), p.deriv(2)
    lg = model.generator(p, dp, d2p)
    alpha = model.alpha

    def g(x):
        return p(np.asarray(x, dtype=float))

    def alg(x):
        x = np.asarray(x, dtype=float)
        return alpha * p(x) - lg(x)

    return RewardSpec(g, Smooth(alg))


class PiecewiseLinear:
    """Continuous piecewise-linear function; end segments extend linearly."""

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 2:
            raise InvalidParameterError("knots must be a list of at least two (x, y) pairs")
        if not np.all(np.isfinite(knots)):
            raise InvalidParameterError("knots must be finite")
        if np.any(np.diff(knots[:, 0]) <= 0):
            raise InvalidParameterError("knot abscissae must be strictly increasing")
        self.x = knots[:, 0]
        self.y = knots[:, 1]
        self.slopes = np.diff(self.y) / np.diff(self.x)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.x, x) - 1, 0, len(self.slopes) - 1)
        return self.y[i] + self.slopes[i] * (x - self.x[i])

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.x, x) - 1, 0, len(self.slopes) - 1)
        return self.slopes[i]

    def kinks(self):
        """(location, slope jump) at interior knots where the slope changes."""
        jumps = np.diff(self.slopes)
        return [(float(x), float(j)) for x, j in zip(self.x[1:-1], jumps) if j != 0.0]


def piecewise_linear_reward(model: DiffusionModel, knots) -> RewardSpec:
    """Continuous piecewise-linear reward with its representing measure.

    The generalised second derivative of ``g`` is a sum of point masses at the
    kinks, so ``nu(dy) = (alpha g m' + g' (log s')' / s') dy - sum(jump / s'(x_i)) delta_{x_i}``.
    """
    pl = PiecewiseLinear(knots)
    if model.log_scale_slope is None:
        raise InvalidParameterError("model needs log_scale_slope for a piecewise-linear reward")
    alpha = model.alpha
    slope = model.log_scale_slope

    def density(x):
        x = np.asarray(x, dtype=float)
        return (alpha * pl(x) * model.speed_density(x)
                + pl.derivative(x) * slope(x) / model.scale_density(x))

    atoms = [(x, -j / float(model.scale_density(np.array(x)))) for x, j in pl.kinks()]
    nu = MeasureSpec(density, tuple(atoms), tuple(pl.x))
    return RewardSpec(pl, Represented(nu), tuple(float(k) for k in pl.x))


def check_continuity(reward: RewardSpec, window: Interval, points: int = 4001,
                     delta: float = 1e-7, rtol: float = 1e-4) -> None:
    """Raise if ``g`` jumps anywhere on a grid over ``window``."""
    xs = np.linspace(window.lo, window.hi, points)
    left, right = reward.g(xs - delta), reward.g(xs + delta)
    scale = 1.0 + np.abs(reward.g(xs))
    bad = np.abs(right - left) > rtol * scale
    if np.any(bad):
        raise InvalidParameterError(f"reward is discontinuous near x={xs[bad][0]:g}")
