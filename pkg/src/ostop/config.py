"""JSON problem configurations and report encoding."""
from __future__ import annotations

import importlib
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Callable, Optional

import numpy as np

from .diffusion import DiffusionModel, Interval, make_brownian, make_custom
from .errors import ConfigError, OstopError
from .measure import MeasureSpec, QuadratureOptions
from .reward import (PiecewiseLinear, Represented, RewardSpec, piecewise_linear_reward,
                     polynomial_reward)
from .solver import SolverOptions

SCHEMA = "ostop/1"

# name -> factory(alpha, **params) returning a DiffusionModel
DIFFUSIONS: dict = {}


def register_diffusion(name: str, factory: Callable[..., DiffusionModel]) -> None:
    DIFFUSIONS[name] = factory


def geometric_brownian(alpha: float, drift: float = 0.0, volatility: float = 1.0) -> DiffusionModel:
    """``dX = drift X dt + volatility X dW`` on ``(0, inf)``, built through the custom route."""
    v2 = volatility * volatility
    b = drift / v2 - 0.5
    disc = math.sqrt(b * b + 2.0 * alpha / v2)
    gp, gm = -b + disc, -b - disc
    c = -2.0 * drift / v2
    return make_custom(
        Interval(0.0, math.inf), alpha,
        phi=lambda x: np.asarray(x, dtype=float) ** gm,
        psi=lambda x: np.asarray(x, dtype=float) ** gp,
        scale_density=lambda x: np.asarray(x, dtype=float) ** c,
        speed_density=lambda x: 2.0 / (v2 * np.asarray(x, dtype=float) ** (2.0 + c)),
        reference=1.0,
        log_scale_slope=lambda x: c / np.asarray(x, dtype=float),
        family="geometric_brownian",
        params={"alpha": alpha, "drift": drift, "volatility": volatility},
    )


register_diffusion("geometric_brownian", geometric_brownian)


# ------------------------------------------------------------------ numbers

def encode_float(x: float):
    """JSON-safe float: infinities become the strings "inf" / "-inf"."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def decode_float(v, what: str = "value") -> float:
    if isinstance(v, str):
        if v in ("inf", "-inf", "nan"):
            return float(v)
        raise ConfigError(f"{what}: expected a number or \"inf\"/\"-inf\", got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{what}: expected a number, got {v!r}")
    return float(v)


def to_jsonable(obj):
    if isinstance(obj, Interval):
        return [encode_float(obj.lo), encode_float(obj.hi)]
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return encode_float(obj)
    return obj


def _interval(v, what: str) -> Interval:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{what}: expected [lo, hi]")
    try:
        return Interval(decode_float(v[0], what), decode_float(v[1], what))
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


# ------------------------------------------------------------------ configs

@dataclass(frozen=True)
class OutputOptions:
    sample_range: Interval = Interval(-5.0, 5.0)
    sample_count: int = 1001


@dataclass(frozen=True)
class MonteCarloOptions:
    points: tuple = ()
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class OracleOptions:
    templates: tuple = (2,)
    step: float = 0.05
    window: Interval = Interval(-5.0, 5.0)
    eval_points: tuple = ()
    monte_carlo: Optional[MonteCarloOptions] = None


@dataclass(frozen=True)
class ProblemConfig:
    model: DiffusionModel
    reward: RewardSpec
    solver: SolverOptions = SolverOptions()
    output: OutputOptions = OutputOptions()
    oracle: OracleOptions = OracleOptions()
    raw: dict = field(default_factory=dict)


def _build(cls, block: dict, what: str, converters: dict):
    if not isinstance(block, dict):
        raise ConfigError(f"{what}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in block.items():
        conv = converters.get(k)
        kwargs[k] = conv(v, f"{what}.{k}") if conv else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _num(v, what):
    return decode_float(v, what)


def _int(v, what):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{what}: expected an integer")
    return v


def _points(v, what):
    if not isinstance(v, list):
        raise ConfigError(f"{what}: expected a list of numbers")
    return tuple(decode_float(x, what) for x in v)


def _resolve(ref: str, what: str):
    if ref in DIFFUSIONS:
        return DIFFUSIONS[ref]
    if ":" not in ref:
        raise ConfigError(f"{what}: unknown handle {ref!r}; use a registered name or \"module:attr\"")
    mod, attr = ref.split(":", 1)
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"{what}: cannot resolve {ref!r}: {exc}") from exc


def parse_diffusion(block: dict) -> DiffusionModel:
    if not isinstance(block, dict):
        raise ConfigError("diffusion: expected an object")
    block = dict(block)
    family = block.pop("family", None)
    if "alpha" not in block:
        raise ConfigError("diffusion.alpha is required")
    if family == "brownian":
        unknown = set(block) - {"alpha", "drift", "volatility"}
        if unknown:
            raise ConfigError(f"diffusion: unknown keys {sorted(unknown)}")
        args = {k: decode_float(v, f"diffusion.{k}") for k, v in block.items()}
        try:
            return make_brownian(**args)
        except ValueError as exc:
            raise ConfigError(f"diffusion: {exc}") from exc
    if family == "custom":
        factory = _resolve(block.pop("handles", ""), "diffusion.handles")
        params = block.pop("params", {})
        alpha = decode_float(block.pop("alpha"), "diffusion.alpha")
        if block:
            raise ConfigError(f"diffusion: unknown keys {sorted(block)}")
        try:
            model = factory(alpha, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"diffusion: {exc}") from exc
        if not isinstance(model, DiffusionModel):
            raise ConfigError("diffusion.handles must produce a DiffusionModel")
        return model
    raise ConfigError(f"diffusion.family must be \"brownian\" or \"custom\", got {family!r}")


def _coefficients(v, what):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{what}: expected a non-empty list")
    out = [decode_float(c, what) for c in v]
    if not all(math.isfinite(c) for c in out):
        raise ConfigError(f"{what}: coefficients must be finite")
    return out


def _knots(v, what):
    if not isinstance(v, list) or not all(isinstance(k, list) and len(k) == 2 for k in v):
        raise ConfigError(f"{what}: expected a list of [x, y] pairs")
    try:
        return PiecewiseLinear([[decode_float(a, what), decode_float(b, what)] for a, b in v])
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _function(block, what) -> tuple:
    """A function block -> (callable, breakpoints)."""
    if not isinstance(block, dict):
        raise ConfigError(f"{what}: expected an object")
    kind = block.get("kind")
    if kind == "polynomial":
        p = np.polynomial.Polynomial(_coefficients(block.get("coefficients"), f"{what}.coefficients"))
        return (lambda x: p(np.asarray(x, dtype=float))), ()
    if kind == "piecewise_linear":
        pl = _knots(block.get("knots"), f"{what}.knots")
        return pl, tuple(float(x) for x in pl.x)
    if kind == "callable":
        ref = block.get("ref", "")
        if ":" not in ref:
            raise ConfigError(f"{what}.ref must be \"module:attr\"")
        return _resolve(ref, f"{what}.ref"), tuple(_points(block.get("breakpoints", []), what))
    raise ConfigError(f"{what}.kind must be polynomial, piecewise_linear or callable, got {kind!r}")


def parse_reward(block: dict, model: DiffusionModel) -> RewardSpec:
    if not isinstance(block, dict):
        raise ConfigError("reward: expected an object")
    kind = block.get("kind")
    try:
        if kind == "polynomial":
            return polynomial_reward(model, _coefficients(block.get("coefficients"), "reward.coefficients"))
        if kind == "piecewise_linear":
            knots = block.get("knots")
            _knots(knots, "reward.knots")
            return piecewise_linear_reward(model, knots)
        if kind == "represented":
            g, g_breaks = _function(block.get("g"), "reward.g")
            density, d_breaks = _function(block.get("density"), "reward.density")
            atoms = tuple((decode_float(a, "reward.atoms"), decode_float(m, "reward.atoms"))
                          for a, m in block.get("atoms", []))
            nu = MeasureSpec(density, atoms, tuple(sorted(set(g_breaks) | set(d_breaks))))
            return RewardSpec(g, Represented(nu), tuple(sorted(set(g_breaks))))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"reward: {exc}") from exc
    raise ConfigError(f"reward.kind must be polynomial, piecewise_linear or represented, got {kind!r}")


def parse_solver(block: dict) -> SolverOptions:
    block = dict(block)
    q = block.pop("quadrature", None)
    opts = _build(SolverOptions, block, "solver", {
        "work_window": _interval, "root_tol": _num, "enlarge_tol": _num, "gap_tol": _num,
        "condition_rtol": _num, "scan_points": _int, "max_enlarge_iters": _int,
        "condition_grid": _int,
    })
    if q is not None:
        quad = _build(QuadratureOptions, q, "solver.quadrature", {
            "rel_tol": _num, "abs_tol": _num, "tail_epsilon": _num, "tail_limit": _num,
            "panel_width": _num, "max_subdivisions": _int,
        })
        opts = replace(opts, quadrature=quad)
    return opts


def parse_oracle(block: dict) -> OracleOptions:
    block = dict(block)
    mc = block.pop("monte_carlo", None)
    opts = _build(OracleOptions, block, "oracle", {
        "templates": lambda v, w: tuple(_int(t, w) for t in v), "step": _num,
        "window": _interval, "eval_points": _points,
    })
    if mc is not None:
        opts = replace(opts, monte_carlo=_build(MonteCarloOptions, mc, "oracle.monte_carlo", {
            "points": _points, "n_paths": _int, "dt": _num, "seed": _int, "workers": _int,
        }))
    return opts


def parse_config(data: dict) -> ProblemConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}, got {data.get('schema')!r}")
    unknown = set(data) - {"schema", "name", "diffusion", "reward", "solver", "output", "oracle"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for key in ("diffusion", "reward"):
        if key not in data:
            raise ConfigError(f"missing {key!r} block")
    model = parse_diffusion(data["diffusion"])
    try:
        reward = parse_reward(data["reward"], model)
    except OstopError as exc:
        raise ConfigError(str(exc)) from exc
    solver = parse_solver(data.get("solver", {}))
    output = _build(OutputOptions, data.get("output", {}), "output",
                    {"sample_range": _interval, "sample_count": _int})
    if output.sample_count < 2:
        raise ConfigError("output.sample_count must be at least 2")
    oracle = parse_oracle(data.get("oracle", {}))
    return ProblemConfig(model, reward, solver, output, oracle, data)


def load_config(path) -> ProblemConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)
