"""Discounted optimal stopping of one-dimensional diffusions via Green-kernel representations."""
from .diffusion import (DiffusionModel, Interval, green, laplace_hitting, make_brownian,
                        make_custom, validate, wronskian_spread)
from .errors import (BudgetError, ConfigError, ConsistencyError, ConvergenceError,
                     DegeneracyError, DomainError, InvalidParameterError, OstopError,
                     QuadratureError, ResolutionError)
from .measure import MeasureSpec, QuadratureOptions, integrate, restrict_sigma
from .oracle import (OracleEstimate, StoppingPolicy, brute_force, monte_carlo_value,
                     policy_value)
from .reward import RewardSpec, piecewise_linear_reward, polynomial_reward, sigma_measure
from .solver import SolverOptions, check_condition, enlarge, negative_set, solve
from .value import (Solution, VerificationReport, VerifyOptions, coefficients, evaluate,
                    evaluate_integral, verify_inversion, verify_solution)

__version__ = "0.1.0"
