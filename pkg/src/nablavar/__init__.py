"""Composed nabla variational problems on finite time scales."""

from .calculus import (
    GridFunction, c1_norm, compose_rho, compose_sigma, delta_derivative, delta_integral,
    nabla_derivative, nabla_integral,
)
from .duality import (
    DualityReport, dual_function, dual_lagrangian, dual_problem, dual_timescale, random_suite,
)
from .errors import (
    DomainError, NablavarError, ParseError, PreconditionError, ProblemFileError, UsageError,
)
from .expr import differentiate, evaluate, parse, to_string
from .problem import ProblemFile, load_problem, parse_problem
from .solver import (
    SolveOptions, SolveResult, direct_minimize, solve_q_system, stationary_scan_1d,
    verify_extremal,
)
from .timescale import PointClass, TimeScale
from .variational import (
    CompositeFunctional, ELReport, Integrand, VariationalProblem, el_residual, eval_components,
    eval_functional, functional_gradient, natural_bc_left, natural_bc_right,
    product_corollary_residual, quotient_corollary_residual, specialize_product,
    specialize_quotient,
)

__version__ = "0.1.0"
