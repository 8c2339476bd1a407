"""Seeded random scales, grid functions, Lagrangians and problems for property runs.

Expressions are drawn from a pool of terms that are smooth and defined for
every real argument, so random cases never trip a domain error.
"""

from __future__ import annotations

import numpy as np

from .calculus import GridFunction
from .timescale import TimeScale
from .variational import CompositeFunctional, Integrand, VariationalProblem

TERMS = (
    "t", "y", "v", "v^2", "y*v", "t*v", "y^2", "t^2*y", "v^3",
    "sin(y)", "cos(t*v)", "exp(0.3*v)", "sqrt(1 + v^2)", "ln(2 + sin(y))",
    "y*cos(v)", "exp(-t^2)*v^2",
)


def random_scale(rng, n_min=3, n_max=12, lo=-3.0, hi=3.0) -> TimeScale:
    n = int(rng.integers(n_min, n_max + 1))
    while True:
        pts = np.unique(np.round(rng.uniform(lo, hi, n), 12))
        if pts.size == n and np.min(np.diff(pts)) > 1e-3:
            return TimeScale(pts)


def random_function(rng, scale: TimeScale, amplitude=2.0) -> GridFunction:
    return GridFunction(scale, rng.uniform(-amplitude, amplitude, len(scale)))


def random_lagrangian_text(rng, max_terms=4) -> str:
    k = int(rng.integers(1, max_terms + 1))
    picks = rng.choice(len(TERMS), size=k, replace=False)
    parts = []
    for idx in picks:
        c = rng.uniform(-2, 2)
        parts.append(f"({c:.4f})*{TERMS[idx]}")
    return " + ".join(parts)


def random_lagrangian(rng, max_terms=4) -> Integrand:
    return Integrand.from_text(random_lagrangian_text(rng, max_terms))


def random_problem(rng, H="z1*z2", n_integrands=2, free_left=None, free_right=None,
                   n_min=4, n_max=12) -> tuple:
    """A random problem on a random scale and a candidate satisfying its boundary data.

    The interval is a random sub-interval with at least three points.  Returns
    ``(problem, candidate)``.
    """
    scale = random_scale(rng, n_min, n_max)
    L = len(scale)
    ia = int(rng.integers(0, L - 2))
    ib = int(rng.integers(ia + 2, L))
    x = random_function(rng, scale)
    if free_left is None:
        free_left = bool(rng.integers(0, 2))
    if free_right is None:
        free_right = bool(rng.integers(0, 2))
    fn = CompositeFunctional.from_text(
        H, [random_lagrangian_text(rng) for _ in range(n_integrands)])
    p = VariationalProblem(
        scale, scale.points[ia], scale.points[ib], fn,
        left=None if free_left else x.values[ia],
        right=None if free_right else x.values[ib],
    )
    return p, x
