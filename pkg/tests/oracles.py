"""Independent reference computations: exact rationals and sympy, no package code."""

from __future__ import annotations

from fractions import Fraction

import sympy as sp


def frac_points(values):
    return [Fraction(v) for v in values]


def nabla_diff(points, values):
    """{t: (f(t) - f(rho t)) / nu(t)} for every point but the first."""
    return {points[k]: (values[k] - values[k - 1]) / (points[k] - points[k - 1])
            for k in range(1, len(points))}


def delta_diff(points, values):
    return {points[k]: (values[k + 1] - values[k]) / (points[k + 1] - points[k])
            for k in range(len(points) - 1)}


def nabla_sum(points, values, i, j):
    """Sum of nu(t) f(t) over t_{i+1}..t_j."""
    return sum(((points[k] - points[k - 1]) * values[k] for k in range(i + 1, j + 1)), Fraction(0))


def delta_sum(points, values, i, j):
    return sum(((points[k + 1] - points[k]) * values[k] for k in range(i, j)), Fraction(0))


def discrete_functional(points, xs, H, integrands):
    """Symbolic ``H(F_1..F_n)`` for symbolic/exact trajectory values ``xs``.

    ``H`` is a callable of the list of F values; ``integrands`` are callables
    ``f(t, y, v)`` acting on sympy objects.
    """
    F = []
    for f in integrands:
        total = sp.Integer(0)
        for k in range(1, len(points)):
            nu = sp.nsimplify(points[k] - points[k - 1])
            v = (xs[k] - xs[k - 1]) / nu
            total += nu * f(sp.nsimplify(points[k]), xs[k - 1], v)
        F.append(sp.expand(total))
    return H(F), F


def three_point_derivative():
    """dL/dm for the product example on {-1, -1/2, 0}, x = (1, m, 0)."""
    m = sp.Symbol("m", real=True)
    pts = [sp.Integer(-1), sp.Rational(-1, 2), sp.Integer(0)]
    L, _ = discrete_functional(pts, [sp.Integer(1), m, sp.Integer(0)],
                               lambda F: F[0] * F[1],
                               [lambda t, y, v: v ** 2, lambda t, y, v: t * v])
    dL = sp.Poly(sp.expand(sp.diff(L, m)), m)
    return dL, m
