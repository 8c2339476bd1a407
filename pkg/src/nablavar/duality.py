"""Delta/nabla duality: dual scales, dual functions, dual Lagrangians, and executable checks.

Reflecting ``t -> -t`` turns the backward (nabla) calculus on a scale into the
forward (delta) calculus on the reflected scale.  Every identity here is
exposed as a report-producing check so the CLI can run it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import calculus
from .calculus import GridFunction
from .expr import Neg, Var, substitute, to_string
from .timescale import Provenance, TimeScale
from .variational import (
    CompositeFunctional, Integrand, VariationalProblem, _sum_last, el_residual,
)

__all__ = [
    "DualityReport", "DualProblem", "dual_timescale", "dual_function", "dual_lagrangian",
    "dual_problem", "delta_components", "delta_el_residual",
    "check_derivative_duality", "check_integral_duality", "check_lemma",
    "check_el_duality", "random_suite",
]

DERIVATIVE_TOL = 1e-12
INTEGRAL_TOL = 1e-12
LEMMA_RTOL = 1e-10
EL_TOL = 1e-10


@dataclass
class DualityReport:
    name: str
    max_discrepancy: float
    tolerance: float
    cases: int = 1
    relative: bool = False
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_discrepancy <= self.tolerance)

    def merge(self, other: "DualityReport") -> "DualityReport":
        return DualityReport(self.name, max(self.max_discrepancy, other.max_discrepancy),
                             self.tolerance, self.cases + other.cases, self.relative)

    def as_dict(self) -> dict:
        out = {"name": self.name, "cases": self.cases, "max_discrepancy": self.max_discrepancy,
               "tolerance": self.tolerance, "relative": self.relative, "passed": self.passed}
        out.update(self.details)
        return out


def dual_timescale(ts: TimeScale) -> TimeScale:
    """``{-s : s in ts}``; uniform grids keep their uniform description."""
    pv = ts.provenance
    if pv.kind == "uniform":
        a, b, n = pv.params
        prov = Provenance("uniform", (-b, -a, n))
    else:
        prov = Provenance(pv.kind, pv.params, not pv.reflected)
    return TimeScale(-ts.points[::-1], prov)


def dual_function(f: GridFunction, dual_scale: TimeScale | None = None) -> GridFunction:
    """``f*(s) = f(-s)`` on the dual scale."""
    ds = dual_scale if dual_scale is not None else dual_timescale(f.scale)
    L = len(f.scale)
    return GridFunction(ds, f.values[::-1], L - f.stop)


def dual_lagrangian(L: Integrand) -> Integrand:
    """``L*(s, y, v) = L(-s, y, -v)`` by substitution in the expression tree."""
    return Integrand(substitute(L.f, {"t": Neg(Var("t")), "v": Neg(Var("v"))}))


# ---------------------------------------------------------------------------
# the delta-side problem on the dual scale


@dataclass(frozen=True)
class DualProblem:
    """Delta problem on the dual scale over ``[-b, -a]`` with dual integrands."""

    scale: TimeScale
    a: float
    b: float
    functional: CompositeFunctional
    left: float | None
    right: float | None

    @property
    def ia(self):
        return self.scale.index(self.a)

    @property
    def ib(self):
        return self.scale.index(self.b)

    def describe(self) -> dict:
        return {
            "points": self.scale.points.tolist(),
            "a": self.a,
            "b": self.b,
            "H": to_string(self.functional.H),
            "integrands": [g.text for g in self.functional.integrands],
            "left": self.left,
            "right": self.right,
        }


def dual_problem(p: VariationalProblem) -> DualProblem:
    ds = dual_timescale(p.scale)
    fn = CompositeFunctional(p.functional.H,
                             tuple(dual_lagrangian(g) for g in p.functional.integrands))
    return DualProblem(ds, -p.b, -p.a, fn, left=p.right, right=p.left)


def _delta_terms(dp: DualProblem, xs: GridFunction):
    ia, ib = dp.ia, dp.ib
    s = dp.scale.points[ia:ib]
    mu = dp.scale.mu_array()[ia:ib]
    xw = xs.values[ia - xs.start:ib - xs.start + 1]
    y = xw[1:]                      # x*(sigma(s))
    v = np.diff(xw) / mu            # x*^Delta(s)
    return s, mu, y, v


def delta_components(dp: DualProblem, xs: GridFunction) -> np.ndarray:
    """``F*_i``: sums of ``mu(s) f*_i(s, x*(sigma(s)), x*^Delta(s))`` over ``[a*, b*)``."""
    s, mu, y, v = _delta_terms(dp, xs)
    return np.array([_sum_last(mu * g.value(s, y, v)) for g in dp.functional.integrands])


def delta_el_residual(dp: DualProblem, xs: GridFunction):
    """Delta-side EL residual ``sum_i H'_i (F*) [ (f*_iv)^Delta - f*_iy ]``.

    Returned on ``[a*, rho(b*))``, where the forward derivative of the inner
    signal exists.  Gives ``(points, residual, F*)``.
    """
    s, mu, y, v = _delta_terms(dp, xs)
    F = delta_components(dp, xs)
    w = dp.functional.outer_gradient(F)
    res = np.zeros(len(s) - 1)
    for i, g in enumerate(dp.functional.integrands):
        fy, fv = g.partials(s, y, v)
        res = res + w[i] * (np.diff(fv) / mu[:-1] - fy[:-1])
    return s[:-1].copy(), res, F


# ---------------------------------------------------------------------------
# checks


def check_derivative_duality(f: GridFunction) -> DualityReport:
    """``f^Delta(t) = -(f*)^nabla(-t)`` and ``f^nabla(t) = -(f*)^Delta(-t)``."""
    fs = dual_function(f)
    worst = 0.0
    fd = calculus.delta_derivative(f)
    fs_nab = calculus.nabla_derivative(fs)
    for t, val in zip(fd.points, fd.values):
        worst = max(worst, abs(val + fs_nab.at(-t)))
    fn = calculus.nabla_derivative(f)
    fs_del = calculus.delta_derivative(fs)
    for t, val in zip(fn.points, fn.values):
        worst = max(worst, abs(val + fs_del.at(-t)))
    return DualityReport("derivative", worst, DERIVATIVE_TOL)


def check_integral_duality(f: GridFunction, a: float, b: float) -> DualityReport:
    """``int_a^b f Delta t = int_{-b}^{-a} f* nabla s`` and the nabla/delta mirror."""
    fs = dual_function(f)
    d1 = abs(calculus.delta_integral(f, a, b) - calculus.nabla_integral(fs, -b, -a))
    d2 = abs(calculus.nabla_integral(f, a, b) - calculus.delta_integral(fs, -b, -a))
    return DualityReport("integral", max(d1, d2), INTEGRAL_TOL)


def lemma_sides(L: Integrand, x: GridFunction, a: float, b: float):
    """Both sides of the nabla-to-delta Lagrangian identity, via the calculus primitives."""
    scale = x.scale
    ia, ib = scale.index(a), scale.index(b)
    t = scale.points[ia + 1:ib + 1]
    x_rho = calculus.compose_rho(x)
    x_nab = calculus.nabla_derivative(x)
    lhs_vals = L.value(t, np.array([x_rho.at(s) for s in t]), np.array([x_nab.at(s) for s in t]))
    lhs = calculus.nabla_integral(GridFunction(scale, lhs_vals, ia + 1), a, b)

    xs = dual_function(x)
    ds = xs.scale
    Ls = dual_lagrangian(L)
    ja, jb = ds.index(-b), ds.index(-a)
    s = ds.points[ja:jb]
    xs_sig = calculus.compose_sigma(xs)
    xs_del = calculus.delta_derivative(xs)
    rhs_vals = Ls.value(s, np.array([xs_sig.at(u) for u in s]), np.array([xs_del.at(u) for u in s]))
    rhs = calculus.delta_integral(GridFunction(ds, rhs_vals, ja), -b, -a)
    return lhs, rhs


def check_lemma(L: Integrand, x: GridFunction, a: float, b: float) -> DualityReport:
    lhs, rhs = lemma_sides(L, x, a, b)
    scale = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return DualityReport("lemma", rel, LEMMA_RTOL, relative=True,
                         details={"lhs": lhs, "rhs": rhs})


def check_el_duality(p: VariationalProblem, x: GridFunction) -> DualityReport:
    """Nabla EL residual at ``t`` against the delta EL residual of the dual problem at ``-t``."""
    rep = el_residual(p, x)
    dp = dual_problem(p)
    xs = dual_function(x, dp.scale)
    s_pts, dres, Fs = delta_el_residual(dp, xs)
    lookup = dict(zip(s_pts.tolist(), dres.tolist()))
    worst = 0.0
    for t, r in zip(rep.points, rep.residual):
        worst = max(worst, abs(r - lookup[-float(t)]))
    worst = max(worst, float(np.max(np.abs(np.array(rep.F) - Fs))))
    return DualityReport("el", worst, EL_TOL)


def random_suite(count: int, seed: int) -> dict:
    """Run every duality check on ``count`` random (scale, function, Lagrangian) triples.

    Also checks that dualising twice is the identity, bit for bit.
    """
    from . import randomgen

    rng = np.random.default_rng(seed)
    reports = {
        "derivative": DualityReport("derivative", 0.0, DERIVATIVE_TOL, 0),
        "integral": DualityReport("integral", 0.0, INTEGRAL_TOL, 0),
        "lemma": DualityReport("lemma", 0.0, LEMMA_RTOL, 0, relative=True),
        "el": DualityReport("el", 0.0, EL_TOL, 0),
        "involution": DualityReport("involution", 0.0, 0.0, 0),
    }
    for _ in range(count):
        scale = randomgen.random_scale(rng)
        f = randomgen.random_function(rng, scale)
        L = randomgen.random_lagrangian(rng)
        n = len(scale)
        i = int(rng.integers(0, n - 1))
        j = int(rng.integers(i + 1, n))
        a, b = scale.points[i], scale.points[j]

        reports["derivative"] = reports["derivative"].merge(check_derivative_duality(f))
        reports["integral"] = reports["integral"].merge(check_integral_duality(f, a, b))
        reports["lemma"] = reports["lemma"].merge(check_lemma(L, f, a, b))

        if j - i >= 2:
            fn = CompositeFunctional.from_text("z1", [L.text])
            p = VariationalProblem(scale, a, b, fn)
            reports["el"] = reports["el"].merge(check_el_duality(p, f))

        twice = dual_timescale(dual_timescale(scale))
        ff = dual_function(dual_function(f))
        exact = (np.array_equal(twice.points, scale.points) and twice.provenance == scale.provenance
                 and ff == f)
        reports["involution"] = reports["involution"].merge(
            DualityReport("involution", 0.0 if exact else 1.0, 0.0))
    return reports
