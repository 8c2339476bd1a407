import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nablavar import randomgen
from nablavar.calculus import (
    GridFunction, delta_derivative, delta_integral, nabla_derivative, nabla_integral,
)
from nablavar.duality import (
    check_derivative_duality, check_el_duality, check_integral_duality, check_lemma,
    delta_el_residual, dual_function, dual_lagrangian, dual_problem, dual_timescale, lemma_sides,
    random_suite,
)
from nablavar.timescale import TimeScale
from nablavar.variational import CompositeFunctional, Integrand, VariationalProblem, el_residual

S013 = TimeScale([0, 1, 3])


def test_dual_scale_examples():
    d = dual_timescale(S013)
    assert d.points.tolist() == [-3, -1, 0]
    assert d.sigma(-3) == -S013.rho(3) == -1
    u = dual_timescale(TimeScale.uniform(-1, 0, 4))
    assert u == TimeScale.uniform(0, 1, 4)
    assert u.provenance.kind == "uniform" and u.provenance.params == (0.0, 1.0, 4)


def test_dual_jump_identities():
    ts = TimeScale([-2, -0.5, 0.1, 1.7, 3])
    d = dual_timescale(ts)
    for s in d:
        assert d.rho(s) == -ts.sigma(-s)
        assert d.sigma(s) == -ts.rho(-s)
        assert d.nu(s) == ts.mu(-s)
        assert d.mu(s) == ts.nu(-s)


def test_dual_function_examples():
    f = GridFunction.sample(S013, lambda t: t ** 2)
    fs = dual_function(f)
    assert fs.values.tolist() == [9, 1, 0]
    sym = TimeScale([-1, 0, 1])
    even = GridFunction.sample(sym, lambda t: t ** 2)
    assert dual_function(even) == even
    assert dual_function(fs) == f


def test_derivative_duality_example():
    f = GridFunction.sample(S013, lambda t: t ** 2)
    assert delta_derivative(f).at(1) == 4
    assert nabla_derivative(dual_function(f)).at(-1) == -4
    assert check_derivative_duality(f).max_discrepancy == 0
    assert check_derivative_duality(GridFunction(S013, [2, 2, 2])).max_discrepancy == 0


def test_integral_duality_example():
    f = GridFunction.sample(S013, lambda t: t)
    assert delta_integral(f, 0, 3) == 2
    assert nabla_integral(dual_function(f), -3, 0) == 2
    assert check_integral_duality(f, 0, 3).passed
    one = GridFunction(S013, [1, 1, 1])
    r = check_integral_duality(one, 0, 3)
    assert r.max_discrepancy == 0


def test_dual_lagrangian_examples():
    assert dual_lagrangian(Integrand.from_text("v^2")).value(0.3, 0.0, 2.0) == 4
    tv = dual_lagrangian(Integrand.from_text("t*v"))
    for t, v in ((0.5, 2.0), (-1.0, 3.0)):
        assert tv.value(t, 0.0, v) == t * v
    lhs, rhs = lemma_sides(Integrand.from_text("v + v^2"),
                           GridFunction.sample(TimeScale([-2, -1, 0]), lambda t: -2 * t), -2, 0)
    assert lhs == rhs == 4


def test_dual_problem_swaps_boundaries():
    p = VariationalProblem(S013, 0, 3, CompositeFunctional.from_text("z1", ["v^2"]), left=1, right=None)
    dp = dual_problem(p)
    assert (dp.a, dp.b) == (-3, 0)
    assert dp.left is None and dp.right == 1
    assert dp.describe()["integrands"] == ["(-v)^2"]


def test_el_duality_on_random_problems():
    rng = np.random.default_rng(4)
    for _ in range(50):
        p, x = randomgen.random_problem(rng, H="z1*z2 + sin(z1)")
        assert check_el_duality(p, x).passed


def test_el_duality_per_integrand():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p, x = randomgen.random_problem(rng, n_integrands=1, H="z1")
        rep = el_residual(p, x)
        dp = dual_problem(p)
        s, res, _ = delta_el_residual(dp, dual_function(x, dp.scale))
        lookup = dict(zip(s.tolist(), res.tolist()))
        for t, r in zip(rep.points, rep.residual):
            assert abs(r - lookup[-t]) <= 1e-10


def test_random_suite_passes():
    reports = random_suite(200, seed=1)
    for name, rep in reports.items():
        assert rep.passed, (name, rep.max_discrepancy)
    assert reports["derivative"].cases == 200


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=25, unique=True).map(sorted))
def test_involution_bit_exact(pts):
    ts = TimeScale(pts)
    assert dual_timescale(dual_timescale(ts)).points.tobytes() == ts.points.tobytes()
    f = GridFunction(ts, np.sin(ts.points))
    assert dual_function(dual_function(f)) == f


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lemma_relative_discrepancy(seed):
    rng = np.random.default_rng(seed)
    ts = randomgen.random_scale(rng)
    f = randomgen.random_function(rng, ts)
    L = randomgen.random_lagrangian(rng)
    assert check_lemma(L, f, ts.min, ts.max).passed
