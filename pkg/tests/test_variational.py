import numpy as np
import pytest
import sympy as sp

from nablavar import randomgen
from nablavar.calculus import GridFunction
from nablavar.errors import DomainError, PreconditionError, UsageError
from nablavar.expr import parse
from nablavar.timescale import TimeScale
from nablavar.variational import (
    CompositeFunctional, Integrand, VariationalProblem, el_residual, eval_components,
    eval_functional, functional_gradient, functional_hessian, natural_bc_left, natural_bc_right,
    product_corollary_residual, quotient_corollary_residual, specialize_product,
    specialize_quotient,
)

import oracles

EX1 = CompositeFunctional.from_text("z1*z2", ["v^2", "t*v"])
EX2 = CompositeFunctional.from_text("z1/z2", ["v^2", "v + v^2"])
S3 = TimeScale([-1, -0.5, 0])
S_m2 = TimeScale([-2, -1, 0])


def ex1_3pt(m):
    p = VariationalProblem(S3, -1, 0, EX1, left=1, right=0)
    return p, GridFunction(S3, [1, m, 0])


def test_ex2_components_and_residual():
    p = VariationalProblem(S_m2, -2, 0, EX2, left=4, right=0)
    x = GridFunction.sample(S_m2, lambda t: -2 * t)
    assert eval_components(p, x) == (8, 4)
    assert eval_functional(p, x) == 2
    rep = el_residual(p, x)
    assert rep.residual.tolist() == [0]
    assert rep.points.tolist() == [0]
    assert rep.left_bc is None and rep.right_bc is None


def test_ex1_three_point_values():
    for m in (0.5, -1.25, 3.0):
        p, x = ex1_3pt(m)
        F1, F2 = eval_components(p, x)
        assert F1 == pytest.approx(2 * ((m - 1) ** 2 + m ** 2), rel=1e-15)
        assert F2 == pytest.approx((1 - m) / 2, rel=1e-15)
    p, x = ex1_3pt(0.5)
    assert eval_components(p, x) == (1, 0.25)
    assert eval_functional(p, x) == 0.25


def test_zero_integrand_and_identity_H():
    p = VariationalProblem(S3, -1, 0, CompositeFunctional.from_text("z1", ["0*v"]), left=1, right=0)
    assert eval_components(p, GridFunction(S3, [1, 7, 0])) == (0,)
    single = VariationalProblem(S3, -1, 0, CompositeFunctional.from_text("z1", ["v^2"]), 1, 0)
    x = GridFunction(S3, [1, 0.3, 0])
    assert eval_functional(single, x) == eval_components(single, x)[0]


def test_affine_is_nabla_harmonic():
    ts = TimeScale([0, 0.3, 1, 1.7, 2.5])
    p = VariationalProblem(ts, 0, 2.5, CompositeFunctional.from_text("z1", ["v^2"]), 1, 6)
    rep = el_residual(p, GridFunction.sample(ts, lambda t: 1 + 2 * t))
    assert np.max(np.abs(rep.residual)) <= 1e-14
    x = GridFunction(ts, [1, 2, 0, 5, 6])
    rep = el_residual(p, x)
    v = np.diff(x.values) / np.diff(ts.points)
    assert np.allclose(rep.residual, 2 * np.diff(v) / np.diff(ts.points)[1:], rtol=1e-14)


def test_boundary_precondition():
    p, _ = ex1_3pt(0.5)
    with pytest.raises(PreconditionError, match="x\\(a\\)"):
        eval_components(p, GridFunction(S3, [2, 0.5, 0]))
    with pytest.raises(PreconditionError):
        eval_components(p, np.zeros(5))


def test_quotient_domain_error_names_z2():
    p = VariationalProblem(S3, -1, 0, CompositeFunctional.from_text("z1/z2", ["v^2", "0*v"]), 1, 0)
    with pytest.raises(DomainError, match="z2"):
        eval_functional(p, GridFunction(S3, [1, 0.5, 0]))


def test_undeclared_variables():
    with pytest.raises(UsageError, match="z3"):
        CompositeFunctional(parse("z3", ("z1", "z2", "z3")),
                            (Integrand.from_text("v"), Integrand.from_text("v")))
    with pytest.raises(UsageError, match="w"):
        Integrand(parse("w*v", ("w", "v")))


def test_interval_needs_two_points():
    with pytest.raises(DomainError):
        VariationalProblem(S3, 0, 0, EX1)
    with pytest.raises(DomainError, match="not a scale point"):
        VariationalProblem(S3, -0.7, 0, EX1)


def test_natural_bc_usage_and_constant_candidates():
    p = VariationalProblem(S3, -1, 0, CompositeFunctional.from_text("z1", ["v^2"]))
    x = GridFunction(S3, [3, 3, 3])
    assert natural_bc_left(p, x) == 0 and natural_bc_right(p, x) == 0
    fixed = VariationalProblem(S3, -1, 0, EX1, left=1, right=0)
    with pytest.raises(UsageError):
        natural_bc_left(fixed, GridFunction(S3, [1, 0, 0]))
    with pytest.raises(UsageError):
        natural_bc_right(fixed, GridFunction(S3, [1, 0, 0]))


def test_natural_bc_formulas_by_hand():
    ts = TimeScale([0, 0.5, 1.5, 2])
    fn = CompositeFunctional.from_text("z1/z2", ["v^2 + y", "2 + v"])
    p = VariationalProblem(ts, 0, 2, fn)
    x = GridFunction(ts, [0.2, 1.0, -0.5, 0.4])
    rep = el_residual(p, x)
    nu = np.diff(ts.points)
    v = np.diff(x.values) / nu
    F1 = np.sum(nu * (v ** 2 + x.values[:-1]))
    F2 = np.sum(nu * (2 + v))
    Q = F1 / F2
    assert rep.right_bc == pytest.approx((2 * v[-1] - Q) / F2, rel=1e-13)
    # left: mu(a) f_y(sigma a) - f_v(sigma a), weighted by H'
    left = (nu[0] * 1 - 2 * v[0]) / F2 - F1 / F2 ** 2 * (0 - 1)
    assert rep.left_bc == pytest.approx(left, rel=1e-13)


def _fd_grad(p, xw, h=1e-6):
    """Central differences of the functional over the free values (NaN at fixed ends)."""
    out = np.full(xw.size, np.nan)
    sl = p.free_slice()
    for k in range(sl.start, sl.stop):
        up, dn = xw.copy(), xw.copy()
        step = h * max(1.0, abs(xw[k]))
        up[k] += step
        dn[k] -= step
        out[k] = (eval_functional(p, up) - eval_functional(p, dn)) / (2 * step)
    return out


def test_gradient_matches_residuals_exactly():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p, x = randomgen.random_problem(rng, H="z1*z2 + sin(z1)")
        g, _ = functional_gradient(p, x, window=True)
        rep = el_residual(p, x)
        nu = p.scale.nu_array()[p.ia:p.ib + 1]
        interior = -g[1:-1] / nu[2:]
        assert np.allclose(interior, rep.residual, rtol=1e-12, atol=1e-12 * np.max(np.abs(g)))
        if p.left is None:
            assert rep.left_bc == pytest.approx(g[0], rel=1e-12, abs=1e-13)
        if p.right is None:
            assert rep.right_bc == pytest.approx(g[-1], rel=1e-12, abs=1e-13)


def test_stationarity_equivalence_with_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(25):
        p, x = randomgen.random_problem(rng, H="z1*z2")
        xw = p.window_values(x).astype(float)
        fd = _fd_grad(p, xw)
        rep = el_residual(p, x)
        nu = p.scale.nu_array()[p.ia:p.ib + 1]
        scale = max(1.0, np.nanmax(np.abs(fd)))
        assert np.max(np.abs(fd[1:-1] + nu[2:] * rep.residual)) <= 1e-6 * scale
        if p.left is None:
            assert abs(fd[0] - rep.left_bc) <= 1e-6 * scale
        if p.right is None:
            assert abs(fd[-1] - rep.right_bc) <= 1e-6 * scale


def test_hessian_matches_gradient_differences():
    rng = np.random.default_rng(5)
    for _ in range(15):
        p, x = randomgen.random_problem(rng, H="z1*z2 + z1^2")
        hp, g, _ = functional_hessian(p, x)
        xw = p.window_values(x).astype(float)
        sl = p.free_slice()
        H = hp.dense()
        for k in range(sl.start, sl.stop):
            up, dn = xw.copy(), xw.copy()
            up[k] += 1e-6
            dn[k] -= 1e-6
            col = (functional_gradient(p, up, check_bc=False)[0] - functional_gradient(p, dn, check_bc=False)[0]) / 2e-6
            assert np.allclose(H[:, k - sl.start], col, rtol=1e-5, atol=1e-5 * max(1, np.max(np.abs(H))))
        d = rng.normal(size=g.size)
        assert np.allclose(hp.matvec(d), H @ d)


def test_batch_gradient_matches_single():
    rng = np.random.default_rng(2)
    p, x = randomgen.random_problem(rng, free_left=False, free_right=False)
    base = p.window_values(x).astype(float)
    X = np.tile(base, (4, 1))
    X[:, 1] += np.arange(4) * 0.1
    batch, _ = functional_gradient(p, X)
    for i in range(4):
        single, _ = functional_gradient(p, X[i])
        assert np.allclose(batch[i], single, rtol=1e-13, atol=1e-13)


def test_fd_fallback_close_to_symbolic():
    rng = np.random.default_rng(9)
    p, x = randomgen.random_problem(rng)
    exact = el_residual(p, x)
    approx = el_residual(p.with_fd(1e-6), x)
    scale = max(1.0, exact.max_abs())
    assert np.max(np.abs(exact.residual - approx.residual)) <= 1e-5 * scale


def test_abs_integrand_via_finite_differences():
    ts = TimeScale([0, 1, 2, 3])
    p = VariationalProblem(ts, 0, 3, CompositeFunctional.from_text("z1", ["abs(v)"]), 0, 3).with_fd(1e-6)
    rep = el_residual(p, GridFunction(ts, [0, 1, 2, 3]))
    assert np.max(np.abs(rep.residual)) <= 1e-8


def test_specialized_constructors_match_text():
    f1, f2 = Integrand.from_text("v^2"), Integrand.from_text("t*v")
    p_text = VariationalProblem(S3, -1, 0, EX1, 1, 0)
    p_spec = VariationalProblem(S3, -1, 0, specialize_product(f1, f2), 1, 0)
    x = GridFunction(S3, [1, 0.3, 0])
    assert el_residual(p_text, x).residual.tolist() == el_residual(p_spec, x).residual.tolist()
    q = VariationalProblem(S_m2, -2, 0, specialize_quotient(Integrand.from_text("v^2"),
                                                           Integrand.from_text("v + v^2")), 4, 0)
    xq = GridFunction.sample(S_m2, lambda t: -2 * t)
    assert eval_functional(q, xq) == 2 and el_residual(q, xq).max_abs() == 0


def test_product_with_unit_second_factor():
    ts = TimeScale([0, 0.5, 1.25, 2])
    f1 = Integrand.from_text("v^2 + y*t")
    prod = VariationalProblem(ts, 0, 2, specialize_product(f1, Integrand.from_text("1")), 1, None)
    single = VariationalProblem(ts, 0, 2, CompositeFunctional(parse("z1", ("z1",)), (f1,)), 1, None)
    x = GridFunction(ts, [1, 0.2, -0.4, 0.9])
    a, b = el_residual(prod, x), el_residual(single, x)
    assert np.allclose(a.residual, 2 * b.residual, rtol=1e-14)
    assert a.right_bc == pytest.approx(2 * b.right_bc, rel=1e-14)


def test_corollaries_match_general_on_example():
    p, x = ex1_3pt(0.3)
    gen, cor = el_residual(p, x), product_corollary_residual(p, x)
    assert np.allclose(gen.residual, cor.residual, rtol=1e-14)
    pq = VariationalProblem(S3, -1, 0, CompositeFunctional.from_text("z1/z2", ["v^2", "1 + v^2"]), 1, None)
    xq = GridFunction(S3, [1, 0.3, -0.2])
    gq, cq = el_residual(pq, xq), quotient_corollary_residual(pq, xq)
    F2 = gq.F[1]
    assert np.allclose(cq.residual, F2 * gq.residual, rtol=1e-13)
    assert cq.right_bc == pytest.approx(F2 * gq.right_bc, rel=1e-13)


def test_symbolic_functional_oracle():
    """Exact F and dL/dx on a small rational scale against sympy."""
    pts = [sp.Rational(-1), sp.Rational(-2, 5), sp.Rational(1, 3), sp.Rational(1)]
    xs = sp.symbols("x0:4")
    L, F = oracles.discrete_functional(pts, list(xs), lambda F: F[0] / F[1],
                                       [lambda t, y, v: v ** 2 + t * y, lambda t, y, v: 2 + v])
    ts = TimeScale([float(p) for p in pts])
    p = VariationalProblem(ts, -1, 1, CompositeFunctional.from_text("z1/z2", ["v^2 + t*y", "2 + v"]))
    vals = [0.3, -0.7, 1.1, 0.4]
    sub = dict(zip(xs, [sp.nsimplify(v) for v in vals]))
    g, Fn = functional_gradient(p, np.array(vals))
    assert Fn[0] == pytest.approx(float(F[0].subs(sub)), rel=1e-14)
    want = [float(sp.diff(L, x).subs(sub)) for x in xs]
    assert np.allclose(g, want, rtol=1e-12)


def test_ex1_residual_on_fine_grids_is_first_order():
    prev = None
    for n in (1000, 2000):
        ts = TimeScale.uniform(-1, 0, n)
        p = VariationalProblem(ts, -1, 0, EX1, 1, 0)
        x = GridFunction.sample(ts, lambda t: -t ** 2 - 2 * t)
        x = GridFunction(ts, np.r_[1.0, x.values[1:-1], 0.0])
        r = el_residual(p, x).max_abs()
        if n == 1000:
            assert r <= 3e-2
        else:
            assert 1.7 <= prev / r <= 2.3
        prev = r


def test_continuous_limit_of_residual():
    """Discrete residual tends to minus the classical one, sum H'_i (f_iy - d/dt f_iv)."""
    fn = CompositeFunctional.from_text("z1*z2", ["v^2 + y^2", "1 + t*v"])

    def x(t):
        return np.sin(2 * t) + t

    def classical(t, F1, F2):
        xpp = -4 * np.sin(2 * t)
        el1 = 2 * x(t) - 2 * xpp  # f_1y - (f_1v)'
        el2 = 0.0 - 1.0           # f_2v = t
        return F2 * el1 + F1 * el2

    errs = []
    for n in (400, 800, 1600):
        ts = TimeScale.uniform(0, 1, n)
        p = VariationalProblem(ts, 0, 1, fn, float(x(0.0)), float(x(1.0)))
        g = GridFunction.sample(ts, x)
        g = GridFunction(ts, np.r_[p.left, g.values[1:-1], p.right])
        rep = el_residual(p, g)
        F1, F2 = rep.F
        errs.append(np.max(np.abs(rep.residual + classical(rep.points, F1, F2))))
    assert 1.6 <= errs[0] / errs[1] <= 2.4 and 1.6 <= errs[1] / errs[2] <= 2.4
