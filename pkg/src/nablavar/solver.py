"""Extremal search for discrete composed variational problems.

``direct_minimize`` treats the free grid values as unknowns.  By default
(``method="newton"``) it drives the stationarity system ``grad H(F(x)) = 0``
to zero with Levenberg-Marquardt damped Newton steps and Armijo backtracking
on the residual merit, so it finds minima, maxima and saddles alike.  When
that merit levels off at a positive value the problem has no stationary point
nearby, and the least-residual point is returned with status
``no-stationary-point``.  ``method="bfgs"`` is plain quasi-Newton descent
(or ascent) on the functional itself.

The Hessian of ``H(F(x))`` is tridiagonal plus rank n, so every linear solve
is a sparse bordered system and an iteration costs O(grid size).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .calculus import GridFunction
from .errors import DomainError, UsageError
from .expr import Expr, denominators, differentiate, evaluate, parse, to_string
from .variational import (
    ELReport, VariationalProblem, el_residual, eval_functional, functional_gradient,
    functional_hessian,
)

log = logging.getLogger(__name__)

__all__ = [
    "SolveOptions", "SolveResult", "ScanResult", "QSystemResult",
    "direct_minimize", "stationary_scan_1d", "solve_q_system", "verify_extremal",
    "fit_polynomial",
]

ARMIJO_C = 1e-4
SHRINK = 0.5
MIN_STEP = 2.0 ** -40
GUARD_EPS = 1e-12


@dataclass
class SolveOptions:
    """Knobs shared by the solvers.

    ``tol`` bounds the EL and natural-boundary residuals at convergence (the
    gradient rescaled by the graininess, see :func:`direct_minimize`).
    """

    tol: float = 1e-10
    max_iter: int = 500
    starts: int = 16
    box: tuple = (-10.0, 10.0)
    fd_step: float = 1e-6
    finite_difference: bool = False
    seed: int = 0
    method: str = "newton"
    sense: str = "min"

    def __post_init__(self):
        if not self.tol > 0:
            raise UsageError("tolerance must be positive")
        if int(self.max_iter) < 1:
            raise UsageError("max_iter must be at least 1")
        if self.method not in ("newton", "bfgs"):
            raise UsageError(f"unknown method {self.method!r}")
        if self.sense not in ("min", "max"):
            raise UsageError(f"unknown sense {self.sense!r}")
        lo, hi = self.box
        if not hi > lo:
            raise UsageError("start box needs lo < hi")


@dataclass
class SolveResult:
    status: str  # converged | no-stationary-point | max-iterations | domain-error
    solution: Optional[GridFunction]
    F: tuple
    report: Optional[ELReport]
    iterations: int
    value: Optional[float] = None
    floor: Optional[float] = None
    classification: Optional[str] = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_dict(self) -> dict:
        sol = self.solution
        return {
            "status": self.status,
            "iterations": self.iterations,
            "message": self.message,
            "value": self.value,
            "F": list(self.F),
            "floor": self.floor,
            "classification": self.classification,
            "points": sol.points.tolist() if sol is not None else None,
            "x": sol.values.tolist() if sol is not None else None,
            "el": self.report.as_dict() if self.report is not None else None,
        }


# ---------------------------------------------------------------------------
# helpers


def _initial_guess(p: VariationalProblem, x0):
    pts = p.window_points
    if x0 is not None:
        if isinstance(x0, GridFunction):
            xw = p.window_values(x0, check_bc=False).astype(float)
        else:
            xw = np.array(p.window_values(np.asarray(x0, dtype=float), check_bc=False), dtype=float)
    elif p.left is not None and p.right is not None:
        xw = p.left + (p.right - p.left) * (pts - pts[0]) / (pts[-1] - pts[0])
        xw[-1] = p.right
    else:
        c = p.left if p.left is not None else (p.right if p.right is not None else 0.0)
        xw = np.full(pts.size, c)
    xw = np.array(xw, dtype=float)
    if p.left is not None:
        xw[0] = p.left
    if p.right is not None:
        xw[-1] = p.right
    return xw


def _residual_scale(p: VariationalProblem):
    """Per free value: the factor turning dL/dx into the EL or boundary residual."""
    nu = p.scale.nu_array()[p.ia:p.ib + 1]
    m = p.ib - p.ia
    d = np.ones(m + 1)
    d[1:m] = nu[2:m + 1]           # interior x_j pairs with the residual at sigma(t_j)
    return d[p.free_slice()]


def _guard_exprs(p: VariationalProblem):
    return denominators(p.functional.H) + [d for g in p.functional.Hgrad for d in denominators(g)]


def _guard_ok(p, guards, F_old, F_new):
    if not guards:
        return True
    names = {f"z{i + 1}": F for i, F in enumerate(F_new)}
    old = {f"z{i + 1}": F for i, F in enumerate(F_old)}
    for g in guards:
        try:
            new_v = evaluate(g, names)
            old_v = evaluate(g, old)
        except DomainError:
            return False
        if abs(new_v) < GUARD_EPS or np.sign(new_v) != np.sign(old_v):
            return False
    return True


def _classify(hp) -> Optional[str]:
    m = hp.diag.size
    if m > 1000:
        return None
    ev = np.linalg.eigvalsh(hp.dense())
    scale = max(np.max(np.abs(ev)), 1e-300)
    if np.any(np.abs(ev) <= 1e-9 * scale):
        return "degenerate"
    if np.all(ev > 0):
        return "minimum"
    if np.all(ev < 0):
        return "maximum"
    return "saddle"


def _finish(p, xw, status, iterations, message, floor=None, classify=True):
    sol = GridFunction(p.scale, xw, p.ia)
    try:
        report = el_residual(p, sol)
        value = eval_functional(p, sol)
    except DomainError as exc:
        return SolveResult("domain-error", sol, (), None, iterations, message=str(exc))
    cls = None
    if status == "converged" and classify:
        hp, _, _ = functional_hessian(p, sol)
        cls = _classify(hp)
    return SolveResult(status, sol, report.F, report, iterations, value=value, floor=floor,
                       classification=cls, message=message)


def _bordered_solve(hp, D, g, lam):
    """Solve ``(H D^-1 H + lam I) d = -H D^-1 g`` through a sparse bordered system.

    With ``H = T + U W U^T`` the unknowns are (u, d, mu1, mu2)::

        D u + T d + U mu1 = -g
        T u + U mu2 - lam d = 0
        W U^T d - mu1 = 0
        W U^T u - mu2 = 0

    For ``lam = 0`` this is the Newton step ``H d = -g``.
    """
    m = hp.diag.size
    n = hp.W.shape[0]
    T = sp.diags([hp.off, hp.diag, hp.off], [-1, 0, 1], shape=(m, m), format="csr") if m > 1 \
        else sp.csr_matrix(hp.diag.reshape(1, 1))
    U = sp.csr_matrix(hp.U)
    WUt = sp.csr_matrix(hp.W @ hp.U.T)
    In = sp.identity(n, format="csr")
    Z_mm = sp.csr_matrix((m, m))
    Z_mn = sp.csr_matrix((m, n))
    Z_nm = sp.csr_matrix((n, m))
    Z_nn = sp.csr_matrix((n, n))
    A = sp.bmat([
        [sp.diags(D), T, U, Z_mn],
        [T, -lam * sp.identity(m) if lam else Z_mm, Z_mn, U],
        [Z_nm, WUt, -In, Z_nn],
        [WUt, Z_nm, Z_nn, -In],
    ], format="csc")
    rhs = np.concatenate([-g, np.zeros(m + 2 * n)])
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.MatrixRankWarning)
        try:
            sol = spla.spsolve(A, rhs)
        except RuntimeError:
            return None
    d = sol[m:2 * m]
    if not np.all(np.isfinite(d)):
        return None
    return d


# ---------------------------------------------------------------------------
# direct method


def direct_minimize(p: VariationalProblem, opts: SolveOptions | None = None, x0=None) -> SolveResult:
    """Find an extremal of ``p`` over its free values (interior plus free ends).

    Convergence means every EL residual on ``(sigma(a), b]`` and every
    applicable natural-boundary residual is at most ``opts.tol``; these
    residuals are the gradient entries divided by the matching graininess.
    ``x0`` is an optional starting candidate (whole scale or interval values);
    the default interpolates the fixed end values linearly.
    """
    opts = opts or SolveOptions()
    if opts.finite_difference:
        p = p.with_fd(opts.fd_step)
    sl = p.free_slice()
    if sl.stop <= sl.start:
        raise UsageError("problem has no free values")
    xw = _initial_guess(p, x0)
    if opts.method == "bfgs":
        return _bfgs(p, xw, opts)
    return _newton_lm(p, xw, opts)


def _eval_point(p, xw):
    """(gradient over free values, F) or None when the point is outside the domain."""
    try:
        g, F = functional_gradient(p, xw, check_bc=False)
    except DomainError:
        return None
    return g, F


def _newton_lm(p, xw, opts):
    sl = p.free_slice()
    D = _residual_scale(p)
    guards = _guard_exprs(p)
    pt = _eval_point(p, xw)
    if pt is None:
        return SolveResult("domain-error", None, (), None, 0,
                           message="functional undefined at the initial guess")
    g, F = pt
    phi = 0.5 * float(np.sum(g * g / D))
    lam = 0.0
    lam_unit = None
    best_phi, best_it = phi, 0
    it = 0
    for it in range(1, int(opts.max_iter) + 1):
        if np.max(np.abs(g / D)) <= opts.tol:
            return _finish(p, xw, "converged", it - 1, "EL and boundary residuals within tolerance")
        try:
            hp, g, F = functional_hessian(p, xw, check_bc=False)
        except DomainError as exc:
            return _finish(p, xw, "domain-error", it, str(exc), classify=False)
        if lam_unit is None:
            lam_unit = float(np.max(np.abs(hp.diag)) ** 2 / np.max(D)) or 1.0
        d = _bordered_solve(hp, D, g, lam)
        accepted = False
        if d is not None:
            dphi = float(np.dot(g / D, hp.matvec(d)))
            if dphi < 0:
                alpha = 1.0
                while alpha >= MIN_STEP:
                    trial = xw.copy()
                    trial[sl] += alpha * d
                    pt = _eval_point(p, trial)
                    if pt is not None and _guard_ok(p, guards, F, pt[1]):
                        g_new, F_new = pt
                        with np.errstate(over="ignore"):
                            phi_new = 0.5 * float(np.sum(g_new * g_new / D))
                        if phi_new <= phi + ARMIJO_C * alpha * dphi:
                            xw, g, F, phi = trial, g_new, F_new, phi_new
                            accepted = True
                            break
                    alpha *= SHRINK
        if accepted:
            lam = 0.0 if lam <= 1e-12 * lam_unit else lam / 10.0
        else:
            lam = 1e-12 * lam_unit if lam == 0 else lam * 10.0
            if lam > 1e12 * lam_unit:
                break
        if phi < best_phi * (1 - 1e-9):
            best_phi, best_it = phi, it
        elif it - best_it >= 40:
            break
    if np.max(np.abs(g / D)) <= opts.tol:
        return _finish(p, xw, "converged", it, "EL and boundary residuals within tolerance")
    floor = float(np.max(np.abs(g / D)))
    if it >= opts.max_iter:
        return _finish(p, xw, "max-iterations", it, "iteration limit reached", floor=floor)
    return _finish(p, xw, "no-stationary-point", it,
                   "residual merit stalled at a positive floor; returning the least-residual point",
                   floor=floor)


def _bfgs(p, xw, opts):
    sl = p.free_slice()
    D = _residual_scale(p)
    guards = _guard_exprs(p)
    sign = 1.0 if opts.sense == "min" else -1.0

    def objective(x):
        try:
            g, F = functional_gradient(p, x, check_bc=False)
            val = float(p.functional.outer(F))
        except DomainError:
            return None
        return sign * val, sign * g, F

    cur = objective(xw)
    if cur is None:
        return SolveResult("domain-error", None, (), None, 0,
                           message="functional undefined at the initial guess")
    f, g, F = cur
    m = g.size
    Hinv = np.diag(D)
    it = 0
    for it in range(1, int(opts.max_iter) + 1):
        if np.max(np.abs(g / D)) <= opts.tol:
            return _finish(p, xw, "converged", it - 1, "EL and boundary residuals within tolerance")
        d = -Hinv @ g
        slope = float(g @ d)
        if slope >= 0:
            Hinv = np.diag(D)
            d = -Hinv @ g
            slope = float(g @ d)
        alpha = 1.0
        new = None
        while alpha >= MIN_STEP:
            trial = xw.copy()
            trial[sl] += alpha * d
            cand = objective(trial)
            if cand is not None and _guard_ok(p, guards, F, cand[2]) \
                    and cand[0] <= f + ARMIJO_C * alpha * slope:
                new = (trial, cand)
                break
            alpha *= SHRINK
        if new is None:
            return _finish(p, xw, "no-stationary-point", it,
                           "line search failed to make progress",
                           floor=float(np.max(np.abs(g / D))))
        trial, (f_new, g_new, F_new) = new
        if not math.isfinite(f_new) or np.max(np.abs(trial)) > 1e12:
            return _finish(p, trial, "max-iterations", it, "objective appears unbounded")
        s = trial[sl] - xw[sl]
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-300:
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = (Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s))
        xw, f, g, F = trial, f_new, g_new, F_new
    if np.max(np.abs(g / D)) <= opts.tol:
        return _finish(p, xw, "converged", it, "EL and boundary residuals within tolerance")
    return _finish(p, xw, "max-iterations", it, "iteration limit reached",
                   floor=float(np.max(np.abs(g / D))))


def verify_extremal(p: VariationalProblem, x, tol: float):
    """``(passed, report)``: every residual on the assertion set and free ends is within ``tol``."""
    report = el_residual(p, x)
    return report.max_abs() <= tol, report


# ---------------------------------------------------------------------------
# one free value: exhaustive scan


@dataclass
class ScanResult:
    status: str  # converged (roots found) | no-stationary-point
    roots: list
    brackets: list
    excluded: list
    floor: float
    samples: int
    free_point: float
    polynomial: Optional[tuple] = None
    discriminant: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "free_point": self.free_point,
            "samples": self.samples,
            "floor": self.floor,
            "brackets": [list(b) for b in self.brackets],
            "excluded": [list(b) for b in self.excluded],
            "derivative_polynomial": list(self.polynomial) if self.polynomial else None,
            "discriminant": self.discriminant,
            "roots": [r.as_dict() for r in self.roots],
        }


def fit_polynomial(xs, ys, max_degree=6, rtol=1e-9):
    """Lowest-degree polynomial (coefficients, highest first) reproducing the samples, or None."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    yscale = max(1.0, float(np.max(np.abs(ys))))
    for deg in range(max_degree + 1):
        if xs.size <= deg + 1:
            break
        coef = np.polynomial.polynomial.Polynomial.fit(xs, ys, deg).convert().coef
        coef = np.pad(coef, (0, deg + 1 - coef.size))
        if np.max(np.abs(np.polynomial.polynomial.polyval(xs, coef) - ys)) <= rtol * yscale:
            coef = np.array([0.0 if abs(c) < 1e-12 * yscale else float(f"{c:.10g}") for c in coef])
            return tuple(coef[::-1].tolist())
    return None


def stationary_scan_1d(p: VariationalProblem, lo: float, hi: float, samples: int = 10_000,
                       free_point: float | None = None, opts: SolveOptions | None = None) -> ScanResult:
    """Sample ``dL/dm`` of the single free value ``m`` on ``[lo, hi]``, bracket and bisect roots."""
    opts = opts or SolveOptions()
    if opts.finite_difference:
        p = p.with_fd(opts.fd_step)
    sl = p.free_slice()
    if sl.stop - sl.start != 1:
        raise UsageError(f"stationary_scan_1d needs exactly one free value, "
                         f"problem has {max(sl.stop - sl.start, 0)}")
    k = sl.start
    t_free = float(p.window_points[k])
    if free_point is not None and p.scale.snap(free_point) != t_free:
        raise UsageError(f"the free value sits at t={t_free!r}, not {free_point!r}")
    if not hi > lo or samples < 2:
        raise UsageError("scan needs lo < hi and at least two samples")
    base = _initial_guess(p, None)
    ms = np.linspace(lo, hi, int(samples))

    def batch(mvals):
        X = np.tile(base, (mvals.size, 1))
        X[:, k] = mvals
        return functional_gradient(p, X)[0][:, 0]

    try:
        dvals = batch(ms)
    except DomainError:
        dvals = np.empty_like(ms)
        for i, m in enumerate(ms):
            try:
                dvals[i] = batch(np.array([m]))[0]
            except DomainError:
                dvals[i] = np.nan
    valid = np.isfinite(dvals)
    excluded = _runs(ms, ~valid)
    if not np.any(valid):
        raise DomainError("functional undefined over the whole scan range")

    def deriv(m):
        return float(batch(np.array([m]))[0])

    brackets, roots_m = [], []
    for i in range(ms.size - 1):
        if not (valid[i] and valid[i + 1]):
            continue
        d0, d1 = dvals[i], dvals[i + 1]
        if d0 == 0:
            roots_m.append(ms[i])
            brackets.append((ms[i], ms[i]))
        elif d0 * d1 < 0:
            a, b = ms[i], ms[i + 1]
            fa = d0
            for _ in range(200):
                mid = 0.5 * (a + b)
                if mid in (a, b):
                    break
                fm = deriv(mid)
                if fm == 0:
                    a = b = mid
                    break
                if (fm < 0) == (fa < 0):
                    a, fa = mid, fm
                else:
                    b = mid
            brackets.append((ms[i], ms[i + 1]))
            roots_m.append(0.5 * (a + b))
    if valid[-1] and dvals[-1] == 0:
        roots_m.append(ms[-1])
        brackets.append((ms[-1], ms[-1]))

    roots = []
    for m in roots_m:
        xw = base.copy()
        xw[k] = m
        res = _finish(p, xw, "converged", 0, "bisected sign change of dL/dm")
        roots.append(res)
    poly = fit_polynomial(ms[valid], dvals[valid])
    disc = None
    if poly is not None and len(poly) == 3:
        A, B, C = poly
        disc = B * B - 4 * A * C
    return ScanResult(
        status="converged" if roots else "no-stationary-point",
        roots=roots, brackets=brackets, excluded=excluded,
        floor=float(np.min(np.abs(dvals[valid]))), samples=int(samples),
        free_point=t_free, polynomial=poly, discriminant=disc,
    )


def _runs(xs, mask):
    out = []
    i = 0
    while i < mask.size:
        if mask[i]:
            j = i
            while j + 1 < mask.size and mask[j + 1]:
                j += 1
            out.append((float(xs[i]), float(xs[j])))
            i = j + 1
        else:
            i += 1
    return out


# ---------------------------------------------------------------------------
# self-consistency systems for the Q constants


@dataclass
class QSystemResult:
    verdict: str  # roots-found | no-real-solutions | inconclusive
    roots: list
    excluded: list
    abandoned: list
    starts: int
    scan_min: Optional[float] = None
    scan_floor: Optional[float] = None
    equations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "equations": self.equations,
            "roots": [{"q": [float(v) for v in r["q"]], "residual": r["residual"],
                       "iterations": r["iterations"]} for r in self.roots],
            "excluded": [{"q": [float(v) for v in r["q"]], "residual": r["residual"],
                          "guard": r["guard"]} for r in self.excluded],
            "starts": self.starts,
            "abandoned": len(self.abandoned),
            "scan_min": self.scan_min,
            "scan_floor": self.scan_floor,
        }


class _QSystem:
    def __init__(self, residuals, names):
        self.names = names
        self.F = residuals
        self.J = [[differentiate(r, q) for q in names] for r in residuals]
        self._J2 = None

    def env(self, q):
        return {name: q[..., i] if np.ndim(q) > 1 else q[i] for i, name in enumerate(self.names)}

    def value(self, q):
        env = self.env(q)
        return np.array([evaluate(r, env) for r in self.F])

    def jac(self, q):
        env = self.env(q)
        return np.array([[evaluate(e, env) for e in row] for row in self.J])

    def second(self, q):
        """Array ``S[i, j, k] = d^2 F_i / dq_j dq_k``."""
        if self._J2 is None:
            self._J2 = [[[differentiate(e, q_) for q_ in self.names] for e in row] for row in self.J]
        env = self.env(q)
        return np.array([[[evaluate(e, env) for e in col] for col in row] for row in self._J2])


def _newton(system, q, tol, max_iter):
    """Damped Newton from one start.

    Returns ``(q, iterations)``, or ``(None, reason)`` when the start fails.
    """
    try:
        Fq = system.value(q)
    except DomainError:
        return None, "domain error at start"
    its = 0
    for _ in range(max_iter):
        norm = float(np.max(np.abs(Fq)))
        if norm <= tol:
            break
        try:
            J = system.jac(q)
            d = np.linalg.solve(J, -Fq)
        except (np.linalg.LinAlgError, DomainError):
            return None, "singular Jacobian"
        phi = 0.5 * float(Fq @ Fq)
        alpha = 1.0
        while alpha >= MIN_STEP:
            try:
                Fn = system.value(q + alpha * d)
                if 0.5 * float(Fn @ Fn) <= (1 - 2 * ARMIJO_C * alpha) * phi:
                    break
            except DomainError:
                pass
            alpha *= SHRINK
        else:
            return None, "line search failed"
        q = q + alpha * d
        Fq = Fn
        its += 1
        if np.max(np.abs(q)) > 1e8:
            return None, "diverged"
    else:
        if float(np.max(np.abs(Fq))) > tol:
            return None, "iteration limit"
    # a few more plain Newton steps while the residual keeps dropping
    for _ in range(10):
        try:
            d = np.linalg.solve(system.jac(q), -Fq)
            Fn = system.value(q + d)
        except (np.linalg.LinAlgError, DomainError):
            break
        if np.max(np.abs(Fn)) >= np.max(np.abs(Fq)) or not np.all(np.isfinite(d)):
            break
        q, Fq = q + d, Fn
    return _polish_singular(system, q, tol), its


def _polish_singular(system, q, tol):
    """Refine a root where the Jacobian is (nearly) rank deficient.

    At such a root Newton only gets within about sqrt(eps).  The extended
    system ``F(q) = 0, J(q) phi = 0, c.phi = 1`` has a regular solution
    there, and Gauss-Newton on it converges quadratically.
    """
    n = q.size
    try:
        J = system.jac(q)
    except DomainError:
        return q
    _, svals, Vt = np.linalg.svd(J)
    if svals[0] == 0 or svals[-1] > 1e-6 * svals[0]:
        return q
    c = Vt[-1]
    z = np.concatenate([q, c])

    def G(z):
        qq, ph = z[:n], z[n:]
        return np.concatenate([system.value(qq), system.jac(qq) @ ph, [c @ ph - 1.0]])

    try:
        Gz = G(z)
        for _ in range(30):
            qq, ph = z[:n], z[n:]
            Jq = system.jac(qq)
            S = system.second(qq)
            top = np.hstack([Jq, np.zeros((n, n))])
            mid = np.hstack([np.einsum("ijk,j->ik", S, ph), Jq])
            bot = np.concatenate([np.zeros(n), c])[None, :]
            JG = np.vstack([top, mid, bot])
            step = np.linalg.lstsq(JG, -Gz, rcond=None)[0]
            Gn = G(z + step)
            if np.linalg.norm(Gn) >= np.linalg.norm(Gz):
                break
            z, Gz = z + step, Gn
    except (DomainError, np.linalg.LinAlgError):
        return q
    q_new = z[:n]
    if np.max(np.abs(system.value(q_new))) <= tol and np.linalg.norm(q_new - q) < 1e-4:
        return q_new
    return q


def _grid_scan(system, box, n):
    lo, hi = box
    per_dim = max(11, int(round(10 ** (6.0 / n))))
    axes = [np.linspace(lo, hi, per_dim)] * n
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    env = system.env(mesh)
    vals = np.stack([np.broadcast_to(evaluate(r, env, strict=False), mesh.shape[:1])
                     for r in system.F], axis=-1)
    norms = np.max(np.abs(vals), axis=-1)
    norms = norms[np.isfinite(norms)]
    return float(np.min(norms)) if norms.size else math.inf


def solve_q_system(residuals: Sequence, opts: SolveOptions | None = None, guards: Sequence = (),
                   names: Sequence[str] | None = None, root_tol: float = 1e-10,
                   dedup: float = 1e-8, scan_floor: float = 1e-3) -> QSystemResult:
    """Multi-start damped Newton for a small system ``residuals(q1..qn) = 0``.

    Starts are drawn uniformly from ``opts.box`` per coordinate with
    ``opts.seed``.  Roots agreeing to ``dedup`` are merged.  A root where some
    ``guards`` expression is within 1e-8 of zero is reported as excluded.  If
    no start converges, the residual norm is scanned on a dense grid of the
    box; "no-real-solutions" requires that minimum to exceed ``scan_floor``.
    """
    opts = opts or SolveOptions()
    if names is None:
        names = tuple(f"q{i}" for i in range(1, len(residuals) + 1))
    exprs = [parse(r, names) if isinstance(r, str) else r for r in residuals]
    guard_exprs = [parse(g, names) if isinstance(g, str) else g for g in guards]
    if len(exprs) != len(names):
        raise UsageError("the system must be square")
    if len(names) > 4:
        raise UsageError("solve_q_system handles at most four unknowns")
    system = _QSystem(exprs, tuple(names))
    rng = np.random.default_rng(opts.seed)
    lo, hi = opts.box
    starts = rng.uniform(lo, hi, size=(int(opts.starts), len(names)))
    found, abandoned = [], []
    for idx, q0 in enumerate(starts):
        q, info = _newton(system, q0.copy(), root_tol, int(opts.max_iter))
        if q is None:
            why = info
            log.info("start %d at %s abandoned: %s", idx, q0.tolist(), why)
            abandoned.append((idx, why))
            continue
        res = float(np.max(np.abs(system.value(q))))
        for r in found:
            if np.linalg.norm(r["q"] - q) <= dedup:
                if res < r["residual"]:
                    r["q"], r["residual"] = q, res
                break
        else:
            found.append({"q": q, "residual": res, "start": idx, "iterations": info})
    roots, excluded = [], []
    for r in found:
        env = system.env(r["q"])
        bad = None
        for g in guard_exprs:
            try:
                if abs(evaluate(g, env)) <= 1e-8:
                    bad = to_string(g)
            except DomainError:
                bad = to_string(g)
        if bad is None:
            roots.append(r)
        else:
            excluded.append(dict(r, guard=f"{bad} != 0"))
    roots.sort(key=lambda r: tuple(r["q"]))
    excluded.sort(key=lambda r: tuple(r["q"]))
    result = QSystemResult("roots-found" if found else "inconclusive", roots, excluded,
                           abandoned, int(opts.starts),
                           equations=[to_string(e) for e in exprs])
    if not found:
        smin = _grid_scan(system, opts.box, len(names))
        result.scan_min = smin
        result.scan_floor = scan_floor
        result.verdict = "no-real-solutions" if smin > scan_floor else "inconclusive"
    return result
