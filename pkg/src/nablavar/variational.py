"""Composed nabla variational functionals H(F1, ..., Fn) and their optimality residuals.

For a candidate ``x`` on a scale with interval ``[a, b]`` each component is

    F_i = sum over t in (a, b] of nu(t) * f_i(t, x(rho(t)), x_nabla(t))

and the Euler-Lagrange residual at ``t`` is

    sum_i H'_i(F) * [ (f_iv)^nabla(t) - f_iy(t) ]

where ``f_iv`` is the grid signal ``t -> f_iv(t, x^rho(t), x^nabla(t))`` on
``(a, b]``.  Its nabla derivative needs two backward steps, so the residual is
asserted on ``(sigma(a), b]``.  With ``x_j`` the interior values this is
exactly ``dL/dx_j = -nu(sigma(t_j)) * residual(sigma(t_j))``; the natural
boundary residuals are the derivatives with respect to free end values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import calculus
from .calculus import GridFunction, csum
from .errors import DomainError, PreconditionError, UsageError
from .expr import Expr, differentiate, evaluate, free_variables, parse, to_string
from .timescale import TimeScale

__all__ = [
    "INTEGRAND_VARS", "Integrand", "CompositeFunctional", "VariationalProblem",
    "ELReport", "HessianParts", "outer_variables",
    "eval_components", "eval_functional", "el_residual", "natural_bc_left",
    "natural_bc_right", "functional_gradient", "functional_hessian",
    "specialize_product", "specialize_quotient",
    "product_corollary_residual", "quotient_corollary_residual",
]

INTEGRAND_VARS = ("t", "y", "v")


def outer_variables(n: int) -> tuple:
    return tuple(f"z{i}" for i in range(1, n + 1))


def _fd_first(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2 * h)


@dataclass(frozen=True)
class Integrand:
    """One Lagrangian ``f(t, y, v)`` together with its symbolic partials."""

    f: Expr
    fy: Expr = field(init=False)
    fv: Expr = field(init=False)
    fyy: Expr = field(init=False, repr=False)
    fyv: Expr = field(init=False, repr=False)
    fvv: Expr = field(init=False, repr=False)

    def __post_init__(self):
        extra = free_variables(self.f) - set(INTEGRAND_VARS)
        if extra:
            raise UsageError(f"integrand uses undeclared variables: {sorted(extra)}")
        fy = differentiate(self.f, "y")
        fv = differentiate(self.f, "v")
        object.__setattr__(self, "fy", fy)
        object.__setattr__(self, "fv", fv)
        object.__setattr__(self, "fyy", differentiate(fy, "y"))
        object.__setattr__(self, "fyv", differentiate(fy, "v"))
        object.__setattr__(self, "fvv", differentiate(fv, "v"))

    @classmethod
    def from_text(cls, text: str) -> "Integrand":
        return cls(parse(text, INTEGRAND_VARS))

    @property
    def text(self) -> str:
        return to_string(self.f)

    def value(self, t, y, v):
        return _broadcast(evaluate(self.f, {"t": t, "y": y, "v": v}), y)

    def partials(self, t, y, v, fd_step=None):
        """``(f_y, f_v)`` at the given arguments; central differences if ``fd_step`` is set."""
        if fd_step is None:
            env = {"t": t, "y": y, "v": v}
            return (_broadcast(evaluate(self.fy, env), y), _broadcast(evaluate(self.fv, env), y))
        hy = fd_step * np.maximum(1.0, np.abs(y))
        hv = fd_step * np.maximum(1.0, np.abs(v))
        fy = _fd_first(lambda yy: self.value(t, yy, v), y, hy)
        fv = _fd_first(lambda vv: self.value(t, y, vv), v, hv)
        return fy, fv

    def second_partials(self, t, y, v, fd_step=None):
        """``(f_yy, f_yv, f_vv)``; with ``fd_step`` set they difference the first partials."""
        if fd_step is None:
            env = {"t": t, "y": y, "v": v}
            return tuple(_broadcast(evaluate(e, env), y) for e in (self.fyy, self.fyv, self.fvv))
        h = np.sqrt(fd_step)
        hy = h * np.maximum(1.0, np.abs(y))
        hv = h * np.maximum(1.0, np.abs(v))
        fyy = _fd_first(lambda yy: self.partials(t, yy, v, fd_step)[0], y, hy)
        fyv = _fd_first(lambda vv: self.partials(t, y, vv, fd_step)[0], v, hv)
        fvv = _fd_first(lambda vv: self.partials(t, y, vv, fd_step)[1], v, hv)
        return fyy, fyv, fvv


def _broadcast(value, like):
    return np.broadcast_to(np.asarray(value, dtype=float), np.shape(like)).copy()


@dataclass(frozen=True)
class CompositeFunctional:
    """Outer map ``H(z1, ..., zn)`` applied to n nabla integrals."""

    H: Expr
    integrands: tuple
    Hgrad: tuple = field(init=False)
    Hhess: tuple = field(init=False, repr=False)

    def __post_init__(self):
        integrands = tuple(self.integrands)
        if not integrands:
            raise UsageError("a functional needs at least one integrand")
        object.__setattr__(self, "integrands", integrands)
        names = outer_variables(len(integrands))
        extra = free_variables(self.H) - set(names)
        if extra:
            raise UsageError(f"H references {', '.join(sorted(extra))} but only "
                             f"{', '.join(names)} exist")
        grad = tuple(differentiate(self.H, z) for z in names)
        hess = tuple(tuple(differentiate(g, z) for z in names) for g in grad)
        object.__setattr__(self, "Hgrad", grad)
        object.__setattr__(self, "Hhess", hess)

    @classmethod
    def from_text(cls, H: str, integrands: Sequence[str]) -> "CompositeFunctional":
        n = len(integrands)
        return cls(parse(H, outer_variables(n)), tuple(Integrand.from_text(s) for s in integrands))

    @property
    def n(self) -> int:
        return len(self.integrands)

    def _env(self, F):
        return {z: F[..., i] if isinstance(F, np.ndarray) else F[i]
                for i, z in enumerate(outer_variables(self.n))}

    def outer(self, F):
        """``H(F)``; ``F`` is a length-n sequence or an array with last axis n."""
        F = np.asarray(F, dtype=float)
        return evaluate(self.H, self._env(F))

    def outer_gradient(self, F, fd_step=None):
        F = np.asarray(F, dtype=float)
        if fd_step is None:
            env = self._env(F)
            return np.stack([_broadcast(evaluate(g, env), F[..., 0]) for g in self.Hgrad], axis=-1)
        cols = []
        for i in range(self.n):
            h = fd_step * np.maximum(1.0, np.abs(F[..., i]))
            up, dn = F.copy(), F.copy()
            up[..., i] += h
            dn[..., i] -= h
            cols.append((self.outer(up) - self.outer(dn)) / (2 * h))
        return np.stack(cols, axis=-1)

    def outer_hessian(self, F, fd_step=None):
        F = np.asarray(F, dtype=float)
        if fd_step is None:
            env = self._env(F)
            return np.array([[evaluate(e, env) for e in row] for row in self.Hhess])
        h = np.sqrt(fd_step) * np.maximum(1.0, np.abs(F))
        W = np.empty((self.n, self.n))
        for j in range(self.n):
            up, dn = F.copy(), F.copy()
            up[j] += h[j]
            dn[j] -= h[j]
            W[:, j] = (self.outer_gradient(up, fd_step) - self.outer_gradient(dn, fd_step)) / (2 * h[j])
        return 0.5 * (W + W.T)


@dataclass(frozen=True)
class VariationalProblem:
    """Functional + interval ``[a, b]`` of the scale + boundary data.

    ``left``/``right`` hold the fixed end value, or ``None`` when that end is
    free.  ``fd_step`` switches every partial derivative to central
    differences (the fallback for non-smooth expressions such as ``abs``).
    """

    scale: TimeScale
    a: float
    b: float
    functional: CompositeFunctional
    left: Optional[float] = None
    right: Optional[float] = None
    fd_step: Optional[float] = None

    def __post_init__(self):
        ia, ib = self.scale.index(self.a), self.scale.index(self.b)
        if ia >= ib:
            raise DomainError(f"interval needs a < b, got a={self.a!r}, b={self.b!r}")
        object.__setattr__(self, "a", float(self.scale.points[ia]))
        object.__setattr__(self, "b", float(self.scale.points[ib]))
        for name in ("left", "right"):
            val = getattr(self, name)
            if val is not None:
                val = float(val)
                if not np.isfinite(val):
                    raise UsageError(f"{name} boundary value must be finite")
                object.__setattr__(self, name, val)

    @property
    def ia(self) -> int:
        return self.scale.index(self.a)

    @property
    def ib(self) -> int:
        return self.scale.index(self.b)

    @property
    def window_points(self) -> np.ndarray:
        return self.scale.points[self.ia:self.ib + 1]

    def free_slice(self) -> slice:
        """Window-local indices of the unknown values (interior plus free ends)."""
        m = self.ib - self.ia
        lo = 0 if self.left is None else 1
        hi = m + 1 if self.right is None else m
        return slice(lo, hi)

    def with_fd(self, step) -> "VariationalProblem":
        return dataclasses.replace(self, fd_step=step)

    def window_values(self, x, check_bc=True) -> np.ndarray:
        """Values of ``x`` on ``[a, b]`` (last axis), checking the fixed boundary values."""
        ia, ib = self.ia, self.ib
        if isinstance(x, GridFunction):
            if x.scale != self.scale:
                raise PreconditionError("candidate lives on a different scale")
            if x.start > ia or x.stop <= ib:
                raise PreconditionError("candidate is not defined on all of [a, b]")
            xw = np.asarray(x.values[ia - x.start:ib - x.start + 1])
        else:
            arr = np.asarray(x, dtype=float)
            if arr.shape[-1] == len(self.scale):
                xw = arr[..., ia:ib + 1]
            elif arr.shape[-1] == ib - ia + 1:
                xw = arr
            else:
                raise PreconditionError(
                    f"candidate has {arr.shape[-1]} values; expected {len(self.scale)} "
                    f"(whole scale) or {ib - ia + 1} (interval)")
        if check_bc:
            if self.left is not None and np.any(xw[..., 0] != self.left):
                raise PreconditionError(f"x(a) must equal the fixed value {self.left!r}")
            if self.right is not None and np.any(xw[..., -1] != self.right):
                raise PreconditionError(f"x(b) must equal the fixed value {self.right!r}")
        return xw


@dataclass(frozen=True)
class ELReport:
    """Residuals of the Euler-Lagrange equation and of the natural boundary conditions.

    ``points`` is the exact assertion set ``(sigma(a), b]``; ``F`` and
    ``H_grad`` are the component values and outer weights the residual used.
    """

    points: np.ndarray
    residual: np.ndarray
    left_bc: Optional[float]
    right_bc: Optional[float]
    F: tuple
    H_grad: tuple

    def max_abs(self) -> float:
        vals = [float(np.max(np.abs(self.residual)))] if self.residual.size else [0.0]
        vals += [abs(v) for v in (self.left_bc, self.right_bc) if v is not None]
        return max(vals)

    def as_dict(self) -> dict:
        return {
            "F": list(self.F),
            "H_grad": list(self.H_grad),
            "points": self.points.tolist(),
            "residual": self.residual.tolist(),
            "left_bc": self.left_bc,
            "right_bc": self.right_bc,
            "max_abs": self.max_abs(),
        }


# ---------------------------------------------------------------------------
# vectorised core: all arrays may carry leading batch axes


def _sum_last(arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return csum(arr)
    # Neumaier compensated summation along the last axis
    s = np.zeros(arr.shape[:-1])
    c = np.zeros(arr.shape[:-1])
    for k in range(arr.shape[-1]):
        x = arr[..., k]
        t = s + x
        big = np.abs(s) >= np.abs(x)
        c += np.where(big, (s - t) + x, (x - t) + s)
        s = t
    return s + c


class _Terms:
    """Per-term quantities of the nabla sums for a window of values ``xw``."""

    def __init__(self, p: VariationalProblem, xw):
        ia, ib = p.ia, p.ib
        self.p = p
        self.t = p.scale.points[ia + 1:ib + 1]
        self.nu = p.scale.nu_array()[ia + 1:ib + 1]
        self.y = xw[..., :-1]
        self.v = np.diff(xw, axis=-1) / self.nu
        self._partials = None

    def components(self):
        fn = self.p.functional
        F = [_sum_last(self.nu * g.value(self.t, self.y, self.v)) for g in fn.integrands]
        return np.stack(np.broadcast_arrays(*F), axis=-1) if np.ndim(F[0]) else np.array(F)

    def partials(self):
        if self._partials is None:
            self._partials = [g.partials(self.t, self.y, self.v, self.p.fd_step)
                              for g in self.p.functional.integrands]
        return self._partials

    def component_gradients(self):
        """d F_i / d x over the window, stacked on the last axis (..., m+1, n)."""
        out = []
        for fy, fv in self.partials():
            gi = np.zeros(self.y.shape[:-1] + (self.y.shape[-1] + 1,))
            gi[..., :-1] += self.nu * fy - fv
            gi[..., 1:] += fv
            out.append(gi)
        return np.stack(out, axis=-1)

    def el_parts(self):
        """Per-integrand EL residual, left-end and right-end terms."""
        nu = self.nu
        el, left, right = [], [], []
        for fy, fv in self.partials():
            el.append(np.diff(fv, axis=-1) / nu[1:] - fy[..., 1:])
            left.append(nu[0] * fy[..., 0] - fv[..., 0])
            right.append(fv[..., -1])
        return el, left, right


def _outer_weights(p, F):
    try:
        return p.functional.outer_gradient(F, p.fd_step)
    except DomainError as exc:
        raise DomainError(f"H'(F) undefined at F={np.asarray(F).tolist()}: {exc}") from None


def eval_components(p: VariationalProblem, x) -> tuple:
    """The component integrals ``(F_1, ..., F_n)`` of candidate ``x``."""
    F = _Terms(p, p.window_values(x)).components()
    return tuple(float(v) for v in F)


def eval_functional(p: VariationalProblem, x) -> float:
    """``H(F_1, ..., F_n)`` for candidate ``x``."""
    F = eval_components(p, x)
    return float(p.functional.outer(np.array(F)))


def el_residual(p: VariationalProblem, x) -> ELReport:
    xw = p.window_values(x)
    terms = _Terms(p, xw)
    F = terms.components()
    w = _outer_weights(p, F)
    el, left, right = terms.el_parts()
    residual = sum(w[i] * el[i] for i in range(len(el)))
    residual = np.asarray(residual, dtype=float) if len(terms.nu) > 1 else np.zeros(0)
    return ELReport(
        points=p.scale.points[p.ia + 2:p.ib + 1].copy(),
        residual=residual,
        left_bc=float(sum(w[i] * left[i] for i in range(len(el)))) if p.left is None else None,
        right_bc=float(sum(w[i] * right[i] for i in range(len(el)))) if p.right is None else None,
        F=tuple(float(v) for v in F),
        H_grad=tuple(float(v) for v in w),
    )


def natural_bc_left(p: VariationalProblem, x) -> float:
    """Residual of the free-left-end condition; zero at an extremal."""
    if p.left is not None:
        raise UsageError("natural_bc_left needs a free left boundary")
    return el_residual(p, x).left_bc


def natural_bc_right(p: VariationalProblem, x) -> float:
    """Residual of the free-right-end condition ``sum_i H'_i f_iv(b) = 0``."""
    if p.right is not None:
        raise UsageError("natural_bc_right needs a free right boundary")
    return el_residual(p, x).right_bc


def functional_gradient(p: VariationalProblem, x, *, window=False, check_bc=True):
    """Gradient of ``H(F)`` with respect to the free values (or the whole window).

    Returns ``(gradient, F)``.  Batched candidates (leading axes) are supported.
    """
    xw = p.window_values(x, check_bc=check_bc)
    terms = _Terms(p, xw)
    F = terms.components()
    w = _outer_weights(p, F)
    G = terms.component_gradients()
    grad = np.einsum("...kn,...n->...k", G, w)
    if not window:
        grad = grad[..., p.free_slice()]
    return grad, F


@dataclass
class HessianParts:
    """Hessian ``tridiag(diag, off) + U W U^T`` of ``H(F)`` over the free values."""

    diag: np.ndarray
    off: np.ndarray
    U: np.ndarray
    W: np.ndarray

    def dense(self) -> np.ndarray:
        T = np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)
        return T + self.U @ self.W @ self.U.T

    def matvec(self, d) -> np.ndarray:
        out = self.diag * d
        out[:-1] += self.off * d[1:]
        out[1:] += self.off * d[:-1]
        return out + self.U @ (self.W @ (self.U.T @ d))


def functional_hessian(p: VariationalProblem, x, *, check_bc=True):
    """Structured Hessian over the free values, plus gradient and F.

    Returns ``(HessianParts, gradient, F)``.
    """
    xw = p.window_values(x, check_bc=check_bc)
    terms = _Terms(p, xw)
    F = terms.components()
    fn = p.functional
    w = _outer_weights(p, F)
    W = fn.outer_hessian(F, p.fd_step)
    G = terms.component_gradients()
    nu = terms.nu
    m = len(nu)
    diag = np.zeros(m + 1)
    off = np.zeros(m)
    for i, g in enumerate(fn.integrands):
        fyy, fyv, fvv = g.second_partials(terms.t, terms.y, terms.v, p.fd_step)
        diag[:-1] += w[i] * (nu * fyy - 2 * fyv + fvv / nu)
        diag[1:] += w[i] * (fvv / nu)
        off += w[i] * (fyv - fvv / nu)
    sl = p.free_slice()
    free_diag = diag[sl]
    free_off = off[sl.start:sl.stop - 1]
    grad = (G @ w)[sl]
    return HessianParts(free_diag, free_off, G[sl], np.asarray(W, dtype=float)), grad, F


# ---------------------------------------------------------------------------
# product and quotient functionals


def specialize_product(f1: Integrand, f2: Integrand) -> CompositeFunctional:
    return CompositeFunctional(parse("z1*z2", outer_variables(2)), (f1, f2))


def specialize_quotient(f1: Integrand, f2: Integrand) -> CompositeFunctional:
    return CompositeFunctional(parse("z1/z2", outer_variables(2)), (f1, f2))


def _corollary_parts(p: VariationalProblem, x):
    """Per-integrand EL/boundary terms built from the calculus primitives."""
    xg = x if isinstance(x, GridFunction) else GridFunction(p.scale, p.window_values(x), p.ia)
    p.window_values(xg)
    scale = p.scale
    x_rho = calculus.compose_rho(xg)
    x_nab = calculus.nabla_derivative(xg)
    lo, hi = p.ia + 1, p.ib + 1
    t = scale.points[lo:hi]
    y = np.array([x_rho.at(s) for s in t])
    v = np.array([x_nab.at(s) for s in t])
    parts = []
    for g in p.functional.integrands:
        F = calculus.nabla_integral(GridFunction(scale, g.value(t, y, v), lo), p.a, p.b)
        fy, fv = g.partials(t, y, v, p.fd_step)
        fv_sig = GridFunction(scale, fv, lo)
        el = calculus.nabla_derivative(fv_sig).values - fy[1:]
        sa = scale.sigma(p.a)
        left = scale.mu(p.a) * fy[0] - fv_sig.at(sa)
        right = fv_sig.at(p.b)
        parts.append((F, el, left, right))
    return parts


def product_corollary_residual(p: VariationalProblem, x) -> ELReport:
    """``F2 * EL1 + F1 * EL2`` (and the matching boundary forms) for a two-integrand problem."""
    if p.functional.n != 2:
        raise UsageError("the product form needs exactly two integrands")
    (F1, el1, l1, r1), (F2, el2, l2, r2) = _corollary_parts(p, x)
    return ELReport(
        points=p.scale.points[p.ia + 2:p.ib + 1].copy(),
        residual=F2 * el1 + F1 * el2,
        left_bc=F2 * l1 + F1 * l2 if p.left is None else None,
        right_bc=F2 * r1 + F1 * r2 if p.right is None else None,
        F=(F1, F2), H_grad=(F2, F1),
    )


def quotient_corollary_residual(p: VariationalProblem, x) -> ELReport:
    """``EL1 - Q * EL2`` with ``Q = F1 / F2`` (and the matching boundary forms).

    This is the general residual of ``H = z1/z2`` multiplied by ``F2``.
    """
    if p.functional.n != 2:
        raise UsageError("the quotient form needs exactly two integrands")
    (F1, el1, l1, r1), (F2, el2, l2, r2) = _corollary_parts(p, x)
    if F2 == 0:
        raise DomainError("quotient undefined: denominator 'z2' = 0")
    Q = F1 / F2
    return ELReport(
        points=p.scale.points[p.ia + 2:p.ib + 1].copy(),
        residual=el1 - Q * el2,
        left_bc=l1 - Q * l2 if p.left is None else None,
        right_bc=r1 - Q * r2 if p.right is None else None,
        F=(F1, F2), H_grad=(1.0, -Q),
    )
