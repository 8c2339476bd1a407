"""Delta/nabla derivatives and Cauchy integrals of grid functions.

On a finite scale every point except the extremes is isolated, so the
derivatives are exact difference quotients and the integrals are exact
finite sums; no quadrature tolerance enters anywhere downstream.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .timescale import TimeScale

__all__ = [
    "GridFunction", "csum", "nabla_derivative", "delta_derivative",
    "nabla_integral", "delta_integral", "compose_rho", "compose_sigma", "c1_norm",
]


def csum(values) -> float:
    """Exactly rounded sum (``math.fsum``), independent of summation order."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


class GridFunction:
    """Real values on a contiguous window ``points[start:start + len(values)]`` of a scale.

    Derivatives and compositions shrink the window to where they are defined,
    and asking for a value outside the window raises :class:`DomainError`.
    """

    __slots__ = ("scale", "values", "start")

    def __init__(self, scale: TimeScale, values, start: int = 0):
        vals = np.array(values, dtype=float).ravel()
        if start < 0 or start + vals.size > len(scale):
            raise ValueError("window does not fit inside the scale")
        if vals.size == 0:
            raise ValueError("a grid function needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.flags.writeable = False
        self.scale = scale
        self.values = vals
        self.start = int(start)

    @classmethod
    def sample(cls, scale: TimeScale, fn) -> "GridFunction":
        """Evaluate a vectorised callable ``fn(t)`` at every point of ``scale``."""
        vals = np.broadcast_to(np.asarray(fn(scale.points), dtype=float), scale.points.shape)
        return cls(scale, vals)

    @property
    def stop(self) -> int:
        return self.start + self.values.size

    @property
    def points(self) -> np.ndarray:
        return self.scale.points[self.start:self.stop]

    def covers_full_scale(self) -> bool:
        return self.start == 0 and self.stop == len(self.scale)

    def at(self, t: float) -> float:
        i = self.scale.index(t)
        if not self.start <= i < self.stop:
            raise DomainError(f"function is not defined at {t!r}")
        return float(self.values[i - self.start])

    __call__ = at

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"GridFunction(points={self.points.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (self.scale == other.scale and self.start == other.start
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def _check_same(self, other):
        if self.scale != other.scale or self.start != other.start or len(self) != len(other):
            raise DomainError("grid functions live on different windows")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_same(other)
            return GridFunction(self.scale, self.values + other.values, self.start)
        return GridFunction(self.scale, self.values + other, self.start)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return GridFunction(self.scale, -self.values, self.start)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_same(other)
            return GridFunction(self.scale, self.values * other.values, self.start)
        return GridFunction(self.scale, self.values * float(other), self.start)

    __rmul__ = __mul__


def nabla_derivative(f: GridFunction) -> GridFunction:
    """Backward difference quotient ``(f(t) - f(rho(t))) / nu(t)``.

    Defined at every window point whose predecessor is also in the window;
    for a full-scale function that is exactly T_kappa.
    """
    if len(f) < 2:
        raise DomainError("nabla derivative needs at least two window points")
    nu = f.scale.nu_array()[f.start + 1:f.stop]
    return GridFunction(f.scale, np.diff(f.values) / nu, f.start + 1)


def delta_derivative(f: GridFunction) -> GridFunction:
    """Forward difference quotient ``(f(sigma(t)) - f(t)) / mu(t)`` on T^kappa."""
    if len(f) < 2:
        raise DomainError("delta derivative needs at least two window points")
    mu = f.scale.mu_array()[f.start:f.stop - 1]
    return GridFunction(f.scale, np.diff(f.values) / mu, f.start)


def _bounds(f, a, b):
    ia, ib = f.scale.index(a), f.scale.index(b)
    if ia > ib:
        raise DomainError(f"integration bounds out of order: {a!r} > {b!r}")
    return ia, ib


def nabla_integral(f: GridFunction, a: float, b: float) -> float:
    """Sum of ``nu(t) * f(t)`` over ``(a, b]``."""
    ia, ib = _bounds(f, a, b)
    if ia == ib:
        return 0.0
    if ia + 1 < f.start or ib > f.stop - 1:
        raise DomainError("integrand not defined on all of (a, b]")
    nu = f.scale.nu_array()[ia + 1:ib + 1]
    return csum(nu * f.values[ia + 1 - f.start:ib + 1 - f.start])


def delta_integral(f: GridFunction, a: float, b: float) -> float:
    """Sum of ``mu(t) * f(t)`` over ``[a, b)``."""
    ia, ib = _bounds(f, a, b)
    if ia == ib:
        return 0.0
    if ia < f.start or ib - 1 > f.stop - 1:
        raise DomainError("integrand not defined on all of [a, b)")
    mu = f.scale.mu_array()[ia:ib]
    return csum(mu * f.values[ia - f.start:ib - f.start])


def compose_rho(f: GridFunction) -> GridFunction:
    """``f o rho``; at the scale minimum rho is the identity."""
    if f.start == 0:
        return GridFunction(f.scale, np.concatenate([f.values[:1], f.values[:-1]]), 0)
    if len(f) < 2:
        raise DomainError("f^rho undefined: predecessor outside the window")
    return GridFunction(f.scale, f.values[:-1], f.start + 1)


def compose_sigma(f: GridFunction) -> GridFunction:
    """``f o sigma``; at the scale maximum sigma is the identity."""
    if f.stop == len(f.scale):
        return GridFunction(f.scale, np.concatenate([f.values[1:], f.values[-1:]]), f.start)
    if len(f) < 2:
        raise DomainError("f^sigma undefined: successor outside the window")
    return GridFunction(f.scale, f.values[1:], f.start)


def c1_norm(f: GridFunction) -> float:
    """``sup |f^rho| + sup |f^nabla|`` over the window."""
    return float(np.max(np.abs(compose_rho(f).values))
                 + np.max(np.abs(nabla_derivative(f).values)))
