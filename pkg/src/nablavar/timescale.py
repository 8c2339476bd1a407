"""Finite time scales: jump operators, graininess and the kappa-trimmed sets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["TimeScale", "Provenance", "PointClass", "SNAP_RTOL"]

SNAP_RTOL = 1e-12


@dataclass(frozen=True)
class Provenance:
    """How a scale was built: ``explicit``, ``uniform`` (a, b, n) or ``qscale`` (q, a, b).

    ``reflected`` marks the dual of a q-scale, whose points are the negated q-powers.
    """

    kind: str
    params: tuple = ()
    reflected: bool = False


class PointClass(enum.Flag):
    RIGHT_SCATTERED = enum.auto()
    RIGHT_DENSE = enum.auto()
    LEFT_SCATTERED = enum.auto()
    LEFT_DENSE = enum.auto()
    ISOLATED = LEFT_SCATTERED | RIGHT_SCATTERED
    DENSE = LEFT_DENSE | RIGHT_DENSE


class TimeScale:
    """A finite, strictly increasing set of at least two real points.

    Instances are immutable.  Points are compared exactly; a user-supplied
    value is snapped to the nearest point when it lies within
    ``SNAP_RTOL * max(|p|, span)`` of it and rejected otherwise.
    """

    __slots__ = ("_points", "_provenance", "_hash")

    def __init__(self, points, provenance: Provenance | None = None):
        pts = np.array(points, dtype=float).ravel()
        if pts.size < 2:
            raise ValueError("a time scale needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("time scale points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("time scale points must be strictly increasing")
        pts.flags.writeable = False
        self._points = pts
        self._provenance = provenance or Provenance("explicit")
        self._hash = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "TimeScale":
        """``n + 1`` equally spaced points from ``a`` to ``b`` (both exact)."""
        if int(n) != n or n < 1:
            raise ValueError("uniform grid needs an integer n >= 1")
        if not b > a:
            raise ValueError("uniform grid needs a < b")
        pts = np.linspace(a, b, int(n) + 1)
        return cls(pts, Provenance("uniform", (float(a), float(b), int(n))))

    @classmethod
    def qscale(cls, q: float, a: float, b: float) -> "TimeScale":
        """Powers ``q**k`` (integer k, q > 1) that fall inside ``[a, b]``, with 0 < a < b."""
        if not q > 1:
            raise ValueError("q-scale needs q > 1")
        if not 0 < a < b:
            raise ValueError("q-scale needs 0 < a < b")
        k_hi = math.ceil(math.log(b, q)) + 1
        pts = []
        k = k_hi
        while True:
            p = q ** k
            if p < a * (1 - SNAP_RTOL):
                break
            if p <= b * (1 + SNAP_RTOL):
                pts.append(p)
            k -= 1
        pts.reverse()
        if len(pts) < 2:
            raise ValueError(f"q-scale with q={q} has fewer than two points in [{a}, {b}]")
        return cls(pts, Provenance("qscale", (float(q), float(a), float(b))))

    # -- basic protocol ---------------------------------------------------

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def provenance(self) -> Provenance:
        return self._provenance

    @property
    def min(self) -> float:
        return float(self._points[0])

    @property
    def max(self) -> float:
        return float(self._points[-1])

    def __len__(self):
        return self._points.size

    def __iter__(self):
        return iter(self._points.tolist())

    def __contains__(self, t):
        try:
            self.index(t)
        except DomainError:
            return False
        return True

    def __eq__(self, other):
        if not isinstance(other, TimeScale):
            return NotImplemented
        return np.array_equal(self._points, other._points)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._points.tobytes())
        return self._hash

    def __repr__(self):
        pv = self._provenance
        if pv.kind == "uniform":
            return "TimeScale.uniform({}, {}, {})".format(*pv.params)
        if len(self) <= 8:
            return f"TimeScale({self._points.tolist()})"
        return f"TimeScale(<{len(self)} points in [{self.min}, {self.max}]>)"

    # -- point lookup -----------------------------------------------------

    def index(self, t: float) -> int:
        """Index of the stored point matching ``t``; raises DomainError otherwise."""
        t = float(t)
        pts = self._points
        i = int(np.searchsorted(pts, t))
        best = None
        for j in (i - 1, i):
            if 0 <= j < pts.size and (best is None or abs(pts[j] - t) < abs(pts[best] - t)):
                best = j
        span = pts[-1] - pts[0]
        if abs(pts[best] - t) <= SNAP_RTOL * max(abs(pts[best]), span):
            return best
        raise DomainError(f"{t!r} not a scale point")

    def snap(self, t: float) -> float:
        return float(self._points[self.index(t)])

    # -- jump operators and graininess -------------------------------------

    def sigma(self, t: float) -> float:
        """Forward jump: the next point, or ``t`` itself at the maximum."""
        i = self.index(t)
        return float(self._points[min(i + 1, len(self) - 1)])

    def rho(self, t: float) -> float:
        """Backward jump: the previous point, or ``t`` itself at the minimum."""
        i = self.index(t)
        return float(self._points[max(i - 1, 0)])

    def mu(self, t: float) -> float:
        i = self.index(t)
        return self.mu_array()[i]

    def nu(self, t: float) -> float:
        i = self.index(t)
        return self.nu_array()[i]

    def mu_array(self) -> np.ndarray:
        """Forward graininess at every point (0 at the maximum)."""
        pts = self._points
        return np.append(pts[1:] - pts[:-1], 0.0)

    def nu_array(self) -> np.ndarray:
        """Backward graininess at every point (0 at the minimum)."""
        pts = self._points
        return np.insert(pts[1:] - pts[:-1], 0, 0.0)

    def kappa_upper(self) -> np.ndarray:
        """T^kappa: the points without the (left-scattered) maximum."""
        return self._points[:-1]

    def kappa_lower(self) -> np.ndarray:
        """T_kappa: the points without the (right-scattered) minimum."""
        return self._points[1:]

    def classify(self, t: float) -> PointClass:
        s, r = self.sigma(t), self.rho(t)
        t = self.snap(t)
        cls = PointClass.RIGHT_SCATTERED if s > t else PointClass.RIGHT_DENSE
        cls |= PointClass.LEFT_SCATTERED if r < t else PointClass.LEFT_DENSE
        return cls

    def restrict(self, a: float, b: float) -> "TimeScale":
        """The scale interval ``[a, b]`` as a time scale of its own."""
        i, j = self.index(a), self.index(b)
        if j <= i:
            raise DomainError("restricting needs a < b")
        return TimeScale(self._points[i:j + 1])
