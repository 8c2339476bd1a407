"""Line-oriented problem files.

A file is a sequence of ``section:`` headers, each followed by ``key = value``
lines.  ``#`` starts a comment.  Numbers may be constant expressions such as
``-1/2`` or ``2^-3``; expressions are double-quoted::

    timescale:
      kind = explicit          # or: uniform (a, b, n) / qscale (q, a, b)
      points = -1, -1/2, 0
    interval:
      a = -1
      b = 0
    boundary:
      left = 1
      right = free
    functional:
      H = "z1*z2"
      integrand = "v^2"
      integrand = "t*v"
    guess:                     # optional
      x = "-t^2 - 2*t"         # or: values = 1, 0.75, 0
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .calculus import GridFunction
from .errors import DomainError, NablavarError, ParseError, ProblemFileError, UsageError
from .expr import constant_value, evaluate, parse, to_string
from .timescale import TimeScale
from .variational import (
    INTEGRAND_VARS, CompositeFunctional, Integrand, VariationalProblem, outer_variables,
)

__all__ = [
    "ProblemFile", "load_problem", "parse_problem", "parse_number", "sample_candidate",
    "values_candidate", "dump_problem",
]

SECTIONS = {
    "timescale": {"kind", "points", "a", "b", "n", "q"},
    "interval": {"a", "b"},
    "boundary": {"left", "right"},
    "functional": {"H", "integrand"},
    "guess": {"x", "values"},
}
_HEADER = re.compile(r"^([A-Za-z_]+)\s*:\s*$")
_PAIR = re.compile(r"^([A-Za-z_]+)\s*=\s*(.*)$")


def parse_number(text: str) -> float:
    """A real number written as a constant expression (``-1/2``, ``2^-3``, ``sqrt(2)``)."""
    node = parse(text.strip(), ())
    value = constant_value(node)
    if value is None:
        value = float(evaluate(node, {}))
    return float(value)


def sample_candidate(text: str, scale: TimeScale) -> GridFunction:
    """Sample an expression in ``t`` onto every point of ``scale``."""
    node = parse(text, ("t",))
    return GridFunction.sample(scale, lambda t: evaluate(node, {"t": t}))


@dataclass(frozen=True)
class ProblemFile:
    scale: TimeScale
    a: float
    b: float
    left: Optional[float]
    right: Optional[float]
    H: str
    integrands: tuple
    guess: Optional[tuple] = None   # ("x", expr text) or ("values", tuple of floats)
    source: str = ""
    path: Optional[str] = None

    @property
    def functional(self) -> CompositeFunctional:
        return CompositeFunctional.from_text(self.H, self.integrands)

    def problem(self) -> VariationalProblem:
        return VariationalProblem(self.scale, self.a, self.b, self.functional, self.left, self.right)

    def guess_function(self) -> Optional[GridFunction]:
        if self.guess is None:
            return None
        kind, data = self.guess
        if kind == "x":
            return sample_candidate(data, self.scale)
        return values_candidate(data, self.problem())


def values_candidate(values, p: VariationalProblem) -> GridFunction:
    """Explicit values, either one per scale point or one per point of ``[a, b]``."""
    vals = np.asarray(values, dtype=float)
    if vals.size == len(p.scale):
        return GridFunction(p.scale, vals)
    if vals.size == p.ib - p.ia + 1:
        return GridFunction(p.scale, vals, p.ia)
    raise UsageError(f"{vals.size} values given; expected {len(p.scale)} (whole scale) "
                     f"or {p.ib - p.ia + 1} (interval)")


def _unquote(value: str, line: int, path):
    value = value.strip()
    if len(value) < 2 or value[0] != '"' or value[-1] != '"':
        raise ProblemFileError(f"expected a double-quoted expression, got {value!r}", line, path)
    return value[1:-1]


def _strip_comment(raw: str) -> str:
    out, quoted = [], False
    for ch in raw:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def parse_problem(text: str, path: str | None = None) -> ProblemFile:
    entries: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ProblemFileError(f"unknown section {section!r}; expected one of "
                                       f"{', '.join(SECTIONS)}", lineno, path)
            if section in entries:
                raise ProblemFileError(f"section {section!r} appears twice", lineno, path)
            entries[section] = []
            continue
        m = _PAIR.match(line)
        if not m:
            raise ProblemFileError(f"expected 'section:' or 'key = value', got {line!r}", lineno, path)
        if section is None:
            raise ProblemFileError("key outside of any section", lineno, path)
        key, value = m.group(1), m.group(2).strip()
        if key not in SECTIONS[section]:
            raise ProblemFileError(f"unknown key {key!r} in section {section!r}", lineno, path)
        if key != "integrand" and any(k == key for k, _, _ in entries[section]):
            raise ProblemFileError(f"duplicate key {key!r}", lineno, path)
        entries[section].append((key, value, lineno))

    for required in ("timescale", "interval", "boundary", "functional"):
        if required not in entries:
            raise ProblemFileError(f"missing section {required!r}", 0, path)

    def get(section, key, required=True):
        for k, v, ln in entries.get(section, ()):
            if k == key:
                return v, ln
        if required:
            first = entries[section][0][2] if entries[section] else 0
            raise ProblemFileError(f"section {section!r} needs key {key!r}", first, path)
        return None, 0

    def number(section, key):
        value, ln = get(section, key)
        try:
            return parse_number(value), ln
        except NablavarError as exc:
            raise ProblemFileError(f"{key}: {exc}", ln, path) from None

    # time scale
    kind, kind_line = get("timescale", "kind")
    try:
        if kind == "explicit":
            value, ln = get("timescale", "points")
            try:
                pts = [parse_number(s) for s in value.split(",")]
            except NablavarError as exc:
                raise ProblemFileError(f"points: {exc}", ln, path) from None
            scale = TimeScale(pts)
        elif kind == "uniform":
            (a0, _), (b0, _), (n, ln) = (number("timescale", k) for k in ("a", "b", "n"))
            if n != int(n):
                raise ProblemFileError("n must be an integer", ln, path)
            scale = TimeScale.uniform(a0, b0, int(n))
        elif kind == "qscale":
            (q, _), (a0, _), (b0, _) = (number("timescale", k) for k in ("q", "a", "b"))
            scale = TimeScale.qscale(q, a0, b0)
        else:
            raise ProblemFileError(f"unknown time scale kind {kind!r}; expected explicit, "
                                   f"uniform or qscale", kind_line, path)
    except (ValueError, DomainError) as exc:
        if isinstance(exc, ProblemFileError):
            raise
        raise ProblemFileError(f"time scale: {exc}", kind_line, path) from None

    # interval
    ends = []
    for key in ("a", "b"):
        val, ln = number("interval", key)
        if val not in scale:
            raise ProblemFileError(f"{val!r} not a scale point", ln, path)
        ends.append((scale.snap(val), ln))
    (a, _), (b, b_line) = ends
    if not a < b:
        raise ProblemFileError(f"interval needs a < b, got a={a!r}, b={b!r}", b_line, path)

    # boundary data
    bc = {}
    for key in ("left", "right"):
        value, ln = get("boundary", key)
        if value == "free":
            bc[key] = None
        else:
            try:
                bc[key] = parse_number(value)
            except NablavarError as exc:
                raise ProblemFileError(f"{key}: {exc}", ln, path) from None

    # functional
    H_raw, H_line = get("functional", "H")
    H = _unquote(H_raw, H_line, path)
    integrands = []
    for k, v, ln in entries["functional"]:
        if k != "integrand":
            continue
        txt = _unquote(v, ln, path)
        try:
            Integrand.from_text(txt)
        except (ParseError, UsageError) as exc:
            raise ProblemFileError(f"integrand {txt!r}: {exc}; allowed variables are "
                                   f"{', '.join(INTEGRAND_VARS)}", ln, path) from None
        integrands.append(txt)
    if not integrands:
        raise ProblemFileError("functional needs at least one 'integrand' line", H_line, path)
    names = outer_variables(len(integrands))
    try:
        parse(H, names)
    except ParseError as exc:
        raise ProblemFileError(f"H {H!r}: {exc}; with {len(integrands)} integrand(s) only "
                               f"{', '.join(names)} exist", H_line, path) from None

    # optional initial guess
    guess = None
    if "guess" in entries:
        xs, ln = get("guess", "x", required=False)
        vs, vln = get("guess", "values", required=False)
        if (xs is None) == (vs is None):
            first = entries["guess"][0][2] if entries["guess"] else 0
            raise ProblemFileError("guess needs exactly one of 'x' or 'values'", first, path)
        if xs is not None:
            txt = _unquote(xs, ln, path)
            try:
                parse(txt, ("t",))
            except ParseError as exc:
                raise ProblemFileError(f"guess {txt!r}: {exc}", ln, path) from None
            guess = ("x", txt)
        else:
            try:
                guess = ("values", tuple(parse_number(s) for s in vs.split(",")))
            except NablavarError as exc:
                raise ProblemFileError(f"values: {exc}", vln, path) from None

    pf = ProblemFile(scale, a, b, bc["left"], bc["right"], H, tuple(integrands), guess,
                     source=text, path=path)
    if guess is not None and guess[0] == "values":
        try:
            pf.guess_function()
        except UsageError as exc:
            raise ProblemFileError(str(exc), vln, path) from None
    return pf


def load_problem(path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"cannot read problem file: {exc.strerror}", 0, str(path)) from None
    return parse_problem(text, str(path))


def format_number(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e16 else str(int(x))


def dump_problem(p: VariationalProblem) -> str:
    """Problem-file text for ``p`` (explicit scale points)."""
    lines = ["timescale:", "  kind = explicit",
             "  points = " + ", ".join(format_number(t) for t in p.scale.points),
             "interval:", f"  a = {format_number(p.a)}", f"  b = {format_number(p.b)}",
             "boundary:"]
    for key in ("left", "right"):
        val = getattr(p, key)
        lines.append(f"  {key} = " + ("free" if val is None else format_number(val)))
    lines += ["functional:", f'  H = "{to_string(p.functional.H)}"']
    lines += [f'  integrand = "{g.text}"' for g in p.functional.integrands]
    return "\n".join(lines) + "\n"
