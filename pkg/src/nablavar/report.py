"""Reports: a machine document (JSON, 17 significant digits) and a plain-text rendering.

The JSON writer is hand-rolled only in its float formatting: every float is
written with ``%.17g`` so that parsing the document and writing it again
reproduces it byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

__all__ = ["Report", "dumps", "loads", "digest", "fmt"]


def fmt(x: float) -> str:
    """17 significant digits; integral values come out without a fraction.

    Negative zero keeps a fraction so that it parses back as a float.
    """
    if x == 0 and math.copysign(1.0, x) < 0:
        return "-0.0"
    return "%.17g" % x


def _scalar(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return fmt(v)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _write(value, indent, out):
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        items = list(value.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}  {json.dumps(str(k), ensure_ascii=False)}: ")
            _write(v, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple, np.ndarray)):
        seq = value.tolist() if isinstance(value, np.ndarray) else value
        if not len(seq):
            out.append("[]")
        elif all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            out.append("[" + ", ".join(_scalar(v) for v in seq) + "]")
        else:
            out.append("[\n")
            for i, v in enumerate(seq):
                out.append(pad + "  ")
                _write(v, indent + 1, out)
                out.append(",\n" if i < len(seq) - 1 else "\n")
            out.append(pad + "]")
    else:
        out.append(_scalar(value))


def dumps(doc) -> str:
    out: list = []
    _write(doc, 0, out)
    return "".join(out) + "\n"


def loads(text: str):
    return json.loads(text)


def digest(*parts: str) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


@dataclass
class Report:
    command: str
    inputs_digest: str
    results: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)
    passed: Optional[bool] = None
    wall_time: Optional[float] = None

    def say(self, text: str = "") -> None:
        self.lines.append(text)

    def document(self) -> dict:
        doc: dict[str, Any] = {"command": self.command, "inputs_digest": self.inputs_digest}
        if self.passed is not None:
            doc["passed"] = self.passed
        doc["results"] = self.results
        if self.wall_time is not None:
            doc["wall_time"] = self.wall_time
        return doc

    def machine(self) -> str:
        return dumps(self.document())

    def text(self) -> str:
        body = list(self.lines)
        if self.passed is not None:
            body.append("PASS" if self.passed else "FAIL")
        if self.wall_time is not None:
            body.append(f"wall time: {self.wall_time:.3f} s")
        return "\n".join(body) + "\n"
