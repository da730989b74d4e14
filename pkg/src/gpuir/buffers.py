"""Text format for kernel buffer bindings.

One binding per line::

    # comment
    a:i32:1,2,3
    x:f32:0x1.8p+1,2.5

Element types are ``i32``, ``i64``, ``f32`` and ``f64``.  Floats may be
written in decimal or hex-float form; they are always printed in the
shortest decimal that reads back to the same value.
"""

from __future__ import annotations

import re

from . import fpmath
from .interp import BufferBinding
from .ir import F32, F64, I32, I64, FloatType, IntType, TypeRef

ELEM_TYPES: dict[str, TypeRef] = {"i32": I32, "i64": I64, "f32": F32, "f64": F64}
_NAMES = {v: k for k, v in ELEM_TYPES.items()}
_NAME_RE = re.compile(r"[A-Za-z_.$][A-Za-z0-9_.$]*|[0-9]+")
_INT_RE = re.compile(r"[+-]?[0-9]+")


class BufferFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_int(text: str, bits: int) -> int:
    if not _INT_RE.fullmatch(text):
        raise ValueError(f"invalid integer {text!r}")
    v = int(text)
    if not -(1 << (bits - 1)) <= v < (1 << bits):
        raise ValueError(f"{text} does not fit in i{bits}")
    return v


def _parse_float(text: str, bits: int) -> float:
    low = text.lower().lstrip("+-")
    if low.startswith("0x"):
        v = float.fromhex(text)
    else:
        v = float(text)
    return fpmath.to_f32(v) if bits == 32 else v


def parse_buffers(text: str) -> list[BufferBinding]:
    """Parse a buffer file; raises :class:`BufferFormatError` with the line number."""
    out: list[BufferBinding] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(":", 2)
        if len(parts) != 3:
            raise BufferFormatError(lineno, "expected name:elemtype:values")
        name, tname, body = (p.strip() for p in parts)
        if not _NAME_RE.fullmatch(name):
            raise BufferFormatError(lineno, f"bad argument name {name!r}")
        if name in seen:
            raise BufferFormatError(lineno, f"duplicate binding {name!r}")
        t = ELEM_TYPES.get(tname)
        if t is None:
            raise BufferFormatError(lineno, f"element type must be one of i32, i64, f32, f64, got {tname!r}")
        items = [s.strip() for s in body.split(",")] if body else []
        try:
            if isinstance(t, IntType):
                values = [_parse_int(s, t.bits) for s in items]
            else:
                values = [_parse_float(s, t.bits) for s in items]
        except ValueError as e:
            raise BufferFormatError(lineno, str(e)) from None
        seen.add(name)
        out.append(BufferBinding(name, t, values))
    return out


def format_float(x: float, bits: int) -> str:
    """Shortest decimal that reads back to ``x`` at the given width."""
    if bits == 64 or x != x or x in (float("inf"), float("-inf")):
        return repr(x)
    for p in range(1, 10):
        s = f"{x:.{p}g}"
        if fpmath.to_f32(float(s)) == x:
            return repr(float(s))
    return repr(x)


def format_binding(name: str, t: TypeRef, values) -> str:
    if isinstance(t, FloatType):
        body = ",".join(format_float(v, t.bits) for v in values)
    else:
        body = ",".join(str(v) for v in values)
    return f"{name}:{_NAMES.get(t, str(t))}:{body}"


def format_buffers(buffers: dict[str, list], types: dict[str, TypeRef], order=None) -> str:
    names = list(order) if order is not None else list(buffers)
    return "".join(format_binding(n, types[n], buffers[n]) + "\n" for n in names if n in buffers)


__all__ = ["BufferFormatError", "ELEM_TYPES", "format_binding", "format_buffers", "format_float", "parse_buffers"]
