"""Wasm numeric semantics shared by both interpreters and the constant folder.

Integers are carried as unsigned Python ints masked to their width; floats as
Python floats, with f32 results rounded through a C ``float``.
"""

from __future__ import annotations

import ctypes
import math
import struct

MASK = {"i32": 0xFFFFFFFF, "i64": 0xFFFFFFFFFFFFFFFF}
BITS = {"i32": 32, "i64": 64}


class Trap(Exception):
    """A Wasm trap; ``reason`` is a stable identifier such as ``IntegerDivideByZero``."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}{': ' + detail if detail else ''}")
        self.reason = reason
        self.detail = detail


def f32(x: float) -> float:
    return ctypes.c_float(x).value


def signed(v: int, t: str) -> int:
    b = BITS[t]
    return v - (1 << b) if v >> (b - 1) else v


def wrap(v: int, t: str) -> int:
    return v & MASK[t]


def float_bits(x: float, t: str) -> int:
    if t == "f32":
        return struct.unpack("<I", struct.pack("<f", x))[0]
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits_float(b: int, t: str) -> float:
    if t == "f32":
        return struct.unpack("<f", struct.pack("<I", b & 0xFFFFFFFF))[0]
    return struct.unpack("<d", struct.pack("<Q", b & 0xFFFFFFFFFFFFFFFF))[0]


def _fdiv(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _div_s(a: int, b: int, t: str) -> int:
    if b == 0:
        raise Trap("IntegerDivideByZero")
    sa, sb = signed(a, t), signed(b, t)
    if sa == -(1 << (BITS[t] - 1)) and sb == -1:
        raise Trap("IntegerOverflow")
    q = abs(sa) // abs(sb)
    return wrap(-q if (sa < 0) != (sb < 0) else q, t)


def _rem_s(a: int, b: int, t: str) -> int:
    if b == 0:
        raise Trap("IntegerDivideByZero")
    sa, sb = signed(a, t), signed(b, t)
    r = abs(sa) % abs(sb)
    return wrap(-r if sa < 0 else r, t)


def _div_u(a: int, b: int, t: str) -> int:
    if b == 0:
        raise Trap("IntegerDivideByZero")
    return a // b


def _rem_u(a: int, b: int, t: str) -> int:
    if b == 0:
        raise Trap("IntegerDivideByZero")
    return a % b


_INT_BIN = {
    "add": lambda a, b, t: (a + b) & MASK[t],
    "sub": lambda a, b, t: (a - b) & MASK[t],
    "mul": lambda a, b, t: (a * b) & MASK[t],
    "div_s": _div_s,
    "div_u": _div_u,
    "rem_s": _rem_s,
    "rem_u": _rem_u,
    "and": lambda a, b, t: a & b,
    "or": lambda a, b, t: a | b,
    "xor": lambda a, b, t: a ^ b,
    "shl": lambda a, b, t: (a << (b % BITS[t])) & MASK[t],
    "shr_u": lambda a, b, t: a >> (b % BITS[t]),
    "shr_s": lambda a, b, t: wrap(signed(a, t) >> (b % BITS[t]), t),
    "eq": lambda a, b, t: int(a == b),
    "ne": lambda a, b, t: int(a != b),
    "lt_u": lambda a, b, t: int(a < b),
    "gt_u": lambda a, b, t: int(a > b),
    "le_u": lambda a, b, t: int(a <= b),
    "ge_u": lambda a, b, t: int(a >= b),
    "lt_s": lambda a, b, t: int(signed(a, t) < signed(b, t)),
    "gt_s": lambda a, b, t: int(signed(a, t) > signed(b, t)),
    "le_s": lambda a, b, t: int(signed(a, t) <= signed(b, t)),
    "ge_s": lambda a, b, t: int(signed(a, t) >= signed(b, t)),
}

_FLOAT_BIN = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": _fdiv,
}

_FLOAT_CMP = {
    "eq": lambda a, b: int(a == b),
    "ne": lambda a, b: int(a != b),
    "lt": lambda a, b: int(a < b),
    "gt": lambda a, b: int(a > b),
    "le": lambda a, b: int(a <= b),
    "ge": lambda a, b: int(a >= b),
}

INT_BINOPS = frozenset(_INT_BIN)
FLOAT_BINOPS = frozenset(_FLOAT_BIN) | frozenset(_FLOAT_CMP)
COMPARISONS = frozenset({"eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u",
                         "ge_s", "ge_u", "lt", "gt", "le", "ge"})
TRAPPING = frozenset({"div_s", "div_u", "rem_s", "rem_u", "trunc_s", "trunc_u"})


def binop(name: str, t: str, a, b):
    """Apply binary op ``name`` (wasm mnemonic without type prefix) at type ``t``."""
    if t in MASK:
        return _INT_BIN[name](a, b, t)
    f = _FLOAT_CMP.get(name)
    if f is not None:
        return f(a, b)
    r = _FLOAT_BIN[name](a, b)
    return f32(r) if t == "f32" else r


def unop(name: str, t: str, a):
    if name == "eqz":
        return int(a == 0)
    if name == "neg":
        return -a
    raise KeyError(name)


def convert(name: str, src: str, dst: str, x):
    """Conversions named as in wasm: ``convert_s``, ``trunc_u``, ``extend_s``, ``wrap`` ..."""
    if name in ("convert_s", "convert_u"):
        v = signed(x, src) if name == "convert_s" else x
        r = float(v)
        if dst == "f32":
            # round once from the exact integer, not via an intermediate double
            return _int_to_f32(v)
        return r
    if name in ("trunc_s", "trunc_u"):
        if x != x:
            raise Trap("InvalidConversionToInteger")
        if math.isinf(x):
            raise Trap("IntegerOverflow")
        v = math.trunc(x)
        b = BITS[dst]
        lo, hi = ((-(1 << (b - 1)), (1 << (b - 1)) - 1) if name == "trunc_s" else (0, (1 << b) - 1))
        if v < lo or v > hi:
            raise Trap("IntegerOverflow")
        return wrap(v, dst)
    if name == "extend_s":
        return wrap(signed(x, src), dst)
    if name == "extend_u":
        return x
    if name == "wrap":
        return x & MASK["i32"]
    if name == "promote":
        return x
    if name == "demote":
        return f32(x)
    raise KeyError(name)


def _int_to_f32(v: int) -> float:
    if abs(v) < (1 << 53):
        return f32(float(v))
    # round-to-nearest-even at 24 significant bits, done on the integer
    sign = -1 if v < 0 else 1
    m = abs(v)
    shift = m.bit_length() - 24
    q, r = divmod(m, 1 << shift)
    half = 1 << (shift - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return f32(sign * float(q << shift))


def zero(t: str):
    return 0.0 if t in ("f32", "f64") else 0


def same_value(a, b) -> bool:
    """Bit equality for ints and floats, with any NaN equal to any NaN."""
    if isinstance(a, float) and isinstance(b, float):
        if a != a and b != b:
            return True
        return struct.pack("<d", a) == struct.pack("<d", b)
    return a == b
