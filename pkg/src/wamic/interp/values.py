"""Runtime values, traps and execution results shared by both engines."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .. import numerics
from ..numerics import Trap
from ..types import TypeDesc

__all__ = ["RuntimeValue", "ExecResult", "Trap", "Continuation", "I32", "I64", "F32", "F64",
           "from_raw", "to_raw", "zero_raw", "value_kind", "format_trace", "HEAP_ALIGN"]

HEAP_ALIGN = 8


@dataclass(frozen=True)
class RuntimeValue:
    """``kind`` is i32/i64/f32/f64 (``value`` = raw number), contref (id) or funcref (symbol)."""

    kind: str
    value: object

    @property
    def bits(self) -> int:
        if self.kind in ("f32", "f64"):
            return numerics.float_bits(self.value, self.kind)
        if self.kind in ("i32", "i64"):
            return self.value
        raise TypeError(f"{self.kind} has no bit pattern")

    @property
    def signed(self) -> int:
        return numerics.signed(self.value, self.kind)

    def same(self, other: RuntimeValue) -> bool:
        return self.kind == other.kind and numerics.same_value(self.value, other.value)

    def __str__(self) -> str:
        if self.kind in ("i32", "i64"):
            return str(numerics.signed(self.value, self.kind))
        if self.kind in ("f32", "f64"):
            return repr(self.value)
        if self.kind == "contref":
            return "null" if self.value is None else f"cont#{self.value}"
        return f"@{self.value}"


def I32(x: int) -> RuntimeValue:
    return RuntimeValue("i32", x & 0xFFFFFFFF)


def I64(x: int) -> RuntimeValue:
    return RuntimeValue("i64", x & 0xFFFFFFFFFFFFFFFF)


def F32(x: float) -> RuntimeValue:
    return RuntimeValue("f32", numerics.f32(x))


def F64(x: float) -> RuntimeValue:
    return RuntimeValue("f64", float(x))


def value_kind(t: TypeDesc) -> str:
    if t.kind == "local":
        t = t.elem
    if t.kind in ("index", "memref"):
        return "i32"
    return t.kind


class Continuation:
    """A one-shot resumable computation; engine-specific state lives in ``state``."""

    def __init__(self, ids: itertools.count, state, func: str | None = None):
        self.id = next(ids)
        self.state = state
        self.func = func
        self.consumed = False

    def __repr__(self) -> str:
        return f"<cont#{self.id}{' consumed' if self.consumed else ''}>"


def to_raw(v: RuntimeValue):
    return v.value


def from_raw(x, t: TypeDesc) -> RuntimeValue:
    k = value_kind(t)
    if k == "contref":
        return RuntimeValue("contref", None if x is None else x.id)
    if k == "funcref":
        return RuntimeValue("funcref", x)
    return RuntimeValue(k, x)


def zero_raw(t: TypeDesc):
    k = value_kind(t)
    if k in ("f32", "f64"):
        return 0.0
    if k in ("contref", "funcref"):
        return None
    return 0


@dataclass
class ExecResult:
    results: list[RuntimeValue] = field(default_factory=list)
    trap: str | None = None
    trap_detail: str = ""
    trace: list[tuple[str, str]] = field(default_factory=list)
    memory: bytes = b""
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.trap is None

    def events(self, *kinds: str) -> list[tuple[str, str]]:
        return [e for e in self.trace if e[0] in kinds]

    def suspend_payloads(self) -> list[list[str]]:
        return [d.split()[1:] for k, d in self.trace if k == "suspend"]


def format_trace(trace) -> str:
    return "".join(f"{k}\t{d}\n" for k, d in trace)
