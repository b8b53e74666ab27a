"""WebAssembly text emission and instruction statistics."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

from .types import FuncType, TypeDesc
from .wasm import Instr, WasmFunc, WasmModule


def ft_name(ct: str) -> str:
    return "ft_" + ct[3:] if ct.startswith("ct_") else "ft_" + ct


def valtype(t: TypeDesc, nullable: bool = True) -> str:
    if t.kind == "contref":
        return f"(ref null ${t.name})" if nullable else f"(ref ${t.name})"
    if t.kind == "funcref":
        return "funcref"
    if t.kind in ("index", "memref"):
        return "i32"
    return t.kind


def _sig(ft: FuncType, nullable: bool = True) -> str:
    parts = []
    if ft.params:
        parts.append("(param " + " ".join(valtype(t, nullable) for t in ft.params) + ")")
    if ft.results:
        parts.append("(result " + " ".join(valtype(t, nullable) for t in ft.results) + ")")
    return " ".join(parts)


def escape_bytes(data: bytes) -> str:
    out = []
    for b in data:
        if 0x20 <= b < 0x7F and b not in (0x22, 0x5C):
            out.append(chr(b))
        else:
            out.append(f"\\{b:02x}")
    return "".join(out)


def unescape_bytes(text: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(text):
        if text[i] == "\\":
            out.append(int(text[i + 1:i + 3], 16))
            i += 3
        else:
            out.append(ord(text[i]))
            i += 1
    return bytes(out)


def format_wat_float(x: float, kind: str) -> str:
    if math.isnan(x):
        if kind == "f32":
            bits = struct.unpack("<I", struct.pack("<f", x))[0]
            sign, payload = bits >> 31, bits & 0x7FFFFF
        else:
            bits = struct.unpack("<Q", struct.pack("<d", x))[0]
            sign, payload = bits >> 63, bits & 0xFFFFFFFFFFFFF
        return f"{'-' if sign else ''}nan:0x{payload:x}"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _const(ins: Instr) -> str:
    kind = ins.op.split(".")[0]
    v = ins.args[0]
    if kind in ("f32", "f64"):
        return f"{ins.op} {format_wat_float(float(v), kind)}"
    return f"{ins.op} {v}"


class _FuncEmitter:
    def __init__(self, f: WasmFunc, lines: list[str]):
        self.f = f
        self.lines = lines
        self.nparams = len(f.params)

    def local(self, i: int) -> str:
        return f"$p{i}" if i < self.nparams else f"$l{i - self.nparams}"

    def emit(self) -> None:
        f = self.f
        head = f"  (func ${f.name}"
        if f.exported:
            head += f' (export "{f.name}")'
        for i, t in enumerate(f.params):
            head += f" (param $p{i} {valtype(t)})"
        if f.results:
            head += " (result " + " ".join(valtype(t) for t in f.results) + ")"
        self.lines.append(head)
        for i, t in enumerate(f.locals):
            self.lines.append(f"    (local $l{i} {valtype(t)})")
        self.body(f.body, 2)
        self.lines.append("  )")

    def body(self, instrs: list[Instr], depth: int) -> None:
        for ins in instrs:
            self.instr(ins, depth)

    def instr(self, ins: Instr, depth: int) -> None:
        pad = "  " * depth
        op = ins.op
        if op in ("block", "loop"):
            res = ""
            if ins.results:
                res = " (result " + " ".join(valtype(t, nullable=False) for t in ins.results) + ")"
            self.lines.append(f"{pad}{op} ${ins.args[0]}{res}")
            self.body(ins.body, depth + 1)
            self.lines.append(f"{pad}end")
        elif op == "if":
            res = ""
            if ins.results:
                res = " (result " + " ".join(valtype(t) for t in ins.results) + ")"
            self.lines.append(f"{pad}if{res}")
            self.body(ins.body, depth + 1)
            if ins.orelse:
                self.lines.append(f"{pad}else")
                self.body(ins.orelse, depth + 1)
            self.lines.append(f"{pad}end")
        elif op.endswith(".const"):
            self.lines.append(pad + _const(ins))
        elif op in ("local.get", "local.set", "local.tee"):
            self.lines.append(f"{pad}{op} {self.local(ins.args[0])}")
        elif op in ("global.get", "global.set", "call", "ref.func", "suspend", "cont.new", "br", "br_if"):
            self.lines.append(f"{pad}{op} ${ins.args[0]}")
        elif op.endswith(".load") or op.endswith(".store"):
            off = ins.args[0] if ins.args else 0
            self.lines.append(f"{pad}{op}" + (f" offset={off}" if off else ""))
        elif op == "resume":
            ct, clauses = ins.args
            on = "".join(f" (on ${tag} ${label})" for tag, label in clauses)
            self.lines.append(f"{pad}resume ${ct}{on}")
        else:
            self.lines.append(pad + op)


def emit_wat(m: WasmModule) -> str:
    """Deterministic WAT text: types, imports, tags, memory, globals, data, elem, funcs."""
    lines = ["(module"]
    for ct, ft in m.cont_types.items():
        lines.append(f"  (type ${ft_name(ct)} (func{(' ' + _sig(ft)) if _sig(ft) else ''}))")
    for ct in m.cont_types:
        lines.append(f"  (type ${ct} (cont ${ft_name(ct)}))")
    for name, ft in m.imports:
        sig = _sig(ft)
        lines.append(f'  (import "env" "{name}" (func ${name}{(" " + sig) if sig else ""}))')
    for name, ft in m.tags.items():
        sig = _sig(ft)
        lines.append(f"  (tag ${name}{(' ' + sig) if sig else ''})")
    exp = ' (export "memory")' if m.memory_exported else ""
    lines.append(f"  (memory{exp} {m.memory_pages})")
    for g in m.globals:
        t = valtype(g.type)
        gt = f"(mut {t})" if g.mutable else t
        init = _const(Instr(f"{t}.const", (g.init,)))
        lines.append(f"  (global ${g.name} {gt} ({init}))")
    for d in m.data:
        lines.append(f'  (data (i32.const {d.offset}) "{escape_bytes(d.data)}")')
    refs: list[str] = []
    for f in m.funcs:
        for ins in f.instructions():
            if ins.op == "ref.func" and ins.args[0] not in refs:
                refs.append(ins.args[0])
    if refs:
        lines.append("  (elem declare func " + " ".join(f"${r}" for r in refs) + ")")
    for f in m.funcs:
        _FuncEmitter(f, lines).emit()
    lines.append(")")
    return "\n".join(lines) + "\n"


# -- statistics -------------------------------------------------------------------


@dataclass
class FuncStats:
    name: str
    instructions: int
    locals: int
    labels: int


@dataclass
class InstrStats:
    functions: list[FuncStats] = field(default_factory=list)
    module_items: int = 0
    data_bytes: int = 0
    text_bytes: int = 0

    @property
    def instructions(self) -> int:
        return sum(f.instructions for f in self.functions)

    @property
    def locals(self) -> int:
        return sum(f.locals for f in self.functions)

    @property
    def labels(self) -> int:
        return sum(f.labels for f in self.functions)

    @property
    def total(self) -> int:
        return self.instructions + self.module_items

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(instructions=self.instructions, locals=self.locals, labels=self.labels, total=self.total)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render(self) -> str:
        rows = [f"{'function':<24}{'instrs':>8}{'locals':>8}{'labels':>8}"]
        for f in self.functions:
            rows.append(f"{f.name:<24}{f.instructions:>8}{f.locals:>8}{f.labels:>8}")
        rows.append(f"{'total':<24}{self.instructions:>8}{self.locals:>8}{self.labels:>8}")
        rows.append(f"module_items {self.module_items}")
        rows.append(f"data_bytes {self.data_bytes}")
        rows.append(f"text_bytes {self.text_bytes}")
        return "\n".join(rows) + "\n"


def stats(m: WasmModule) -> InstrStats:
    funcs = []
    for f in m.funcs:
        instrs = list(f.instructions())
        labels = sum(1 for i in instrs if i.op in ("block", "loop"))
        funcs.append(FuncStats(f.name, len(instrs), len(f.locals), labels))
    items = 2 * len(m.cont_types) + len(m.imports) + len(m.tags) + 1 + len(m.globals) + len(m.data)
    return InstrStats(funcs, items, sum(len(d.data) for d in m.data), len(emit_wat(m).encode()))
