"""Stack-form Wasm module model built from Wasm-dialect IR.

Instructions carry no SSA values; an ``Instr`` holds its mnemonic, its
immediates and (for block/loop/if) its nested bodies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import FloatAttr, IRError, IrModule, Operation, SymbolRef
from .types import FuncType, TypeDesc, storage_type


@dataclass
class Instr:
    op: str
    args: tuple = ()
    body: list[Instr] = field(default_factory=list)
    orelse: list[Instr] = field(default_factory=list)
    results: tuple = ()

    def walk(self):
        yield self
        for i in self.body:
            yield from i.walk()
        for i in self.orelse:
            yield from i.walk()


@dataclass
class WasmFunc:
    name: str
    exported: bool
    params: list[TypeDesc]
    results: list[TypeDesc]
    locals: list[TypeDesc]
    body: list[Instr]

    def instructions(self):
        for i in self.body:
            yield from i.walk()

    @property
    def type(self) -> FuncType:
        return FuncType(tuple(self.params), tuple(self.results))


@dataclass
class Global:
    name: str
    type: TypeDesc
    mutable: bool
    init: object


@dataclass
class Data:
    offset: int
    data: bytes
    name: str | None = None


@dataclass
class WasmModule:
    funcs: list[WasmFunc] = field(default_factory=list)
    imports: list[tuple[str, FuncType]] = field(default_factory=list)
    tags: dict[str, FuncType] = field(default_factory=dict)
    cont_types: dict[str, FuncType] = field(default_factory=dict)
    globals: list[Global] = field(default_factory=list)
    data: list[Data] = field(default_factory=list)
    memory_pages: int = 17
    memory_exported: bool = True
    heap_base: int = 1024

    def func(self, name: str) -> WasmFunc | None:
        for f in self.funcs:
            if f.name == name:
                return f
        return None

    def signature(self, name: str) -> FuncType | None:
        f = self.func(name)
        if f is not None:
            return f.type
        for n, t in self.imports:
            if n == name:
                return t
        return None

    def global_(self, name: str) -> Global | None:
        for g in self.globals:
            if g.name == name:
                return g
        return None


def _imm(v):
    if isinstance(v, SymbolRef):
        return v.name
    if isinstance(v, FloatAttr):
        return v.value
    return v


def _instr(op: Operation) -> Instr:
    if op.dialect != "wasm":
        raise IRError(f"{op.opname} is not a Wasm instruction", rule="UnsupportedLevel")
    name = op.name
    a = op.attrs
    if name in ("block", "loop"):
        return Instr(name, (a["label"],), _body(op.regions[0]), results=tuple(a.get("results", ())))
    if name == "if":
        return Instr("if", (), _body(op.regions[0]), _body(op.regions[1]) if len(op.regions) > 1 else [],
                     results=tuple(a.get("results", ())))
    if name == "resume":
        on = a.get("on", ())
        clauses = tuple((on[i].name, on[i + 1]) for i in range(0, len(on), 2))
        return Instr("resume", (a["type"].name, clauses))
    if name.endswith(".const"):
        v = a["value"]
        if isinstance(v, FloatAttr):
            return Instr(name, (v.value,))
        if isinstance(v, int) and name[0] == "f":
            return Instr(name, (float(v),))
        return Instr(name, (v,))
    args = tuple(_imm(v) for v in a.values())
    return Instr(name, args)


def _body(region) -> list[Instr]:
    out = []
    for blk in region.blocks:
        out.extend(_instr(o) for o in blk.ops)
    return out


def build_wasm_module(m: IrModule) -> WasmModule:
    """Assemble a WasmModule from a module whose functions are all at Wasm level."""
    wm = WasmModule(heap_base=m.attrs.get("heap_base", 1024))
    for op in m.globals:
        a = op.attrs
        kind = op.opname
        if kind == "wasm.memory":
            wm.memory_pages = a["pages"]
            wm.memory_exported = bool(a.get("exported", 1))
        elif kind == "wasm.data":
            wm.data.append(Data(a["offset"], a.get("init", b""), a["sym_name"]))
        elif kind == "wasm.import":
            wm.imports.append((a["sym_name"], a["type"]))
        elif kind == "wasm.global":
            t = storage_type(a["type"])
            init = _imm(a.get("init", 0))
            wm.globals.append(Global(a["sym_name"], t, bool(a.get("mutable", 1)), init))
        elif kind == "wasm.tag":
            wm.tags[a["sym_name"]] = a["type"]
        elif kind == "wasm.cont_type":
            wm.cont_types[a["sym_name"]] = a["type"]
        else:
            raise IRError(f"{kind} cannot appear in a Wasm module", rule="UnsupportedLevel")
    for f in m.functions:
        if f.kind != "wasm":
            raise IRError(f"@{f.name} is not a wasm.func", rule="UnsupportedLevel")
        if f.body is None:
            wm.imports.append((f.name, FuncType(tuple(f.param_types), tuple(f.result_types))))
            continue
        wm.funcs.append(WasmFunc(f.name, f.exported, list(f.param_types), list(f.result_types),
                                 list(f.locals or []), _body(f.body)))
    return wm
