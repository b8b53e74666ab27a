"""Type checker for the emitted Wasm subset (stack-polymorphic operand typing)."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..ir import Diagnostic
from ..numerics import COMPARISONS, FLOAT_BINOPS, INT_BINOPS
from ..types import FuncType, TypeDesc
from ..wasm import Instr, WasmFunc, WasmModule

ANY = "any"
_CONV = re.compile(r"^(i32|i64|f32|f64)\.(convert|trunc|extend|wrap|promote|demote)_(i32|i64|f32|f64)(_[su])?$")
_INT_ARITH = INT_BINOPS - COMPARISONS
_FLOAT_ARITH = FLOAT_BINOPS - COMPARISONS


def vt(t: TypeDesc) -> str:
    """Validator type name: i32/i64/f32/f64, funcref or ref:<cont type>."""
    if t.kind == "contref":
        return f"ref:{t.name}"
    if t.kind in ("index", "memref"):
        return "i32"
    if t.kind == "local":
        return vt(t.elem)
    return t.kind


class _Invalid(Exception):
    pass


@dataclass
class _Ctrl:
    kind: str
    label: str | None
    label_types: list[str]
    end_types: list[str]
    height: int
    unreachable: bool = False


class _FuncChecker:
    def __init__(self, m: WasmModule, f: WasmFunc, diags: list[Diagnostic]):
        self.m = m
        self.f = f
        self.diags = diags
        self.locals = [vt(t) for t in f.params] + [vt(t) for t in f.locals]
        self.stack: list[str] = []
        self.ctrls: list[_Ctrl] = []

    def error(self, rule: str, msg: str, ins: Instr | None = None) -> None:
        self.diags.append(Diagnostic(rule, f"@{self.f.name}: {msg}", None, ins.op if ins else None))
        raise _Invalid

    def push(self, t: str) -> None:
        self.stack.append(t)

    def pop(self, ins: Instr, expect: str | None = None) -> str:
        top = self.ctrls[-1]
        if len(self.stack) == top.height:
            if top.unreachable:
                return expect or ANY
            self.error("StackUnderflowAtValidation", f"{ins.op} needs an operand", ins)
        t = self.stack.pop()
        if expect is not None and t != ANY and expect != ANY and t != expect:
            self.error("TypeMismatchAtValidation", f"{ins.op} expects {expect}, found {t}", ins)
        return t

    def pop_all(self, ins: Instr, types: list[str]) -> None:
        for t in reversed(types):
            self.pop(ins, t)

    def unreachable(self) -> None:
        top = self.ctrls[-1]
        del self.stack[top.height:]
        top.unreachable = True

    def label(self, ins: Instr, name: str) -> _Ctrl:
        for c in reversed(self.ctrls):
            if c.label == name:
                return c
        self.error("UnknownLabel", f"no enclosing block or loop ${name}", ins)

    def run(self) -> None:
        results = [vt(t) for t in self.f.results]
        self.ctrls.append(_Ctrl("func", None, results, results, 0))
        try:
            self.seq(self.f.body)
            self.end(Instr("end"))
        except _Invalid:
            pass

    def end(self, ins: Instr) -> None:
        top = self.ctrls[-1]
        self.pop_all(ins, top.end_types)
        if len(self.stack) != top.height:
            self.error("BlockResultMismatch", f"{len(self.stack) - top.height} extra values at end of {top.kind}", ins)

    def seq(self, instrs: list[Instr]) -> None:
        for ins in instrs:
            self.instr(ins)

    def block(self, ins: Instr, kind: str, body: list[Instr], label: str | None) -> None:
        results = [vt(t) for t in ins.results]
        c = _Ctrl(kind, label, [] if kind == "loop" else results, results, len(self.stack))
        self.ctrls.append(c)
        self.seq(body)
        self.end(ins)
        self.ctrls.pop()
        self.stack.extend(results)

    def instr(self, ins: Instr) -> None:
        op = ins.op
        kind, _, name = op.partition(".")
        if op in ("block", "loop"):
            self.block(ins, op, ins.body, ins.args[0])
        elif op == "if":
            self.pop(ins, "i32")
            results = [vt(t) for t in ins.results]
            h = len(self.stack)
            self.block(ins, "if", ins.body, None)
            del self.stack[h:]
            if results and not ins.orelse:
                self.error("BlockResultMismatch", "if with results needs an else", ins)
            self.block(ins, "else", ins.orelse, None)
        elif op == "br":
            c = self.label(ins, ins.args[0])
            self.pop_all(ins, c.label_types)
            self.unreachable()
        elif op == "br_if":
            c = self.label(ins, ins.args[0])
            self.pop(ins, "i32")
            self.pop_all(ins, c.label_types)
            self.stack.extend(c.label_types)
        elif op == "return":
            self.pop_all(ins, self.ctrls[0].end_types)
            self.unreachable()
        elif op == "unreachable":
            self.unreachable()
        elif op == "drop":
            self.pop(ins)
        elif op == "select":
            self.pop(ins, "i32")
            b = self.pop(ins)
            a = self.pop(ins, b if b != ANY else None)
            self.push(a if a != ANY else b)
        elif op in ("local.get", "local.set", "local.tee"):
            i = ins.args[0]
            if not isinstance(i, int) or not 0 <= i < len(self.locals):
                self.error("UnknownLocal", f"local index {i} out of range", ins)
            t = self.locals[i]
            if op != "local.get":
                self.pop(ins, t)
            if op != "local.set":
                self.push(t)
        elif op in ("global.get", "global.set"):
            g = self.m.global_(ins.args[0])
            if g is None:
                self.error("UnknownGlobal", f"no global ${ins.args[0]}", ins)
            if op == "global.set":
                if not g.mutable:
                    self.error("ImmutableGlobal", f"${g.name} is immutable", ins)
                self.pop(ins, vt(g.type))
            else:
                self.push(vt(g.type))
        elif op == "call":
            ft = self.m.signature(ins.args[0])
            if ft is None:
                self.error("UnknownFunction", f"no function ${ins.args[0]}", ins)
            self.pop_all(ins, [vt(t) for t in ft.params])
            self.stack.extend(vt(t) for t in ft.results)
        elif op == "ref.func":
            if self.m.signature(ins.args[0]) is None:
                self.error("UnknownFunction", f"no function ${ins.args[0]}", ins)
            self.push("funcref")
        elif op == "cont.new":
            self.cont_type(ins, ins.args[0])
            self.pop(ins, "funcref")
            self.push(f"ref:{ins.args[0]}")
        elif op == "suspend":
            tag = self.tag(ins, ins.args[0])
            self.pop_all(ins, [vt(t) for t in tag.params])
            self.stack.extend(vt(t) for t in tag.results)
        elif op == "resume":
            self.resume(ins)
        elif name == "const":
            self.push(kind)
        elif name.startswith("load") or name.startswith("store"):
            if len(ins.args) > 1 and ins.args[1] != 0:
                self.error("MemoryIndexOutOfRange", "only memory 0 exists", ins)
            if name.startswith("load"):
                self.pop(ins, "i32")
                self.push(kind)
            else:
                self.pop(ins, kind)
                self.pop(ins, "i32")
        elif _CONV.match(op):
            mt = _CONV.match(op)
            self.pop(ins, mt.group(3))
            self.push(mt.group(1))
        elif kind in ("i32", "i64", "f32", "f64") and name in ("eqz",):
            self.pop(ins, kind)
            self.push("i32")
        elif kind in ("f32", "f64") and name == "neg":
            self.pop(ins, kind)
            self.push(kind)
        elif (kind in ("i32", "i64") and name in COMPARISONS & INT_BINOPS) or (
                kind in ("f32", "f64") and name in COMPARISONS & FLOAT_BINOPS):
            self.pop(ins, kind)
            self.pop(ins, kind)
            self.push("i32")
        elif (kind in ("i32", "i64") and name in _INT_ARITH) or (kind in ("f32", "f64") and name in _FLOAT_ARITH):
            self.pop(ins, kind)
            self.pop(ins, kind)
            self.push(kind)
        else:
            self.error("UnknownInstruction", f"{op} is outside the supported subset", ins)

    def cont_type(self, ins: Instr, name: str) -> FuncType:
        ct = self.m.cont_types.get(name)
        if ct is None:
            self.error("UnknownContType", f"no continuation type ${name}", ins)
        return ct

    def tag(self, ins: Instr, name: str) -> FuncType:
        t = self.m.tags.get(name)
        if t is None:
            self.error("UnknownTag", f"no tag ${name}", ins)
        return t

    def resume(self, ins: Instr) -> None:
        ct_name, clauses = ins.args
        ft = self.cont_type(ins, ct_name)
        for tag_name, label in clauses:
            tag = self.tag(ins, tag_name)
            c = self.label(ins, label)
            want = [f"ref:{ct_name}"] + [vt(t) for t in tag.params]
            if c.kind == "loop" or c.label_types != want:
                self.error("HandlerBlockMismatch",
                           f"handler ${label} must produce ({', '.join(want)}), has ({', '.join(c.label_types)})", ins)
        self.pop(ins, f"ref:{ct_name}")
        self.pop_all(ins, [vt(t) for t in ft.params])
        self.stack.extend(vt(t) for t in ft.results)


def validate_wasm(m: WasmModule) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    names: set[str] = set()
    for n in [n for n, _ in m.imports] + [f.name for f in m.funcs]:
        if n in names:
            diags.append(Diagnostic("DuplicateSymbol", f"function ${n} defined twice"))
        names.add(n)
    end = m.memory_pages * 65536
    for d in m.data:
        if d.offset < 0 or d.offset + len(d.data) > end:
            diags.append(Diagnostic("DataOutOfBounds", f"data at {d.offset} does not fit in memory"))
    for g in m.globals:
        if g.type.kind not in ("i32", "i64", "f32", "f64"):
            diags.append(Diagnostic("UnsupportedGlobalType", f"global ${g.name} has type {g.type}"))
    for f in m.funcs:
        _FuncChecker(m, f, diags).run()
    return diags
