"""Parser and printer for the ``.mir`` text form (all IR levels).

The syntax is MLIR-flavoured and line-oriented: an operation and its operands
sit on one line; only region bodies span lines.

    %2 = arith.addi %0, %1 : i32
    %c = arith.cmpi slt %i, %n : i32
    ssawasm.pseudo_cond_br %c, ^body, ^block_label
    %r = func.call @f(%a) : i32
    wasm.block "blk0" {
      ...
    }
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

from .ir import (
    Block,
    Diagnostic,
    FloatAttr,
    Function,
    IRError,
    IrModule,
    Operation,
    Region,
    SourceSpan,
    SymbolRef,
    Value,
)
from .registry import UnknownOp, lookup_signature
from .types import SCALARS, FuncType, TypeDesc, cont_sig, contref, local, memref, FUNCREF
from .verifier import check_signature

# -- lexer --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<value>%[A-Za-z0-9_.$#]+)
  | (?P<label>\^[A-Za-z0-9_.$]+)
  | (?P<symbol>@[A-Za-z0-9_.$]+)
  | (?P<bang>![A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<number>-?(?:0[xX][0-9a-fA-F]+|\d+(?:\.\d*)?(?:[eE][+-]?\d+)?))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.$]*)
  | (?P<punct>[(){}\[\]<>,:=*])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


class ParseError(IRError):
    pass


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise ParseError(Diagnostic("SyntaxError", f"unexpected character {text[pos]!r}",
                                        SourceSpan(file, line, col)))
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(Token("eof", "", line + 1, 1))
    return toks


# -- parser -------------------------------------------------------------------

_FUNC_KINDS = {"func.func": "func", "ssawasm.func": "ssawasm", "wasm.func": "wasm"}


def _unescape(s: str) -> str:
    body = s[1:-1]
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


class _Parser:
    def __init__(self, text: str, file: str):
        self.file = file
        self.toks = tokenize(text, file)
        self.i = 0
        self.values: dict[str, Value] = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def span(self, t: Token | None = None) -> SourceSpan:
        t = t or self.tok
        return SourceSpan(self.file, t.line, t.col, max(1, len(t.text)))

    def error(self, msg: str, rule: str = "SyntaxError", t: Token | None = None):
        raise ParseError(Diagnostic(rule, msg, self.span(t)))

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "string"

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected '{text}', found '{self.tok.text or 'end of input'}'")
        return self.next()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    # module
    def module(self) -> IrModule:
        m = IrModule()
        # a bare list of top-level items is an implicit module
        implicit = not self.at("module")
        if not implicit:
            self.next()
            if self.accept("attributes"):
                m.attrs = self.attr_dict()
            self.expect("{")
        end = "eof" if implicit else "}"
        while not (self.tok.kind == "eof" if implicit else self.at("}")):
            if self.tok.kind == "eof":
                self.error("unterminated module")
            if self.tok.text in _FUNC_KINDS:
                start = self.tok
                f = self.function()
                if m.function(f.name) is not None:
                    self.error(f"function @{f.name} defined twice", "DuplicateSymbol", start)
                m.functions.append(f)
            else:
                m.globals.append(self.toplevel_op())
        if end == "}":
            self.expect("}")
        if self.tok.kind != "eof":
            self.error("trailing input after module")
        m.level = _infer_level(m)
        return m

    def function(self) -> Function:
        kw = self.next()
        kind = _FUNC_KINDS[kw.text]
        exported = not self.accept("private")
        if self.tok.kind != "symbol":
            self.error("expected function name")
        name = self.next().text[1:]
        self.values = {}
        self.expect("(")
        params: list[tuple[str | None, TypeDesc]] = []
        while not self.at(")"):
            if self.tok.kind == "value":
                vname = self.next().text
                self.expect(":")
                params.append((vname, self.type()))
            else:
                params.append((None, self.type()))
            if not self.accept(","):
                break
        self.expect(")")
        results: list[TypeDesc] = []
        if self.accept("->"):
            results = self.type_group()
        f = Function(name, kind, exported, [t for _, t in params], results, span=self.span(kw))
        if kind == "wasm" and self.accept("locals"):
            self.expect("[")
            while not self.at("]"):
                f.locals.append(self.type())
                if not self.accept(","):
                    break
            self.expect("]")
        if self.at("{"):
            self.next()
            entry = Block("bb0", [t for _, t in params] if kind != "wasm" else [])
            if kind != "wasm":
                for (vname, _), v in zip(params, entry.args):
                    if vname is None:
                        self.error("function with a body needs named parameters")
                    self.define(vname, v)
            f.body = Region()
            f.body.parent = f
            self.region_body(f.body, entry)
            self.expect("}")
        return f

    def type_group(self) -> list[TypeDesc]:
        if self.at("("):
            self.next()
            out = []
            while not self.at(")"):
                out.append(self.type())
                if not self.accept(","):
                    break
            self.expect(")")
            return out
        return [self.type()]

    def type(self) -> TypeDesc:
        t = self.tok
        if t.kind == "ident" and t.text in SCALARS:
            self.next()
            return SCALARS[t.text]
        if t.kind == "ident" and t.text == "memref":
            self.next()
            self.expect("<")
            spec = self.next()
            parts = spec.text.split("x")
            self.expect(">")
            if parts[0] not in SCALARS or len(parts) < 2:
                self.error(f"bad memref type '{spec.text}'", t=spec)
            try:
                return memref(SCALARS[parts[0]], *(int(p) for p in parts[1:]))
            except ValueError as e:
                self.error(str(e), t=spec)
        if (t.kind == "bang" and t.text == "!ssawasm.local") or (t.kind == "ident" and t.text == "local"):
            self.next()
            self.expect("<")
            inner = self.type()
            self.expect(">")
            return local(inner)
        if t.kind == "bang" and t.text == "!ssawasm.func_ref":
            self.next()
            return FUNCREF
        if t.kind == "bang" and t.text == "!ssawasm.cont":
            self.next()
            self.expect("<")
            s = self.next()
            if s.kind != "string":
                self.error("expected a quoted cont type name", t=s)
            self.expect(">")
            return contref(_unescape(s.text))
        if t.kind == "bang" and t.text == "!dcont.cont":
            self.next()
            self.expect("<")
            payload = self.type_group()
            self.expect("->")
            resume = self.type_group()
            self.expect(">")
            return cont_sig(tuple(payload), tuple(resume))
        self.error(f"expected a type, found '{t.text}'")

    def functype(self) -> FuncType:
        params = self.type_group()
        self.expect("->")
        return FuncType(tuple(params), tuple(self.type_group()))

    # values
    def define(self, name: str, v: Value) -> None:
        if name in self.values:
            self.error(f"value {name} defined twice", "DuplicateValue")
        self.values[name] = v

    def use(self, t: Token) -> Value:
        v = self.values.get(t.text)
        if v is None:
            self.error(f"use of undefined value {t.text}", "UndefinedValue", t)
        return v

    # regions / blocks
    def region_body(self, region: Region, entry: Block | None = None) -> None:
        block = entry
        if block is None and not self.at("}") and self.tok.kind != "label":
            block = Block("bb0")
        if block is not None:
            region.add_block(block)
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unterminated region")
            if self.tok.kind == "label":
                lt = self.next()
                block = Block(lt.text[1:])
                if region.block(block.label) is not None:
                    self.error(f"duplicate block label {lt.text}", "DuplicateLabel", lt)
                if self.accept("("):
                    while not self.at(")"):
                        vt = self.next()
                        if vt.kind != "value":
                            self.error("expected block argument", t=vt)
                        self.expect(":")
                        self.define(vt.text, block.add_arg(self.type()))
                        if not self.accept(","):
                            break
                    self.expect(")")
                self.expect(":")
                region.add_block(block)
                continue
            if block is None:
                block = region.add_block(Block("bb0"))
            block.append(self.operation())

    def operation(self) -> Operation:
        start = self.tok
        names: list[Token] = []
        if self.tok.kind == "value":
            while True:
                t = self.next()
                if t.kind != "value":
                    self.error("expected result name", t=t)
                names.append(t)
                if not self.accept(","):
                    break
            self.expect("=")
        nt = self.next()
        if nt.kind != "ident" or "." not in nt.text:
            self.error(f"expected an operation name, found '{nt.text}'", t=nt)
        dialect, _, name = nt.text.partition(".")
        try:
            sig = lookup_signature(dialect, name)
        except UnknownOp:
            self.error(f"unknown operation {nt.text}", "UnknownOp", nt)
        line = nt.line
        attrs: dict = {}
        pending_floats: list[str] = []
        for a in sig.lead:
            lt = self.tok
            if lt.line != line:
                self.error(f"missing '{a}' for {nt.text}", t=lt)
            attrs[a] = self.lead_literal()
            if isinstance(attrs[a], float) or (lt.kind == "number" and a == "value"):
                pending_floats.append(a)
        operands: list[Value] = []
        successors: list[str] = []
        if sig.parens and self.tok.line == line and self.at("("):
            self.next()
            while not self.at(")"):
                operands.append(self.use(self.next()))
                if not self.accept(","):
                    break
            self.expect(")")
        elif self.tok.kind in ("value", "label") and self.tok.line == line:
            while True:
                t = self.next()
                if t.kind == "value":
                    if successors:
                        self.error("operands must precede successors", t=t)
                    operands.append(self.use(t))
                elif t.kind == "label":
                    successors.append(t.text[1:])
                else:
                    self.error(f"expected operand, found '{t.text}'", t=t)
                if not (self.at(",") and self.tok.line == line):
                    break
                self.next()
        if self.tok.kind == "label" and self.tok.line == line and sig.parens:
            while True:
                successors.append(self.next().text[1:])
                if not self.accept(","):
                    break
        regions: list[Region] = []
        while self.at("{") and self.tok.line == line:
            if self.peek().kind == "ident" and self.peek(2).text == "=":
                attrs.update(self.attr_dict())
                continue
            self.next()
            saved = dict(self.values)
            r = Region()
            self.region_body(r)
            close = self.expect("}")
            # values defined inside a region are not visible after it
            self.values = {k: v for k, v in self.values.items() if k in saved}
            regions.append(r)
            line = close.line
        if nt.text == "scf.if" and len(regions) == 1:
            regions.append(Region())  # no else branch
        result_types: list[TypeDesc] = []
        if self.at(":") and self.tok.line == line:
            self.next()
            while True:
                result_types.append(self.type())
                if not self.accept(","):
                    break
        if len(result_types) != len(names):
            self.error(f"{nt.text} declares {len(names)} results but {len(result_types)} result types",
                       "ResultCountMismatch", nt)
        lit_type = result_types[0] if result_types else None
        if dialect == "wasm" and name.endswith(".const"):
            lit_type = SCALARS.get(name.split(".")[0])
        for a in pending_floats:
            attrs[a] = _coerce_number(attrs[a], lit_type)
        op = Operation(nt.text, operands, result_types, attrs, regions, successors, self.span(start))
        for t, v in zip(names, op.results):
            self.define(t.text, v)
        diags = [d for d in check_signature(op) if d.rule != "UnknownOp"]
        if diags:
            raise ParseError(diags)
        return op

    # literals
    def lead_literal(self):
        t = self.tok
        if t.kind == "symbol":
            self.next()
            return SymbolRef(t.text[1:])
        if t.kind == "string":
            self.next()
            return _unescape(t.text)
        if t.kind == "number":
            self.next()
            return _number(t.text)
        if t.kind == "ident" and t.text in ("inf", "nan"):
            self.next()
            return float(t.text)
        if t.kind == "ident":
            self.next()
            return t.text
        self.error(f"expected a literal, found '{t.text}'")

    def attr_dict(self) -> dict:
        self.expect("{")
        out = {}
        while not self.at("}"):
            k = self.next()
            if k.kind != "ident":
                self.error("expected attribute name", t=k)
            self.expect("=")
            out[k.text] = self.attr_value()
            if not self.accept(","):
                break
        self.expect("}")
        return out

    def attr_value(self):
        t = self.tok
        if t.text == "[":
            self.next()
            items = []
            while not self.at("]"):
                items.append(self.attr_value())
                if not self.accept(","):
                    break
            self.expect("]")
            return tuple(items)
        if t.text == "(":
            return self.functype()
        if t.kind == "ident" and t.text == "dense":
            return self.dense(None)
        if t.kind == "ident" and t.text in ("f32", "f64") and self.peek().text == "<":
            self.next()
            self.expect("<")
            bits = self.next()
            self.expect(">")
            return FloatAttr(int(bits.text, 16), 32 if t.text == "f32" else 64)
        if t.kind in ("bang",) or (t.kind == "ident" and (t.text in SCALARS or t.text in ("memref", "local"))):
            return self.type()
        return self.lead_literal()

    def dense(self, elem: TypeDesc | None) -> bytes:
        self.expect("dense")
        self.expect("<")
        if self.tok.kind == "string":
            s = _unescape(self.next().text)
            self.expect(">")
            hexpart = s[2:] if s[:2].lower() == "0x" else s
            try:
                return bytes.fromhex(hexpart)
            except ValueError:
                self.error(f"invalid hex payload {s!r}")
        self.expect("[")
        items = []
        while not self.at("]"):
            items.append(_number(self.next().text))
            if not self.accept(","):
                break
        self.expect("]")
        self.expect(">")
        if elem is None:
            self.error("dense list needs an element type")
        return pack_elements(items, elem)

    def toplevel_op(self) -> Operation:
        nt = self.next()
        if nt.kind != "ident" or "." not in nt.text:
            self.error(f"expected a module-level operation, found '{nt.text}'", t=nt)
        dialect, _, name = nt.text.partition(".")
        try:
            sig = lookup_signature(dialect, name)
        except UnknownOp:
            self.error(f"unknown operation {nt.text}", "UnknownOp", nt)
        if not sig.toplevel:
            self.error(f"{nt.text} is not a module-level operation", t=nt)
        attrs: dict = {}
        if self.tok.kind == "symbol":
            attrs["sym_name"] = self.next().text[1:]
        ty = None
        if self.accept(":"):
            ty = self.functype() if self.at("(") else self.type()
            attrs["type"] = ty
        if self.accept("<"):
            while not self.at(">"):
                k = self.next()
                self.expect(":")
                attrs[k.text] = _number(self.next().text)
                if not self.accept(","):
                    break
            self.expect(">")
        if self.at("{") and self.peek().kind == "ident":
            attrs.update(self.attr_dict())
        if self.accept("="):
            if self.at("dense"):
                elem = ty.elem if isinstance(ty, TypeDesc) and ty.kind == "memref" else None
                attrs["init"] = self.dense(elem)
            else:
                attrs["init"] = _coerce_number(self.lead_literal(), ty if isinstance(ty, TypeDesc) else None)
        op = Operation(nt.text, attrs=attrs, span=self.span(nt))
        diags = check_signature(op)
        if diags:
            raise ParseError(diags)
        return op


def _number(text: str):
    if text.lower().startswith(("0x", "-0x")):
        return int(text, 16)
    if any(c in text for c in ".eE") and not text.lower().startswith("0x"):
        return float(text)
    return int(text)


def _coerce_number(v, t: TypeDesc | None):
    if t is not None and t.kind == "local":
        t = t.elem
    if t is not None and t.is_float:
        width = 32 if t.kind == "f32" else 64
        if isinstance(v, FloatAttr):
            return v
        if isinstance(v, int) and not isinstance(v, bool):
            # decimal ints are values; the printer only emits hex for raw bit patterns
            return FloatAttr.from_float(float(v), width)
        return FloatAttr.from_float(v, width)
    if t is not None and isinstance(v, int):
        return normalize_int(v, t)
    return v


def normalize_int(v: int, t: TypeDesc) -> int:
    """Canonical signed value of an integer literal of type ``t``."""
    bits = 64 if t.kind == "i64" else 32
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >> (bits - 1) else v


def pack_elements(items, elem: TypeDesc) -> bytes:
    fmt = {"i32": "<I", "index": "<I", "i64": "<Q", "f32": "<f", "f64": "<d"}[elem.kind]
    out = bytearray()
    for x in items:
        if elem.is_float:
            out += struct.pack(fmt, float(x))
        else:
            out += struct.pack(fmt, int(x) & ((1 << (8 * elem.width)) - 1))
    return bytes(out)


def _infer_level(m: IrModule) -> str:
    if any(f.kind == "wasm" for f in m.functions):
        return "wasm"
    if any(f.kind == "ssawasm" for f in m.functions):
        return "ssawasm"
    if any(op.dialect in ("ssawasm", "wasm") for op in m.walk()):
        return "ssawasm"
    return "high"


def parse_module(text: str, file: str = "<input>") -> IrModule:
    """Parse ``.mir`` text; raises :class:`ParseError` with diagnostics on failure."""
    return _Parser(text, file).module()


# -- printer ------------------------------------------------------------------

_BARE_LEAD = {"predicate"}


def format_float(fa: FloatAttr) -> str:
    x = fa.value
    if x != x or x in (float("inf"), float("-inf")):
        return f"0x{fa.bits:0{fa.width // 4}X}"
    return repr(x)


def format_attr(v, bare: bool = False) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, FloatAttr):
        return format_float(v)
    if isinstance(v, SymbolRef):
        return str(v)
    if isinstance(v, str):
        if bare and re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", v) and v not in SCALARS:
            return v
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (TypeDesc, FuncType)):
        return str(v)
    if isinstance(v, bytes):
        return f'dense<"0x{v.hex().upper()}">'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(format_attr(x) for x in v) + "]"
    raise TypeError(f"unprintable attribute {v!r}")


class _Printer:
    def __init__(self):
        self.lines: list[str] = []
        self.names: dict[Value, str] = {}

    def name(self, v: Value) -> str:
        n = self.names.get(v)
        if n is None:
            n = f"%{len(self.names)}"
            self.names[v] = n
        return n

    def module(self, m: IrModule) -> str:
        head = "module"
        if m.attrs:
            head += " attributes {" + ", ".join(f"{k} = {format_attr(v)}" for k, v in m.attrs.items()) + "}"
        self.lines.append(head + " {")
        for op in m.globals:
            self.lines.append("  " + self.toplevel(op))
        for f in m.functions:
            self.function(f)
        self.lines.append("}")
        return "\n".join(self.lines) + "\n"

    def toplevel(self, op: Operation) -> str:
        s = op.opname
        a = op.attrs
        if "sym_name" in a:
            s += f" @{a['sym_name']}"
        if "type" in a:
            s += f" : {a['type']}"
        props = [(k, v) for k, v in a.items() if k not in ("sym_name", "type", "init") and isinstance(v, int)]
        if props:
            s += " <" + ", ".join(f"{k}: {v}" for k, v in props) + ">"
        rest = {k: v for k, v in a.items() if k not in ("sym_name", "type", "init") and not isinstance(v, int)}
        if rest:
            s += " {" + ", ".join(f"{k} = {format_attr(v)}" for k, v in rest.items()) + "}"
        if "init" in a:
            s += " = " + format_attr(a["init"])
        return s

    def function(self, f: Function) -> None:
        self.names = {}
        kw = {"func": "func.func", "ssawasm": "ssawasm.func", "wasm": "wasm.func"}[f.kind]
        head = kw + ("" if f.exported else " private") + f" @{f.name}("
        if f.body is not None and f.kind != "wasm":
            head += ", ".join(f"{self.name(a)}: {a.type}" for a in f.entry.args)
        else:
            head += ", ".join(str(t) for t in f.param_types)
        head += ")"
        if f.result_types:
            rs = f.result_types
            head += " -> " + (str(rs[0]) if len(rs) == 1 else "(" + ", ".join(map(str, rs)) + ")")
        if f.kind == "wasm" and f.locals:
            head += " locals [" + ", ".join(map(str, f.locals)) + "]"
        if f.body is None:
            self.lines.append("  " + head)
            return
        self.lines.append("  " + head + " {")
        self.region_body(f.body, 2, skip_entry_header=True)
        self.lines.append("  }")

    def region_body(self, r: Region, indent: int, skip_entry_header: bool = False) -> None:
        for i, b in enumerate(r.blocks):
            header = i > 0 or b.label != "bb0" or (b.args and not skip_entry_header)
            if i == 0 and skip_entry_header:
                header = b.label != "bb0"
            if header:
                args = ""
                if b.args and not (i == 0 and skip_entry_header):
                    args = "(" + ", ".join(f"{self.name(a)}: {a.type}" for a in b.args) + ")"
                self.lines.append(" " * indent + f"^{b.label}{args}:")
            for op in b.ops:
                self.op(op, indent + 2)

    def op(self, op: Operation, indent: int) -> None:
        sig = lookup_signature(op.dialect, op.name)
        s = " " * indent
        if op.results:
            s += ", ".join(self.name(r) for r in op.results) + " = "
        s += op.opname
        for a in sig.lead:
            s += " " + format_attr(op.attrs[a], bare=a in _BARE_LEAD)
        ops = [self.name(v) for v in op.operands]
        succ = [f"^{x}" for x in op.successors]
        if sig.parens:
            s += "(" + ", ".join(ops) + ")"
            if succ:
                s += " " + ", ".join(succ)
        elif ops or succ:
            s += " " + ", ".join(ops + succ)
        rest = [(k, v) for k, v in op.attrs.items() if k not in sig.lead]
        order = {k: i for i, k in enumerate(sig.attrs)}
        rest.sort(key=lambda kv: (order.get(kv[0], len(order)), kv[0]))
        if rest:
            s += " {" + ", ".join(f"{k} = {format_attr(v)}" for k, v in rest) + "}"
        tail = ""
        if op.results:
            tail = " : " + ", ".join(str(r.type) for r in op.results)
        if not op.regions:
            self.lines.append(s + tail)
            return
        for r in op.regions:
            self.lines.append(s + " {")
            self.region_body(r, indent + 2)
            s = " " * indent + "}"
        self.lines.append(s + tail)


def print_module(m: IrModule) -> str:
    return _Printer().module(m)
