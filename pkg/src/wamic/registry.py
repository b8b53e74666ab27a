"""Operation registry: one :class:`OpSignature` per (dialect, name).

Operand/result type patterns are short strings:

``T`` / ``T:int`` / ``T:float`` / ``T:num``
    a type variable, optionally constrained; all occurrences must agree.
``i32`` ``index`` ...
    an exact scalar.
``int`` ``float`` ``scalar`` ``num`` ``memref`` ``contref`` ``funcref`` ``local`` ``any``
    a kind constraint without binding.
``L(T)``
    a ``local<T>`` whose inner type binds ``T``.
``addr``
    ``i32`` or a memref (an address).

A pattern tuple ending in ``"*"`` accepts any number of extra ``any`` values;
``None`` means fully variadic (checked elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import IRError
from .types import TypeDesc


class UnknownOp(IRError):
    def __init__(self, dialect: str, name: str):
        super().__init__(f"unknown operation {dialect}.{name}", rule="UnknownOp")
        self.dialect = dialect
        self.name = name


@dataclass(frozen=True)
class OpSignature:
    dialect: str
    name: str
    operands: tuple[str, ...] | None = ()
    results: tuple[str, ...] | None = ()
    attrs: tuple[str, ...] = ()
    regions: int = 0
    successors: int = 0
    terminator: bool = False
    pure: bool = False
    # attribute names printed positionally right after the op name
    lead: tuple[str, ...] = ()
    toplevel: bool = False
    parens: bool = False
    traps: bool = False

    @property
    def opname(self) -> str:
        return f"{self.dialect}.{self.name}"


_REGISTRY: dict[tuple[str, str], OpSignature] = {}


def register(sig: OpSignature) -> OpSignature:
    key = (sig.dialect, sig.name)
    if key in _REGISTRY:
        raise ValueError(f"duplicate signature for {sig.opname}")
    _REGISTRY[key] = sig
    return sig


def lookup_signature(dialect: str, name: str) -> OpSignature:
    try:
        return _REGISTRY[(dialect, name)]
    except KeyError:
        raise UnknownOp(dialect, name) from None


def all_signatures() -> list[OpSignature]:
    return list(_REGISTRY.values())


def _op(opname: str, operands=(), results=(), **kw) -> OpSignature:
    dialect, _, name = opname.partition(".")
    return register(OpSignature(dialect, name, operands, results, **kw))


# -- pattern matching ---------------------------------------------------------


def _kind_ok(kind: str, t: TypeDesc) -> bool:
    if kind == "int":
        return t.is_int
    if kind == "float":
        return t.is_float
    if kind == "num":
        return t.kind in ("i32", "i64", "f32", "f64")
    if kind == "scalar":
        return t.is_scalar
    if kind == "addr":
        return t.kind in ("i32", "memref")
    if kind in ("memref", "contref", "funcref", "local"):
        return t.kind == kind
    if kind == "value":
        return t.kind != "local"
    if kind == "any":
        return True
    return t.kind == kind


def match_types(patterns, types, env: dict) -> str | None:
    """Check ``types`` against ``patterns``; returns an error string or None."""
    if patterns is None:
        return None
    pats = list(patterns)
    variadic = bool(pats) and pats[-1] == "*"
    if variadic:
        pats.pop()
        if len(types) < len(pats):
            return f"expected at least {len(pats)} values, got {len(types)}"
    elif len(types) != len(pats):
        return f"expected {len(pats)} values, got {len(types)}"
    for i, (p, t) in enumerate(zip(pats, types)):
        err = _match_one(p, t, env)
        if err:
            return f"#{i}: {err}"
    return None


def _match_one(p: str, t: TypeDesc, env: dict) -> str | None:
    if p.startswith("L(") and p.endswith(")"):
        if t.kind != "local":
            return f"expected a local, got {t}"
        return _match_one(p[2:-1], t.elem, env)
    var, _, kind = p.partition(":")
    if var == "T":
        if kind and not _kind_ok(kind, t):
            return f"{t} is not {kind}"
        if "T" in env and env["T"] != t:
            return f"type mismatch: {t} vs {env['T']}"
        env["T"] = t
        return None
    if not _kind_ok(p, t):
        return f"{t} does not match {p}"
    return None


# -- high-level dialects ------------------------------------------------------

_INT_BINOPS = ("addi", "subi", "muli", "divsi", "divui", "remsi", "remui",
               "andi", "ori", "xori", "shli", "shrsi", "shrui")
for _n in _INT_BINOPS:
    _op(f"arith.{_n}", ("T:int", "T"), ("T",), pure=True, traps=_n[:3] in ("div", "rem"))
for _n in ("addf", "subf", "mulf", "divf"):
    _op(f"arith.{_n}", ("T:float", "T"), ("T",), pure=True)
_op("arith.negf", ("T:float",), ("T",), pure=True)
_op("arith.constant", (), ("T:scalar",), attrs=("value",), lead=("value",), pure=True)
_op("arith.cmpi", ("T:int", "T"), ("i32",), attrs=("predicate",), lead=("predicate",), pure=True)
_op("arith.cmpf", ("T:float", "T"), ("i32",), attrs=("predicate",), lead=("predicate",), pure=True)
_op("arith.sitofp", ("int",), ("float",), pure=True)
_op("arith.uitofp", ("int",), ("float",), pure=True)
_op("arith.fptosi", ("float",), ("int",), pure=True, traps=True)
_op("arith.fptoui", ("float",), ("int",), pure=True, traps=True)
_op("arith.extsi", ("int",), ("int",), pure=True)
_op("arith.extui", ("int",), ("int",), pure=True)
_op("arith.trunci", ("int",), ("int",), pure=True)
_op("arith.extf", ("float",), ("float",), pure=True)
_op("arith.truncf", ("float",), ("float",), pure=True)
_op("arith.index_cast", ("int",), ("int",), pure=True)
_op("arith.select", ("i32", "T", "T"), ("T",), pure=True)

_op("func.call", None, None, attrs=("callee",), lead=("callee",), parens=True)
_op("func.return", None, (), terminator=True)

_op("scf.for", None, None, regions=1)
_op("scf.while", None, None, regions=2)
_op("scf.if", ("i32",), None, regions=2)
_op("scf.yield", None, (), terminator=True)
_op("scf.condition", ("i32", "*"), (), terminator=True)

_op("memref.global", attrs=("sym_name", "type"), toplevel=True)
_op("memref.get_global", (), ("memref",), attrs=("name",), lead=("name",), pure=True)
_op("memref.alloc", (), ("memref",))
_op("memref.alloca", (), ("memref",))
_op("memref.dealloc", ("memref",), ())
_op("memref.load", ("memref", "*"), ("scalar",))
_op("memref.store", ("scalar", "memref", "*"), ())

_op("dcont.new", (), ("contref",), attrs=("func",), lead=("func",))
_op("dcont.suspend", None, None, parens=True)
_op("dcont.resume", ("contref", "*"), (), regions=1)
_op("dcont.alloc", (), ("local",))
_op("dcont.load", ("L(T)",), ("T:contref",))
_op("dcont.store", ("T:contref", "L(T)"), ())

# -- SsaWasm ------------------------------------------------------------------

for _n in ("add", "sub", "mul"):
    _op(f"ssawasm.{_n}", ("T:num", "T"), ("T",), pure=True)
for _n in ("div_s", "div_u", "rem_s", "rem_u"):
    _op(f"ssawasm.{_n}", ("T:int", "T"), ("T",), pure=True, traps=True)
for _n in ("and", "or", "xor", "shl", "shr_s", "shr_u"):
    _op(f"ssawasm.{_n}", ("T:int", "T"), ("T",), pure=True)
_op("ssawasm.div", ("T:float", "T"), ("T",), pure=True)
_op("ssawasm.neg", ("T:float",), ("T",), pure=True)
for _n in ("eq", "ne"):
    _op(f"ssawasm.{_n}", ("T:num", "T"), ("i32",), pure=True)
for _n in ("lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"):
    _op(f"ssawasm.{_n}", ("T:int", "T"), ("i32",), pure=True)
for _n in ("lt", "gt", "le", "ge"):
    _op(f"ssawasm.{_n}", ("T:float", "T"), ("i32",), pure=True)
_op("ssawasm.eqz", ("int",), ("i32",), pure=True)
_op("ssawasm.const", (), ("T",), attrs=("value",), lead=("value",), pure=True)
_op("ssawasm.convert_s", ("int",), ("float",), pure=True)
_op("ssawasm.convert_u", ("int",), ("float",), pure=True)
_op("ssawasm.trunc_s", ("float",), ("int",), pure=True, traps=True)
_op("ssawasm.trunc_u", ("float",), ("int",), pure=True, traps=True)
_op("ssawasm.extend_s", ("i32",), ("i64",), pure=True)
_op("ssawasm.extend_u", ("i32",), ("i64",), pure=True)
_op("ssawasm.wrap", ("i64",), ("i32",), pure=True)
_op("ssawasm.promote", ("f32",), ("f64",), pure=True)
_op("ssawasm.demote", ("f64",), ("f32",), pure=True)
_op("ssawasm.select", ("T", "T", "i32"), ("T",), pure=True)

_op("ssawasm.local_decl", (), ("local",))
_op("ssawasm.local_get", ("L(T)",), ("T",))
_op("ssawasm.local_set", ("L(T)", "T"), ())
_op("ssawasm.global_get", (), ("scalar",), attrs=("name",), lead=("name",))
_op("ssawasm.global_set", ("scalar",), (), attrs=("name",), lead=("name",))
_op("ssawasm.call", None, None, attrs=("callee",), lead=("callee",), parens=True)
_op("ssawasm.func_ref", (), ("funcref",), attrs=("func",), lead=("func",), pure=True)
_op("ssawasm.return", None, (), terminator=True)
_op("ssawasm.load", ("addr",), ("scalar",), attrs=("offset",))
_op("ssawasm.store", ("addr", "scalar"), (), attrs=("offset",))
_op("ssawasm.drop", ("value",), ())

_op("ssawasm.block_loop", (), (), regions=1)
_op("ssawasm.block_block", (), (), regions=1)
_op("ssawasm.if", ("i32",), (), regions=2)
_op("ssawasm.br", (), (), successors=1, terminator=True)
_op("ssawasm.cond_br", ("i32",), (), successors=2, terminator=True)
_op("ssawasm.pseudo_br", (), (), successors=1, terminator=True)
_op("ssawasm.pseudo_cond_br", ("i32",), (), successors=2, terminator=True)
_op("ssawasm.exit", (), (), terminator=True)

_op("ssawasm.on_stack", (), ("value",))
_op("ssawasm.cast_memref_to_i32", ("memref",), ("i32",), pure=True)
_op("ssawasm.cast_i32_to_memref", ("i32",), ("memref",), pure=True)

_op("ssawasm.cont_new", ("funcref",), ("contref",), attrs=("type",), lead=("type",))
_op("ssawasm.suspend", None, None, attrs=("tag",), lead=("tag",), parens=True)
_op("ssawasm.resume", ("*",), (), attrs=("type", "tag"), lead=("type", "tag"),
    successors=2, terminator=True)

_op("ssawasm.data", attrs=("sym_name", "type", "offset"), toplevel=True)
_op("ssawasm.func_import", attrs=("sym_name", "type"), toplevel=True)
_op("ssawasm.global_var", attrs=("sym_name", "type"), toplevel=True)
_op("ssawasm.tag", attrs=("sym_name", "type"), toplevel=True)
_op("ssawasm.cont_type", attrs=("sym_name", "type"), toplevel=True)

# -- Wasm (stack form, no SSA values) -----------------------------------------

WASM_NUMERIC: set[str] = set()


def _wasm_numeric() -> None:
    ints, floats = ("i32", "i64"), ("f32", "f64")
    for t in ints:
        for n in ("add", "sub", "mul", "div_s", "div_u", "rem_s", "rem_u", "and", "or",
                  "xor", "shl", "shr_s", "shr_u", "eq", "ne", "lt_s", "lt_u", "gt_s",
                  "gt_u", "le_s", "le_u", "ge_s", "ge_u", "eqz"):
            WASM_NUMERIC.add(f"{t}.{n}")
        for f in floats:
            WASM_NUMERIC.add(f"{t}.trunc_{f}_s")
            WASM_NUMERIC.add(f"{t}.trunc_{f}_u")
    for t in floats:
        for n in ("add", "sub", "mul", "div", "neg", "eq", "ne", "lt", "gt", "le", "ge"):
            WASM_NUMERIC.add(f"{t}.{n}")
        for i in ints:
            WASM_NUMERIC.add(f"{t}.convert_{i}_s")
            WASM_NUMERIC.add(f"{t}.convert_{i}_u")
    WASM_NUMERIC.update({"i32.wrap_i64", "i64.extend_i32_s", "i64.extend_i32_u",
                         "f64.promote_f32", "f32.demote_f64"})


_wasm_numeric()
for _n in sorted(WASM_NUMERIC):
    _op(f"wasm.{_n}")
for _t in ("i32", "i64", "f32", "f64"):
    _op(f"wasm.{_t}.const", attrs=("value",), lead=("value",))
    _op(f"wasm.{_t}.load", attrs=("offset",), lead=("offset",))
    _op(f"wasm.{_t}.store", attrs=("offset",), lead=("offset",))
for _n in ("local.get", "local.set", "local.tee"):
    _op(f"wasm.{_n}", attrs=("index",), lead=("index",))
for _n in ("global.get", "global.set"):
    _op(f"wasm.{_n}", attrs=("name",), lead=("name",))
_op("wasm.call", attrs=("callee",), lead=("callee",))
_op("wasm.return")
_op("wasm.drop")
_op("wasm.select")
_op("wasm.nop")
_op("wasm.unreachable")
_op("wasm.br", attrs=("label",), lead=("label",))
_op("wasm.br_if", attrs=("label",), lead=("label",))
_op("wasm.block", attrs=("label",), lead=("label",), regions=1)
_op("wasm.loop", attrs=("label",), lead=("label",), regions=1)
_op("wasm.if", regions=2)
_op("wasm.ref.func", attrs=("func",), lead=("func",))
_op("wasm.cont.new", attrs=("type",), lead=("type",))
_op("wasm.suspend", attrs=("tag",), lead=("tag",))
_op("wasm.resume", attrs=("type",), lead=("type",))

_op("wasm.data", attrs=("offset",), toplevel=True)
_op("wasm.import", attrs=("sym_name", "type"), toplevel=True)
_op("wasm.global", attrs=("sym_name", "type"), toplevel=True)
_op("wasm.tag", attrs=("sym_name", "type"), toplevel=True)
_op("wasm.cont_type", attrs=("sym_name", "type"), toplevel=True)
_op("wasm.memory", attrs=("pages",), toplevel=True)


# attribute names whose values are symbols / plain words, for the printer
SYMBOL_ATTRS = frozenset({"callee", "func", "name", "type", "tag", "sym_name"})

COMPOSITE_CF = frozenset({"ssawasm.block_loop", "ssawasm.block_block", "ssawasm.if"})
BRANCHES = frozenset({"ssawasm.br", "ssawasm.cond_br", "ssawasm.pseudo_br",
                      "ssawasm.pseudo_cond_br", "ssawasm.resume"})
