"""Conversions from the high-level dialects (arith, func, memref, scf, dcont) to SsaWasm."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .builder import Builder, redirect_uses
from .ir import (
    Block,
    Diagnostic,
    Function,
    IRError,
    IrModule,
    Operation,
    Region,
    SymbolRef,
    Value,
    move_ops,
    replace_value_uses,
)
from .types import I32, FuncType, TypeDesc, contref, local, lower_index, map_type

DATA_START = 1024
DEFAULT_HEAP_RESERVE = 1 << 20
PAGE = 65536

# Comparison used for the scf.for exit test; tests monkeypatch this to inject a bug.
LOOP_CMP = "lt_s"


def _all_values(m: IrModule):
    for f in m.functions:
        if f.body is None:
            continue
        for b in _blocks(f.body):
            yield from b.args
            for op in b.ops:
                yield from op.results


def _blocks(region: Region):
    for b in region.blocks:
        yield b
        for op in b.ops:
            for r in op.regions:
                yield from _blocks(r)


def _ops(m: IrModule, dialect: str) -> list[Operation]:
    return [op for op in m.walk() if op.dialect == dialect and op.parent is not None]


def _rewrite_types(m: IrModule, fn) -> None:
    for v in _all_values(m):
        v.type = map_type(v.type, fn)
    for f in m.functions:
        f.param_types = [map_type(t, fn) for t in f.param_types]
        f.result_types = [map_type(t, fn) for t in f.result_types]


# -- arith ----------------------------------------------------------------------

_ARITH_SAME = {
    "addi": "add", "subi": "sub", "muli": "mul", "divsi": "div_s", "divui": "div_u",
    "remsi": "rem_s", "remui": "rem_u", "andi": "and", "ori": "or", "xori": "xor",
    "shli": "shl", "shrsi": "shr_s", "shrui": "shr_u",
    "addf": "add", "subf": "sub", "mulf": "mul", "divf": "div", "negf": "neg",
    "sitofp": "convert_s", "uitofp": "convert_u", "fptosi": "trunc_s", "fptoui": "trunc_u",
    "extf": "promote", "truncf": "demote",
}
CMPI = {"eq": "eq", "ne": "ne", "slt": "lt_s", "sle": "le_s", "sgt": "gt_s", "sge": "ge_s",
        "ult": "lt_u", "ule": "le_u", "ugt": "gt_u", "uge": "ge_u"}
CMPF = {"oeq": "eq", "une": "ne", "olt": "lt", "ole": "le", "ogt": "gt", "oge": "ge"}


def _unsupported(rule: str, op: Operation, what: str) -> IRError:
    return IRError(Diagnostic(rule, what, op.span, op.opname))


def convert_arith(m: IrModule) -> IrModule:
    """arith-to-ssawasm: opcode replacement plus the module-wide index -> i32 rewrite."""
    _rewrite_types(m, lambda t: I32 if t.kind == "index" else t)
    for op in _ops(m, "arith"):
        b = Builder.before(op)
        name = op.name
        args = list(op.operands)
        rt = op.result.type
        if name == "constant":
            new = b.value("ssawasm.const", [], rt, {"value": op.attrs["value"]}, op.span)
        elif name in _ARITH_SAME:
            new = b.value(f"ssawasm.{_ARITH_SAME[name]}", args, rt, span=op.span)
        elif name in ("cmpi", "cmpf"):
            table = CMPI if name == "cmpi" else CMPF
            pred = op.attrs["predicate"]
            if pred not in table:
                raise _unsupported("UnsupportedArithOp", op, f"predicate {pred!r} is not supported")
            new = b.value(f"ssawasm.{table[pred]}", args, I32, span=op.span)
        elif name == "select":
            new = b.value("ssawasm.select", [args[1], args[2], args[0]], rt, span=op.span)
        elif name in ("extsi", "extui", "trunci", "index_cast"):
            src = args[0].type
            if src.width == rt.width:
                new = args[0]
            elif rt.width > src.width:
                new = b.value("ssawasm.extend_u" if name == "extui" else "ssawasm.extend_s", args, rt, span=op.span)
            else:
                new = b.value("ssawasm.wrap", args, rt, span=op.span)
        else:
            raise _unsupported("UnsupportedArithOp", op, f"no SsaWasm counterpart for arith.{name}")
        replace_value_uses(op.result, new)
        op.erase()
    m.level = "ssawasm"
    return m


# -- func -----------------------------------------------------------------------


def convert_func(m: IrModule) -> IrModule:
    """func-to-ssawasm: params become local<T>, calls/returns switch dialect."""
    kept = []
    for f in m.functions:
        if f.kind != "func":
            kept.append(f)
            continue
        if f.body is None:
            m.globals.append(Operation("ssawasm.func_import", attrs={
                "sym_name": f.name, "type": FuncType(tuple(f.param_types), tuple(f.result_types))}, span=f.span))
            continue
        f.kind = "ssawasm"
        entry = f.entry
        b = Builder(entry, 0)
        for arg in entry.args:
            inner = arg.type
            arg.type = local(inner)
            get = b.op("ssawasm.local_get", [arg], [inner])
            redirect_uses(arg, get.result, skip=get)
        f.param_types = [local(t) for t in f.param_types]
        kept.append(f)
    m.functions = kept
    for op in _ops(m, "func"):
        if op.name == "call":
            new = Operation("ssawasm.call", op.operands, [r.type for r in op.results], dict(op.attrs), span=op.span)
        elif op.name == "return":
            new = Operation("ssawasm.return", op.operands, span=op.span)
        else:
            raise _unsupported("UnsupportedFuncOp", op, f"func.{op.name}")
        op.parent.insert_before(op, new)
        for r, nr in zip(op.results, new.results):
            replace_value_uses(r, nr)
        op.erase()
    m.level = "ssawasm"
    return m


# -- memref ---------------------------------------------------------------------


@dataclass
class DataSegment:
    symbol: str
    type: TypeDesc
    memory: int
    offset: int
    data: bytes


@dataclass
class DataLayout:
    segments: list[DataSegment] = field(default_factory=list)
    heap_base: int = DATA_START
    page_count: int = 1

    def offset_of(self, symbol: str) -> int:
        for s in self.segments:
            if s.symbol == symbol:
                return s.offset
        raise KeyError(symbol)


def heap_reserve_from_env() -> int:
    raw = os.environ.get("WAMIC_HEAP_RESERVE")
    if raw is None or raw.strip() == "":
        return DEFAULT_HEAP_RESERVE
    return int(raw)


def _align(x: int, a: int) -> int:
    return (x + a - 1) // a * a


def layout_data_segments(m: IrModule, heap_reserve: int | None = None) -> DataLayout:
    """Assign offsets to every ``memref.global`` in module order."""
    reserve = heap_reserve_from_env() if heap_reserve is None else heap_reserve
    segs = []
    cur = DATA_START
    for op in m.globals:
        if op.opname != "memref.global":
            continue
        t = lower_index(op.attrs["type"])
        cur = _align(cur, t.elem.width)
        size = t.byte_size
        init = op.attrs.get("init", b"")
        if not isinstance(init, bytes):
            raise IRError(Diagnostic("UnsupportedMemRef", f"@{op.attrs['sym_name']}: initializer must be dense bytes", op.span))
        data = init[:size] + bytes(max(0, size - len(init)))
        segs.append(DataSegment(op.attrs["sym_name"], t, 0, cur, data))
        cur += size
    heap_base = _align(cur, 16)
    if heap_base > 0xFFFFFFFF:
        raise IRError("data segments exceed the 32-bit address space", rule="SegmentOverflow")
    pages = math.ceil((heap_base + reserve) / PAGE)
    if pages > 65536:
        raise IRError(f"{pages} pages exceed the wasm32 limit", rule="SegmentOverflow")
    return DataLayout(segs, heap_base, max(1, pages))


def _builtin_alloc(m: IrModule, heap_base: int) -> None:
    m.globals.append(Operation("ssawasm.global_var", attrs={"sym_name": "__heap_ptr", "type": I32, "init": heap_base}))
    # malloc(size): p = heap_ptr; heap_ptr += (size + 7) & -8; return p
    entry = Block("bb0", [local(I32)])
    b = Builder(entry)
    p = b.value("ssawasm.global_get", [], I32, {"name": SymbolRef("__heap_ptr")})
    size = b.value("ssawasm.local_get", [entry.args[0]], I32)
    seven = b.value("ssawasm.const", [], I32, {"value": 7})
    padded = b.value("ssawasm.add", [size, seven], I32)
    mask = b.value("ssawasm.const", [], I32, {"value": -8})
    rounded = b.value("ssawasm.and", [padded, mask], I32)
    nxt = b.value("ssawasm.add", [p, rounded], I32)
    b.op("ssawasm.global_set", [nxt], attrs={"name": SymbolRef("__heap_ptr")})
    b.op("ssawasm.return", [p])
    m.functions.append(Function("malloc", "ssawasm", False, [local(I32)], [I32], Region([entry])))
    fentry = Block("bb0", [local(I32)])
    Builder(fentry).op("ssawasm.return")
    m.functions.append(Function("free", "ssawasm", False, [local(I32)], [], Region([fentry])))


def _declare_alloc(m: IrModule, layout: DataLayout, builtin: bool) -> None:
    have = {f.name for f in m.functions} | {op.attrs.get("sym_name") for op in m.globals}
    if builtin:
        if "malloc" not in have:
            _builtin_alloc(m, layout.heap_base)
        return
    if "malloc" not in have:
        m.globals.append(Operation("ssawasm.func_import", attrs={"sym_name": "malloc", "type": FuncType((I32,), (I32,))}))
    if "free" not in have:
        m.globals.append(Operation("ssawasm.func_import", attrs={"sym_name": "free", "type": FuncType((I32,), ())}))


def address_of(b: Builder, ref: Value, indices) -> Value:
    """Emit base + (row-major linear index) * elemWidth and return the i32 address."""
    t = ref.type
    base = b.value("ssawasm.cast_memref_to_i32", [ref], I32)
    lin = None
    for k, idx in enumerate(indices):
        if lin is None:
            lin = idx
        else:
            dim = b.value("ssawasm.const", [], I32, {"value": t.shape[k]})
            lin = b.value("ssawasm.mul", [lin, dim], I32)
            lin = b.value("ssawasm.add", [lin, idx], I32)
    width = b.value("ssawasm.const", [], I32, {"value": t.elem.width})
    if lin is None:
        lin = b.value("ssawasm.const", [], I32, {"value": 0})
    off = b.value("ssawasm.mul", [lin, width], I32)
    return b.value("ssawasm.add", [base, off], I32)


def convert_memref(m: IrModule, layout: DataLayout | None = None, *, builtin_alloc: bool = True,
                   alloca_as_alloc: bool = True) -> IrModule:
    """memref-to-ssawasm: data segments, malloc/free calls and explicit address arithmetic."""
    layout = layout or layout_data_segments(m)
    _rewrite_types(m, lambda t: I32 if t.kind == "index" else t)
    new_globals = []
    for op in m.globals:
        if op.opname == "memref.global":
            seg = next(s for s in layout.segments if s.symbol == op.attrs["sym_name"])
            new_globals.append(Operation("ssawasm.data", attrs={
                "sym_name": seg.symbol, "type": seg.type, "memory": 0, "offset": seg.offset, "init": seg.data},
                span=op.span))
        else:
            new_globals.append(op)
    m.globals = new_globals
    m.attrs["heap_base"] = layout.heap_base
    m.attrs["pages"] = layout.page_count
    ops = _ops(m, "memref")
    if any(op.name in ("alloc", "alloca", "dealloc") for op in ops):
        _declare_alloc(m, layout, builtin_alloc)
    for op in ops:
        b = Builder.before(op)
        name = op.name
        if name == "get_global":
            sym = op.attrs["name"].name
            try:
                off = layout.offset_of(sym)
            except KeyError:
                raise _unsupported("UnknownSymbol", op, f"no memref.global @{sym}") from None
            new = b.value("ssawasm.const", [], op.result.type, {"value": off}, op.span)
            replace_value_uses(op.result, new)
        elif name in ("alloc", "alloca"):
            if name == "alloca" and not alloca_as_alloc:
                raise _unsupported("AllocaUnsupported", op, "memref.alloca needs --alloca-as-alloc")
            size = b.value("ssawasm.const", [], I32, {"value": op.result.type.byte_size})
            call = b.op("ssawasm.call", [size], [op.result.type], {"callee": SymbolRef("malloc")}, span=op.span)
            replace_value_uses(op.result, call.result)
        elif name == "dealloc":
            ptr = b.value("ssawasm.cast_memref_to_i32", [op.operands[0]], I32)
            b.op("ssawasm.call", [ptr], [], {"callee": SymbolRef("free")}, span=op.span)
        elif name == "load":
            ref, *idx = op.operands
            addr = address_of(b, ref, idx)
            new = b.value("ssawasm.load", [addr], op.result.type, {"offset": 0}, op.span)
            replace_value_uses(op.result, new)
        elif name == "store":
            val, ref, *idx = op.operands
            addr = address_of(b, ref, idx)
            b.op("ssawasm.store", [addr, val], attrs={"offset": 0}, span=op.span)
        else:
            raise _unsupported("UnsupportedMemRef", op, f"memref.{name}")
        op.erase()
    m.level = "ssawasm"
    return m


# -- scf ------------------------------------------------------------------------


def _decl(b: Builder, t: TypeDesc) -> Value:
    return b.value("ssawasm.local_decl", [], local(t))


def _bind_args(block: Block, target: Block, locals_: list[Value]) -> None:
    """Replace ``block``'s arguments by local_get reads at the top of ``target``."""
    b = Builder(target, 0)
    for arg, loc in zip(block.args, locals_):
        get = b.value("ssawasm.local_get", [loc], loc.type.elem)
        redirect_uses(arg, get)


def _take_body(region: Region, terminator: str) -> tuple[list[Operation], Operation | None]:
    if len(region.blocks) > 1:
        raise IRError("scf regions must have a single block", rule="UnsupportedScfOp")
    if not region.blocks:
        return [], None
    ops = list(region.entry.ops)
    term = ops[-1] if ops and ops[-1].opname == terminator else None
    if term is not None:
        ops = ops[:-1]
    return ops, term


def _convert_for(op: Operation) -> None:
    lb, ub, step, *inits = op.operands
    body_region = op.regions[0]
    src = body_region.entry
    iv_t = src.args[0].type
    b = Builder.before(op)
    li, lub, lstep = _decl(b, iv_t), _decl(b, iv_t), _decl(b, iv_t)
    carried = [_decl(b, v.type) for v in inits]

    entry, head, body, update, exit_ = (Block(n) for n in ("entry", "loop_label", "body", "ind_var_update", "block_label"))
    e = Builder(entry)
    e.op("ssawasm.local_set", [li, lb])
    for loc, init in zip(carried, inits):
        e.op("ssawasm.local_set", [loc, init])
    e.op("ssawasm.local_set", [lub, ub])
    e.op("ssawasm.local_set", [lstep, step])
    e.op("ssawasm.pseudo_br", successors=["loop_label"])

    h = Builder(head)
    i = h.value("ssawasm.local_get", [li], iv_t)
    u = h.value("ssawasm.local_get", [lub], iv_t)
    c = h.value(f"ssawasm.{LOOP_CMP}", [i, u], I32)
    h.op("ssawasm.pseudo_cond_br", [c], successors=["body", "block_label"])

    ops, yld = _take_body(body_region, "scf.yield")
    move_ops(ops, body)
    _bind_args(src, body, [li] + carried)
    Builder(body).op("ssawasm.pseudo_br", successors=["ind_var_update"])

    up = Builder(update)
    i2 = up.value("ssawasm.local_get", [li], iv_t)
    s = up.value("ssawasm.local_get", [lstep], iv_t)
    n = up.value("ssawasm.add", [i2, s], iv_t)
    up.op("ssawasm.local_set", [li, n])
    yields = list(yld.operands) if yld is not None else []
    for loc, v in zip(carried, yields):
        up.op("ssawasm.local_set", [loc, v])
    up.op("ssawasm.br", successors=["loop_label"])
    if yld is not None:
        yld.erase()

    Builder(exit_).op("ssawasm.exit")
    _finish_loop(op, [entry, head, body, update, exit_], carried)


def _finish_loop(op: Operation, blocks: list[Block], result_locals: list[Value]) -> None:
    loop = Operation("ssawasm.block_loop", regions=[Region(blocks)], span=op.span)
    op.parent.insert_before(op, loop)
    after = Builder.after(loop)
    for r, loc in zip(op.results, result_locals):
        get = after.value("ssawasm.local_get", [loc], loc.type.elem)
        replace_value_uses(r, get)
    op.erase()


def _convert_while(op: Operation) -> None:
    inits = list(op.operands)
    before, after_r = op.regions
    b = Builder.before(op)
    carried = [_decl(b, v.type) for v in inits]
    results = [_decl(b, r.type) for r in op.results]

    entry, head, body, exit_ = (Block(n) for n in ("entry", "loop_label", "body", "block_label"))
    e = Builder(entry)
    for loc, init in zip(carried, inits):
        e.op("ssawasm.local_set", [loc, init])
    e.op("ssawasm.pseudo_br", successors=["loop_label"])

    cops, cond = _take_body(before, "scf.condition")
    if cond is None:
        raise _unsupported("UnsupportedScfOp", op, "scf.while before-region must end in scf.condition")
    move_ops(cops, head)
    _bind_args(before.entry, head, carried)
    h = Builder(head)
    flag, *fwd = cond.operands
    for loc, v in zip(results, fwd):
        h.op("ssawasm.local_set", [loc, v])
    h.op("ssawasm.pseudo_cond_br", [flag], successors=["body", "block_label"])
    cond.erase()

    bops, yld = _take_body(after_r, "scf.yield")
    move_ops(bops, body)
    if after_r.blocks:
        _bind_args(after_r.entry, body, results)
    bb = Builder(body)
    for loc, v in zip(carried, yld.operands if yld is not None else ()):
        bb.op("ssawasm.local_set", [loc, v])
    bb.op("ssawasm.br", successors=["loop_label"])
    if yld is not None:
        yld.erase()
    Builder(exit_).op("ssawasm.exit")
    _finish_loop(op, [entry, head, body, exit_], results)


def _convert_if(op: Operation) -> None:
    b = Builder.before(op)
    results = [_decl(b, r.type) for r in op.results]
    regions = []
    for r in op.regions:
        ops, yld = _take_body(r, "scf.yield")
        blk = Block("bb0")
        move_ops(ops, blk)
        bb = Builder(blk)
        for loc, v in zip(results, yld.operands if yld is not None else ()):
            bb.op("ssawasm.local_set", [loc, v])
        if yld is not None:
            yld.erase()
        bb.op("ssawasm.exit")
        regions.append(Region([blk]))
    while len(regions) < 2:
        blk = Block("bb0")
        Builder(blk).op("ssawasm.exit")
        regions.append(Region([blk]))
    new = Operation("ssawasm.if", [op.operands[0]], regions=regions, span=op.span)
    op.parent.insert_before(op, new)
    after = Builder.after(new)
    for r, loc in zip(op.results, results):
        replace_value_uses(r, after.value("ssawasm.local_get", [loc], loc.type.elem))
    op.erase()


def convert_scf(m: IrModule) -> IrModule:
    """scf-to-ssawasm: for/while become block_loop, if becomes ssawasm.if."""
    for op in _ops(m, "scf"):
        if op.name == "for":
            _convert_for(op)
        elif op.name == "while":
            _convert_while(op)
        elif op.name == "if":
            _convert_if(op)
        elif op.name not in ("yield", "condition"):
            raise _unsupported("UnsupportedScfOp", op, f"scf.{op.name}")
    leftover = [op for op in m.walk() if op.dialect == "scf"]
    if leftover:
        raise _unsupported("UnsupportedScfOp", leftover[0], "stray scf terminator")
    m.level = "ssawasm"
    return m


# -- dcont ----------------------------------------------------------------------


def _signatures(m: IrModule) -> list[tuple]:
    sigs: list[tuple] = []

    def note(t: TypeDesc) -> None:
        if t.kind == "local":
            t = t.elem
        if t.kind == "contref" and t.sig is not None and t.sig not in sigs:
            sigs.append(t.sig)

    for f in m.functions:
        for t in list(f.param_types) + list(f.result_types):
            note(t)
        if f.body is None:
            continue
        for blk in _blocks(f.body):
            for a in blk.args:
                note(a.type)
            for op in blk.ops:
                if op.opname == "dcont.suspend":
                    sig = (tuple(v.type for v in op.operands), tuple(r.type for r in op.results))
                    if sig not in sigs:
                        sigs.append(sig)
                for v in op.results:
                    note(v.type)
    return sigs


def convert_dcont(m: IrModule) -> IrModule:
    """dcont-to-ssawasm: tags/cont types per signature, resume as block_block."""
    sigs = _signatures(m)
    if not sigs:
        return m
    names = {sig: k for k, sig in enumerate(sigs)}
    for sig, k in names.items():
        payload, resume = sig
        m.globals.append(Operation("ssawasm.tag", attrs={"sym_name": f"yield_{k}", "type": FuncType(payload, resume)}))
        m.globals.append(Operation("ssawasm.cont_type", attrs={"sym_name": f"ct_{k}", "type": FuncType(resume, ())}))

    def retype(t: TypeDesc) -> TypeDesc:
        if t.kind == "contref" and t.sig is not None:
            return contref(f"ct_{names[t.sig]}")
        return t

    # suspend's signature must be captured before operand types change
    suspend_sig = {}
    for op in _ops(m, "dcont"):
        if op.name == "suspend":
            suspend_sig[op] = names[(tuple(v.type for v in op.operands), tuple(r.type for r in op.results))]
        elif op.name in ("new", "resume"):
            t = op.result.type if op.name == "new" else op.operands[0].type
            suspend_sig[op] = names[t.sig]
    _rewrite_types(m, retype)

    for op in _ops(m, "dcont"):
        b = Builder.before(op)
        name = op.name
        if name == "new":
            k = suspend_sig[op]
            fsym = op.attrs["func"]
            callee = m.function(fsym.name)
            payload, resume = sigs[k]
            if callee is not None:
                params = [t.elem if t.kind == "local" else t for t in callee.param_types]
                if tuple(params) != tuple(map(retype, resume)) or callee.result_types:
                    raise _unsupported("SignatureMismatch", op,
                                       f"@{fsym.name} must have type {FuncType(resume, ())} to back this continuation")
            fr = b.value("ssawasm.func_ref", [], TypeDesc("funcref"), {"func": fsym})
            new = b.value("ssawasm.cont_new", [fr], op.result.type, {"type": SymbolRef(f"ct_{k}")}, op.span)
            replace_value_uses(op.result, new)
        elif name == "suspend":
            k = suspend_sig[op]
            new = b.op("ssawasm.suspend", op.operands, [r.type for r in op.results],
                       {"tag": SymbolRef(f"yield_{k}")}, span=op.span)
            for r, nr in zip(op.results, new.results):
                replace_value_uses(r, nr)
        elif name == "alloc":
            new = b.value("ssawasm.local_decl", [], op.result.type, span=op.span)
            replace_value_uses(op.result, new)
        elif name == "load":
            new = b.value("ssawasm.local_get", op.operands, op.result.type, span=op.span)
            replace_value_uses(op.result, new)
        elif name == "store":
            k, slot = op.operands
            b.op("ssawasm.local_set", [slot, k], span=op.span)
        elif name == "resume":
            _convert_resume(op, b, suspend_sig[op], sigs)
        else:
            raise _unsupported("UnsupportedDContOp", op, f"dcont.{name}")
        op.erase()
    m.level = "ssawasm"
    return m


def _convert_resume(op: Operation, b: Builder, k: int, sigs) -> None:
    cont, *args = op.operands
    handler = op.regions[0]
    if len(handler.blocks) > 1:
        raise _unsupported("MultipleHandlers", op, "dcont.resume supports exactly one handler block")
    payload = sigs[k][0]
    entry, fallback, inner, outer = (Block(n) for n in ("entry", "resume", "inner_block_label", "outer_block_label"))
    Builder(entry).op("ssawasm.resume", list(args) + [cont],
                      attrs={"type": SymbolRef(f"ct_{k}"), "tag": SymbolRef(f"yield_{k}")},
                      successors=["inner_block_label", "resume"], span=op.span)
    Builder(fallback).op("ssawasm.br", successors=["outer_block_label"])
    hb = Builder(inner)
    if handler.blocks:
        src = handler.entry
        if src.args:
            if len(src.args) != 1 + len(payload):
                raise _unsupported("SignatureMismatch", op,
                                   f"handler takes {len(src.args)} values; expected continuation + {len(payload)} payloads")
            # payloads sit above the continuation on the stack: pop them first
            bound = {}
            for a in reversed(src.args):
                bound[a] = hb.value("ssawasm.on_stack", [], a.type)
            for a, v in bound.items():
                redirect_uses(a, v)
        move_ops(list(src.ops), inner)
    Builder(inner).op("ssawasm.pseudo_br", successors=["outer_block_label"])
    bb = Operation("ssawasm.block_block", regions=[Region([entry, fallback, inner, outer])], span=op.span)
    b.block.insert(b.index, bb)
