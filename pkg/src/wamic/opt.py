"""Mid-level optimizations on SsaWasm: common subexpression elimination and
literal constant folding."""

from __future__ import annotations

from . import numerics
from .ir import FloatAttr, IrModule, Operation, Region, replace_value_uses
from .registry import UnknownOp, lookup_signature

COMMUTATIVE = frozenset({"add", "mul", "and", "or", "xor", "eq", "ne",
                         "addi", "muli", "andi", "ori", "xori", "addf", "mulf"})
# Pure in the registry sense but never worth (or safe) merging.
_NO_CSE = frozenset({"ssawasm.on_stack"})


def _is_pure(op: Operation) -> bool:
    if op.regions or op.opname in _NO_CSE:
        return False
    try:
        return lookup_signature(op.dialect, op.name).pure
    except UnknownOp:
        return False


def expr_key(op: Operation):
    """Opcode, canonical operand ids and attribute fingerprint of a pure op."""
    ids = [v.id for v in op.operands]
    if op.name in COMMUTATIVE:
        ids.sort()
    attrs = tuple(sorted(op.attrs.items()))
    return op.opname, tuple(ids), attrs, tuple(r.type for r in op.results)


def _cse_region(region: Region, outer: dict) -> int:
    removed = 0
    for block in region.blocks:
        table = dict(outer)
        for op in list(block.ops):
            for r in op.regions:
                removed += _cse_region(r, table)
            if not _is_pure(op):
                continue
            key = expr_key(op)
            prev = table.get(key)
            if prev is None:
                table[key] = op
                continue
            for old, new in zip(op.results, prev.results):
                replace_value_uses(old, new)
            op.erase()
            removed += 1
    return removed


def cse(m: IrModule) -> IrModule:
    for f in m.functions:
        if f.body is not None and f.kind != "wasm":
            _cse_region(f.body, {})
    return m


# -- folding --------------------------------------------------------------------

_CONST_OPS = ("ssawasm.const", "arith.constant")
_BIN = numerics.INT_BINOPS | numerics.FLOAT_BINOPS | {"div"}
_CONV = {"convert_s", "convert_u", "trunc_s", "trunc_u", "extend_s", "extend_u", "wrap", "promote", "demote"}


def _kind(t) -> str:
    return "i32" if t.kind in ("index", "memref") else t.kind


def const_value(op: Operation):
    """Raw numeric value of a constant op (ints unsigned, floats as Python floats)."""
    v = op.attrs["value"]
    t = _kind(op.result.type)
    if isinstance(v, FloatAttr):
        return v.value
    if t in ("f32", "f64"):
        return float(v)
    return numerics.wrap(v, t)


def make_attr(value, t: str):
    if t in ("f32", "f64"):
        return FloatAttr.from_float(value, 32 if t == "f32" else 64)
    return numerics.signed(value, t)


def _fold(op: Operation, vals: list):
    """Folded raw value, or None when folding is not allowed."""
    name = op.name
    t_in = _kind(op.operands[0].type) if op.operands else None
    t_out = _kind(op.result.type)
    try:
        if name in ("cast_memref_to_i32", "cast_i32_to_memref"):
            return vals[0]
        if name == "select":
            return vals[0] if vals[2] else vals[1]
        if name == "eqz":
            return numerics.unop("eqz", t_in, vals[0])
        if name == "neg":
            r = numerics.unop("neg", t_in, vals[0])
        elif name in _CONV:
            r = numerics.convert(name, t_in, t_out, vals[0])
        elif name in _BIN and len(vals) == 2:
            r = numerics.binop(name, t_in, vals[0], vals[1])
        else:
            return None
    except numerics.Trap:
        return None  # leave the trap to run time
    if isinstance(r, float) and r != r:
        return None
    return r


def fold_constants(m: IrModule) -> IrModule:
    """Replace pure SsaWasm ops whose operands are all literals by ``ssawasm.const``.

    Constants are uniqued afterwards (as a folder's constant pool would) and
    the duplicates this exposes are merged, so a second run is a no-op.
    """
    for f in m.functions:
        if f.body is None or f.kind == "wasm":
            continue
        changed = True
        while changed:
            changed = False
            for op in list(f.walk()):
                if op.parent is None or op.dialect != "ssawasm" or not _is_pure(op) or not op.operands:
                    continue
                defs = [v.owner for v in op.operands]
                if not all(isinstance(d, Operation) and d.opname in _CONST_OPS for d in defs):
                    continue
                r = _fold(op, [const_value(d) for d in defs])
                if r is None:
                    continue
                t = _kind(op.result.type)
                new = Operation("ssawasm.const", [], [op.result.type], {"value": make_attr(r, t)}, span=op.span)
                op.parent.insert_before(op, new)
                replace_value_uses(op.result, new.result)
                op.erase()
                for d in defs:
                    if d.parent is not None and not d.result.uses:
                        d.erase()
                changed = True
            if _cse_region(f.body, {}):
                changed = True
    return m
