"""SsaWasm to Wasm: module-level ops, spill-all local introduction, set/get
fusion and the structural mapping of composite control flow."""

from __future__ import annotations

from .builder import Builder
from .ir import Block, Diagnostic, Function, IRError, IrModule, Operation, Region, SymbolRef, Value, replace_value_uses
from .lower_ssawasm import layout_data_segments
from .types import I32, FuncType, TypeDesc, local, storage_type

_GLOBAL_MAP = {
    "ssawasm.data": "wasm.data",
    "ssawasm.func_import": "wasm.import",
    "ssawasm.global_var": "wasm.global",
    "ssawasm.tag": "wasm.tag",
    "ssawasm.cont_type": "wasm.cont_type",
}


def convert_globals(m: IrModule) -> IrModule:
    """ssawasm-global-to-wasm: data, imports, globals, tags and cont types; adds the memory."""
    seen: set[str] = set()
    out = []
    funcs = {f.name for f in m.functions}
    for op in m.globals:
        sym = op.attrs.get("sym_name")
        if sym is not None:
            if sym in seen or (op.name in ("func_import", "import") and sym in funcs):
                raise IRError(Diagnostic("DuplicateSymbol", f"symbol @{sym} defined twice", op.span, op.opname))
            seen.add(sym)
        if op.opname in _GLOBAL_MAP:
            attrs = dict(op.attrs)
            if op.opname == "ssawasm.global_var":
                attrs.setdefault("init", 0)
                attrs["mutable"] = 1
            out.append(Operation(_GLOBAL_MAP[op.opname], attrs=attrs, span=op.span))
        elif op.dialect == "wasm":
            out.append(op)
        else:
            raise IRError(Diagnostic("UnsupportedLevel", f"{op.opname} must be lowered before ssawasm-global-to-wasm",
                                     op.span, op.opname))
    if "pages" not in m.attrs:
        layout = layout_data_segments(m)
        m.attrs["heap_base"] = layout.heap_base
        m.attrs["pages"] = layout.page_count
    if not any(op.opname == "wasm.memory" for op in out):
        out.insert(0, Operation("wasm.memory", attrs={"pages": m.attrs["pages"], "exported": 1}))
    m.globals = out
    return m


# -- introduce-locals -------------------------------------------------------------


def introduce_locals(f: Function) -> Function:
    """Spill every SSA value to a fresh local: set after the def, get before each use."""
    if f.body is None or f.kind != "ssawasm":
        return f
    top = Builder(f.entry, 0)
    ops = list(f.walk())
    spilled: dict[Value, Value] = {}
    for op in ops:
        if any(blk.args for r in op.regions for blk in r.blocks):
            raise IRError(Diagnostic("UnsupportedBlockArgs", "block arguments must be lowered before introduce-locals",
                                     op.span, op.opname))
        stack_results = [r for r in op.results if r.type.kind != "local"]
        if not stack_results:
            continue
        for r in stack_results:
            if r.uses:
                spilled[r] = top.value("ssawasm.local_decl", [], local(storage_type(r.type)))
        after = Builder.after(op)
        # the last result is on top of the stack, so it is popped first
        for r in reversed(stack_results):
            if r in spilled:
                v = r
                if r.type.kind == "memref":
                    v = after.value("ssawasm.cast_memref_to_i32", [r], I32)
                after.op("ssawasm.local_set", [spilled[r], v])
            else:
                after.op("ssawasm.drop", [r])
    for op in ops:
        if op.parent is None:
            continue
        b = Builder.before(op)
        for i, v in enumerate(op.operands):
            loc = spilled.get(v)
            if loc is None:
                continue
            get = b.value("ssawasm.local_get", [loc], loc.type.elem)
            if v.type.kind == "memref":
                get = b.value("ssawasm.cast_i32_to_memref", [get], v.type)
            op.set_operand(i, get)
    return f


def _all_blocks(region: Region):
    for b in region.blocks:
        yield b
        for op in b.ops:
            for r in op.regions:
                yield from _all_blocks(r)


def _stack_effect(op: Operation) -> tuple[int, int]:
    """(pops, pushes) of an op once every non-local value lives on the operand stack."""
    pops = sum(1 for v in op.operands if v.type.kind != "local")
    pushes = sum(1 for r in op.results if r.type.kind != "local")
    return pops, pushes


def _stack_neutral(ops: list[Operation]) -> bool:
    """True when ``ops`` never dip below their starting height and end level with it."""
    h = 0
    for op in ops:
        # handler values are already on the stack in a fixed order; they cannot be reordered
        if op.opname == "ssawasm.on_stack":
            return False
        pops, pushes = _stack_effect(op)
        h -= pops
        if h < 0:
            return False
        h += pushes
    return h == 0


def _ancestor_in(op: Operation, blk) -> Operation | None:
    """``op`` or the enclosing op of ``op`` that sits directly in ``blk``."""
    while op.parent is not blk:
        region = op.parent.parent if op.parent is not None else None
        owner = region.parent if region is not None else None
        if not isinstance(owner, Operation):
            return None
        op = owner
    return op


def _sets_local(op: Operation, loc: Value) -> bool:
    return any(x.opname == "ssawasm.local_set" and x.operands[0] is loc for x in op.walk())


def _spill_temp(decl: Operation):
    """(set, gets) when ``decl`` is a temporary written exactly once, else None."""
    if decl.opname != "ssawasm.local_decl":
        return None
    uses = list(dict.fromkeys(decl.result.uses))
    sets = [u for u in uses if u.opname == "ssawasm.local_set"]
    gets = [u for u in uses if u.opname == "ssawasm.local_get"]
    if len(sets) != 1 or len(sets) + len(gets) != len(uses):
        return None
    return sets[0], gets


def _set_reaches(s: Operation, g: Operation) -> bool:
    """Whether ``s`` always runs before ``g``: earlier in an enclosing block, or
    in the entry block of a region whose later block holds ``g``."""
    blk = s.parent
    op = g
    while op is not None:
        if op.parent is blk:
            return blk.ops.index(op) > blk.ops.index(s)
        region = op.parent.parent if op.parent is not None else None
        if region is not None and region is blk.parent and region.blocks[0] is blk:
            return True
        owner = region.parent if region is not None else None
        op = owner if isinstance(owner, Operation) else None
    return False


def _unchanged_until(loc: Value, start: Operation, uses: list[Operation]) -> bool:
    """No write to ``loc`` between ``start`` and each use (uses must share its block)."""
    blk = start.parent
    i = blk.ops.index(start)
    for u in uses:
        a = _ancestor_in(u, blk)
        if a is None:
            return False
        j = blk.ops.index(a)
        if j <= i or any(_sets_local(x, loc) for x in blk.ops[i + 1:j]):
            return False
        if a is not u and _sets_local(a, loc):
            return False
    return True


def _forward_temps(f: Function) -> bool:
    """Re-emit scalar constants and unchanged local reads at each use of their spill temp.

    A temp holding ``const c`` has every get replaced by ``const c``; a temp
    holding ``local_get %l`` has every get replaced by ``local_get %l`` when
    ``%l`` is not written in between.  The temp, its set and the def go away.
    """
    changed = False
    for decl in [op for op in f.walk() if op.opname == "ssawasm.local_decl"]:
        info = _spill_temp(decl)
        if info is None:
            continue
        s, gets = info
        d = s.operands[1].owner
        if not isinstance(d, Operation) or len(d.result.uses) != 1:
            continue
        if d.opname == "ssawasm.const" and d.result.type.kind in ("i32", "i64", "f32", "f64") \
                and all(_set_reaches(s, g) for g in gets):
            make = lambda b, g, d=d: b.value("ssawasm.const", [], g.result.type, dict(d.attrs))
        elif d.opname == "ssawasm.local_get" and d.parent is s.parent and d.result.type.kind != "memref" \
                and _unchanged_until(d.operands[0], s, gets):
            make = lambda b, g, d=d: b.value("ssawasm.local_get", [d.operands[0]], g.result.type)
        else:
            continue
        for g in gets:
            v = make(Builder.before(g), g)
            replace_value_uses(g.result, v)
            g.erase()
        s.erase()
        d.erase()
        decl.erase()
        changed = True
    return changed


def _runs_once(op: Operation) -> bool:
    """False when ``op`` sits in the repeating part of some enclosing loop."""
    while isinstance(op, Operation) and op.parent is not None:
        blk = op.parent
        owner = blk.parent.parent if blk.parent is not None else None
        if isinstance(owner, Operation) and owner.opname == "ssawasm.block_loop" and blk is not blk.parent.entry:
            return False
        op = owner
    return True


def _drop_zero_inits(f: Function) -> None:
    """Remove ``local_set %l, const 0`` when it is the first write to %l and cannot repeat.

    Wasm zero-initializes locals, so such a write stores what is already there.
    """
    seen: set[Value] = set()
    for op in list(f.walk()):
        if op.opname != "ssawasm.local_set":
            continue
        loc, val = op.operands
        first = loc not in seen
        seen.add(loc)
        d = val.owner
        if not first or loc in f.entry.args or not isinstance(d, Operation) or d.opname != "ssawasm.const":
            continue
        v = d.attrs.get("value")
        if not isinstance(v, (int, float)) or v != 0 or str(v).startswith("-") or len(d.result.uses) != 1:
            continue
        if _runs_once(op):
            op.erase()
            d.erase()


def fuse_stack_locals(f: Function) -> Function:
    """Drop ``local_set %l ... local_get %l`` pairs of single-use locals, to a fixpoint.

    The pair must sit in one block with only stack-neutral ops between them
    (an adjacent pair is the trivial case); the value then simply stays on
    the operand stack.
    """
    if f.body is None or f.kind != "ssawasm":
        return f
    _forward_temps(f)
    params = set(f.entry.args)
    changed = True
    while changed:
        changed = False
        for blk in list(_all_blocks(f.body)):
            i = 0
            while i < len(blk.ops):
                s = blk.ops[i]
                if s.opname != "ssawasm.local_set" or s.operands[0] in params:
                    i += 1
                    continue
                loc = s.operands[0]
                users = loc.uses
                gets = [u for u in users if u.opname == "ssawasm.local_get"]
                sets = [u for u in users if u.opname == "ssawasm.local_set"]
                if len(gets) != 1 or len(sets) != 1 or len(users) != 2 or gets[0].parent is not blk:
                    i += 1
                    continue
                g = gets[0]
                j = blk.ops.index(g)
                if j < i or not _stack_neutral(blk.ops[i + 1:j]):
                    i += 1
                    continue
                val = s.operands[1]
                replace_value_uses(g.result, val)
                g.erase()
                s.erase()
                decl = loc.owner
                if isinstance(decl, Operation) and not loc.uses:
                    decl.erase()
                changed = True
    _drop_zero_inits(f)
    # a local nobody reads is dead storage: its sets become drops
    for op in list(f.walk()):
        if op.opname != "ssawasm.local_decl" or op.parent is None:
            continue
        loc = op.result
        if any(u.opname != "ssawasm.local_set" for u in loc.uses):
            continue
        for s in list(dict.fromkeys(loc.uses)):
            Builder.before(s).op("ssawasm.drop", [s.operands[1]])
            s.erase()
        op.erase()
    return f


# -- ssawasm-to-wasm ----------------------------------------------------------------

_CONVERSIONS = {"convert_s", "convert_u", "trunc_s", "trunc_u"}
_FIXED = {
    "extend_s": "i64.extend_i32_s", "extend_u": "i64.extend_i32_u", "wrap": "i32.wrap_i64",
    "promote": "f64.promote_f32", "demote": "f32.demote_f64",
}
_DROPPED = {"ssawasm.cast_memref_to_i32", "ssawasm.cast_i32_to_memref", "ssawasm.on_stack",
            "ssawasm.exit", "ssawasm.local_decl"}


def _st(t: TypeDesc) -> str:
    return storage_type(t).kind


class _FuncLowering:
    def __init__(self, f: Function, tags: dict[str, FuncType]):
        self.f = f
        self.tags = tags
        self.index: dict[Value, int] = {a: i for i, a in enumerate(f.entry.args)}
        self.local_types: list[TypeDesc] = []
        self.counter = 0
        for op in f.walk():
            if op.opname in ("ssawasm.local_get", "ssawasm.local_set"):
                loc = op.operands[0]
                if loc not in self.index:
                    self.index[loc] = len(self.index)
                    self.local_types.append(storage_type(loc.type.elem))

    def error(self, rule: str, msg: str, op: Operation) -> IRError:
        return IRError(Diagnostic(rule, msg, op.span, op.opname))

    def run(self) -> Function:
        out = Block("bb0")
        ops = list(self.f.entry.ops)
        if len(self.f.body.blocks) != 1:
            raise IRError(f"@{self.f.name}: function bodies must be a single block", rule="UnsupportedControlFlow")
        if ops and ops[-1].opname == "ssawasm.return":
            ops = ops[:-1]  # falling off the end returns the same values
        self.emit_ops(ops, out, {}, None)
        params = [storage_type(t.elem if t.kind == "local" else t) for t in self.f.param_types]
        results = [storage_type(t) for t in self.f.result_types]
        return Function(self.f.name, "wasm", self.f.exported, params, results, Region([out]),
                        list(self.local_types), self.f.span)

    def w(self, out: Block, name: str, attrs=None, regions=()) -> Operation:
        return out.append(Operation("wasm." + name, attrs=attrs or {}, regions=regions))

    def emit_seq(self, blocks: list[Block], out: Block, labels: dict[str, str], tail: str | None) -> None:
        for i, blk in enumerate(blocks):
            nxt = blocks[i + 1].label if i + 1 < len(blocks) else tail
            self.emit_ops(blk.ops, out, labels, nxt)

    def target(self, op: Operation, succ: str, labels: dict[str, str]) -> str:
        lab = labels.get(succ)
        if lab is None:
            rule = "NonAdjacentFallthrough" if op.name.startswith("pseudo") else "UnlabeledBranchTarget"
            raise self.error(rule, f"^{succ} is neither the next block nor a block/loop label", op)
        return lab

    def emit_ops(self, ops, out: Block, labels: dict[str, str], nxt: str | None) -> None:
        for op in ops:
            self.emit(op, out, labels, nxt)

    def emit(self, op: Operation, out: Block, labels: dict[str, str], nxt: str | None) -> None:
        name = op.name
        full = op.opname
        if op.dialect != "ssawasm":
            raise self.error("UnsupportedLevel", f"{full} must be lowered to SsaWasm first", op)
        if full in _DROPPED:
            return
        if name == "const":
            t = _st(op.result.type)
            self.w(out, f"{t}.const", {"value": op.attrs["value"]})
        elif name in ("local_get", "local_set"):
            self.w(out, "local.get" if name == "local_get" else "local.set", {"index": self.index[op.operands[0]]})
        elif name in ("global_get", "global_set"):
            self.w(out, name.replace("_", "."), {"name": op.attrs["name"]})
        elif name == "call":
            self.w(out, "call", {"callee": op.attrs["callee"]})
        elif name == "func_ref":
            self.w(out, "ref.func", {"func": op.attrs["func"]})
        elif name == "return":
            self.w(out, "return")
        elif name == "drop":
            self.w(out, "drop")
        elif name == "select":
            self.w(out, "select")
        elif name in ("load", "store"):
            t = _st(op.result.type if name == "load" else op.operands[1].type)
            self.w(out, f"{t}.{name}", {"offset": op.attrs.get("offset", 0)})
        elif name in _CONVERSIONS:
            self.w(out, f"{_st(op.result.type)}.{name[:-2]}_{_st(op.operands[0].type)}{name[-2:]}")
        elif name in _FIXED:
            self.w(out, _FIXED[name])
        elif name == "cont_new":
            self.w(out, "cont.new", {"type": op.attrs["type"]})
        elif name == "suspend":
            self.w(out, "suspend", {"tag": op.attrs["tag"]})
        elif name == "resume":
            on, fallback = op.successors
            if fallback != nxt:
                raise self.error("NonAdjacentFallthrough", f"resume fallback ^{fallback} is not the next block", op)
            self.w(out, "resume", {"type": op.attrs["type"], "on": (op.attrs["tag"], self.target(op, on, labels))})
        elif name in ("br", "pseudo_br"):
            t = op.successors[0]
            if t != nxt:
                self.w(out, "br", {"label": self.target(op, t, labels)})
        elif name in ("cond_br", "pseudo_cond_br"):
            t, f = op.successors
            if t == nxt:
                self.w(out, "i32.eqz")
                self.w(out, "br_if", {"label": self.target(op, f, labels)})
            elif f == nxt:
                self.w(out, "br_if", {"label": self.target(op, t, labels)})
            else:
                self.w(out, "br_if", {"label": self.target(op, t, labels)})
                self.w(out, "br", {"label": self.target(op, f, labels)})
        elif name == "block_loop":
            self.block_loop(op, out)
        elif name == "block_block":
            self.block_block(op, out)
        elif name == "if":
            regions = []
            for r in op.regions:
                blk = Block("bb0")
                self.emit_seq(r.blocks, blk, {}, None)
                regions.append(Region([blk]))
            self.w(out, "if", regions=regions)
        elif op.operands or op.results:
            t = _st(op.operands[0].type)
            self.w(out, f"{t}.{name}")
        else:
            raise self.error("UnsupportedOp", f"no Wasm mapping for {full}", op)

    def _split(self, op: Operation, first: str, second: str):
        blocks = op.regions[0].blocks
        labels = [b.label for b in blocks]
        try:
            i, j = labels.index(first), labels.index(second)
        except ValueError:
            raise self.error("MissingStructuralBlock", f"expected ^{first} and ^{second}", op) from None
        return blocks[:i], blocks[i:j], blocks[j:]

    def block_loop(self, op: Operation, out: Block) -> None:
        n = self.counter
        self.counter += 1
        blk, lp = f"blk{n}", f"loop{n}"
        labels = {"loop_label": lp, "block_label": blk}
        a, b, c = self._split(op, "loop_label", "block_label")
        outer = Block("bb0")
        self.emit_seq(a, outer, labels, "loop_label")
        inner = Block("bb0")
        self.emit_seq(b, inner, labels, "block_label")
        outer.append(Operation("wasm.loop", attrs={"label": lp}, regions=[Region([inner])]))
        self.w(out, "block", {"label": blk}, [Region([outer])])
        self.emit_seq(c, out, {}, None)

    def block_block(self, op: Operation, out: Block) -> None:
        n = self.counter
        self.counter += 1
        blk, on = f"blk{n}", f"on_yield{n}"
        labels = {"inner_block_label": on, "outer_block_label": blk}
        a, b, c = self._split(op, "inner_block_label", "outer_block_label")
        resumes = [o for blk_ in a for o in blk_.ops if o.opname == "ssawasm.resume"]
        results: tuple = ()
        if resumes:
            r = resumes[0]
            tag = self.tags.get(r.attrs["tag"].name)
            if tag is None:
                raise self.error("UnknownSymbol", f"no tag @{r.attrs['tag'].name}", r)
            from .types import contref
            results = (contref(r.attrs["type"].name),) + tuple(tag.params)
        handler_block = Block("bb0")
        self.emit_seq(a, handler_block, labels, "inner_block_label")
        outer = Block("bb0")
        attrs = {"label": on}
        if results:
            attrs["results"] = results
        outer.append(Operation("wasm.block", attrs=attrs, regions=[Region([handler_block])]))
        if b and results and not any(o.opname == "ssawasm.on_stack" for o in b[0].ops):
            for _ in results:
                self.w(outer, "drop")
        self.emit_seq(b, outer, labels, "outer_block_label")
        self.w(out, "block", {"label": blk}, [Region([outer])])
        self.emit_seq(c, out, {}, None)


def convert_ssawasm_ops(f: Function, tags: dict[str, FuncType] | None = None) -> Function:
    """Map one SsaWasm function (after introduce-locals) to a Wasm-dialect function."""
    return _FuncLowering(f, tags or {}).run()


def convert_module_to_wasm(m: IrModule) -> IrModule:
    """ssawasm-to-wasm over every function of the module."""
    leftover = [op for op in m.globals if op.dialect != "wasm"]
    if leftover:
        raise IRError(Diagnostic("UnsupportedLevel", "run ssawasm-global-to-wasm first", leftover[0].span,
                                 leftover[0].opname))
    tags = {op.attrs["sym_name"]: op.attrs["type"] for op in m.globals if op.opname == "wasm.tag"}
    out = []
    for f in m.functions:
        if f.kind == "wasm":
            out.append(f)
        elif f.kind == "ssawasm":
            out.append(convert_ssawasm_ops(f, tags))
        else:
            raise IRError(f"@{f.name} is still a func.func", rule="UnsupportedLevel")
    m.functions = out
    m.level = "wasm"
    return m


def introduce_locals_module(m: IrModule) -> IrModule:
    for f in m.functions:
        introduce_locals(f)
    return m


def fuse_module(m: IrModule) -> IrModule:
    for f in m.functions:
        fuse_stack_locals(f)
    return m


__all__ = ["convert_globals", "introduce_locals", "fuse_stack_locals", "convert_ssawasm_ops",
           "convert_module_to_wasm", "introduce_locals_module", "fuse_module", "SymbolRef"]
