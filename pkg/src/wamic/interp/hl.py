"""Oracle interpreter over the high-level dialects and SsaWasm.

Evaluation is big-step over regions.  Every function activation is a Python
generator; ``dcont.suspend`` / ``ssawasm.suspend`` yield a request up the
generator chain, so a suspended continuation is simply a paused generator and
a resume is a ``send``.  Requests for tags a resume does not handle are
re-yielded to the next enclosing resume, which gives innermost-out dispatch.
"""

from __future__ import annotations

import itertools
import struct

from .. import numerics
from ..ir import IRError, IrModule, Operation, Region
from ..lower_ssawasm import _ARITH_SAME, CMPF, CMPI, DataLayout, _signatures, layout_data_segments
from ..opt import const_value
from ..types import TypeDesc
from .values import HEAP_ALIGN, Continuation, ExecResult, RuntimeValue, Trap, from_raw, value_kind, zero_raw

DEFAULT_FUEL = 5_000_000
_FMT = {"i32": "<I", "i64": "<Q", "f32": "<f", "f64": "<d"}
_WIDTH = {"i32": 4, "i64": 8, "f32": 4, "f64": 8}
EXIT = ("exit",)


class _Cell:
    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v


def memory_layout(m: IrModule) -> DataLayout:
    """Heap base / page count of a module at any level."""
    if "heap_base" in m.attrs and "pages" in m.attrs:
        return DataLayout([], m.attrs["heap_base"], m.attrs["pages"])
    return layout_data_segments(m)


def initial_memory(m: IrModule, layout: DataLayout) -> bytearray:
    mem = bytearray(layout.page_count * 65536)
    for seg in layout.segments:
        mem[seg.offset:seg.offset + len(seg.data)] = seg.data
    for op in m.globals:
        if op.opname in ("ssawasm.data", "wasm.data"):
            data = op.attrs.get("init", b"")
            off = op.attrs["offset"]
            mem[off:off + len(data)] = data
    return mem


def _k(t: TypeDesc) -> str:
    return value_kind(t)


class HLInterp:
    def __init__(self, m: IrModule, fuel: int = DEFAULT_FUEL):
        if m.level == "wasm" or any(f.kind == "wasm" for f in m.functions):
            raise IRError("eval_hl cannot run wasm-level modules", rule="UnsupportedLevel")
        self.m = m
        self.fuel = fuel
        self.steps = 0
        self.trace: list[tuple[str, str]] = []
        self.ids = itertools.count()
        self.layout = memory_layout(m)
        self.mem = initial_memory(m, self.layout)
        self.heap_ptr = self.layout.heap_base
        self.globals = {}
        for op in m.globals:
            if op.opname in ("ssawasm.global_var", "wasm.global"):
                t = op.attrs["type"]
                init = op.attrs.get("init", 0)
                self.globals[op.attrs["sym_name"]] = init.value if hasattr(init, "value") else (
                    numerics.wrap(init, _k(t)) if _k(t) in ("i32", "i64") else float(init))
        self.tags = {sig: f"yield_{k}" for k, sig in enumerate(_signatures(m))}
        self.funcs = {f.name: f for f in m.functions}
        self._build_table()

    # -- entry ----------------------------------------------------------------

    def run(self, entry: str, args: list[RuntimeValue]) -> ExecResult:
        f = self.funcs.get(entry)
        if f is None or f.body is None:
            raise IRError(f"no function @{entry}", rule="UnknownEntry")
        if len(args) != len(f.param_types) or any(a.kind != _k(t) for a, t in zip(args, f.param_types)):
            raise IRError(f"arguments do not match @{entry}{tuple(map(str, f.param_types))}", rule="ArgTypeMismatch")
        res = ExecResult(trace=self.trace)
        try:
            gen = self.call(entry, [a.value for a in args])
            try:
                req = gen.send(None)
                self.trace.append(("trap", "UnhandledSuspend"))
                res.trap = "UnhandledSuspend"
                res.trap_detail = f"no handler for {req[1]}"
            except StopIteration as stop:
                vals = stop.value or []
                res.results = [self._export(v, t) for v, t in zip(vals, f.result_types)]
                self.trace.append(("return", " ".join(map(str, res.results))))
        except Trap as t:
            self.trace.append(("trap", t.reason))
            res.trap, res.trap_detail = t.reason, t.detail
        except RecursionError:
            self.trace.append(("trap", "CallStackExhausted"))
            res.trap = "CallStackExhausted"
        res.memory = bytes(self.mem)
        res.steps = self.steps
        return res

    def _export(self, v, t: TypeDesc) -> RuntimeValue:
        if isinstance(v, Continuation):
            return RuntimeValue("contref", v.id)
        return from_raw(v, t)

    # -- calls ----------------------------------------------------------------

    def call(self, name: str, args: list):
        f = self.funcs.get(name)
        if f is None or f.body is None:
            return self.host(name, args)
        self.trace.append(("call", name))
        env = {}
        for a, t, x in zip(f.entry.args, f.param_types, args):
            env[a] = _Cell(x) if t.kind == "local" else x
        r = yield from self.run_cfg(f.body, env)
        if r is not None and r[0] == "return":
            return r[1]
        return []

    def host(self, name: str, args: list):
        if name.startswith("print_"):
            kind = name[len("print_"):]
            self.trace.append(("print", str(RuntimeValue(kind, args[0]))))
            return []
        if name == "malloc":
            p = self.heap_ptr
            self.heap_ptr = (p + ((args[0] + HEAP_ALIGN - 1) & -HEAP_ALIGN)) & 0xFFFFFFFF
            return [p]
        if name == "free":
            return []
        raise Trap("UnknownImport", name)

    # -- regions ----------------------------------------------------------------

    def run_ops(self, ops, env):
        table = self.table
        for op in ops:
            self.steps += 1
            if self.steps > self.fuel:
                raise Trap("FuelExhausted")
            try:
                fn, is_gen = table[op.opname]
            except KeyError:
                raise IRError(f"eval_hl cannot execute {op.opname}", rule="UnsupportedOp") from None
            r = (yield from fn(op, env)) if is_gen else fn(op, env)
            if r is not None:
                return r
        return None

    def run_cfg(self, region: Region, env):
        """Run a multi-block region; returns None on normal exit or a return signal."""
        if not region.blocks:
            return None
        blk = region.entry
        while True:
            r = yield from self.run_ops(blk.ops, env)
            if r is None or r is EXIT:
                return None
            if r[0] == "goto":
                nxt = region.block(r[1])
                if nxt is None:
                    raise IRError(f"branch to ^{r[1]} outside its region", rule="BranchTargetOutsideRegion")
                blk = nxt
                continue
            return r

    # -- dispatch table -----------------------------------------------------------

    def _build_table(self) -> None:
        t = {}
        plain = {
            "arith.constant": self._const, "ssawasm.const": self._const,
            "arith.cmpi": self._cmp, "arith.cmpf": self._cmp,
            "arith.select": self._select_arith, "ssawasm.select": self._select,
            "arith.extsi": self._resize, "arith.extui": self._resize, "arith.trunci": self._resize,
            "arith.index_cast": self._resize,
            "memref.get_global": self._get_global, "memref.alloc": self._alloc, "memref.alloca": self._alloc,
            "memref.dealloc": self._nop, "memref.load": self._mload, "memref.store": self._mstore,
            "ssawasm.local_decl": self._local_decl, "ssawasm.local_get": self._local_get,
            "ssawasm.local_set": self._local_set, "ssawasm.global_get": self._global_get,
            "ssawasm.global_set": self._global_set, "ssawasm.func_ref": self._func_ref,
            "ssawasm.load": self._load, "ssawasm.store": self._store, "ssawasm.drop": self._nop,
            "ssawasm.on_stack": self._on_stack, "ssawasm.cast_memref_to_i32": self._ident,
            "ssawasm.cast_i32_to_memref": self._ident, "ssawasm.cont_new": self._cont_new,
            "dcont.new": self._dcont_new, "dcont.alloc": self._local_decl, "dcont.load": self._local_get,
            "dcont.store": self._dcont_store,
            "ssawasm.br": self._goto, "ssawasm.pseudo_br": self._goto,
            "ssawasm.cond_br": self._cond_goto, "ssawasm.pseudo_cond_br": self._cond_goto,
            "ssawasm.exit": lambda op, env: EXIT,
            "func.return": self._return, "ssawasm.return": self._return,
            "scf.yield": lambda op, env: ("yield", [env[v] for v in op.operands]),
            "scf.condition": lambda op, env: ("cond", [env[v] for v in op.operands]),
        }
        for k, fn in plain.items():
            t[k] = (fn, False)
        for name, wasm_name in _ARITH_SAME.items():
            t[f"arith.{name}"] = (self._numeric(wasm_name), False)
        for name in numerics.INT_BINOPS | numerics.FLOAT_BINOPS | {"div", "neg", "eqz", "convert_s", "convert_u",
                                                                    "trunc_s", "trunc_u", "extend_s", "extend_u",
                                                                    "wrap", "promote", "demote"}:
            t[f"ssawasm.{name}"] = (self._numeric(name), False)
        gens = {
            "func.call": self._call, "ssawasm.call": self._call,
            "scf.for": self._for, "scf.while": self._while, "scf.if": self._scf_if,
            "ssawasm.block_loop": self._composite, "ssawasm.block_block": self._composite,
            "ssawasm.if": self._ssawasm_if,
            "dcont.suspend": self._suspend, "ssawasm.suspend": self._suspend,
            "dcont.resume": self._dcont_resume, "ssawasm.resume": self._ssawasm_resume,
        }
        for k, fn in gens.items():
            t[k] = (fn, True)
        self.table = t

    # -- simple ops -----------------------------------------------------------------

    def _const(self, op, env):
        env[op.results[0]] = const_value(op)

    def _numeric(self, name: str):
        conv = name in ("convert_s", "convert_u", "trunc_s", "trunc_u", "extend_s", "extend_u",
                        "wrap", "promote", "demote")
        unary = name in ("neg", "eqz")

        def run(op, env):
            ops = op.operands
            src = _k(ops[0].type)
            if conv:
                env[op.results[0]] = numerics.convert(name, src, _k(op.results[0].type), env[ops[0]])
            elif unary:
                env[op.results[0]] = numerics.unop(name, src, env[ops[0]])
            else:
                env[op.results[0]] = numerics.binop(name, src, env[ops[0]], env[ops[1]])
        return run

    def _cmp(self, op, env):
        table = CMPI if op.name == "cmpi" else CMPF
        pred = op.attrs["predicate"]
        if pred not in table:
            raise IRError(f"predicate {pred!r} is not supported", rule="UnsupportedArithOp")
        a, b = op.operands
        env[op.results[0]] = numerics.binop(table[pred], _k(a.type), env[a], env[b])

    def _select_arith(self, op, env):
        c, a, b = op.operands
        env[op.results[0]] = env[a] if env[c] else env[b]

    def _select(self, op, env):
        a, b, c = op.operands
        env[op.results[0]] = env[a] if env[c] else env[b]

    def _resize(self, op, env):
        x = op.operands[0]
        src, dst = _k(x.type), _k(op.results[0].type)
        v = env[x]
        if src == dst:
            env[op.results[0]] = v
        elif dst == "i64":
            env[op.results[0]] = numerics.convert("extend_u" if op.name == "extui" else "extend_s", src, dst, v)
        else:
            env[op.results[0]] = numerics.convert("wrap", src, dst, v)

    def _ident(self, op, env):
        env[op.results[0]] = env[op.operands[0]]

    def _nop(self, op, env):
        return None

    def _goto(self, op, env):
        return ("goto", op.successors[0])

    def _cond_goto(self, op, env):
        return ("goto", op.successors[0] if env[op.operands[0]] else op.successors[1])

    def _return(self, op, env):
        return ("return", [env[v] for v in op.operands])

    # memory
    def _check(self, addr: int, width: int) -> None:
        if addr < 0 or addr + width > len(self.mem):
            raise Trap("OutOfBoundsMemoryAccess", f"address {addr}")

    def _read(self, addr: int, kind: str):
        w = _WIDTH[kind]
        self._check(addr, w)
        return struct.unpack_from(_FMT[kind], self.mem, addr)[0]

    def _write(self, addr: int, kind: str, v) -> None:
        w = _WIDTH[kind]
        self._check(addr, w)
        struct.pack_into(_FMT[kind], self.mem, addr, v)

    def _elem_addr(self, ref, idx, env) -> int:
        t = ref.type
        lin = 0
        for d, i in zip(t.shape, idx):
            lin = lin * d + numerics.signed(env[i], "i32")
        return (env[ref] + lin * t.elem.width) & 0xFFFFFFFF

    def _get_global(self, op, env):
        try:
            env[op.results[0]] = self.layout.offset_of(op.attrs["name"].name)
        except KeyError:
            # module already past memref-to-ssawasm: look at its data ops
            for g in self.m.globals:
                if g.attrs.get("sym_name") == op.attrs["name"].name and "offset" in g.attrs:
                    env[op.results[0]] = g.attrs["offset"]
                    return
            raise IRError(f"unknown global @{op.attrs['name'].name}", rule="UnknownSymbol") from None

    def _alloc(self, op, env):
        env[op.results[0]] = self.host("malloc", [op.results[0].type.byte_size])[0]

    def _mload(self, op, env):
        ref, *idx = op.operands
        env[op.results[0]] = self._read(self._elem_addr(ref, idx, env), _k(op.results[0].type))

    def _mstore(self, op, env):
        val, ref, *idx = op.operands
        self._write(self._elem_addr(ref, idx, env), _k(val.type), env[val])

    def _load(self, op, env):
        addr = env[op.operands[0]] + op.attrs.get("offset", 0)
        env[op.results[0]] = self._read(addr, _k(op.results[0].type))

    def _store(self, op, env):
        a, v = op.operands
        self._write(env[a] + op.attrs.get("offset", 0), _k(v.type), env[v])

    # locals / globals
    def _local_decl(self, op, env):
        env[op.results[0]] = _Cell(zero_raw(op.results[0].type))

    def _local_get(self, op, env):
        env[op.results[0]] = env[op.operands[0]].v

    def _local_set(self, op, env):
        env[op.operands[0]].v = env[op.operands[1]]

    def _dcont_store(self, op, env):
        k, slot = op.operands
        env[slot].v = env[k]

    def _global_get(self, op, env):
        env[op.results[0]] = self.globals[op.attrs["name"].name]

    def _global_set(self, op, env):
        self.globals[op.attrs["name"].name] = env[op.operands[0]]

    def _func_ref(self, op, env):
        env[op.results[0]] = op.attrs["func"].name

    def _on_stack(self, op, env):
        env[op.results[0]] = env["__stack"].pop()

    # continuations
    def _new_cont(self, func: str) -> Continuation:
        return Continuation(self.ids, None, func)

    def _dcont_new(self, op, env):
        env[op.results[0]] = self._new_cont(op.attrs["func"].name)

    def _cont_new(self, op, env):
        fn = env[op.operands[0]]
        if fn is None:
            raise Trap("NullFunctionReference")
        env[op.results[0]] = self._new_cont(fn)

    # -- generator ops --------------------------------------------------------------

    def _call(self, op, env):
        vals = yield from self.call(op.attrs["callee"].name, [env[v] for v in op.operands])
        for r, v in zip(op.results, vals):
            env[r] = v
        return None

    def _bind(self, block, vals, env):
        for a, v in zip(block.args, vals):
            env[a] = v

    def _for(self, op, env):
        lb, ub, step, *inits = op.operands
        body = op.regions[0].entry
        kind = _k(lb.type)
        i, hi, st = env[lb], env[ub], env[step]
        carried = [env[v] for v in inits]
        while numerics.signed(i, kind) < numerics.signed(hi, kind):
            self._bind(body, [i] + carried, env)
            r = yield from self.run_ops(body.ops, env)
            if r is not None and r[0] == "yield":
                carried = r[1]
            elif r is not None:
                return r
            i = numerics.wrap(i + st, kind)
        for res, v in zip(op.results, carried):
            env[res] = v
        return None

    def _while(self, op, env):
        before, after = op.regions
        carried = [env[v] for v in op.operands]
        while True:
            self._bind(before.entry, carried, env)
            r = yield from self.run_ops(before.entry.ops, env)
            if r is None or r[0] != "cond":
                return r
            flag, *fwd = r[1]
            if not flag:
                for res, v in zip(op.results, fwd):
                    env[res] = v
                return None
            self._bind(after.entry, fwd, env)
            r = yield from self.run_ops(after.entry.ops, env)
            if r is not None and r[0] == "yield":
                carried = r[1]
            elif r is not None:
                return r

    def _scf_if(self, op, env):
        region = op.regions[0] if env[op.operands[0]] else op.regions[1]
        if not region.blocks:
            return None
        r = yield from self.run_ops(region.entry.ops, env)
        if r is not None and r[0] == "yield":
            for res, v in zip(op.results, r[1]):
                env[res] = v
            return None
        return r

    def _composite(self, op, env):
        return (yield from self.run_cfg(op.regions[0], env))

    def _ssawasm_if(self, op, env):
        return (yield from self.run_cfg(op.regions[0 if env[op.operands[0]] else 1], env))

    def _tag_of(self, op) -> str:
        if op.dialect == "ssawasm":
            return op.attrs["tag"].name
        return self.tags[(tuple(v.type for v in op.operands), tuple(r.type for r in op.results))]

    def _suspend(self, op, env):
        tag = self._tag_of(op)
        payload = [env[v] for v in op.operands]
        self.trace.append(("suspend", " ".join([tag] + [str(from_raw(p, v.type)) for p, v in zip(payload, op.operands)])))
        vals = yield ("suspend", tag, payload)
        for r, v in zip(op.results, vals):
            env[r] = v
        return None

    def _resume(self, k, args, tag):
        """Run continuation ``k``; returns ("done", results) or ("handled", k2, payload)."""
        if k is None:
            raise Trap("NullContinuation")
        if k.consumed:
            raise Trap("ConsumedContinuation", f"cont#{k.id}")
        k.consumed = True
        self.trace.append(("resume", str(k.id)))
        if k.state is None:
            gen = self.call(k.func, list(args))
            send = None
        else:
            gen = k.state
            send = list(args)
        while True:
            try:
                req = gen.send(send)
            except StopIteration as stop:
                return ("done", stop.value or [])
            if req[1] == tag:
                return ("handled", Continuation(self.ids, gen), req[2])
            send = yield req  # not ours: forward to the next enclosing handler

    def _dcont_resume(self, op, env):
        k, *args = op.operands
        ctype = k.type
        tag = self.tags[ctype.sig] if ctype.sig is not None else None
        out = yield from self._resume(env[k], [env[a] for a in args], tag)
        if out[0] == "done":
            return None
        handler = op.regions[0]
        if not handler.blocks:
            return None
        self._bind(handler.entry, [out[1]] + list(out[2]), env)
        return (yield from self.run_ops(handler.entry.ops, env))

    def _ssawasm_resume(self, op, env):
        *args, k = op.operands
        out = yield from self._resume(env[k], [env[a] for a in args], op.attrs["tag"].name)
        if out[0] == "done":
            env["__stack"] = list(out[1])
            return ("goto", op.successors[1])
        env["__stack"] = [out[1]] + list(out[2])
        return ("goto", op.successors[0])


def eval_hl(m: IrModule, entry: str = "main", args: list[RuntimeValue] | None = None,
            fuel: int = DEFAULT_FUEL) -> ExecResult:
    """Evaluate ``entry`` in a high-level or SsaWasm module."""
    return HLInterp(m, fuel).run(entry, list(args or []))
