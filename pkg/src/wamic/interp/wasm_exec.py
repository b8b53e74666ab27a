"""Small-step reference interpreter for the emitted Wasm subset.

Function bodies are flattened into instruction arrays with resolved branch
depths.  Each continuation runs on its own fiber (value stack + frames); a
fiber started by ``resume`` records its parent and the handler clauses of
that resume, and ``suspend`` walks this chain innermost-out to find a
handler.  Suspended fibers are the saved state of a continuation.
"""

from __future__ import annotations

import itertools
import re
import struct

from .. import numerics
from ..ir import IRError
from ..numerics import Trap
from ..wasm import Instr, WasmFunc, WasmModule
from .values import HEAP_ALIGN, Continuation, ExecResult, RuntimeValue, from_raw, value_kind, zero_raw

DEFAULT_FUEL = 20_000_000
MAX_FRAMES = 2_000
_FMT = {"i32": "<I", "i64": "<Q", "f32": "<f", "f64": "<d"}
_WIDTH = {"i32": 4, "i64": 8, "f32": 4, "f64": 8}
_CONV = re.compile(r"^(i32|i64|f32|f64)\.(convert|trunc|extend|wrap|promote|demote)_(i32|i64|f32|f64)(_[su])?$")


def _numeric(op: str):
    """(arity, fn) for a numeric mnemonic such as ``i32.add`` or ``f64.convert_i32_s``."""
    mt = _CONV.match(op)
    if mt:
        dst, base, src, su = mt.groups()
        name = base + (su or "")
        return 1, lambda x: numerics.convert(name, src, dst, x)
    t, _, name = op.partition(".")
    if name in ("eqz", "neg"):
        return 1, lambda x: numerics.unop(name, t, x)
    if t in ("i32", "i64"):
        f = numerics._INT_BIN[name]
        return 2, lambda a, b: f(a, b, t)
    if name in numerics.FLOAT_BINOPS:
        return 2, lambda a, b: numerics.binop(name, t, a, b)
    raise IRError(f"{op} is outside the supported subset", rule="UnknownInstruction")


class _Code:
    """A function flattened to tuples; branch labels become relative depths."""

    def __init__(self, f: WasmFunc, m: WasmModule):
        self.name = f.name
        self.nparams = len(f.params)
        self.nresults = len(f.results)
        self.result_types = f.results
        self.local_zeros = [zero_raw(t) for t in f.locals]
        self.code: list[tuple] = []
        self.m = m
        self.flatten(f.body, [])

    def depth(self, labels: list, name: str) -> int:
        for d, lab in enumerate(reversed(labels)):
            if lab == name:
                return d
        raise IRError(f"@{self.name}: unknown label ${name}", rule="UnknownLabel")

    def flatten(self, instrs: list[Instr], labels: list) -> None:
        code = self.code
        for ins in instrs:
            op = ins.op
            if op in ("block", "loop"):
                idx = len(code)
                code.append(None)
                self.flatten(ins.body, labels + [ins.args[0]])
                end = len(code)
                code.append(("end",))
                code[idx] = ("block", end + 1, len(ins.results)) if op == "block" else ("loop", idx + 1)
            elif op == "if":
                idx = len(code)
                code.append(None)
                self.flatten(ins.body, labels + [None])
                else_idx = None
                if ins.orelse:
                    else_idx = len(code)
                    code.append(None)
                    self.flatten(ins.orelse, labels + [None])
                end = len(code)
                code.append(("end",))
                code[idx] = ("if", end if else_idx is None else else_idx + 1, end + 1, len(ins.results))
                if else_idx is not None:
                    code[else_idx] = ("else", end)
            elif op in ("br", "br_if"):
                code.append((op, self.depth(labels, ins.args[0])))
            elif op == "resume":
                ct, clauses = ins.args
                ft = self.m.cont_types[ct]
                code.append(("resume", len(ft.params), tuple((t, self.depth(labels, lab)) for t, lab in clauses)))
            elif op == "suspend":
                tag = self.m.tags[ins.args[0]]
                code.append(("suspend", ins.args[0], len(tag.params), tag.params))
            elif op.endswith(".const"):
                v = ins.args[0]
                k = op.split(".")[0]
                code.append(("const", float(v) if k in ("f32", "f64") else numerics.wrap(v, k)))
            elif op.endswith(".load") or op.endswith(".store"):
                k = op.split(".")[0]
                code.append((op.split(".")[1], k, ins.args[0] if ins.args else 0))
            elif op in ("local.get", "local.set", "local.tee", "global.get", "global.set", "call", "ref.func",
                        "cont.new"):
                code.append((op, ins.args[0]))
            elif op in ("return", "drop", "select", "unreachable"):
                code.append((op,))
            else:
                arity, fn = _numeric(op)
                code.append(("num1" if arity == 1 else "num2", fn))


class _Frame:
    __slots__ = ("code", "pc", "locals", "labels", "base")

    def __init__(self, code: _Code, args: list, base: int):
        self.code = code
        self.pc = 0
        self.locals = list(args) + list(code.local_zeros)
        self.labels: list[tuple] = []
        self.base = base


class _Fiber:
    __slots__ = ("stack", "frames", "parent", "handlers")

    def __init__(self):
        self.stack: list = []
        self.frames: list[_Frame] = []
        self.parent: _Fiber | None = None
        self.handlers: tuple = ()


class WasmMachine:
    def __init__(self, m: WasmModule, fuel: int = DEFAULT_FUEL):
        self.m = m
        self.fuel = fuel
        self.steps = 0
        self.trace: list[tuple[str, str]] = []
        self.ids = itertools.count()
        self.mem = bytearray(m.memory_pages * 65536)
        for d in m.data:
            if d.offset + len(d.data) > len(self.mem):
                raise Trap("OutOfBoundsMemoryAccess", "data segment does not fit")
            self.mem[d.offset:d.offset + len(d.data)] = d.data
        self.globals = {}
        for g in m.globals:
            k = value_kind(g.type)
            self.globals[g.name] = float(g.init) if k in ("f32", "f64") else numerics.wrap(int(g.init), k)
        self.codes = {f.name: _Code(f, m) for f in m.funcs}
        self.imports = {n: t for n, t in m.imports}
        self.heap_ptr = (m.heap_base + HEAP_ALIGN - 1) & -HEAP_ALIGN
        self.nframes = 0

    # -- host -------------------------------------------------------------------

    def host(self, name: str, args: list) -> list:
        if name.startswith("print_"):
            self.trace.append(("print", str(RuntimeValue(name[len("print_"):], args[0]))))
            return []
        if name == "malloc":
            p = self.heap_ptr
            self.heap_ptr = (p + ((args[0] + HEAP_ALIGN - 1) & -HEAP_ALIGN)) & 0xFFFFFFFF
            return [p]
        if name == "free":
            return []
        raise Trap("UnknownImport", name)

    # -- entry ------------------------------------------------------------------

    def run(self, entry: str, args: list[RuntimeValue]) -> ExecResult:
        f = self.m.func(entry)
        if f is None:
            raise IRError(f"no function ${entry}", rule="UnknownEntry")
        if not f.exported:
            raise IRError(f"${entry} is not exported", rule="UnknownEntry")
        if len(args) != len(f.params) or any(a.kind != value_kind(t) for a, t in zip(args, f.params)):
            raise IRError(f"arguments do not match ${entry}", rule="ArgTypeMismatch")
        res = ExecResult(trace=self.trace)
        try:
            main = _Fiber()
            self.enter(main, self.codes[entry], [a.value for a in args])
            vals = self.loop(main)
            res.results = [RuntimeValue("contref", v.id) if isinstance(v, Continuation) else from_raw(v, t)
                           for v, t in zip(vals, f.results)]
            self.trace.append(("return", " ".join(map(str, res.results))))
        except Trap as t:
            self.trace.append(("trap", t.reason))
            res.trap, res.trap_detail = t.reason, t.detail
        res.memory = bytes(self.mem)
        res.steps = self.steps
        return res

    def enter(self, fiber: _Fiber, code: _Code, args: list) -> None:
        self.nframes += 1
        if self.nframes > MAX_FRAMES:
            raise Trap("CallStackExhausted")
        self.trace.append(("call", code.name))
        fiber.frames.append(_Frame(code, args, len(fiber.stack)))

    # -- main loop ----------------------------------------------------------------

    def loop(self, main: _Fiber) -> list:
        fiber = main
        mem = self.mem
        memlen = len(mem)
        fuel = self.fuel
        while True:
            frame = fiber.frames[-1]
            code = frame.code.code
            ncode = len(code)
            stack = fiber.stack
            locs = frame.locals
            labels = frame.labels
            pc = frame.pc
            switch = None
            while True:
                if pc >= ncode:
                    switch = ("return",)
                    break
                ins = code[pc]
                pc += 1
                self.steps += 1
                if self.steps > fuel:
                    raise Trap("FuelExhausted")
                op = ins[0]
                if op == "local.get":
                    stack.append(locs[ins[1]])
                elif op == "local.set":
                    locs[ins[1]] = stack.pop()
                elif op == "const":
                    stack.append(ins[1])
                elif op == "num2":
                    b = stack.pop()
                    stack[-1] = ins[1](stack[-1], b)
                elif op == "num1":
                    stack[-1] = ins[1](stack[-1])
                elif op == "load":
                    addr = stack.pop() + ins[2]
                    k = ins[1]
                    if addr + _WIDTH[k] > memlen:
                        raise Trap("OutOfBoundsMemoryAccess", f"address {addr}")
                    stack.append(struct.unpack_from(_FMT[k], mem, addr)[0])
                elif op == "store":
                    v = stack.pop()
                    addr = stack.pop() + ins[2]
                    k = ins[1]
                    if addr + _WIDTH[k] > memlen:
                        raise Trap("OutOfBoundsMemoryAccess", f"address {addr}")
                    struct.pack_into(_FMT[k], mem, addr, v)
                elif op == "br_if":
                    if stack.pop():
                        pc = self.branch(stack, labels, ins[1])
                elif op == "br":
                    pc = self.branch(stack, labels, ins[1])
                elif op == "block":
                    labels.append((ins[1], ins[2], len(stack), False))
                elif op == "loop":
                    labels.append((ins[1], 0, len(stack), True))
                elif op == "end":
                    labels.pop()
                elif op == "if":
                    c = stack.pop()
                    labels.append((ins[2], ins[3], len(stack), False))
                    if not c:
                        pc = ins[1]
                elif op == "else":
                    pc = ins[1]
                elif op == "local.tee":
                    locs[ins[1]] = stack[-1]
                elif op == "global.get":
                    stack.append(self.globals[ins[1]])
                elif op == "global.set":
                    self.globals[ins[1]] = stack.pop()
                elif op == "drop":
                    stack.pop()
                elif op == "select":
                    c = stack.pop()
                    b = stack.pop()
                    if not c:
                        stack[-1] = b
                elif op == "return":
                    switch = ("return",)
                    break
                elif op == "call":
                    switch = ("call", ins[1])
                    break
                elif op == "ref.func":
                    stack.append(ins[1])
                elif op == "cont.new":
                    fn = stack.pop()
                    if fn is None:
                        raise Trap("NullFunctionReference")
                    stack.append(Continuation(self.ids, None, fn))
                elif op in ("resume", "suspend"):
                    switch = ins
                    break
                elif op == "unreachable":
                    raise Trap("Unreachable")
                else:
                    raise IRError(f"cannot execute {op}", rule="UnknownInstruction")
            frame.pc = pc
            kind = switch[0]
            if kind == "return":
                n = frame.code.nresults
                vals = stack[len(stack) - n:] if n else []
                del stack[frame.base:]
                fiber.frames.pop()
                self.nframes -= 1
                if fiber.frames:
                    stack.extend(vals)
                    continue
                if fiber.parent is None:
                    if fiber is main:
                        return vals
                    raise Trap("OrphanFiber")
                parent = fiber.parent
                fiber.parent = None
                parent.stack.extend(vals)
                fiber = parent
            elif kind == "call":
                name = switch[1]
                callee = self.codes.get(name)
                if callee is None:
                    ft = self.imports.get(name)
                    if ft is None:
                        raise Trap("UnknownImport", name)
                    n = len(ft.params)
                    args = stack[len(stack) - n:] if n else []
                    del stack[len(stack) - n:]
                    stack.extend(self.host(name, args))
                    continue
                n = callee.nparams
                args = stack[len(stack) - n:] if n else []
                del stack[len(stack) - n:]
                self.enter(fiber, callee, args)
            elif kind == "resume":
                fiber = self.resume(fiber, switch)
            else:
                fiber = self.suspend(fiber, switch)

    @staticmethod
    def branch(stack: list, labels: list, depth: int) -> int:
        target, arity, height, is_loop = labels[-1 - depth]
        if arity:
            vals = stack[len(stack) - arity:]
            del stack[height:]
            stack.extend(vals)
        else:
            del stack[height:]
        if is_loop:
            if depth:
                del labels[len(labels) - depth:]
        else:
            del labels[len(labels) - 1 - depth:]
        return target

    def resume(self, fiber: _Fiber, ins: tuple) -> _Fiber:
        _, nargs, clauses = ins
        k = fiber.stack.pop()
        if k is None:
            raise Trap("NullContinuation")
        if k.consumed:
            raise Trap("ConsumedContinuation", f"cont#{k.id}")
        k.consumed = True
        self.trace.append(("resume", str(k.id)))
        stack = fiber.stack
        args = stack[len(stack) - nargs:] if nargs else []
        del stack[len(stack) - nargs:]
        if k.state is None:
            inner = outer = _Fiber()
            self.enter(inner, self.codes[k.func], args)
        else:
            inner, outer = k.state
            inner.stack.extend(args)
        outer.parent = fiber
        outer.handlers = clauses
        return inner

    def suspend(self, fiber: _Fiber, ins: tuple) -> _Fiber:
        _, tag, n, ptypes = ins
        stack = fiber.stack
        payload = stack[len(stack) - n:] if n else []
        del stack[len(stack) - n:]
        self.trace.append(("suspend", " ".join([tag] + [str(from_raw(p, t)) for p, t in zip(payload, ptypes)])))
        x = fiber
        while x.parent is not None:
            for t, depth in x.handlers:
                if t == tag:
                    parent = x.parent
                    x.parent = None
                    k = Continuation(self.ids, (fiber, x))
                    pframe = parent.frames[-1]
                    parent.stack.append(k)
                    parent.stack.extend(payload)
                    pframe.pc = self.branch(parent.stack, pframe.labels, depth)
                    return parent
            x = x.parent
        raise Trap("UnhandledSuspend", f"no handler for {tag}")


def exec_wasm(m: WasmModule, entry: str = "main", args: list[RuntimeValue] | None = None,
              fuel: int = DEFAULT_FUEL) -> ExecResult:
    """Run exported function ``entry`` of ``m``; traps are reported in the result."""
    return WasmMachine(m, fuel).run(entry, list(args or []))
