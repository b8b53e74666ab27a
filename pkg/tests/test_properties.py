"""Randomized invariants over generated programs."""

import itertools
import struct

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from wamic.interp import eval_hl, exec_wasm, validate_wasm
from wamic.interp.diff import first_divergence
from wamic.lower_ssawasm import layout_data_segments
from wamic.pipeline import DEFAULT_PIPELINE, LOWERINGS, PipelineConfig, compile_module, run_passes
from wamic.textual import parse_module, print_module
from wamic.verifier import verify_module
from wamic.types import TypeDesc
from wamic.wasm import Instr, WasmFunc, WasmModule
from wamic.wat import escape_bytes, stats, unescape_bytes

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

BINOPS = ["addi", "subi", "muli", "andi", "ori", "xori", "shli", "shrsi", "shrui", "divsi", "remui"]
i32s = st.integers(-2**31, 2**31 - 1)


@st.composite
def straight_line(draw, min_ops=1, max_ops=12):
    """(lines, names) of i32 constants followed by binary ops over earlier values."""
    consts = draw(st.lists(st.one_of(st.integers(-8, 8), i32s), min_size=2, max_size=4))
    lines = [f"%v{k} = arith.constant {c} : i32" for k, c in enumerate(consts)]
    names = [f"%v{k}" for k in range(len(consts))]
    for _ in range(draw(st.integers(min_ops, max_ops))):
        op = draw(st.sampled_from(BINOPS))
        a, b = draw(st.sampled_from(names)), draw(st.sampled_from(names))
        n = f"%v{len(names)}"
        lines.append(f"{n} = arith.{op} {a}, {b} : i32")
        names.append(n)
    return lines, names


@st.composite
def programs(draw):
    """A ``main`` of straight-line code, optionally followed by a counted loop with an accumulator."""
    lines, names = draw(straight_line())
    body = ["    " + ln for ln in lines]
    result = names[-1]
    if draw(st.booleans()):
        trips = draw(st.integers(0, 5))
        outer = draw(st.sampled_from(names))
        op1, op2 = draw(st.sampled_from(["addi", "xori", "muli", "subi"])), draw(st.sampled_from(["addi", "ori"]))
        body += [
            "    %lb = arith.constant 0 : index",
            f"    %ub = arith.constant {trips} : index",
            "    %st = arith.constant 1 : index",
            f"    %acc = scf.for %lb, %ub, %st, {result} {{",
            "    ^bb0(%i: index, %a: i32):",
            "      %iv = arith.index_cast %i : i32",
            f"      %t = arith.{op1} %a, {outer} : i32",
            f"      %u = arith.{op2} %t, %iv : i32",
            "      scf.yield %u",
            "    } : i32",
        ]
        result = "%acc"
    text = "module {\n  func.func @main() -> i32 {\n" + "\n".join(body) + f"\n    func.return {result}\n  }}\n}}\n"
    return text


def same_outcome(a, b):
    return first_divergence(a, b) is None


@SETTINGS
@given(programs())
def test_print_parse_fixed_point(text):
    for passes in ([], list(LOWERINGS), list(DEFAULT_PIPELINE[:-1])):
        m = run_passes(parse_module(text), passes)
        once = print_module(m)
        assert print_module(parse_module(once)) == once


@SETTINGS
@given(programs())
def test_verifier_idempotent(text):
    m = parse_module(text)
    assert verify_module(m) == verify_module(m) == []


@SETTINGS
@given(straight_line(min_ops=2), st.data())
def test_swapping_adjacent_ops_respects_dominance(prog, data):
    lines, names = prog
    text = "func.func @main() -> i32 {\n" + "\n".join(lines) + f"\nfunc.return {names[-1]}\n}}"
    m = parse_module(text)
    ops = m.functions[0].entry.ops
    k = data.draw(st.integers(0, len(ops) - 3))
    first, second = ops[k], ops[k + 1]
    dependent = first.result in second.operands
    ops[k], ops[k + 1] = second, first
    rules = [d.rule for d in verify_module(m)]
    assert ("UseNotDominated" in rules) == dependent
    if not dependent:
        assert rules == []


@SETTINGS
@given(programs())
def test_each_pass_preserves_oracle(text):
    ref = eval_hl(parse_module(text))
    stop = DEFAULT_PIPELINE.index("ssawasm-global-to-wasm")
    for k in range(1, stop + 1):
        staged = run_passes(parse_module(text), list(DEFAULT_PIPELINE[:k]))
        assert same_outcome(ref, eval_hl(staged)), DEFAULT_PIPELINE[k - 1]
    w = compile_module(parse_module(text)).wasm
    assert validate_wasm(w) == []
    assert same_outcome(ref, exec_wasm(w))


@SETTINGS
@given(programs())
def test_fusion_shrinks_and_leaves_no_dead_locals(text):
    m = parse_module(text)
    fused = compile_module(m).wasm
    cfg = PipelineConfig()
    cfg.passes = [p for p in cfg.passes if p != "fuse-stack-locals"]
    unfused = compile_module(parse_module(text), cfg).wasm
    assert stats(fused).instructions <= stats(unfused).instructions
    assert same_outcome(exec_wasm(fused), exec_wasm(unfused))
    for f in fused.funcs:
        read = {i.args[0] for i in f.instructions() if i.op in ("local.get", "local.tee")}
        assert all(k in read for k in range(len(f.params), len(f.params) + len(f.locals)))


shapes = st.lists(st.integers(1, 8), min_size=1, max_size=3)


@SETTINGS
@given(shapes, st.data())
def test_address_is_row_major(shape, data):
    idx = tuple(data.draw(st.integers(0, n - 1)) for n in shape)
    size = 1
    for n in shape:
        size *= n
    t = "memref<i32x" + "x".join(map(str, shape)) + ">"
    consts = "\n".join(f"    %i{k} = arith.constant {x} : index" for k, x in enumerate(idx))
    subs = ", ".join(f"%i{k}" for k in range(len(idx)))
    text = f"""module {{
  memref.global @g : {t} = dense<[{", ".join(["0"] * size)}]>
  func.func @main() {{
    %g = memref.get_global @g : {t}
{consts}
    %v = arith.constant 12345 : i32
    memref.store %v, %g, {subs}
    func.return
  }}
}}
"""
    linear = list(itertools.product(*map(range, shape))).index(idx)
    for mem in (eval_hl(parse_module(text)).memory, exec_wasm(compile_module(parse_module(text)).wasm).memory):
        words = struct.unpack_from(f"<{size}i", mem, 1024)
        assert [k for k, w in enumerate(words) if w] == [linear]


elem = st.sampled_from(["i32", "i64", "f32", "f64"])


@SETTINGS
@given(st.lists(st.tuples(elem, st.integers(1, 6)), max_size=5))
def test_layout_deterministic_aligned_disjoint(globals_):
    width = {"i32": 4, "i64": 8, "f32": 4, "f64": 8}
    decls = "\n".join(f"  memref.global @g{k} : memref<{e}x{n}> = dense<[{', '.join(['0'] * n)}]>"
                      for k, (e, n) in enumerate(globals_))
    text = "module {\n" + decls + "\n}\n"
    a = layout_data_segments(parse_module(text))
    b = layout_data_segments(parse_module(text))
    assert a == b
    end = 1024
    for k, (e, n) in enumerate(globals_):
        off = a.offset_of(f"g{k}")
        assert off % width[e] == 0 and off >= end
        end = off + n * width[e]
    assert a.heap_base % 16 == 0 and a.heap_base >= end


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=300))
def test_escape_round_trip(data):
    text = escape_bytes(data)
    assert unescape_bytes(text) == data
    assert all(32 <= ord(c) < 127 for c in text) and '"' not in text


@st.composite
def schedules(draw):
    counts = draw(st.lists(st.integers(0, 3), min_size=1, max_size=3))
    order = draw(st.lists(st.integers(0, len(counts) - 1), max_size=8))
    return counts, order


def one_shot_program(counts, order):
    cty = "!dcont.cont<(i32)->()>"
    out = ["module {", "  func.func private @print_i32(i32)"]
    for j, n in enumerate(counts):
        out.append(f"  func.func @gen{j}() {{")
        for s in range(n):
            out += [f"    %c{s} = arith.constant {100 * j + s} : i32", f"    dcont.suspend(%c{s})"]
        out += ["    func.return", "  }"]
    out.append("  func.func @main() -> i32 {")
    for j in range(len(counts)):
        out += [f"    %k{j} = dcont.new @gen{j} : {cty}",
                f"    %s{j} = dcont.alloc : !ssawasm.local<{cty}>",
                f"    dcont.store %k{j}, %s{j}"]
    for step, j in enumerate(order):
        out += [f"    %r{step} = dcont.load %s{j} : {cty}",
                f"    dcont.resume %r{step} {{",
                f"    ^bb0(%n{step}: {cty}, %x{step}: i32):",
                f"      func.call @print_i32(%x{step})",
                f"      dcont.store %n{step}, %s{j}",
                "    }"]
    out += ["    %z = arith.constant 0 : i32", "    func.return %z", "  }", "}"]
    return "\n".join(out) + "\n"


def one_shot_model(counts, order):
    """Printed payloads and whether the schedule hits a consumed continuation."""
    done = [0] * len(counts)
    printed = []
    for j in order:
        if done[j] == counts[j] + 1:
            return printed, True
        if done[j] < counts[j]:
            printed.append(str(100 * j + done[j]))
        done[j] += 1
    return printed, False


@settings(max_examples=60, deadline=None)
@given(schedules())
def test_one_shot_random_schedules(sched):
    counts, order = sched
    text = one_shot_program(counts, order)
    printed, traps = one_shot_model(counts, order)
    w = compile_module(parse_module(text)).wasm
    assert validate_wasm(w) == []
    for r in (eval_hl(parse_module(text)), exec_wasm(w)):
        assert [d for _, d in r.events("print")] == printed
        assert r.trap == ("ConsumedContinuation" if traps else None)


@SETTINGS
@given(st.sampled_from([("i32.load", 4), ("i64.load", 8), ("f32.load", 4), ("f64.load", 8)]),
       st.integers(0, 2**20), st.integers(1, 4))
def test_out_of_bounds_always_traps(load, beyond, pages):
    op, width = load
    limit = pages * 65536
    addr = min(limit - width + 1 + beyond, 2**32 - 1)
    m = WasmModule(funcs=[WasmFunc("main", True, [], [TypeDesc(op.split(".")[0])], [],
                                   [Instr("i32.const", (addr - 2**32 if addr >= 2**31 else addr,)),
                                    Instr(op, (0, 0))])],
                   memory_pages=pages)
    assert validate_wasm(m) == []
    assert exec_wasm(m).trap == "OutOfBoundsMemoryAccess"
