import struct

import pytest

from wamic.interp import diff_modules, eval_hl, exec_wasm, validate_wasm
from wamic.interp.diff import first_divergence
from wamic.interp.values import F64, I32, ExecResult
from wamic.pipeline import compile_module
from wamic.textual import parse_module
from wamic.types import FuncType, I32 as T_I32, contref
from wamic.wasm import Instr, WasmFunc, WasmModule, build_wasm_module

from conftest import CORPUS_FILES, WASM_CORPUS, load


def i32s(mem, off, n):
    return list(struct.unpack_from(f"<{n}i", mem, off))


def module_of(body, results=(T_I32,), params=(), locals_=()):
    return WasmModule(funcs=[WasmFunc("main", True, list(params), list(results), list(locals_), body)])


def rules(m):
    return [d.rule for d in validate_wasm(m)]


def test_gcd_oracle():
    assert eval_hl(load("gcd")).results == [I32(6)]


def test_matmul2_memory():
    r = eval_hl(load("matmul2"))
    assert i32s(r.memory, 1056, 4) == [19, 22, 43, 50]
    w = exec_wasm(compile_module(load("matmul2")).wasm)
    assert i32s(w.memory, 1056, 4) == [19, 22, 43, 50]
    assert w.memory == r.memory


def test_generator_payloads():
    r = eval_hl(load("generator"))
    payloads = [int(d) for k, d in r.events("suspend") for d in [d.split()[-1]]]
    assert payloads == [i * i for i in range(10)]
    assert sum(payloads) == 285 == r.results[0].value
    assert len(r.events("resume")) == 10


def test_validate_compiled_sum_loop():
    assert validate_wasm(compile_module(load("sum_loop")).wasm) == []


def test_validate_unknown_label():
    assert rules(module_of([Instr("br", ("nowhere",))], results=())) == ["UnknownLabel"]


def test_validate_stack_underflow():
    m = module_of([Instr("i32.const", (1,)), Instr("i32.add")])
    assert rules(m) == ["StackUnderflowAtValidation"]


def test_validate_type_mismatch():
    m = module_of([Instr("i32.const", (1,)), Instr("f64.const", (1.0,)), Instr("i32.add")])
    assert rules(m) == ["TypeMismatchAtValidation"]


def test_validate_extra_values():
    m = module_of([Instr("i32.const", (1,)), Instr("i32.const", (1,))])
    assert rules(m) == ["BlockResultMismatch"]


def test_validate_unreachable_is_polymorphic():
    m = module_of([Instr("unreachable"), Instr("i32.add")])
    assert rules(m) == []


def test_validate_unknown_local_and_global():
    assert rules(module_of([Instr("local.get", (3,))])) == ["UnknownLocal"]
    assert rules(module_of([Instr("global.get", ("g",))])) == ["UnknownGlobal"]


def test_validate_handler_block_mismatch():
    m = build_wasm_module(parse_module((WASM_CORPUS / "yield_once.mir").read_text()))
    blk = m.func("main").body[0]
    blk.results = (T_I32,)
    assert "HandlerBlockMismatch" in rules(m)


def test_yield_once():
    m = build_wasm_module(parse_module((WASM_CORPUS / "yield_once.mir").read_text()))
    assert validate_wasm(m) == []
    r = exec_wasm(m)
    assert r.trap is None
    assert r.results == [I32(2)]
    assert r.events("print") == [("print", "1")]
    assert r.events("suspend") == [("suspend", "yield 1")]
    assert len(r.events("resume")) == 2


@pytest.mark.parametrize("name", ["consumed", "unhandled", "divzero"])
def test_traps_agree(name):
    expected = {"consumed": "ConsumedContinuation", "unhandled": "UnhandledSuspend",
                "divzero": "IntegerDivideByZero"}[name]
    m = load(name)
    rep = diff_modules(m, compile_module(m).wasm)
    assert rep.ok
    assert rep.oracle.trap == rep.compiled.trap == expected


def test_resume_twice_in_wasm():
    m = build_wasm_module(parse_module((WASM_CORPUS / "yield_once.mir").read_text()))
    main = m.func("main")
    # keep the first continuation in a local and resume it twice
    ct = contref("ct")
    main.locals = [ct]
    main.body = [
        Instr("ref.func", ("task",)), Instr("cont.new", ("ct",)), Instr("local.set", (0,)),
        Instr("block", ("h",), [Instr("local.get", (0,)), Instr("resume", ("ct", (("yield", "h"),))),
                                Instr("return")], results=(ct, T_I32)),
        Instr("drop"), Instr("drop"),
        Instr("local.get", (0,)), Instr("resume", ("ct", ())),
    ]
    assert validate_wasm(m) == []
    assert exec_wasm(m).trap == "ConsumedContinuation"


def test_null_continuation():
    m = build_wasm_module(parse_module((WASM_CORPUS / "yield_once.mir").read_text()))
    main = m.func("main")
    main.locals = [contref("ct")]
    main.body = [Instr("local.get", (0,)), Instr("resume", ("ct", ()))]
    assert exec_wasm(m).trap == "NullContinuation"


def test_out_of_bounds_load():
    m = module_of([Instr("i32.const", (17 * 65536 - 2,)), Instr("i32.load", (0, 0))])
    assert validate_wasm(m) == []
    assert exec_wasm(m).trap == "OutOfBoundsMemoryAccess"


def test_fuel_exhaustion():
    m = module_of([Instr("loop", ("l",), [Instr("br", ("l",))])], results=())
    assert exec_wasm(m, fuel=1000).trap == "FuelExhausted"


def test_call_stack_exhaustion():
    m = module_of([Instr("call", ("main",))], results=())
    assert exec_wasm(m).trap == "CallStackExhausted"


def test_entry_args_and_params():
    m = module_of([Instr("local.get", (0,)), Instr("i32.const", (1,)), Instr("i32.add")], params=(T_I32,))
    assert exec_wasm(m, args=[I32(41)]).results == [I32(42)]


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_differential(path):
    m = parse_module(path.read_text())
    w = compile_module(m).wasm
    assert validate_wasm(w) == []
    rep = diff_modules(m, w)
    assert rep.ok, rep.divergence
    assert rep.oracle.events("suspend") == rep.compiled.events("suspend")


def test_first_divergence_reports():
    a = ExecResult([I32(1)])
    assert first_divergence(a, ExecResult([I32(1)])) is None
    assert "result 0" in first_divergence(a, ExecResult([I32(2)]))
    assert "trap" in first_divergence(a, ExecResult([], trap="Unreachable"))
    nan1 = F64(float("nan"))
    assert first_divergence(ExecResult([nan1]), ExecResult([F64(-float("nan"))])) is None
    assert first_divergence(ExecResult([F64(0.0)]), ExecResult([F64(-0.0)])) is not None
    b = ExecResult([I32(1)], trace=[("print", "3")])
    assert "event 0" in first_divergence(b, ExecResult([I32(1)], trace=[("print", "4")]))


def test_scheduler_interleaving():
    m = load("scheduler")
    rep = diff_modules(m, compile_module(m).wasm)
    assert rep.ok
    ids = [int(d.split()[-1]) for _, d in rep.compiled.events("suspend")]
    assert ids == [1, 2] * 4
    assert i32s(rep.compiled.memory, 1024, 8) == [2, 4, 6, 8, 10, 12, 14, 16]
