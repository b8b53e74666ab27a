import pytest

from wamic import lower_ssawasm as ls
from wamic.interp import eval_hl
from wamic.interp.values import I32
from wamic.ir import IRError
from wamic.pipeline import PipelineConfig, compile_text, run_passes
from wamic.textual import parse_module
from wamic.verifier import verify_module

from conftest import CORPUS, load


TO_SCF = ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm", "scf-to-ssawasm"]


def ops_of(m, fname="main"):
    return [op.opname for op in m.function(fname).walk()]


def lower(text, passes):
    m = parse_module(text)
    return run_passes(m, list(passes))


def test_constant_becomes_ssawasm_const():
    m = lower("""func.func @main() -> i32 {
  %0 = arith.constant 42 : i32
  func.return %0
}""", ["arith-to-ssawasm"])
    op = m.functions[0].entry.ops[0]
    assert op.opname == "ssawasm.const" and op.attrs["value"] == 42


def test_sitofp_emits_signed_convert():
    r = compile_text("""func.func @main(%a: i32) -> f64 {
  %x = arith.sitofp %a : f64
  func.return %x
}""")
    assert "f64.convert_i32_s" in r.wat


def test_cmpi_eq_oracle():
    text = """func.func @main() -> i32 {
  %a = arith.constant 5 : i32
  %c = arith.cmpi eq %a, %a : i32
  func.return %c
}"""
    m = lower(text, ["arith-to-ssawasm"])
    assert "ssawasm.eq" in ops_of(m)
    assert eval_hl(m).results == [I32(1)]
    assert eval_hl(parse_module(text)).results == [I32(1)]


def test_func_params_become_locals():
    m = lower("""func.func @f(%x: i32) -> i32 {
  func.return %x
}
func.func @main() -> i32 {
  %c = arith.constant 1 : i32
  %r = func.call @f(%c) : i32
  func.return %r
}""", ["arith-to-ssawasm", "func-to-ssawasm"])
    f = m.function("f")
    assert f.kind == "ssawasm"
    assert [str(t) for t in f.param_types] == ["!ssawasm.local<i32>"]
    assert [str(t) for t in f.result_types] == ["i32"]
    main = m.function("main")
    assert main.param_types == [] and verify_module(m) == []


def layout_of(decls):
    text = "module {\n" + "\n".join(decls) + "\n}"
    return ls.layout_data_segments(parse_module(text), heap_reserve=1 << 20)


def test_layout_two_i32x4():
    lay = layout_of(["memref.global @a : memref<i32x4> = dense<[1, 2, 3, 4]>",
                     "memref.global @b : memref<i32x4> = dense<[5, 6, 7, 8]>"])
    assert [s.offset for s in lay.segments] == [1024, 1040]
    assert lay.heap_base == 1056


def test_layout_alignment():
    lay = layout_of(["memref.global @a : memref<f64x3> = dense<[1.0, 2.0, 3.0]>",
                     "memref.global @b : memref<i32x1> = dense<[9]>"])
    assert [s.offset for s in lay.segments] == [1024, 1048]


def test_layout_alignment_after_odd_size():
    lay = layout_of(["memref.global @a : memref<i32x3> = dense<[1, 2, 3]>",
                     "memref.global @b : memref<i64x1> = dense<[9]>"])
    assert [s.offset for s in lay.segments] == [1024, 1040]
    assert lay.heap_base == 1056


def test_layout_empty():
    lay = layout_of([])
    assert lay.segments == [] and lay.heap_base == 1024 and lay.page_count == 17


def test_layout_reserve_from_env(monkeypatch):
    monkeypatch.setenv("WAMIC_HEAP_RESERVE", "0")
    assert ls.layout_data_segments(parse_module("module {\n}")).page_count == 1


def test_alloc_size_argument():
    m = lower("""func.func @main() {
  %m = memref.alloc : memref<i32x4>
  memref.dealloc %m
  func.return
}""", ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm"])
    main = m.function("main").entry.ops
    call = next(op for op in main if op.opname == "ssawasm.call")
    assert call.attrs["callee"].name == "malloc"
    size = call.operands[0].owner
    assert size.opname == "ssawasm.const" and size.attrs["value"] == 16
    free = [op for op in main if op.opname == "ssawasm.call"][1]
    assert free.attrs["callee"].name == "free"
    assert free.operands[0].owner.opname == "ssawasm.cast_memref_to_i32"


def test_alloca_flag():
    text = """func.func @main() {
  %m = memref.alloca : memref<i32x4>
  func.return
}"""
    compile_text(text)
    with pytest.raises(IRError) as e:
        compile_text(text, PipelineConfig(alloca_as_alloc=False))
    assert e.value.diagnostics[0].rule == "AllocaUnsupported"


def test_builtin_alloc_off_imports_malloc():
    r = compile_text("""func.func @main() {
  %m = memref.alloc : memref<i32x4>
  func.return
}""", PipelineConfig(builtin_alloc=False))
    assert '(import "env" "malloc"' in r.wat


def test_address_chain_2d():
    m = lower("""func.func @main(%i: index, %j: index) -> i32 {
  %m = memref.alloc : memref<i32x10x10>
  %v = memref.load %m, %i, %j : i32
  func.return %v
}""", ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm"])
    names = [op.opname.split(".")[1] for op in m.function("main").entry.ops]
    k = names.index("cast_memref_to_i32")
    # base, i, j read, const 10, mul, add, const 4, mul, add, load
    tail = [n for n in names[k:-1] if n != "local_get"]
    assert tail == ["cast_memref_to_i32", "const", "mul", "add", "const", "mul", "add", "load"]


def test_address_constant_zero_folds():
    text = """func.func @main() -> i32 {
  %m = memref.alloc : memref<i32x4>
  %c0 = arith.constant 0 : index
  %v = memref.load %m, %c0 : i32
  func.return %v
}"""
    m = lower(text, ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm", "cse", "fold-constants"])
    load_op = next(op for op in m.function("main").walk() if op.opname == "ssawasm.load")
    addr = load_op.operands[0].owner
    assert addr.opname == "ssawasm.add"
    assert addr.operands[0].owner.opname == "ssawasm.cast_memref_to_i32"
    off = addr.operands[1].owner
    assert off.opname == "ssawasm.const" and off.attrs["value"] == 0
    assert eval_hl(m).results == [I32(0)]


def test_scf_for_skeleton():
    m = lower((CORPUS / "sum_loop.mir").read_text(), TO_SCF)
    bl = next(op for op in m.function("main").walk() if op.opname == "ssawasm.block_loop")
    labels = [b.label for b in bl.regions[0].blocks]
    assert labels == ["entry", "loop_label", "body", "ind_var_update", "block_label"]
    entry = bl.regions[0].blocks[0]
    sets = [op for op in entry.ops if op.opname == "ssawasm.local_set"]
    assert len(sets) >= 2
    loop = bl.regions[0].block("loop_label")
    assert [op.name for op in loop.ops][-2:] == ["lt_s", "pseudo_cond_br"]
    assert loop.ops[-1].successors == ["body", "block_label"]
    assert [op.name for op in bl.regions[0].block("block_label").ops] == ["exit"]
    assert bl.regions[0].block("body").ops[-1].successors == ["ind_var_update"]


def test_zero_trip_loop():
    text = """func.func @main() -> i32 {
  %lb = arith.constant 5 : index
  %s = arith.constant 1 : index
  %init = arith.constant 77 : i32
  %r = scf.for %lb, %lb, %s, %init {
  ^bb0(%i: index, %acc: i32):
    %one = arith.constant 1 : i32
    %n = arith.addi %acc, %one : i32
    scf.yield %n
  } : i32
  func.return %r
}"""
    m = lower(text, TO_SCF)
    assert eval_hl(m).results == [I32(77)]


def test_scf_if_becomes_ssawasm_if():
    m = lower((CORPUS / "cond_sum.mir").read_text(), TO_SCF)
    names = ops_of(m)
    assert "ssawasm.if" in names and "scf.if" not in names


def test_dcont_lowering_generator():
    m = run_passes(load("generator"), ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm",
                                       "scf-to-ssawasm", "dcont-to-ssawasm"])
    kinds = [op.opname for op in m.globals]
    assert "ssawasm.tag" in kinds and "ssawasm.cont_type" in kinds
    names = [op.opname for f in m.functions for op in f.walk()]
    assert "ssawasm.func_ref" in names and "ssawasm.cont_new" in names
    assert "ssawasm.suspend" in names and "ssawasm.block_block" in names
    assert not [n for n in names if n.startswith("dcont.")]
    bb = next(op for f in m.functions for op in f.walk() if op.opname == "ssawasm.block_block")
    labels = [b.label for b in bb.regions[0].blocks]
    assert labels == ["entry", "resume", "inner_block_label", "outer_block_label"]
    entry_ops = [op.name for op in bb.regions[0].blocks[0].ops]
    assert "resume" in entry_ops
    handler = bb.regions[0].block("inner_block_label")
    assert [op.name for op in handler.ops[:2]] == ["on_stack", "on_stack"]


def test_resume_empty_handler_has_no_on_stack():
    text = """module {
  func.func @task() {
    dcont.suspend()
    func.return
  }
  func.func @main() {
    %k = dcont.new @task : !dcont.cont<()->()>
    dcont.resume %k {
    ^bb0(%next: !dcont.cont<()->()>):
    }
    func.return
  }
}"""
    m = run_passes(parse_module(text), ["arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm",
                                        "scf-to-ssawasm", "dcont-to-ssawasm"])
    bb = next(op for op in m.function("main").walk() if op.opname == "ssawasm.block_block")
    handler = bb.regions[0].block("inner_block_label")
    ons = [op for op in handler.ops if op.name == "on_stack"]
    # only the continuation itself, which nobody reads
    assert len(ons) <= 1
    assert all(op.result.type.kind == "contref" for op in ons)
