import pytest

from wamic.ir import IrModule
from wamic.pipeline import PipelineConfig, compile_module
from wamic.textual import ParseError, parse_module, print_module
from wamic.types import local, I32

from conftest import CORPUS_FILES, WASM_CORPUS

LOCAL_THREADING = """module {
  ssawasm.func @main() {
    %0 = ssawasm.local_decl : !ssawasm.local<i32>
    %1 = ssawasm.const 1 : i32
    ssawasm.local_set %0, %1
    %2 = ssawasm.local_get %0 : i32
    ssawasm.return
  }
}
"""


def test_parse_minimal_function():
    m = parse_module("func.func @main() { func.return }")
    assert [f.name for f in m.functions] == ["main"]


def test_parse_local_threading():
    m = parse_module(LOCAL_THREADING)
    ops = [op for op in m.functions[0].walk() if op.name.startswith("local_")]
    assert [op.name for op in ops] == ["local_decl", "local_set", "local_get"]
    decl = ops[0].result
    assert decl.type == local(I32)
    assert ops[1].operands[0] is decl and ops[2].operands[0] is decl
    assert ops[2].result.type == I32


def test_parse_self_reference_rejected():
    with pytest.raises(ParseError) as e:
        parse_module("func.func @f(%1: i32) { %0 = arith.addi %0, %1 : i32\n func.return }")
    d = e.value.diagnostics[0]
    assert d.span.line == 1 and d.span.column > 1


def test_syntax_error_has_position():
    with pytest.raises(ParseError) as e:
        parse_module("module {\n  func.func @main( {\n}\n")
    assert e.value.diagnostics[0].span.line == 2


def test_duplicate_symbol():
    with pytest.raises(ParseError) as e:
        parse_module("func.func @f() { func.return }\nfunc.func @f() { func.return }")
    assert e.value.diagnostics[0].rule == "DuplicateSymbol"


def test_print_empty_module():
    assert print_module(IrModule()) == "module {\n}\n"


def test_print_renumbers_values():
    text = print_module(parse_module(LOCAL_THREADING.replace("%0", "%x").replace("%1", "%y")))
    assert text == LOCAL_THREADING


def test_data_segment_bytes_exact():
    m = parse_module((CORPUS_FILES[0].parent / "checksum.mir").read_text())
    out = compile_module(m, PipelineConfig(emit="ssawasm")).text("ssawasm")
    line = next(ln for ln in out.splitlines() if "ssawasm.data" in ln)
    assert "offset: 1024" in line
    assert '"0x48000000650000006C0000006C0000006F000000' in line
    again = print_module(parse_module(out))
    assert again == out


def test_float_literals_lossless():
    text = """module {
  func.func @main() -> f64 {
    %0 = arith.constant 0.1 : f64
    %1 = arith.constant 3.4028234663852886e+38 : f32
    %2 = arith.constant -0.0 : f64
    %3 = arith.constant 1e-310 : f64
    func.return %0
  }
}"""
    once = print_module(parse_module(text))
    assert print_module(parse_module(once)) == once
    ops = parse_module(once).functions[0].entry.ops
    from wamic.ir import FloatAttr
    vals = [op.attrs["value"] for op in ops[:4]]
    bits = [v.bits if isinstance(v, FloatAttr) else v for v in vals]
    assert bits[0] == 0x3FB999999999999A
    assert bits[2] == 0x8000000000000000


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_round_trip_all_levels(path):
    m = parse_module(path.read_text())
    texts = [print_module(m)]
    for emit in ("ssawasm", "wasm"):
        texts.append(compile_module(m, PipelineConfig(emit=emit)).text(emit))
    for t in texts:
        once = print_module(parse_module(t))
        assert print_module(parse_module(once)) == once
        assert once == t


def test_round_trip_wasm_corpus():
    for p in WASM_CORPUS.glob("*.mir"):
        once = print_module(parse_module(p.read_text()))
        assert print_module(parse_module(once)) == once
