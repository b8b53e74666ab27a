import json
import shutil
import subprocess
import sys

import pytest

from wamic import cli

from conftest import CORPUS, CORPUS_FILES, GOLDEN


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_compile_golden(tmp_path, capsys):
    src = tmp_path / "sum_loop.mir"
    shutil.copy(CORPUS / "sum_loop.mir", src)
    code, out, _ = run(capsys, "compile", src, "--emit=wat")
    assert code == 0
    assert (tmp_path / "sum_loop.wat").read_text() == (GOLDEN / "sum_loop.wat").read_text()


def test_compile_ssawasm_no_opt(tmp_path, capsys):
    out_file = tmp_path / "x.mir"
    code, _, _ = run(capsys, "compile", CORPUS / "dot.mir", "--emit=ssawasm", "--no-opt", "-o", out_file)
    assert code == 0
    text = out_file.read_text()
    assert "ssawasm.func @main" in text and "arith." not in text


def test_compile_malformed(tmp_path, capsys):
    bad = tmp_path / "bad.mir"
    bad.write_text("module {\n  func.func @main( {\n}\n")
    code, _, err = run(capsys, "compile", bad)
    assert code == 1
    assert f"{bad}:2:" in err


def test_compile_invalid_pipeline(capsys):
    code, _, err = run(capsys, "compile", CORPUS / "gcd.mir", "--pipeline", "dcont-to-ssawasm,scf-to-ssawasm")
    assert code == 1 and "InvalidPipeline" in err


def test_run_gcd(capsys):
    code, out, _ = run(capsys, "run", CORPUS / "gcd.mir")
    assert code == 0 and out.splitlines()[0] == "6"


def test_run_divzero(capsys):
    code, out, _ = run(capsys, "run", CORPUS / "divzero.mir")
    assert code == 2 and "IntegerDivideByZero" in out


def test_run_generator_trace(capsys):
    code, out, _ = run(capsys, "run", CORPUS / "generator.mir", "--trace")
    assert code == 0
    assert sum(1 for ln in out.splitlines() if ln.startswith("suspend\t")) == 10


def test_run_trace_file(tmp_path, capsys):
    tf = tmp_path / "t.tsv"
    code, out, _ = run(capsys, "run", CORPUS / "generator.mir", "--trace", "--trace-file", tf, "--json")
    rep = json.loads(out)
    assert code == 0 and rep["trace_path"] == str(tf)
    assert tf.read_text().count("suspend\t") == 10


def test_run_report_renderings_agree(capsys):
    _, human, _ = run(capsys, "run", CORPUS / "mixed.mir")
    _, js, _ = run(capsys, "run", CORPUS / "mixed.mir", "--json")
    rep = json.loads(js)
    assert set(rep) == {"results", "trap", "trap_detail", "trace_path", "wall_ms", "stats"}
    lines = human.splitlines()
    assert lines[:len(rep["results"])] == rep["results"]
    for k, v in rep["stats"].items():
        assert f"{k}: {v}" in lines


@pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.stem)
def test_diff_exec_corpus(path, capsys):
    code, out, _ = run(capsys, "diff-exec", path)
    assert code == 0 and out.startswith("match")


def test_diff_exec_scheduler_traces(capsys):
    code, out, _ = run(capsys, "diff-exec", CORPUS / "scheduler.mir", "--trace")
    assert code == 0
    oracle, wasm = out.split("# wasm\n")
    pick = lambda t: [ln for ln in t.splitlines() if ln.startswith(("suspend", "resume"))]
    assert pick(oracle) == pick(wasm)


def test_diff_exec_detects_flipped_comparison(monkeypatch, capsys):
    from wamic import lower_ssawasm

    real = lower_ssawasm.convert_scf

    def broken(m):
        m = real(m)
        for f in m.functions:
            for op in f.walk():
                if op.opname == "ssawasm.lt_s":
                    op.name = "le_s"
        return m

    monkeypatch.setitem(__import__("wamic.pipeline", fromlist=["PASSES"]).PASSES,
                        "scf-to-ssawasm", lambda m, c: broken(m))
    code, out, _ = run(capsys, "diff-exec", CORPUS / "prefix_sum.mir")
    assert code == 3 and out.startswith("mismatch")


def test_stats_compare_unfused(capsys):
    code, out, _ = run(capsys, "stats", CORPUS / "matmul4.mir", "--compare-unfused", "--json")
    d = json.loads(out)
    assert code == 0 and d["fused"]["instructions"] < d["unfused"]["instructions"]


def test_stats_empty(tmp_path, capsys):
    f = tmp_path / "e.mir"
    f.write_text("module {\n}\n")
    code, out, _ = run(capsys, "stats", f, "--json")
    d = json.loads(out)
    assert code == 0 and d["instructions"] == d["locals"] == d["labels"] == d["data_bytes"] == 0


def test_stats_json_matches_text(capsys):
    _, text, _ = run(capsys, "stats", CORPUS / "dot.mir")
    _, js, _ = run(capsys, "stats", CORPUS / "dot.mir", "--json")
    d = json.loads(js)
    total = next(ln for ln in text.splitlines() if ln.startswith("total")).split()
    assert [int(x) for x in total[1:]] == [d["instructions"], d["locals"], d["labels"]]


def test_deterministic_output(capsys):
    outs = {run(capsys, "compile", CORPUS / "scheduler.mir", "--stdout")[1] for _ in range(2)}
    assert len(outs) == 1


def test_usage_error_is_diagnostic(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 1


def test_missing_file(capsys):
    code, _, err = run(capsys, "run", "/nonexistent.mir")
    assert code == 1 and err


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "wamic.cli", "run", str(CORPUS / "gcd.mir")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("6")
