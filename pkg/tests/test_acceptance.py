"""Acceptance criteria 1-10, one test each, with pinned limits.

Every test records a ``criterion N: PASS|FAIL`` line; the lines are printed in
the terminal summary (see conftest.py) and on stdout when run with ``-s``.
"""

import struct
import time

from wamic.interp import diff_modules, eval_hl, exec_wasm, validate_wasm
from wamic.interp.diff import first_divergence
from wamic.lower_ssawasm import layout_data_segments
from wamic.mutation import run_mutation
from wamic.pipeline import (DEFAULT_PIPELINE, LOWERINGS, OPTIMIZATIONS, PASSES, WASM_PASSES, PipelineConfig,
                            check_pipeline, compile_module, run_passes)
from wamic.textual import parse_module, print_module
from wamic.wat import stats

from conftest import ACCEPTANCE, CORPUS_FILES, GOLDEN, load

# time limits in seconds
LIMITS = {1: 1.0, 2: 1.0, 3: 10.0, 4: 30.0, 5: 1.0, 6: 1.0, 7: 1.0, 8: 60.0, 9: 10.0, 10: 5.0}
MIN_MUTATION_SCORE = 0.95
MUTANTS_PER_MODULE = 30
MUTATION_SEED = 0
MIN_CORPUS = 10
# each required program kind and the corpus file that exercises it
REQUIRED_PROGRAMS = {
    "2x2 matmul": "matmul2", "4x4 matmul": "matmul4", "dot product": "dot", "prefix sum": "prefix_sum",
    "gcd via scf.while": "gcd", "conditional sum via scf.if": "cond_sum", "f64 accumulation": "f64_accum",
    "global-data checksum": "checksum", "heap alloc/store/load": "heap", "nested loops with shared subexpressions": "nested_cse",
}


class Criterion:
    def __init__(self, n: int, title: str):
        self.n, self.title, self.limit = n, title, LIMITS[n]

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and self.elapsed < self.limit
        line = f"criterion {self.n}: {'PASS' if ok else 'FAIL'}  {self.title}  ({self.elapsed:.2f}s / {self.limit:.0f}s)"
        if exc_type is not None:
            line += f"  [{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}]"
        ACCEPTANCE[self.n] = line
        print(line)
        if exc_type is None:
            assert self.elapsed < self.limit, line
        return False


def i32s(mem, off, n):
    return list(struct.unpack_from(f"<{n}i", mem, off))


def test_criterion_01_structural_golden():
    with Criterion(1, "sum_loop block_loop and WAT skeleton"):
        ssa = run_passes(load("sum_loop"), list(LOWERINGS))
        bl = next(op for op in ssa.walk() if op.opname == "ssawasm.block_loop")
        region = bl.regions[0]
        assert [b.label for b in region.blocks] == ["entry", "loop_label", "body", "ind_var_update", "block_label"]
        assert [op.name for op in region.block("loop_label").ops] == ["local_get", "local_get", "lt_s", "pseudo_cond_br"]
        assert region.block("ind_var_update").ops[-1].name in ("br", "pseudo_br")
        assert [op.name for op in region.block("block_label").ops] == ["exit"]
        entry = [op.name for op in region.block("entry").ops]
        assert entry[-1] == "pseudo_br" and entry.count("local_set") >= 2
        wats = {compile_module(load("sum_loop")).wat for _ in range(3)}
        assert len(wats) == 1
        wat = wats.pop()
        assert wat == (GOLDEN / "sum_loop.wat").read_text()
        lines = [ln.strip() for ln in wat.splitlines()]
        blk, loop = lines.index("block $blk0"), lines.index("loop $loop0")
        assert blk < loop < lines.index("br_if $blk0") < lines.index("br $loop0")


def test_criterion_02_data_layout():
    with Criterion(2, "two memref<i32x4> globals at 1024 and 1040"):
        m = parse_module("""module {
  memref.global @a : memref<i32x4> = dense<[1, 2, 3, 4]>
  memref.global @b : memref<i32x4> = dense<[5, 6, 7, 8]>
}""")
        layout = layout_data_segments(m)
        assert (layout.offset_of("a"), layout.offset_of("b")) == (1024, 1040)
        w = compile_module(m).wasm
        assert [d.offset for d in w.data] == [1024, 1040]


def test_criterion_03_differential_corpus():
    with Criterion(3, f"differential execution over {len(CORPUS_FILES)} programs"):
        stems = {p.stem for p in CORPUS_FILES}
        assert len(CORPUS_FILES) >= MIN_CORPUS
        assert set(REQUIRED_PROGRAMS.values()) <= stems
        for p in CORPUS_FILES:
            m = parse_module(p.read_text(), str(p))
            w = compile_module(parse_module(p.read_text(), str(p))).wasm
            rep = diff_modules(m, w)
            assert rep.ok, (p.stem, rep.divergence)
            assert rep.oracle.trap == rep.compiled.trap
            assert rep.oracle.memory == rep.compiled.memory


def _outcome(m, passes):
    w = compile_module(m, PipelineConfig(passes=list(passes))).wasm
    return exec_wasm(w)


def _pipeline_variants():
    """Valid pipelines with one optimization inserted at, or removed from, each position."""
    base = list(DEFAULT_PIPELINE)
    out = []
    for opt in OPTIMIZATIONS + ("fuse-stack-locals",):
        without = [p for p in base if p != opt]
        out.append(without)
        for k in range(len(without) + 1):
            cand = without[:k] + [opt] + without[k:]
            try:
                check_pipeline(cand)
            except Exception:
                continue
            out.append(cand)
    unique = []
    for v in out:
        if v not in unique:
            unique.append(v)
    return unique


def test_criterion_04_pass_local_preservation():
    with Criterion(4, "passes inserted/removed/composed preserve oracle results"):
        variants = _pipeline_variants()
        assert len(variants) > 3
        for p in CORPUS_FILES:
            text = p.read_text()
            ref = eval_hl(parse_module(text))
            for v in variants:
                got = _outcome(parse_module(text), v)
                assert first_divergence(ref, got) is None, (p.stem, v)
            # lowerings applied one at a time compose to the full pipeline
            whole = run_passes(parse_module(text), list(DEFAULT_PIPELINE[:-1]))
            staged = parse_module(text)
            done = []
            for step in DEFAULT_PIPELINE[:-1]:
                done.append(step)
                check_pipeline(done)
                staged = PASSES[step](staged, PipelineConfig())
                if step not in WASM_PASSES:
                    assert first_divergence(ref, eval_hl(staged)) is None, (p.stem, step)
            assert print_module(staged) == print_module(whole)


def test_criterion_05_generator():
    with Criterion(5, "generator yields 0,1,4,...,81 (sum 285) in both engines"):
        m = load("generator")
        expected = [i * i for i in range(10)]
        for r in (eval_hl(m), exec_wasm(compile_module(load("generator")).wasm)):
            payloads = [int(d.split()[-1]) for _, d in r.events("suspend")]
            assert payloads == expected and sum(payloads) == 285 == r.results[0].value
            assert len(r.events("resume")) == 10
            assert r.trap is None


def test_criterion_06_scheduler():
    with Criterion(6, "scheduler doubles [1..8] with T1,T2 alternation"):
        for r in (eval_hl(load("scheduler")), exec_wasm(compile_module(load("scheduler")).wasm)):
            assert i32s(r.memory, 1024, 8) == [2, 4, 6, 8, 10, 12, 14, 16]
            ids = [int(d.split()[-1]) for _, d in r.events("suspend")]
            assert ids == [1, 2] * 4


def test_criterion_07_one_shot():
    with Criterion(7, "consumed continuation and unhandled suspend trap in both engines"):
        for name, trap in (("consumed", "ConsumedContinuation"), ("unhandled", "UnhandledSuspend")):
            assert eval_hl(load(name)).trap == trap
            w = compile_module(load(name)).wasm
            assert validate_wasm(w) == []
            assert exec_wasm(w).trap == trap


def test_criterion_08_validation_and_mutation():
    with Criterion(8, f"corpus validates; mutation score >= {MIN_MUTATION_SCORE:.0%}") as c:
        programs = []
        for p in CORPUS_FILES:
            w = compile_module(parse_module(p.read_text())).wasm
            assert validate_wasm(w) == [], p.stem
            programs.append((p.stem, parse_module(p.read_text()), w))
        report = run_mutation(programs, per_module=MUTANTS_PER_MODULE, seed=MUTATION_SEED)
        c.title += f" (got {report.caught}/{report.total} = {report.score:.1%})"
        assert report.by_outcome().get("crash", 0) == 0
        assert report.score >= MIN_MUTATION_SCORE


def _has_single_use_value(m):
    table = {}
    for f in m.functions:
        for op in f.walk():
            if op.opname in ("ssawasm.local_set", "ssawasm.local_get") and op.operands[0] not in f.entry.args:
                sets, gets = table.setdefault(op.operands[0], [0, 0])
                table[op.operands[0]] = [sets + (op.name == "local_set"), gets + (op.name == "local_get")]
    return any(v == [1, 1] for v in table.values())


def test_criterion_09_stackification_quality():
    with Criterion(9, "fuse-stack-locals shrinks spill-all and keeps results"):
        spill_all = [p for p in DEFAULT_PIPELINE if p != "fuse-stack-locals"]
        before_fuse = list(DEFAULT_PIPELINE[:DEFAULT_PIPELINE.index("fuse-stack-locals")])
        for p in CORPUS_FILES:
            text = p.read_text()
            fused = compile_module(parse_module(text)).wasm
            unfused = compile_module(parse_module(text), PipelineConfig(passes=spill_all)).wasm
            a, b = exec_wasm(fused), exec_wasm(unfused)
            assert first_divergence(b, a) is None and a.memory == b.memory, p.stem
            if _has_single_use_value(run_passes(parse_module(text), before_fuse)):
                assert stats(fused).instructions < stats(unfused).instructions, p.stem
            else:
                assert stats(fused).instructions <= stats(unfused).instructions, p.stem


def test_criterion_10_round_trip():
    with Criterion(10, "print/parse fixed point at all three IR levels"):
        for p in CORPUS_FILES:
            m = parse_module(p.read_text())
            texts = {"high": print_module(m)}
            for emit in ("ssawasm", "wasm"):
                texts[emit] = compile_module(parse_module(p.read_text()), PipelineConfig(emit=emit)).text(emit)
            for level, text in texts.items():
                once = print_module(parse_module(text))
                assert print_module(parse_module(once)) == once == text, (p.stem, level)
