from pathlib import Path

import pytest

from wamic.pipeline import PipelineConfig, compile_module
from wamic.textual import parse_module

HERE = Path(__file__).parent
CORPUS = HERE / "corpus"
WASM_CORPUS = HERE / "wasm_corpus"
GOLDEN = HERE / "golden"

CORPUS_FILES = sorted(CORPUS.glob("*.mir"))
# programs that are expected to trap in both engines
TRAPPING = {"divzero", "consumed", "unhandled"}
# criterion number -> PASS/FAIL line, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}
# programs using stack switching
DCONT = {"generator", "scheduler", "consumed", "unhandled"}


def load(name: str):
    path = CORPUS / f"{name}.mir"
    return parse_module(path.read_text(), str(path))


def compile_wasm(m, **kw):
    cfg = PipelineConfig(**kw)
    return compile_module(m, cfg)


@pytest.fixture(params=[p.stem for p in CORPUS_FILES])
def corpus_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
