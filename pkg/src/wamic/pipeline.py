"""Pass registry, pipeline configuration and the compile driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import lower_ssawasm as ls
from . import lower_wasm as lw
from . import opt
from .ir import IRError, IrModule
from .textual import parse_module, print_module
from .verifier import verify_module
from .wasm import WasmModule, build_wasm_module
from .wat import emit_wat

LOWERINGS = ("arith-to-ssawasm", "func-to-ssawasm", "memref-to-ssawasm", "scf-to-ssawasm", "dcont-to-ssawasm")
OPTIMIZATIONS = ("cse", "fold-constants")
WASM_PASSES = ("ssawasm-global-to-wasm", "introduce-locals", "fuse-stack-locals", "ssawasm-to-wasm")
DEFAULT_PIPELINE = LOWERINGS + OPTIMIZATIONS + WASM_PASSES
EMIT_LEVELS = ("ssawasm", "wasm", "wat")


@dataclass
class PipelineConfig:
    passes: list[str] = field(default_factory=lambda: list(DEFAULT_PIPELINE))
    emit: str = "wat"
    no_opt: bool = False
    builtin_alloc: bool = True
    alloca_as_alloc: bool = True
    trace: bool = False
    invoke: str = "main"
    verify_each: bool = True

    def effective_passes(self) -> list[str]:
        ps = [p for p in self.passes if not (self.no_opt and p in OPTIMIZATIONS)]
        if self.emit == "ssawasm":
            ps = [p for p in ps if p not in WASM_PASSES]
        return ps


PASSES: dict[str, Callable[[IrModule, PipelineConfig], IrModule]] = {
    "arith-to-ssawasm": lambda m, c: ls.convert_arith(m),
    "func-to-ssawasm": lambda m, c: ls.convert_func(m),
    "memref-to-ssawasm": lambda m, c: ls.convert_memref(m, builtin_alloc=c.builtin_alloc,
                                                        alloca_as_alloc=c.alloca_as_alloc),
    "scf-to-ssawasm": lambda m, c: ls.convert_scf(m),
    "dcont-to-ssawasm": lambda m, c: ls.convert_dcont(m),
    "cse": lambda m, c: opt.cse(m),
    "fold-constants": lambda m, c: opt.fold_constants(m),
    "ssawasm-global-to-wasm": lambda m, c: lw.convert_globals(m),
    "introduce-locals": lambda m, c: lw.introduce_locals_module(m),
    "fuse-stack-locals": lambda m, c: lw.fuse_module(m),
    "ssawasm-to-wasm": lambda m, c: lw.convert_module_to_wasm(m),
}

# pass -> passes that must run somewhere before it
_REQUIRES = {
    "dcont-to-ssawasm": ("scf-to-ssawasm",),
    "ssawasm-global-to-wasm": LOWERINGS,
    "introduce-locals": LOWERINGS,
    "fuse-stack-locals": ("introduce-locals",),
    "ssawasm-to-wasm": ("introduce-locals", "ssawasm-global-to-wasm"),
}
# pass -> passes that must not have run before it
_FORBIDS = {
    "cse": ("introduce-locals", "ssawasm-to-wasm"),
    "fold-constants": ("introduce-locals", "ssawasm-to-wasm"),
    "introduce-locals": ("ssawasm-to-wasm",),
    "fuse-stack-locals": ("ssawasm-to-wasm",),
}


def check_pipeline(passes: list[str]) -> None:
    """Reject unknown passes, repeated lowerings and orders that break dependencies."""
    seen: list[str] = []
    for p in passes:
        if p not in PASSES:
            raise IRError(f"unknown pass '{p}'", rule="InvalidPipeline")
        if p in seen and p not in OPTIMIZATIONS:
            raise IRError(f"pass '{p}' appears twice", rule="InvalidPipeline")
        for req in _REQUIRES.get(p, ()):
            if req not in seen:
                raise IRError(f"'{p}' must run after '{req}'", rule="InvalidPipeline")
        for bad in _FORBIDS.get(p, ()):
            if bad in seen:
                raise IRError(f"'{p}' cannot run after '{bad}'", rule="InvalidPipeline")
        seen.append(p)


def parse_pipeline(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def clone(m: IrModule) -> IrModule:
    return parse_module(print_module(m))


def run_passes(m: IrModule, passes: list[str], config: PipelineConfig | None = None) -> IrModule:
    """Apply ``passes`` in order (in place), verifying after each when configured."""
    config = config or PipelineConfig()
    check_pipeline(passes)
    for p in passes:
        m = PASSES[p](m, config)
        if config.verify_each:
            diags = verify_module(m)
            if diags:
                raise IRError(diags)
    return m


@dataclass
class CompileResult:
    module: IrModule
    wasm: WasmModule | None = None
    wat: str | None = None

    def text(self, emit: str) -> str:
        if emit == "wat":
            return self.wat
        return print_module(self.module)


def compile_module(m: IrModule, config: PipelineConfig | None = None) -> CompileResult:
    """Lower a parsed module per ``config``; the input module is left untouched."""
    config = config or PipelineConfig()
    if config.emit not in EMIT_LEVELS:
        raise IRError(f"unknown emit level '{config.emit}'", rule="InvalidPipeline")
    diags = verify_module(m)
    if diags:
        raise IRError(diags)
    passes = config.effective_passes()
    check_pipeline(passes)
    work = run_passes(clone(m), passes, config)
    res = CompileResult(work)
    if config.emit in ("wasm", "wat") or work.level == "wasm":
        if work.level != "wasm":
            raise IRError("pipeline does not reach the Wasm dialect", rule="InvalidPipeline")
        res.wasm = build_wasm_module(work)
        res.wat = emit_wat(res.wasm)
    return res


def compile_text(text: str, config: PipelineConfig | None = None, file: str = "<input>") -> CompileResult:
    return compile_module(parse_module(text, file), config)
