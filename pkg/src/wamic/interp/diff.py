"""Differential comparison between the IR oracle and the Wasm interpreter."""

from __future__ import annotations

from dataclasses import dataclass

from ..ir import IrModule
from ..wasm import WasmModule
from .hl import eval_hl
from .values import ExecResult, RuntimeValue
from .wasm_exec import exec_wasm

# trace events both engines must agree on, in order
OBSERVED_EVENTS = ("print", "suspend", "resume", "trap")


def first_divergence(a: ExecResult, b: ExecResult) -> str | None:
    """First observation on which two executions differ, or None."""
    if a.trap != b.trap:
        return f"trap: oracle {a.trap or 'none'}, wasm {b.trap or 'none'}"
    if len(a.results) != len(b.results):
        return f"result count: oracle {len(a.results)}, wasm {len(b.results)}"
    for i, (x, y) in enumerate(zip(a.results, b.results)):
        if not x.same(y):
            return f"result {i}: oracle {x}, wasm {y}"
    ea, eb = a.events(*OBSERVED_EVENTS), b.events(*OBSERVED_EVENTS)
    for i, (x, y) in enumerate(zip(ea, eb)):
        if x != y:
            return f"event {i}: oracle {x[0]} {x[1]}, wasm {y[0]} {y[1]}"
    if len(ea) != len(eb):
        return f"event count: oracle {len(ea)}, wasm {len(eb)}"
    if a.memory != b.memory:
        if len(a.memory) != len(b.memory):
            return f"memory size: oracle {len(a.memory)}, wasm {len(b.memory)}"
        off = next(i for i, (x, y) in enumerate(zip(a.memory, b.memory)) if x != y)
        return f"memory byte {off}: oracle {a.memory[off]:#04x}, wasm {b.memory[off]:#04x}"
    return None


@dataclass
class DiffReport:
    oracle: ExecResult
    compiled: ExecResult
    divergence: str | None

    @property
    def ok(self) -> bool:
        return self.divergence is None


def diff_modules(high: IrModule, wasm: WasmModule, entry: str = "main",
                 args: list[RuntimeValue] | None = None, fuel: int | None = None) -> DiffReport:
    kw = {} if fuel is None else {"fuel": fuel}
    a = eval_hl(high, entry, args, **kw)
    b = exec_wasm(wasm, entry, args, **kw)
    return DiffReport(a, b, first_divergence(a, b))
