"""Execution engines: the IR oracle, the Wasm validator and the Wasm reference interpreter."""

from .diff import DiffReport, diff_modules, first_divergence
from .hl import eval_hl
from .validate import validate_wasm
from .values import ExecResult, RuntimeValue, Trap
from .wasm_exec import exec_wasm

__all__ = ["eval_hl", "exec_wasm", "validate_wasm", "diff_modules", "first_divergence", "DiffReport",
           "ExecResult", "RuntimeValue", "Trap"]
