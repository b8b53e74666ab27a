"""Single-instruction mutation testing of compiled modules.

Each mutant changes exactly one instruction of a compiled module.  A mutant
is caught when the validator rejects it or when its execution diverges from
the IR oracle.
"""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass, field

from .interp.diff import first_divergence
from .interp.hl import eval_hl
from .interp.validate import validate_wasm
from .interp.wasm_exec import exec_wasm
from .ir import IrModule
from .wasm import Instr, WasmModule

_INT_ARITH = ["add", "sub", "mul", "div_s", "div_u", "rem_s", "rem_u", "and", "or", "xor", "shl", "shr_s", "shr_u"]
_INT_CMP = ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"]
_FLOAT_ARITH = ["add", "sub", "mul", "div", "min", "max"]
_FLOAT_CMP = ["eq", "ne", "lt", "gt", "le", "ge"]
_FAMILIES = [(("i32", "i64"), _INT_ARITH), (("i32", "i64"), _INT_CMP),
             (("f32", "f64"), _FLOAT_ARITH), (("f32", "f64"), _FLOAT_CMP)]
_OTHER_TYPE = {"i32": "i64", "i64": "i32", "f32": "f64", "f64": "f32"}

OPERATORS = ("swap-opcode", "swap-type", "const", "local", "label", "delete")


@dataclass
class Mutant:
    module: str
    func: str
    index: int
    operator: str
    before: str
    after: str
    outcome: str = ""
    detail: str = ""

    @property
    def caught(self) -> bool:
        return self.outcome in ("invalid", "mismatch")


@dataclass
class MutationReport:
    mutants: list[Mutant] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.mutants)

    @property
    def caught(self) -> int:
        return sum(m.caught for m in self.mutants)

    @property
    def score(self) -> float:
        return self.caught / self.total if self.total else 1.0

    def survivors(self) -> list[Mutant]:
        return [m for m in self.mutants if not m.caught]

    def by_outcome(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self.mutants:
            out[m.outcome] = out.get(m.outcome, 0) + 1
        return out


def _fmt(ins: Instr | None) -> str:
    if ins is None:
        return "<deleted>"
    return " ".join([ins.op] + [str(a) for a in ins.args])


def _containers(instrs: list[Instr]):
    """(list, index) for every instruction, preorder."""
    for i, ins in enumerate(instrs):
        yield instrs, i
        yield from _containers(ins.body)
        yield from _containers(ins.orelse)


def _labels(instrs: list[Instr]) -> list[str]:
    out = []
    for ins in instrs:
        if ins.op in ("block", "loop"):
            out.append(ins.args[0])
        out += _labels(ins.body) + _labels(ins.orelse)
    return out


def _candidates(ins: Instr, n_locals: int, labels: list[str]) -> list[str]:
    kind, _, name = ins.op.partition(".")
    ops = ["delete"]
    if any(kind in ts and name in names for ts, names in _FAMILIES):
        ops.append("swap-opcode")
    if kind in _OTHER_TYPE and name and not name.startswith(("load", "store")) or name in ("load", "store"):
        ops.append("swap-type")
    if name == "const":
        ops.append("const")
    if ins.op.startswith("local.") and n_locals > 1:
        ops.append("local")
    if ins.op in ("br", "br_if") and len(labels) > 1:
        ops.append("label")
    return ops


def _apply(ins: Instr, operator: str, rng: random.Random, n_locals: int, labels: list[str]) -> Instr | None:
    kind, _, name = ins.op.partition(".")
    new = copy.copy(ins)
    if operator == "delete":
        return None
    if operator == "swap-opcode":
        family = next(names for ts, names in _FAMILIES if kind in ts and name in names)
        new.op = f"{kind}.{rng.choice([n for n in family if n != name])}"
    elif operator == "swap-type":
        new.op = f"{_OTHER_TYPE[kind]}.{name}"
    elif operator == "const":
        v = ins.args[0]
        new.args = ((v + rng.choice([1, -1])) if isinstance(v, int) else (v * 2.0 + 1.0),) + tuple(ins.args[1:])
    elif operator == "local":
        new.args = (rng.choice([i for i in range(n_locals) if i != ins.args[0]]),) + tuple(ins.args[1:])
    elif operator == "label":
        new.args = (rng.choice([lb for lb in labels if lb != ins.args[0]]),)
    return new


def mutate(m: WasmModule, rng: random.Random) -> tuple[WasmModule, tuple[str, int, str, str, str]]:
    """A deep copy of ``m`` with one instruction changed, plus a description."""
    mut = copy.deepcopy(m)
    funcs = [f for f in mut.funcs if f.body]
    while True:
        f = rng.choice(funcs)
        slots = list(_containers(f.body))
        seq, i = rng.choice(slots)
        ins = seq[i]
        n_locals = len(f.params) + len(f.locals)
        labels = _labels(f.body)
        operator = rng.choice(_candidates(ins, n_locals, labels))
        new = _apply(ins, operator, rng, n_locals, labels)
        if new is None:
            del seq[i]
        else:
            seq[i] = new
        index = slots.index((seq, i))
        return mut, (f.name, index, operator, _fmt(ins), _fmt(new))


def run_mutation(programs: list[tuple[str, IrModule, WasmModule]], per_module: int = 20, seed: int = 0,
                 entry: str = "main", fuel_factor: int = 20) -> MutationReport:
    """Mutate every compiled program ``per_module`` times and classify each mutant."""
    rng = random.Random(seed)
    report = MutationReport()
    for name, high, wasm in programs:
        ref = eval_hl(high, entry)
        fuel = max(10_000, fuel_factor * max(ref.steps, 1))
        for _ in range(per_module):
            mut, (fname, idx, op, before, after) = mutate(wasm, rng)
            mt = Mutant(name, fname, idx, op, before, after)
            diags = validate_wasm(mut)
            if diags:
                mt.outcome, mt.detail = "invalid", diags[0].rule
            else:
                try:
                    got = exec_wasm(mut, entry, fuel=fuel)
                except Exception as e:  # validator let through something the engine cannot run
                    mt.outcome, mt.detail = "crash", f"{type(e).__name__}: {e}"
                else:
                    div = first_divergence(ref, got)
                    mt.outcome, mt.detail = ("mismatch", div) if div else ("survived", "")
            report.mutants.append(mt)
    return report
