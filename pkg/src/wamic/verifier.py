"""Structural and type verifier for :class:`~wamic.ir.IrModule`.

``verify_module`` never raises; it returns diagnostics, each tagged with a rule id.
"""

from __future__ import annotations

from .ir import Block, Diagnostic, Function, IrModule, Operation, Region, Value
from .registry import UnknownOp, lookup_signature, match_types
from .types import FuncType

STRUCTURAL_LABELS = {
    "ssawasm.block_loop": ("entry", "loop_label", "block_label"),
    "ssawasm.block_block": ("entry", "inner_block_label", "outer_block_label"),
}


def _diag(rule: str, msg: str, op: Operation | None = None, fn: Function | None = None) -> Diagnostic:
    span = op.span if op is not None else (fn.span if fn is not None else None)
    return Diagnostic(rule, msg, span, op.opname if op is not None else "")


def check_signature(op: Operation) -> list[Diagnostic]:
    """Registry-level checks: known op, arity/type patterns, attributes, regions."""
    try:
        sig = lookup_signature(op.dialect, op.name)
    except UnknownOp as e:
        return [_diag("UnknownOp", str(e.diagnostics[0].message), op)]
    out = []
    env: dict = {}
    err = match_types(sig.operands, [v.type for v in op.operands], env)
    if err:
        out.append(_diag("OperandTypeMismatch", f"operands {err}", op))
    err = match_types(sig.results, [v.type for v in op.results], env)
    if err:
        out.append(_diag("ResultTypeMismatch", f"results {err}", op))
    for a in sig.attrs:
        if a not in op.attrs:
            out.append(_diag("MissingAttribute", f"missing attribute '{a}'", op))
    if len(op.regions) != sig.regions:
        out.append(_diag("RegionCount", f"expected {sig.regions} regions, got {len(op.regions)}", op))
    if len(op.successors) != sig.successors:
        out.append(_diag("SuccessorCount", f"expected {sig.successors} successors, got {len(op.successors)}", op))
    return out


class _Verifier:
    def __init__(self, m: IrModule):
        self.m = m
        self.diags: list[Diagnostic] = []
        self.callables: dict[str, tuple[str, FuncType]] = {}

    def run(self) -> list[Diagnostic]:
        self._symbols()
        for op in self.m.globals:
            self.diags.extend(check_signature(op))
        for f in self.m.functions:
            self._function(f)
        return self.diags

    def _symbols(self) -> None:
        seen: set[str] = set()
        for f in self.m.functions:
            if f.name in seen:
                self.diags.append(_diag("DuplicateSymbol", f"function @{f.name} defined twice", fn=f))
            seen.add(f.name)
            self.callables[f.name] = (f.kind, f.functype)
        for op in self.m.globals:
            sym = op.attrs.get("sym_name")
            if sym is None:
                continue
            if sym in seen:
                self.diags.append(_diag("DuplicateSymbol", f"symbol @{sym} defined twice", op))
            seen.add(sym)
            if op.name in ("func_import", "import") and isinstance(op.attrs.get("type"), FuncType):
                self.callables[sym] = ("import", op.attrs["type"])

    def _function(self, f: Function) -> None:
        if f.body is None:
            return
        if f.kind != "wasm":
            arg_types = [a.type for a in f.entry.args]
            if arg_types != list(f.param_types):
                self.diags.append(_diag("SignatureMismatch", f"@{f.name} entry args do not match params", fn=f))
        if f.kind == "ssawasm":
            for t in f.param_types:
                if t.kind != "local":
                    self.diags.append(_diag("FuncParamNotLocal", f"@{f.name} parameter of type {t} must be local<_>", fn=f))
        self._region(f.body, set(f.entry.args) if f.kind != "wasm" else set(), f)

    def _region(self, region: Region, outer: set[Value], f: Function) -> None:
        labels = [b.label for b in region.blocks]
        if len(set(labels)) != len(labels):
            self.diags.append(Diagnostic("DuplicateLabel", f"duplicate block labels {labels}", None))
        dom = _dominators(region)
        defs_by_block = {b.label: [r for op in b.ops for r in op.results] for b in region.blocks}
        for b in region.blocks:
            visible = set(outer)
            for other in dom.get(b.label, ()):
                if other != b.label:
                    visible.update(defs_by_block.get(other, ()))
                    ob = region.block(other)
                    if ob is not None:
                        visible.update(ob.args)
            visible.update(b.args)
            self._block(b, visible, f)

    def _block(self, b: Block, visible: set[Value], f: Function) -> None:
        for i, op in enumerate(b.ops):
            self.diags.extend(check_signature(op))
            for v in op.operands:
                if v not in visible:
                    self.diags.append(_diag("UseNotDominated", f"operand {v} is not dominated by its definition", op))
            try:
                sig = lookup_signature(op.dialect, op.name)
            except UnknownOp:
                sig = None
            if sig is not None and (sig.terminator or op.successors) and i != len(b.ops) - 1:
                self.diags.append(_diag("TerminatorNotLast", "terminator must end its block", op))
            self._op_rules(op, b, f)
            for r in op.regions:
                self._region(r, visible, f)
            visible.update(op.results)

    def _op_rules(self, op: Operation, b: Block, f: Function) -> None:
        name = op.opname
        if name in STRUCTURAL_LABELS:
            self._structured(op, STRUCTURAL_LABELS[name])
        elif name == "ssawasm.if":
            for r in op.regions:
                self._terminated(r, op)
        if op.successors:
            region = b.parent
            for s in op.successors:
                if region is None or region.block(s) is None:
                    self.diags.append(_diag("BranchTargetOutsideRegion", f"successor ^{s} is not a block of the enclosing region", op))
            nxt = _next_label(b)
            if name == "ssawasm.pseudo_br" and op.successors[0] != nxt:
                self.diags.append(_diag("PseudoBrNotFallthrough", f"pseudo_br to ^{op.successors[0]} but next block is ^{nxt}", op))
            if name == "ssawasm.resume" and op.successors[1] != nxt:
                self.diags.append(_diag("PseudoBrNotFallthrough", f"resume fallback ^{op.successors[1]} is not the next block", op))
        if name in ("ssawasm.call", "func.call"):
            self._call(op)
        if name in ("func.return", "ssawasm.return") and f.kind != "wasm":
            types = [v.type for v in op.operands]
            if types != list(f.result_types):
                self.diags.append(_diag("ReturnTypeMismatch", f"returns {types}, function declares {f.result_types}", op))

    def _call(self, op: Operation) -> None:
        callee = op.attrs.get("callee")
        name = getattr(callee, "name", callee)
        target = self.callables.get(name)
        if target is None:
            self.diags.append(_diag("UnknownSymbol", f"call to undefined @{name}", op))
            return
        kind, ft = target
        args = [v.type for v in op.operands]
        if kind == "ssawasm" and op.dialect == "ssawasm":
            if any(t.kind == "local" for t in args) and any(p.kind == "local" for p in ft.params):
                self.diags.append(_diag("CallArgumentNotInnerType", "call arguments must use the inner types of local<_> params", op))
                return
            expected = [p.elem if p.kind == "local" else p for p in ft.params]
        else:
            expected = list(ft.params)
        if args != expected:
            self.diags.append(_diag("CallArgumentMismatch", f"arguments {args} do not match {expected}", op))
        results = [v.type for v in op.results]
        ok = len(results) == len(ft.results) and all(
            r == e or (r.kind == "memref" and e.kind == "i32") for r, e in zip(results, ft.results)
        )
        if not ok:
            self.diags.append(_diag("CallResultMismatch", f"results {results} do not match {list(ft.results)}", op))

    def _structured(self, op: Operation, required: tuple[str, ...]) -> None:
        region = op.regions[0] if op.regions else None
        labels = [b.label for b in region.blocks] if region else []
        for lab in required:
            if lab not in labels:
                self.diags.append(_diag("MissingStructuralBlock", f"missing ^{lab} block", op))
        if all(lab in labels for lab in required):
            if labels[0] != required[0] or labels[-1] != required[-1] or not (
                labels.index(required[0]) < labels.index(required[1]) < labels.index(required[2])
            ):
                self.diags.append(_diag("StructuralBlockOrder", f"blocks must be ordered {required}", op))
        if region is not None:
            self._terminated(region, op)

    def _terminated(self, region: Region, op: Operation) -> None:
        for i, b in enumerate(region.blocks):
            last = i == len(region.blocks) - 1
            t = b.terminator
            if t is None and last:
                continue
            try:
                is_term = t is not None and lookup_signature(t.dialect, t.name).terminator
            except UnknownOp:
                is_term = True
            if not is_term:
                self.diags.append(_diag("MissingTerminator", f"block ^{b.label} does not end in a terminator", op))


def _next_label(b: Block) -> str | None:
    region = b.parent
    if region is None:
        return None
    i = region.blocks.index(b)
    return region.blocks[i + 1].label if i + 1 < len(region.blocks) else None


def _dominators(region: Region) -> dict[str, set[str]]:
    """Iterative dominator sets over the region's block CFG."""
    if len(region.blocks) <= 1:
        return {b.label: {b.label} for b in region.blocks}
    labels = [b.label for b in region.blocks]
    preds: dict[str, set[str]] = {lab: set() for lab in labels}
    for b in region.blocks:
        t = b.terminator
        if t is not None:
            for s in t.successors:
                if s in preds:
                    preds[s].add(b.label)
    entry = labels[0]
    dom = {lab: set(labels) for lab in labels}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for lab in labels[1:]:
            ps = [dom[p] for p in preds[lab]]
            new = set.intersection(*ps) if ps else set()
            new = new | {lab}
            if new != dom[lab]:
                dom[lab] = new
                changed = True
    return dom


def verify_module(m: IrModule) -> list[Diagnostic]:
    return _Verifier(m).run()
