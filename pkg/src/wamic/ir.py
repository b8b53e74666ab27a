"""Region-based SSA IR: values, operations, blocks, regions, functions.

The same classes carry every dialect (arith/func/scf/memref/dcont, ssawasm and
wasm).  Use lists are maintained eagerly so rewrites can ask "who uses this
value" without walking the module.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from typing import Iterator

from .types import FuncType, TypeDesc

_ids = itertools.count()


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    span: SourceSpan | None = None
    op: str = ""

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        what = f" [{self.op}]" if self.op else ""
        return f"{where}error: {self.rule}: {self.message}{what}"


class IRError(Exception):
    """Raised by passes on malformed input; carries diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic] | Diagnostic | str, rule: str = "Error"):
        if isinstance(diagnostics, str):
            diagnostics = [Diagnostic(rule, diagnostics)]
        elif isinstance(diagnostics, Diagnostic):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    @property
    def rule(self) -> str:
        return self.diagnostics[0].rule if self.diagnostics else ""


class TypeMismatch(IRError):
    def __init__(self, message: str):
        super().__init__(message, rule="TypeMismatch")


# -- attribute literals -------------------------------------------------------


@dataclass(frozen=True)
class SymbolRef:
    name: str

    def __str__(self) -> str:
        return "@" + self.name


@dataclass(frozen=True)
class FloatAttr:
    """A float stored as its exact IEEE bit pattern."""

    bits: int
    width: int = 64

    @classmethod
    def from_float(cls, x: float, width: int = 64) -> FloatAttr:
        if width == 32:
            return cls(struct.unpack("<I", struct.pack("<f", _to_f32(x)))[0], 32)
        return cls(struct.unpack("<Q", struct.pack("<d", x))[0], 64)

    @property
    def value(self) -> float:
        if self.width == 32:
            return struct.unpack("<f", struct.pack("<I", self.bits))[0]
        return struct.unpack("<d", struct.pack("<Q", self.bits))[0]


def _to_f32(x: float) -> float:
    import ctypes

    return ctypes.c_float(x).value


Attr = int | str | FloatAttr | SymbolRef | TypeDesc | FuncType | bytes | tuple


# -- core objects -------------------------------------------------------------


class Value:
    __slots__ = ("type", "owner", "index", "uses", "id", "name_hint")

    def __init__(self, type: TypeDesc, owner: Operation | Block, index: int):
        self.type = type
        self.owner = owner
        self.index = index
        self.uses: list[Operation] = []
        self.id = next(_ids)
        self.name_hint = ""

    @property
    def is_block_arg(self) -> bool:
        return isinstance(self.owner, Block)

    def __repr__(self) -> str:
        return f"<Value #{self.id}: {self.type}>"


class Operation:
    def __init__(
        self,
        opname: str,
        operands=(),
        result_types=(),
        attrs: dict | None = None,
        regions=(),
        successors=(),
        span: SourceSpan | None = None,
    ):
        self.dialect, _, self.name = opname.partition(".")
        self._operands: list[Value] = []
        for v in operands:
            self._operands.append(v)
            v.uses.append(self)
        self.results = [Value(t, self, i) for i, t in enumerate(result_types)]
        self.attrs: dict = dict(attrs or {})
        self.regions: list[Region] = []
        for r in regions:
            self.add_region(r)
        self.successors: list[str] = list(successors)
        self.parent: Block | None = None
        self.span = span

    @property
    def opname(self) -> str:
        return f"{self.dialect}.{self.name}"

    @property
    def operands(self) -> tuple[Value, ...]:
        return tuple(self._operands)

    @property
    def result(self) -> Value:
        assert len(self.results) == 1, self.opname
        return self.results[0]

    def set_operand(self, i: int, v: Value) -> None:
        old = self._operands[i]
        old.uses.remove(self)
        self._operands[i] = v
        v.uses.append(self)

    def set_operands(self, vs) -> None:
        for v in self._operands:
            v.uses.remove(self)
        self._operands = list(vs)
        for v in self._operands:
            v.uses.append(self)

    def add_region(self, r: Region) -> Region:
        r.parent = self
        self.regions.append(r)
        return r

    def drop_all_uses(self) -> None:
        """Release this op's (and nested ops') operand uses."""
        for op in self.walk():
            for v in op._operands:
                v.uses.remove(op)
            op._operands = []

    def erase(self) -> None:
        assert all(not r.uses for r in self.results), f"erasing {self.opname} with live results"
        self.drop_all_uses()
        if self.parent is not None:
            self.parent.ops.remove(self)
            self.parent = None

    def walk(self) -> Iterator[Operation]:
        """Preorder over this op and everything nested in its regions."""
        yield self
        for r in self.regions:
            yield from r.walk()

    def __repr__(self) -> str:
        return f"<{self.opname}>"


class Block:
    def __init__(self, label: str = "bb0", arg_types=()):
        self.label = label
        self.args = [Value(t, self, i) for i, t in enumerate(arg_types)]
        self.ops: list[Operation] = []
        self.parent: Region | None = None

    def add_arg(self, t: TypeDesc) -> Value:
        v = Value(t, self, len(self.args))
        self.args.append(v)
        return v

    def append(self, op: Operation) -> Operation:
        op.parent = self
        self.ops.append(op)
        return op

    def insert(self, index: int, op: Operation) -> Operation:
        op.parent = self
        self.ops.insert(index, op)
        return op

    def insert_before(self, anchor: Operation, op: Operation) -> Operation:
        return self.insert(self.ops.index(anchor), op)

    def insert_after(self, anchor: Operation, op: Operation) -> Operation:
        return self.insert(self.ops.index(anchor) + 1, op)

    @property
    def terminator(self) -> Operation | None:
        return self.ops[-1] if self.ops else None

    def walk(self) -> Iterator[Operation]:
        for op in list(self.ops):
            yield from op.walk()

    def __repr__(self) -> str:
        return f"<Block ^{self.label}>"


class Region:
    def __init__(self, blocks=()):
        self.blocks: list[Block] = []
        self.parent: Operation | Function | None = None
        for b in blocks:
            self.add_block(b)

    def add_block(self, b: Block) -> Block:
        b.parent = self
        self.blocks.append(b)
        return b

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block | None:
        for b in self.blocks:
            if b.label == label:
                return b
        return None

    def walk(self) -> Iterator[Operation]:
        for b in self.blocks:
            yield from b.walk()


@dataclass
class Function:
    """A function at any level.

    ``kind`` is ``func`` (high level), ``ssawasm`` or ``wasm``.  For the first
    two the parameters are the entry block arguments; ``wasm`` functions have
    no SSA values and list their extra locals explicitly.
    """

    name: str
    kind: str = "func"
    exported: bool = True
    param_types: list[TypeDesc] = field(default_factory=list)
    result_types: list[TypeDesc] = field(default_factory=list)
    body: Region | None = None
    locals: list[TypeDesc] = field(default_factory=list)
    span: SourceSpan | None = None

    def __post_init__(self) -> None:
        if self.body is not None:
            self.body.parent = self

    @property
    def is_declaration(self) -> bool:
        return self.body is None

    @property
    def entry(self) -> Block:
        assert self.body is not None
        return self.body.entry

    @property
    def params(self) -> list[Value]:
        return self.entry.args if self.body is not None and self.kind != "wasm" else []

    def walk(self) -> Iterator[Operation]:
        if self.body is not None:
            yield from self.body.walk()

    @property
    def functype(self) -> FuncType:
        return FuncType(tuple(self.param_types), tuple(self.result_types))


@dataclass
class IrModule:
    functions: list[Function] = field(default_factory=list)
    globals: list[Operation] = field(default_factory=list)
    level: str = "high"
    attrs: dict = field(default_factory=dict)

    def function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def global_op(self, sym: str) -> Operation | None:
        for op in self.globals:
            if op.attrs.get("sym_name") == sym:
                return op
        return None

    def walk(self) -> Iterator[Operation]:
        for op in self.globals:
            yield op
        for f in self.functions:
            yield from f.walk()


# -- rewrite helpers ----------------------------------------------------------


def replace_value_uses(old: Value, new: Value) -> int:
    """Point every use of ``old`` at ``new``; returns the number of rewritten uses."""
    if old.type != new.type:
        raise TypeMismatch(f"cannot replace {old.type} value with {new.type} value")
    if old is new:
        return 0
    count = 0
    for op in list(dict.fromkeys(old.uses)):
        for i, v in enumerate(op._operands):
            if v is old:
                op._operands[i] = new
                new.uses.append(op)
                count += 1
    old.uses.clear()
    return count


def enclosing_function(op: Operation) -> Function | None:
    node = op
    while True:
        block = node.parent
        if block is None or block.parent is None:
            return None
        owner = block.parent.parent
        if isinstance(owner, Function):
            return owner
        if owner is None:
            return None
        node = owner


def clone_region_into(src: Region, mapping: dict[Value, Value]) -> Region:
    """Deep-copy a region; ``mapping`` is extended with old->new values."""
    out = Region()
    for b in src.blocks:
        nb = Block(b.label, [a.type for a in b.args])
        for a, na in zip(b.args, nb.args):
            mapping[a] = na
        out.add_block(nb)
    for b, nb in zip(src.blocks, out.blocks):
        for op in b.ops:
            nb.append(clone_op(op, mapping))
    return out


def clone_op(op: Operation, mapping: dict[Value, Value]) -> Operation:
    new = Operation(
        op.opname,
        [mapping.get(v, v) for v in op.operands],
        [r.type for r in op.results],
        dict(op.attrs),
        [clone_region_into(r, mapping) for r in op.regions],
        list(op.successors),
        op.span,
    )
    for r, nr in zip(op.results, new.results):
        mapping[r] = nr
    return new


def move_ops(ops: list[Operation], dest: Block, index: int | None = None) -> None:
    """Detach ``ops`` from their blocks and place them in ``dest`` (uses kept)."""
    if index is None:
        index = len(dest.ops)
    for op in ops:
        if op.parent is not None:
            op.parent.ops.remove(op)
        dest.insert(index, op)
        index += 1
