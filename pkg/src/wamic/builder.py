"""Small insertion-point helper used by the rewrite passes."""

from __future__ import annotations

from .ir import Block, Operation, Value


class Builder:
    """Appends operations to ``block`` at a moving insertion index."""

    def __init__(self, block: Block, index: int | None = None):
        self.block = block
        self.index = len(block.ops) if index is None else index

    @classmethod
    def before(cls, op: Operation) -> Builder:
        return cls(op.parent, op.parent.ops.index(op))

    @classmethod
    def after(cls, op: Operation) -> Builder:
        return cls(op.parent, op.parent.ops.index(op) + 1)

    def op(self, opname: str, operands=(), result_types=(), attrs=None, regions=(), successors=(), span=None) -> Operation:
        new = Operation(opname, operands, result_types, attrs, regions, successors, span)
        self.block.insert(self.index, new)
        self.index += 1
        return new

    def value(self, opname: str, operands, result_type, attrs=None, span=None) -> Value:
        return self.op(opname, operands, [result_type], attrs, span=span).result


def redirect_uses(old: Value, new: Value, skip: Operation | None = None) -> None:
    """Like replace_value_uses but tolerates a type change and can spare one user."""
    users = [u for u in dict.fromkeys(old.uses) if u is not skip]
    for u in users:
        for i, v in enumerate(u.operands):
            if v is old:
                u.set_operand(i, new)
