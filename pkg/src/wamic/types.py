"""Type descriptors shared by every IR level.

A :class:`TypeDesc` is an immutable tagged value.  Scalars are interned as
module constants (``I32`` ... ``INDEX``); composite kinds are built with
:func:`memref`, :func:`local`, :func:`contref` and friends.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

SCALAR_KINDS = ("i32", "i64", "f32", "f64", "index")

_WIDTH = {"i32": 4, "i64": 8, "f32": 4, "f64": 8, "index": 4}


@dataclass(frozen=True)
class TypeDesc:
    kind: str
    shape: tuple[int, ...] = ()
    elem: TypeDesc | None = None
    # ContRef: either a named Wasm cont type or an inline (payload, resume) signature.
    name: str = ""
    sig: tuple[tuple[TypeDesc, ...], tuple[TypeDesc, ...]] | None = None

    def __post_init__(self) -> None:
        if self.kind == "memref":
            if not self.shape or any(d < 1 for d in self.shape):
                raise ValueError(f"memref extents must be static and >= 1: {self.shape}")
            if self.elem is None or not self.elem.is_scalar:
                raise ValueError("memref element must be a scalar type")
        elif self.kind == "local":
            # Continuation slots are stored in locals too (dcont.alloc).
            if self.elem is None or self.elem.kind not in SCALAR_KINDS + ("contref", "funcref"):
                raise ValueError(f"local<> cannot wrap {self.elem}")
        elif self.kind not in SCALAR_KINDS + ("contref", "funcref"):
            raise ValueError(f"unknown type kind {self.kind!r}")

    @property
    def is_scalar(self) -> bool:
        return self.kind in SCALAR_KINDS

    @property
    def is_int(self) -> bool:
        return self.kind in ("i32", "i64", "index")

    @property
    def is_float(self) -> bool:
        return self.kind in ("f32", "f64")

    @property
    def width(self) -> int:
        """Byte width of a scalar."""
        return _WIDTH[self.kind]

    @property
    def num_elements(self) -> int:
        return prod(self.shape)

    @property
    def byte_size(self) -> int:
        assert self.kind == "memref" and self.elem is not None
        return self.num_elements * self.elem.width

    def __str__(self) -> str:
        return format_type(self)

    __repr__ = __str__


@dataclass(frozen=True)
class FuncType:
    params: tuple[TypeDesc, ...] = ()
    results: tuple[TypeDesc, ...] = ()

    def __str__(self) -> str:
        return format_functype(self)

    __repr__ = __str__


I32 = TypeDesc("i32")
I64 = TypeDesc("i64")
F32 = TypeDesc("f32")
F64 = TypeDesc("f64")
INDEX = TypeDesc("index")
FUNCREF = TypeDesc("funcref")

SCALARS = {"i32": I32, "i64": I64, "f32": F32, "f64": F64, "index": INDEX}


def memref(elem: TypeDesc, *shape: int) -> TypeDesc:
    return TypeDesc("memref", tuple(shape), elem)


def local(inner: TypeDesc) -> TypeDesc:
    return TypeDesc("local", elem=inner)


def contref(name: str) -> TypeDesc:
    return TypeDesc("contref", name=name)


def cont_sig(payload: tuple[TypeDesc, ...], resume: tuple[TypeDesc, ...] = ()) -> TypeDesc:
    """High-level continuation type ``!dcont.cont<(payload)->(resume)>``."""
    return TypeDesc("contref", sig=(tuple(payload), tuple(resume)))


def format_type(t: TypeDesc) -> str:
    if t.is_scalar:
        return t.kind
    if t.kind == "memref":
        return "memref<" + "x".join([str(t.elem)] + [str(d) for d in t.shape]) + ">"
    if t.kind == "local":
        return f"!ssawasm.local<{t.elem}>"
    if t.kind == "funcref":
        return "!ssawasm.func_ref"
    if t.sig is not None:
        payload, resume = t.sig
        return f"!dcont.cont<({', '.join(map(str, payload))})->({', '.join(map(str, resume))})>"
    return f'!ssawasm.cont<"{t.name}">'


def format_types(ts) -> str:
    return "(" + ", ".join(map(str, ts)) + ")"


def format_functype(ft: FuncType) -> str:
    return f"{format_types(ft.params)} -> {format_types(ft.results)}"


def map_type(t: TypeDesc, fn) -> TypeDesc:
    """Apply ``fn`` bottom-up through composite types."""
    if t.kind == "memref":
        t = TypeDesc("memref", t.shape, map_type(t.elem, fn))
    elif t.kind == "local":
        t = TypeDesc("local", elem=map_type(t.elem, fn))
    elif t.kind == "contref" and t.sig is not None:
        p, r = t.sig
        t = TypeDesc("contref", sig=(tuple(map_type(x, fn) for x in p), tuple(map_type(x, fn) for x in r)))
    return fn(t)


def lower_index(t: TypeDesc) -> TypeDesc:
    """Rewrite ``index`` to ``i32`` everywhere (wasm32 addressing)."""
    return map_type(t, lambda x: I32 if x.kind == "index" else x)


def storage_type(t: TypeDesc) -> TypeDesc:
    """The Wasm value type a value of type ``t`` occupies on the stack."""
    if t.kind in ("memref", "index"):
        return I32
    if t.kind == "local":
        return storage_type(t.elem)
    return t
