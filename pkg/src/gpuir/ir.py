"""Typed, dialect-tagged SSA representation for GPU compute kernels.

The same data model carries all three dialects the toolkit works with:

* ``NVVM``    -- LLVM IR as emitted for ``nvptx64-nvidia-cuda``; kernels are
  named by ``nvvm.annotations`` and thread coordinates come from
  ``llvm.nvvm.read.ptx.sreg.*`` calls.
* ``SPIRV``   -- an in-memory stage where thread coordinates are loads of
  3-lane builtin variables.  It is printable for inspection only.
* ``OpenCL``  -- ``spir_kernel`` functions carrying ``kernel_arg_*`` metadata
  and ``get_local_id``-style builtin calls.

Types, values, instructions and metadata nodes are frozen and compare
structurally.  Blocks, functions and modules are plain mutable containers so
passes can edit a module they own.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Union

NVVM_TRIPLE = "nvptx64-nvidia-cuda"
SPIR_TRIPLE = "spir64-unknown-unknown"


class Dialect(str, enum.Enum):
    NVVM = "NVVM"
    SPIRV = "SPIRV"
    OPENCL = "OpenCL"


class AddressSpace(enum.IntEnum):
    """SPIR address-space numbering."""

    PRIVATE = 0
    GLOBAL = 1
    CONSTANT = 2
    LOCAL = 3


# ============================================================
# TYPES
# ============================================================


@dataclass(frozen=True)
class VoidType:
    def __str__(self) -> str:
        return "void"


@dataclass(frozen=True)
class IntType:
    bits: int

    def __str__(self) -> str:
        return f"i{self.bits}"


@dataclass(frozen=True)
class FloatType:
    bits: int

    def __str__(self) -> str:
        return "float" if self.bits == 32 else "double"


@dataclass(frozen=True)
class PointerType:
    pointee: "TypeRef"
    addr_space: AddressSpace = AddressSpace.PRIVATE

    def __str__(self) -> str:
        if self.addr_space == AddressSpace.PRIVATE:
            return f"{self.pointee}*"
        return f"{self.pointee} addrspace({int(self.addr_space)})*"


@dataclass(frozen=True)
class VectorType:
    elem: "TypeRef"
    lanes: int

    def __str__(self) -> str:
        return f"<{self.lanes} x {self.elem}>"


@dataclass(frozen=True)
class ArrayType:
    """Fixed-size array; only used for global variables (e.g. shared memory)."""

    elem: "TypeRef"
    count: int

    def __str__(self) -> str:
        return f"[{self.count} x {self.elem}]"


@dataclass(frozen=True)
class FunctionType:
    ret: "TypeRef"
    params: tuple["TypeRef", ...] = ()

    def __str__(self) -> str:
        return f"{self.ret} ({', '.join(str(p) for p in self.params)})"


TypeRef = Union[VoidType, IntType, FloatType, PointerType, VectorType, ArrayType, FunctionType]

VOID = VoidType()
I1 = IntType(1)
I8 = IntType(8)
I16 = IntType(16)
I32 = IntType(32)
I64 = IntType(64)
F32 = FloatType(32)
F64 = FloatType(64)

INT_WIDTHS = frozenset({1, 8, 16, 32, 64})
FLOAT_WIDTHS = frozenset({32, 64})
VECTOR_LANES = frozenset({2, 3, 4})


def is_int(t: TypeRef) -> bool:
    return isinstance(t, IntType)


def is_float(t: TypeRef) -> bool:
    return isinstance(t, FloatType)


def scalar_of(t: TypeRef) -> TypeRef:
    """Element type for vectors, the type itself otherwise."""
    return t.elem if isinstance(t, VectorType) else t


def is_first_class(t: TypeRef) -> bool:
    """Types a register can hold."""
    return isinstance(t, (IntType, FloatType, PointerType, VectorType))


def store_size(t: TypeRef) -> int:
    """Bytes written by a store of ``t``."""
    if isinstance(t, IntType):
        return max(1, (t.bits + 7) // 8)
    if isinstance(t, FloatType):
        return t.bits // 8
    if isinstance(t, PointerType):
        return 8
    if isinstance(t, VectorType):
        return store_size(t.elem) * t.lanes
    if isinstance(t, ArrayType):
        return alloc_size(t.elem) * t.count
    raise TypeError(f"type {t} has no size")


def alloc_size(t: TypeRef) -> int:
    """Stride between consecutive ``t`` objects in memory.

    Vectors are padded to the next power of two bytes, as in the default
    LLVM data layout.
    """
    size = store_size(t)
    if isinstance(t, VectorType):
        p = 1
        while p < size:
            p *= 2
        return p
    return size


def validate_type(t: TypeRef) -> str | None:
    """Return a reason if ``t`` is outside the supported type universe."""
    if isinstance(t, IntType):
        return None if t.bits in INT_WIDTHS else f"unsupported integer width i{t.bits}"
    if isinstance(t, FloatType):
        return None if t.bits in FLOAT_WIDTHS else f"unsupported float width {t.bits}"
    if isinstance(t, VectorType):
        if t.lanes not in VECTOR_LANES:
            return f"vector lanes must be 2, 3 or 4, got {t.lanes}"
        if not isinstance(t.elem, (IntType, FloatType)):
            return "vector elements must be integer or float"
        return validate_type(t.elem)
    if isinstance(t, ArrayType):
        if t.count <= 0:
            return "array length must be positive"
        return validate_type(t.elem)
    if isinstance(t, PointerType):
        if isinstance(t.pointee, VoidType):
            return "pointer to void"
        if t.addr_space not in tuple(AddressSpace):
            return f"unknown address space {t.addr_space}"
        return validate_type(t.pointee)
    if isinstance(t, FunctionType):
        for p in (t.ret, *t.params):
            reason = validate_type(p)
            if reason:
                return reason
    return None


# ============================================================
# VALUES
# ============================================================


@dataclass(frozen=True)
class Register:
    name: str
    type: TypeRef

    def __str__(self) -> str:
        return f"%{self.name}"


@dataclass(frozen=True)
class IntConst:
    value: int
    type: TypeRef

    def __str__(self) -> str:
        if self.type == I1:
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class FloatConst:
    value: float
    type: TypeRef

    def __str__(self) -> str:
        return format_float(self.value)


@dataclass(frozen=True)
class GlobalRef:
    """Address of a global variable or function; ``type`` is the pointer type."""

    name: str
    type: TypeRef

    def __str__(self) -> str:
        return f"@{self.name}"


@dataclass(frozen=True)
class Undef:
    type: TypeRef

    def __str__(self) -> str:
        return "undef"


@dataclass(frozen=True)
class ZeroInit:
    """``zeroinitializer``; only valid as a global initializer."""

    type: TypeRef

    def __str__(self) -> str:
        return "zeroinitializer"


Value = Union[Register, IntConst, FloatConst, GlobalRef, Undef, ZeroInit]


def format_float(x: float) -> str:
    """Shortest text that re-parses to exactly ``x``.

    Finite values use the decimal form with a mandatory dot; inf and nan use
    the 64-bit hex form so nothing is lost.
    """
    import math
    import struct

    if math.isfinite(x):
        text = repr(x)
        if "." not in text:
            mant, _, exp = text.partition("e")
            text = f"{mant}.0e{exp}" if exp else f"{mant}.0"
        return text
    (bits,) = struct.unpack("<Q", struct.pack("<d", x))
    return f"0x{bits:016X}"


# ============================================================
# INSTRUCTIONS
# ============================================================

INT_BINOPS = frozenset({"add", "sub", "mul", "sdiv", "udiv", "and", "or", "xor", "shl", "lshr", "ashr"})
FLOAT_BINOPS = frozenset({"fadd", "fsub", "fmul", "fdiv"})
BINOPS = INT_BINOPS | FLOAT_BINOPS
CASTS = frozenset({"sext", "zext", "trunc", "fptosi", "sitofp", "bitcast"})
TERMINATORS = frozenset({"br", "ret"})
OPCODES = BINOPS | CASTS | TERMINATORS | frozenset(
    {"icmp", "fcmp", "load", "store", "getelementptr", "call", "atomicrmw", "select", "phi",
     "extractelement", "alloca"}
)

ICMP_PREDS = frozenset({"eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle"})
FCMP_PREDS = frozenset(
    {"false", "oeq", "ogt", "oge", "olt", "ole", "one", "ord",
     "ueq", "ugt", "uge", "ult", "ule", "une", "uno", "true"}
)
ATOMIC_OPS = ("add", "sub", "xchg", "and", "or", "xor", "min", "max", "umin", "umax")
ORDERINGS = frozenset({"unordered", "monotonic", "acquire", "release", "acq_rel", "seq_cst"})


@dataclass(frozen=True)
class Instruction:
    """One SSA operation.

    Per-opcode use of the optional fields:

    ``pred``     icmp/fcmp predicate, or the atomicrmw operation
    ``callee``   call target name (without ``@``)
    ``targets``  br successors; for phi, the incoming block of each operand
    ``type``     declared return type of a call
    ``flags``    textual modifiers: nsw/nuw/exact, fast-math flags,
                 ``inbounds``, ``tail``
    """

    opcode: str
    operands: tuple[Value, ...] = ()
    result: Register | None = None
    pred: str | None = None
    callee: str | None = None
    targets: tuple[str, ...] = ()
    type: TypeRef | None = None
    flags: tuple[str, ...] = ()
    align: int | None = None
    volatile: bool = False
    ordering: str | None = None
    cconv: str | None = None

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS


@dataclass
class BasicBlock:
    label: str
    instructions: list[Instruction] = field(default_factory=list)

    @property
    def terminator(self) -> Instruction | None:
        if self.instructions and self.instructions[-1].is_terminator:
            return self.instructions[-1]
        return None

    def successors(self) -> tuple[str, ...]:
        term = self.terminator
        return term.targets if term is not None and term.opcode == "br" else ()


# ============================================================
# METADATA
# ============================================================


@dataclass(frozen=True)
class MDString:
    text: str


MetadataItem = Union[MDString, IntConst, GlobalRef, "MetadataNode"]


@dataclass(frozen=True)
class MetadataNode:
    """A metadata tuple.

    Node references are held as nested nodes, so equality is structural and
    independent of the ``!N`` numbering a text file happened to use.  ``name``
    remembers that number for diagnostics only.
    """

    contents: tuple[MetadataItem, ...] = ()
    name: str | None = field(default=None, compare=False)


# ============================================================
# FUNCTIONS, GLOBALS, MODULES
# ============================================================


@dataclass(frozen=True)
class Param:
    name: str | None
    type: TypeRef
    attrs: tuple[str, ...] = ()


@dataclass
class Function:
    name: str
    ret_type: TypeRef
    params: list[Param] = field(default_factory=list)
    blocks: list[BasicBlock] = field(default_factory=list)
    is_kernel: bool = False
    metadata: list[tuple[str, MetadataNode]] = field(default_factory=list)
    keywords: tuple[str, ...] = ()
    cconv: str | None = None

    @property
    def signature(self) -> FunctionType:
        return FunctionType(self.ret_type, tuple(p.type for p in self.params))

    @property
    def is_declaration(self) -> bool:
        return not self.blocks

    def block(self, label: str) -> BasicBlock:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def get_metadata(self, key: str) -> MetadataNode | None:
        for k, node in self.metadata:
            if k == key:
                return node
        return None

    def instructions(self) -> Iterator[tuple[BasicBlock, int, Instruction]]:
        for b in self.blocks:
            for i, inst in enumerate(b.instructions):
                yield b, i, inst


@dataclass
class GlobalVariable:
    name: str
    type: TypeRef
    addr_space: AddressSpace = AddressSpace.PRIVATE
    initializer: Value | None = None
    constant: bool = False
    linkage: tuple[str, ...] = ()
    align: int | None = None

    @property
    def pointer_type(self) -> PointerType:
        return PointerType(self.type, self.addr_space)


@dataclass
class Module:
    target_triple: str
    dialect: Dialect
    functions: list[Function] = field(default_factory=list)
    global_variables: list[GlobalVariable] = field(default_factory=list)
    named_metadata: dict[str, list[MetadataNode]] = field(default_factory=dict)

    def get_function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def get_global(self, name: str) -> GlobalVariable | None:
        for g in self.global_variables:
            if g.name == name:
                return g
        return None

    def symbol_type(self, name: str) -> TypeRef | None:
        """Pointer type of the global or function called ``name``."""
        g = self.get_global(name)
        if g is not None:
            return g.pointer_type
        f = self.get_function(name)
        if f is not None:
            return PointerType(f.signature)
        return None


def kernel_arg_type_name(t: TypeRef) -> str:
    """OpenCL C spelling of an IR type, as used in ``kernel_arg_type``."""
    if isinstance(t, PointerType):
        return kernel_arg_type_name(t.pointee) + "*"
    if isinstance(t, IntType):
        return {1: "bool", 8: "char", 16: "short", 32: "int", 64: "long"}[t.bits]
    if isinstance(t, FloatType):
        return "float" if t.bits == 32 else "double"
    if isinstance(t, VectorType):
        return f"{kernel_arg_type_name(t.elem)}{t.lanes}"
    if isinstance(t, ArrayType):
        return f"{kernel_arg_type_name(t.elem)}[{t.count}]"
    return str(t)
