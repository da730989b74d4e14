"""Deterministic SIMT interpreter for kernels in any of the three dialects.

Every thread of a block runs as a Python generator.  Under the canonical
schedule threads run in ascending linear id, each until its next barrier or
return, before the next thread starts; that ordering is the reference
semantics.  A seeded schedule instead interleaves threads one instruction at
a time in a pseudo-random order, which must not change the outcome of any
data-race-free kernel.

Memory is byte addressed.  A pointer is a ``(region, offset)`` pair and
every access is bounds checked against its region.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from . import builtins as bi
from . import fpmath
from .ir import (
    AddressSpace,
    Dialect,
    FloatConst,
    FloatType,
    Function,
    GlobalRef,
    Instruction,
    IntConst,
    IntType,
    Module,
    PointerType,
    Register,
    TypeRef,
    Undef,
    Value,
    VectorType,
    ZeroInit,
    alloc_size,
    store_size,
)
from .verify import kernels_of, verify_module

MAX_THREADS_PER_BLOCK = 1024
MAX_BLOCKS = 1 << 20
TRAP_KINDS = ("oob", "div_by_zero", "barrier_divergence", "unresolved_callee")


class LaunchError(Exception):
    """The launch request itself is invalid (bad config, missing binding, ...)."""


@dataclass(frozen=True)
class DispatchConfig:
    grid: tuple[int, int, int] = (1, 1, 1)
    block: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        object.__setattr__(self, "block", tuple(int(v) for v in self.block))
        if len(self.grid) != 3 or len(self.block) != 3:
            raise ValueError("grid and block need three dimensions")
        if min(self.grid) <= 0:
            raise ValueError("grid dims must be positive")
        if min(self.block) <= 0:
            raise ValueError("block dims must be positive")
        if math.prod(self.block) > MAX_THREADS_PER_BLOCK:
            raise ValueError(f"at most {MAX_THREADS_PER_BLOCK} threads per block")
        if math.prod(self.grid) > MAX_BLOCKS:
            raise ValueError(f"at most {MAX_BLOCKS} blocks")

    @property
    def threads_per_block(self) -> int:
        return math.prod(self.block)

    @property
    def num_blocks(self) -> int:
        return math.prod(self.grid)


@dataclass(frozen=True)
class BufferBinding:
    arg_name: str
    elem_type: TypeRef
    values: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if not isinstance(self.elem_type, (IntType, FloatType)):
            raise ValueError(f"buffer element type must be an integer or float scalar, got {self.elem_type}")


@dataclass(frozen=True)
class Schedule:
    mode: str = "canonical"
    seed: int = 0

    @classmethod
    def canonical(cls) -> "Schedule":
        return cls("canonical")

    @classmethod
    def seeded(cls, seed: int) -> "Schedule":
        return cls("seeded", seed)

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        if text == "canonical":
            return cls.canonical()
        if text.startswith("seed:"):
            return cls.seeded(int(text[5:]))
        raise ValueError(f"schedule must be 'canonical' or 'seed:N', got {text!r}")

    def __str__(self) -> str:
        return "canonical" if self.mode == "canonical" else f"seed:{self.seed}"


@dataclass(frozen=True)
class Trap:
    kind: str
    block: tuple[int, int, int]
    thread: tuple[int, int, int]
    function: str | None
    label: str | None
    index: int | None
    message: str

    def __str__(self) -> str:
        where = f"@{self.function}:%{self.label}#{self.index}" if self.function else "?"
        return (
            f"{self.kind} in block {self.block} thread {self.thread} at {where}: {self.message}"
        )


@dataclass
class LaunchResult:
    buffers: dict[str, list]
    raw: dict[str, bytes]
    elem_types: dict[str, TypeRef]
    barrier_waves: int
    waves_per_block: list[int] = field(default_factory=list)
    trap: Trap | None = None

    @property
    def authoritative(self) -> bool:
        """False when a trap cut the launch short; buffers are then a debugging snapshot."""
        return self.trap is None


class KernelTrap(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message
        self.locus: tuple[str, str, int] | None = None


# ============================================================
# MEMORY
# ============================================================


class Region:
    __slots__ = ("name", "space", "data", "ptrs", "builtin")

    def __init__(self, name: str, space: int, size: int, builtin: str | None = None):
        self.name = name
        self.space = space
        self.data = bytearray(size)
        self.ptrs: dict[int, "Ptr"] = {}
        self.builtin = builtin


class Ptr(NamedTuple):
    region: Region | None
    offset: int


NULL = Ptr(None, 0)

_SCALAR_CODES = {1: "B", 8: "b", 16: "h", 32: "i", 64: "q"}
_UNSIGNED_CODES = {1: "B", 8: "B", 16: "H", 32: "I", 64: "Q"}


def _mask(bits: int) -> int:
    return (1 << bits) - 1


def _signed(v: int, bits: int) -> int:
    return v - (1 << bits) if v >> (bits - 1) & 1 else v


def _codec(t: TypeRef):
    """(struct, to_python, from_python) for a non-pointer first-class type."""
    if isinstance(t, IntType):
        s = struct.Struct("<" + _UNSIGNED_CODES[t.bits])
        m = _mask(t.bits)
        if t.bits == 1:
            return s, (lambda raw: raw[0] & 1), (lambda v: (v & 1,))
        return s, (lambda raw: raw[0]), (lambda v: (v & m,))
    if isinstance(t, FloatType):
        s = struct.Struct("<f" if t.bits == 32 else "<d")
        return s, (lambda raw: raw[0]), (lambda v: (v,))
    if isinstance(t, VectorType):
        e = t.elem
        if isinstance(e, IntType):
            code = _UNSIGNED_CODES[e.bits]
            m = _mask(e.bits)
            s = struct.Struct("<" + code * t.lanes)
            return s, tuple, (lambda v: tuple(x & m for x in v))
        s = struct.Struct("<" + ("f" if e.bits == 32 else "d") * t.lanes)
        return s, tuple, tuple
    raise TypeError(f"no memory codec for {t}")


def _zero(t: TypeRef):
    if isinstance(t, IntType):
        return 0
    if isinstance(t, FloatType):
        return 0.0
    if isinstance(t, VectorType):
        return tuple(_zero(t.elem) for _ in range(t.lanes))
    return NULL


def encode_values(t: TypeRef, values) -> bytes:
    """Pack host values of scalar type ``t`` into little-endian bytes."""
    if isinstance(t, IntType):
        code = _UNSIGNED_CODES[t.bits]
        m = _mask(t.bits)
        return struct.pack(f"<{len(values)}{code}", *[int(v) & m for v in values])
    vals = [float(v) for v in values]
    if t.bits == 32:
        vals = [fpmath.to_f32(v) for v in vals]
    return struct.pack(f"<{len(vals)}{'f' if t.bits == 32 else 'd'}", *vals)


def decode_values(t: TypeRef, data: bytes) -> list:
    """Inverse of :func:`encode_values`; integers come back signed."""
    n = len(data) // store_size(t)
    if isinstance(t, IntType):
        if t.bits == 1:
            return [b & 1 for b in data]
        return list(struct.unpack(f"<{n}{_SCALAR_CODES[t.bits]}", data))
    return list(struct.unpack(f"<{n}{'f' if t.bits == 32 else 'd'}", data))


# ============================================================
# EXECUTION CONTEXT
# ============================================================


class _ThreadCtx:
    __slots__ = ("tid", "ctaid", "ntid", "nctaid", "fine")

    def __init__(self, tid, ctaid, ntid, nctaid, fine):
        self.tid = tid
        self.ctaid = ctaid
        self.ntid = ntid
        self.nctaid = nctaid
        self.fine = fine

    def index_value(self, kind: str, dim: int) -> int:
        if kind == "thread_index":
            return self.tid[dim]
        if kind == "group_index":
            return self.ctaid[dim]
        if kind == "group_size":
            return self.ntid[dim]
        return self.nctaid[dim]


_BARRIER = "barrier"
_RET = "ret"
_BR = "br"
_CALL = "call"


class _Block(NamedTuple):
    phis: list  # (result name, {pred label: getter})
    steps: list  # closures


class _Compiled(NamedTuple):
    fn: Function
    blocks: dict
    entry: str


# ============================================================
# COMPILER: instruction -> closure
# ============================================================


def _getter(v: Value) -> Callable:
    if isinstance(v, Register):
        name = v.name
        return lambda regs: regs[name]
    if isinstance(v, GlobalRef):
        key = "@" + v.name
        return lambda regs: regs[key]
    if isinstance(v, IntConst):
        c = v.value & _mask(v.type.bits)
        return lambda regs: c
    if isinstance(v, FloatConst):
        c = v.value
        return lambda regs: c
    if isinstance(v, (Undef, ZeroInit)):
        z = _zero(v.type)
        return lambda regs: z
    raise TypeError(f"cannot evaluate {v!r}")


def _lift(fn: Callable, t: TypeRef) -> Callable:
    if isinstance(t, VectorType):
        return lambda a, b: tuple(fn(x, y) for x, y in zip(a, b))
    return fn


def _int_binop(op: str, bits: int) -> Callable:
    m = _mask(bits)
    if op == "add":
        return lambda a, b: (a + b) & m
    if op == "sub":
        return lambda a, b: (a - b) & m
    if op == "mul":
        return lambda a, b: (a * b) & m
    if op == "and":
        return lambda a, b: a & b
    if op == "or":
        return lambda a, b: a | b
    if op == "xor":
        return lambda a, b: a ^ b
    if op == "shl":
        return lambda a, b: (a << b) & m if b < bits else 0
    if op == "lshr":
        return lambda a, b: a >> b if b < bits else 0
    if op == "ashr":
        return lambda a, b: (_signed(a, bits) >> min(b, bits - 1)) & m
    if op == "udiv":
        def udiv(a, b):
            if b == 0:
                raise KernelTrap("div_by_zero", "udiv by zero")
            return a // b
        return udiv
    if op == "sdiv":
        def sdiv(a, b):
            if b == 0:
                raise KernelTrap("div_by_zero", "sdiv by zero")
            sa, sb = _signed(a, bits), _signed(b, bits)
            q = abs(sa) // abs(sb)
            return (-q if (sa < 0) != (sb < 0) else q) & m
        return sdiv
    raise ValueError(op)


def _float_binop(op: str, bits: int) -> Callable:
    nan = fpmath.canonical_nan
    r = (lambda x: fpmath.to_f32(nan(x))) if bits == 32 else nan
    if op == "fadd":
        return lambda a, b: r(a + b)
    if op == "fsub":
        return lambda a, b: r(a - b)
    if op == "fmul":
        return lambda a, b: r(a * b)
    if op == "fdiv":
        return lambda a, b: r(fpmath.ieee_div(a, b))
    raise ValueError(op)


def _icmp(pred: str, t: TypeRef) -> Callable:
    if isinstance(t, PointerType):
        def key(p):
            return (id(p.region), p.offset)
        if pred == "eq":
            return lambda a, b: int(key(a) == key(b))
        if pred == "ne":
            return lambda a, b: int(key(a) != key(b))
        ops = {"ugt": "__gt__", "uge": "__ge__", "ult": "__lt__", "ule": "__le__",
               "sgt": "__gt__", "sge": "__ge__", "slt": "__lt__", "sle": "__le__"}
        name = ops[pred]
        return lambda a, b: int(getattr(a.offset, name)(b.offset))
    bits = t.bits
    if pred == "eq":
        return lambda a, b: int(a == b)
    if pred == "ne":
        return lambda a, b: int(a != b)
    if pred[0] == "u":
        cmp = {"ugt": lambda a, b: a > b, "uge": lambda a, b: a >= b,
               "ult": lambda a, b: a < b, "ule": lambda a, b: a <= b}[pred]
        return lambda a, b: int(cmp(a, b))
    cmp = {"sgt": lambda a, b: a > b, "sge": lambda a, b: a >= b,
           "slt": lambda a, b: a < b, "sle": lambda a, b: a <= b}[pred]
    return lambda a, b: int(cmp(_signed(a, bits), _signed(b, bits)))


def _fcmp(pred: str) -> Callable:
    if pred == "false":
        return lambda a, b: 0
    if pred == "true":
        return lambda a, b: 1
    if pred == "ord":
        return lambda a, b: int(not (math.isnan(a) or math.isnan(b)))
    if pred == "uno":
        return lambda a, b: int(math.isnan(a) or math.isnan(b))
    base = {"eq": lambda a, b: a == b, "gt": lambda a, b: a > b, "ge": lambda a, b: a >= b,
            "lt": lambda a, b: a < b, "le": lambda a, b: a <= b, "ne": lambda a, b: a != b}[pred[1:]]
    if pred[0] == "o":
        return lambda a, b: int(not (math.isnan(a) or math.isnan(b)) and base(a, b))
    return lambda a, b: int(math.isnan(a) or math.isnan(b) or base(a, b))


def _atomic_rmw(op: str, bits: int) -> Callable:
    m = _mask(bits)
    return {
        "add": lambda old, v: (old + v) & m,
        "sub": lambda old, v: (old - v) & m,
        "xchg": lambda old, v: v,
        "and": lambda old, v: old & v,
        "or": lambda old, v: old | v,
        "xor": lambda old, v: old ^ v,
        "min": lambda old, v: old if _signed(old, bits) <= _signed(v, bits) else v,
        "max": lambda old, v: old if _signed(old, bits) >= _signed(v, bits) else v,
        "umin": lambda old, v: min(old, v),
        "umax": lambda old, v: max(old, v),
    }[op]


def _check(p: Ptr, size: int) -> Region:
    region = p.region
    if region is None:
        raise KernelTrap("oob", "access through a null or undefined pointer")
    if p.offset < 0 or p.offset + size > len(region.data):
        raise KernelTrap(
            "oob",
            f"{size}-byte access at offset {p.offset} of {region.name} ({len(region.data)} bytes)",
        )
    return region


def _make_load(t: TypeRef) -> Callable:
    if isinstance(t, PointerType):
        def load_ptr(p: Ptr, ctx):
            region = _check(p, 8)
            return region.ptrs.get(p.offset, NULL)
        return load_ptr
    s, unwrap, _wrap = _codec(t)
    size = s.size

    def load(p: Ptr, ctx):
        region = p.region
        if region is not None and region.builtin is not None:
            return tuple(ctx.index_value(region.builtin, d) for d in range(3))
        region = _check(p, size)
        return unwrap(s.unpack_from(region.data, p.offset))
    return load


def _make_store(t: TypeRef) -> Callable:
    if isinstance(t, PointerType):
        def store_ptr(v, p: Ptr):
            region = _check(p, 8)
            region.ptrs[p.offset] = v
        return store_ptr
    s, _unwrap, wrap = _codec(t)
    size = s.size

    def store(v, p: Ptr):
        region = p.region
        if region is not None and region.builtin is not None:
            raise KernelTrap("oob", f"store to read-only builtin variable {region.name}")
        region = _check(p, size)
        s.pack_into(region.data, p.offset, *wrap(v))
        if region.ptrs:
            for k in [k for k in region.ptrs if p.offset - 8 < k < p.offset + size]:
                del region.ptrs[k]
    return store


def _make_bitcast(src: TypeRef, dst: TypeRef) -> Callable:
    if isinstance(src, PointerType):
        return lambda v: v
    s_in, _u, wrap = _codec(src)
    s_out, unwrap, _w = _codec(dst)

    def cast(v):
        return unwrap(s_out.unpack(s_in.pack(*wrap(v))))
    return cast


class _Program:
    """A module compiled to closures, plus its builtin resolution table."""

    def __init__(self, m: Module):
        self.m = m
        self.dialect = m.dialect
        self.functions: dict[str, _Compiled] = {}
        for fn in m.functions:
            if not fn.is_declaration:
                self.functions[fn.name] = self._compile_function(fn)

    # -- builtin resolution --------------------------------------------

    def _builtin(self, inst: Instruction) -> Callable:
        """Closure ``(args, ctx) -> value | _BARRIER`` for an external callee."""
        name = inst.callee
        d = self.dialect
        if d == Dialect.NVVM:
            mapping = bi.lookup(name)
            if mapping is not None:
                kind = mapping.kind
                if kind.is_index:
                    k, dim = kind.kind, kind.dim
                    return lambda args, ctx: ctx.index_value(k, dim)
                if kind.kind == "barrier":
                    return lambda args, ctx: _BARRIER
                return self._math(kind.kind, mapping.float_type.bits)
        else:
            base = bi.strip_overload_suffix(name)
            if d == Dialect.SPIRV:
                if base == bi.SPIRV_BARRIER:
                    return lambda args, ctx: _BARRIER
                if name in bi.MATH_SPIRV:
                    return self._math(*bi.MATH_SPIRV[name])
            else:
                if base == bi.OPENCL_BARRIER:
                    return lambda args, ctx: _BARRIER
                if base in bi.MATH_OPENCL:
                    return self._math(*bi.MATH_OPENCL[base])
                if base in bi.KIND_OF_OPENCL_INDEX:
                    kind = bi.KIND_OF_OPENCL_INDEX[base]
                    fallback = 1 if kind in ("group_size", "num_groups") else 0

                    def index(args, ctx):
                        dim = args[0]
                        return ctx.index_value(kind, dim) if dim < 3 else fallback
                    return index
            if base in bi.ATOMIC_OP_OF_CALLEE and len(inst.operands) == 2:
                ptr_t = inst.operands[0].type
                if isinstance(ptr_t, PointerType) and isinstance(ptr_t.pointee, IntType):
                    return self._atomic(bi.ATOMIC_OP_OF_CALLEE[base], ptr_t.pointee)

        def unresolved(args, ctx):
            raise KernelTrap("unresolved_callee", f"no {d.value} builtin named @{name}")
        return unresolved

    @staticmethod
    def _math(kind: str, bits: int) -> Callable:
        r = fpmath.to_f32 if bits == 32 else (lambda x: x)
        if kind == "sqrt":
            return lambda args, ctx: r(fpmath.ieee_sqrt(args[0]))
        if kind == "fabs":
            return lambda args, ctx: abs(args[0])
        return lambda args, ctx: fpmath.fma(args[0], args[1], args[2], bits)

    @staticmethod
    def _atomic(op: str, t: IntType) -> Callable:
        load = _make_load(t)
        store = _make_store(t)
        rmw = _atomic_rmw(op, t.bits)

        def atomic(args, ctx):
            p, v = args
            old = load(p, ctx)
            store(rmw(old, v), p)
            return old
        return atomic

    # -- compilation ---------------------------------------------------

    def _compile_function(self, fn: Function) -> _Compiled:
        blocks = {}
        for b in fn.blocks:
            phis = []
            steps = []
            for inst in b.instructions:
                if inst.opcode == "phi":
                    incoming = {label: _getter(v) for v, label in zip(inst.operands, inst.targets)}
                    phis.append((inst.result.name, incoming))
                else:
                    steps.append(self._compile(inst))
            blocks[b.label] = _Block(phis, steps)
        return _Compiled(fn, blocks, fn.blocks[0].label)

    def _compile(self, inst: Instruction) -> Callable:
        op = inst.opcode
        ops = inst.operands
        res = inst.result.name if inst.result is not None else None
        g = [_getter(v) for v in ops]

        if op in ("add", "sub", "mul", "sdiv", "udiv", "and", "or", "xor", "shl", "lshr", "ashr"):
            t = ops[0].type
            f = _lift(_int_binop(op, t.elem.bits if isinstance(t, VectorType) else t.bits), t)
            ga, gb = g

            def binop(regs, ctx):
                regs[res] = f(ga(regs), gb(regs))
            return binop
        if op in ("fadd", "fsub", "fmul", "fdiv"):
            t = ops[0].type
            f = _lift(_float_binop(op, t.elem.bits if isinstance(t, VectorType) else t.bits), t)
            ga, gb = g

            def fbinop(regs, ctx):
                regs[res] = f(ga(regs), gb(regs))
            return fbinop
        if op in ("icmp", "fcmp"):
            f = _icmp(inst.pred, ops[0].type) if op == "icmp" else _fcmp(inst.pred)
            ga, gb = g

            def cmp(regs, ctx):
                regs[res] = f(ga(regs), gb(regs))
            return cmp
        if op == "load":
            f = _make_load(inst.result.type)
            gp = g[0]

            def load(regs, ctx):
                regs[res] = f(gp(regs), ctx)
            return load
        if op == "store":
            f = _make_store(ops[0].type)
            gv, gp = g

            def store(regs, ctx):
                f(gv(regs), gp(regs))
            return store
        if op == "getelementptr":
            return self._compile_gep(inst, g, res)
        if op == "select":
            gc, ga, gb = g

            def select(regs, ctx):
                regs[res] = ga(regs) if gc(regs) else gb(regs)
            return select
        if op in ("sext", "zext", "trunc", "fptosi", "sitofp", "bitcast"):
            f = self._cast(op, ops[0].type, inst.result.type)
            ga = g[0]

            def cast(regs, ctx):
                regs[res] = f(ga(regs))
            return cast
        if op == "extractelement":
            gv, gi = g
            lanes = ops[0].type.lanes
            zero = _zero(ops[0].type.elem)

            def extract(regs, ctx):
                i = gi(regs)
                regs[res] = gv(regs)[i] if i < lanes else zero
            return extract
        if op == "alloca":
            t = inst.result.type.pointee
            size = alloc_size(t)

            def alloca(regs, ctx):
                regs[res] = Ptr(Region(f"%{res}", 0, size), 0)
            return alloca
        if op == "atomicrmw":
            f = self._atomic(inst.pred, ops[1].type)
            gp, gv = g

            def atomicrmw(regs, ctx):
                regs[res] = f((gp(regs), gv(regs)), ctx)
            return atomicrmw
        if op == "call":
            target = self.m.get_function(inst.callee)
            if target is not None and not target.is_declaration:
                callee = inst.callee

                def call_defined(regs, ctx):
                    return (_CALL, callee, [x(regs) for x in g], res)
                return call_defined
            f = self._builtin(inst)

            def call_builtin(regs, ctx):
                v = f([x(regs) for x in g], ctx)
                if v is _BARRIER:
                    return _BARRIER
                if res is not None:
                    regs[res] = v
            return call_builtin
        if op == "br":
            if not ops:
                target = (_BR, inst.targets[0])
                return lambda regs, ctx: target
            gc = g[0]
            t_true, t_false = (_BR, inst.targets[0]), (_BR, inst.targets[1])
            return lambda regs, ctx: t_true if gc(regs) else t_false
        if op == "ret":
            if not ops:
                done = (_RET, None)
                return lambda regs, ctx: done
            ga = g[0]
            return lambda regs, ctx: (_RET, ga(regs))
        raise ValueError(f"cannot execute {op}")

    @staticmethod
    def _cast(op: str, src: TypeRef, dst: TypeRef) -> Callable:
        if op == "sext":
            sb, m = src.bits, _mask(dst.bits)
            return lambda v: _signed(v, sb) & m if sb > 1 else (m if v else 0)
        if op == "zext":
            return lambda v: v
        if op == "trunc":
            m = _mask(dst.bits)
            return lambda v: v & m
        if op == "fptosi":
            m = _mask(dst.bits)

            def fptosi(v):
                if not math.isfinite(v):
                    return 0
                return int(v) & m
            del bits
            return fptosi
        if op == "sitofp":
            sb, db = src.bits, dst.bits
            if sb == 1:
                return lambda v: -1.0 if v else 0.0
            return lambda v: fpmath.int_to_float(_signed(v, sb), db)
        return _make_bitcast(src, dst)

    @staticmethod
    def _compile_gep(inst: Instruction, g: list, res: str) -> Callable:
        ops = inst.operands
        base_t = ops[0].type.pointee
        strides = [alloc_size(base_t)]
        cur = base_t
        for _ in ops[2:]:
            cur = cur.elem
            strides.append(alloc_size(cur))
        widths = [op.type.bits for op in ops[1:]]
        gp = g[0]
        terms = list(zip(g[1:], strides, widths))

        def gep(regs, ctx):
            p = gp(regs)
            off = p.offset
            for gi, stride, bits in terms:
                off += _signed(gi(regs), bits) * stride
            regs[res] = Ptr(p.region, off)
        return gep


# ============================================================
# LAUNCH
# ============================================================


class _Launch:
    def __init__(self, prog: _Program, cfg: DispatchConfig, sched: Schedule):
        self.prog = prog
        self.cfg = cfg
        self.sched = sched

    def run_thread(self, name: str, args: list, ctx: _ThreadCtx, base_regs: dict):
        """Generator executing ``name``; yields None per step (fine mode) or a barrier locus."""
        code = self.prog.functions[name]
        fn = code.fn
        regs = dict(base_regs)
        for p, a in zip(fn.params, args):
            regs[p.name] = a
        blocks = code.blocks
        label = code.entry
        prev = None
        fine = ctx.fine
        while True:
            blk = blocks[label]
            if blk.phis:
                vals = [(r, inc[prev](regs)) for r, inc in blk.phis]
                for r, v in vals:
                    regs[r] = v
            idx = len(blk.phis)  # phis always lead the block
            try:
                for step in blk.steps:
                    out = step(regs, ctx)
                    if out is not None:
                        tag = out[0] if type(out) is tuple else out
                        if tag == _BR:
                            prev, label = label, out[1]
                            break
                        if tag == _RET:
                            return out[1]
                        if out is _BARRIER:
                            yield (fn.name, label, idx)
                        elif tag == _CALL:
                            _tag, callee, cargs, result = out
                            value = yield from self.run_thread(callee, cargs, ctx, base_regs)
                            if result is not None:
                                regs[result] = value
                    if fine:
                        yield None
                    idx += 1
            except KernelTrap as t:
                if t.locus is None:
                    t.locus = (fn.name, label, idx)
                raise

    def run(self, kernel: Function, args: list, global_regs: dict) -> tuple[list[int], Trap | None]:
        cfg = self.cfg
        gx, gy, gz = cfg.grid
        bx, by, bz = cfg.block
        blocks = [(x, y, z) for z in range(gz) for y in range(gy) for x in range(gx)]
        threads = [(x, y, z) for z in range(bz) for y in range(by) for x in range(bx)]
        rng = random.Random(self.sched.seed) if self.sched.mode == "seeded" else None
        if rng is not None:
            rng.shuffle(blocks)
        fine = rng is not None
        local_vars = [gv for gv in self.prog.m.global_variables if gv.addr_space == AddressSpace.LOCAL]
        waves_per_block = []
        for ctaid in blocks:
            regs = dict(global_regs)
            for gv in local_vars:
                regs["@" + gv.name] = Ptr(Region(f"@{gv.name}[block {ctaid}]", 3, alloc_size(gv.type)), 0)
            ctxs = [_ThreadCtx(tid, ctaid, cfg.block, cfg.grid, fine) for tid in threads]
            gens = [self.run_thread(kernel.name, args, c, regs) for c in ctxs]
            try:
                waves = self._run_block(gens, threads, rng)
            except _BlockTrap as bt:
                t = bt.trap
                locus = t.locus or (None, None, None)
                trap = Trap(t.kind, ctaid, bt.thread, locus[0], locus[1], locus[2], t.message)
                waves_per_block.append(bt.waves)
                return waves_per_block, trap
            waves_per_block.append(waves)
        return waves_per_block, None

    @staticmethod
    def _advance(gen, thread):
        try:
            return next(gen), False
        except StopIteration:
            return None, True
        except KernelTrap as t:
            raise _BlockTrap(t, thread, 0) from None

    def _run_block(self, gens: list, threads: list, rng: random.Random | None) -> int:
        n = len(gens)
        live = list(range(n))
        finished: list[int] = []
        waves = 0
        while True:
            waiting: dict[int, tuple] = {}
            if rng is None:
                for t in live:
                    try:
                        out, done = self._advance(gens[t], threads[t])
                    except _BlockTrap as bt:
                        bt.waves = waves
                        raise
                    if done:
                        finished.append(t)
                    else:
                        waiting[t] = out
            else:
                runnable = list(live)
                while runnable:
                    k = rng.randrange(len(runnable))
                    t = runnable[k]
                    try:
                        out, done = self._advance(gens[t], threads[t])
                    except _BlockTrap as bt:
                        bt.waves = waves
                        raise
                    if done:
                        finished.append(t)
                        runnable[k] = runnable[-1]
                        runnable.pop()
                    elif out is not None:
                        waiting[t] = out
                        runnable[k] = runnable[-1]
                        runnable.pop()
            if not waiting:
                return waves
            if finished:
                t = min(waiting)
                locus = waiting[t]
                trap = KernelTrap(
                    "barrier_divergence",
                    f"thread {threads[finished[0]]} returned while {len(waiting)} thread(s) wait at a barrier",
                )
                trap.locus = locus
                raise _BlockTrap(trap, threads[t], waves)
            loci = set(waiting.values())
            if len(loci) > 1:
                first = min(waiting)
                other = next(t for t in sorted(waiting) if waiting[t] != waiting[first])
                trap = KernelTrap(
                    "barrier_divergence",
                    "threads wait at different barriers: "
                    f"{_locus_text(waiting[first])} and {_locus_text(waiting[other])}",
                )
                trap.locus = waiting[other]
                raise _BlockTrap(trap, threads[other], waves)
            waves += 1
            live = sorted(waiting)


def _locus_text(locus: tuple) -> str:
    fn, label, index = locus
    return f"@{fn}:%{label}#{index}"


class _BlockTrap(Exception):
    def __init__(self, trap: KernelTrap, thread, waves: int):
        self.trap = trap
        self.thread = thread
        self.waves = waves


def _check_binding(param, binding: BufferBinding) -> None:
    if isinstance(param.type, PointerType):
        if binding.elem_type != param.type.pointee:
            raise LaunchError(
                f"binding {binding.arg_name!r} has element type {binding.elem_type}, "
                f"parameter points to {param.type.pointee}"
            )
    else:
        if binding.elem_type != param.type:
            raise LaunchError(f"binding {binding.arg_name!r} has type {binding.elem_type}, parameter is {param.type}")
        if len(binding.values) != 1:
            raise LaunchError(f"scalar argument {binding.arg_name!r} needs exactly one value")


def launch(
    m: Module,
    kernel: str,
    cfg: DispatchConfig,
    bindings: list[BufferBinding],
    sched: Schedule | None = None,
) -> LaunchResult:
    """Run ``kernel`` over every thread of every block of ``cfg``.

    Pointer parameters are bound to fresh global buffers holding the
    binding's values; scalar parameters take their binding's single value.
    Raises :class:`LaunchError` for an invalid request.  Runtime faults do
    not raise: they come back as ``LaunchResult.trap``.
    """
    sched = sched or Schedule.canonical()
    diags = verify_module(m)
    if diags:
        raise LaunchError("module does not verify: " + "; ".join(str(d) for d in diags[:5]))
    fn = next((k for k in kernels_of(m) if k.name == kernel), None)
    if fn is None:
        raise LaunchError(f"no kernel named {kernel!r}")
    by_name = {}
    for b in bindings:
        if b.arg_name in by_name:
            raise LaunchError(f"duplicate binding {b.arg_name!r}")
        by_name[b.arg_name] = b

    prog = _Program(m)
    global_regs: dict[str, object] = {}
    for gv in m.global_variables:
        if gv.addr_space == AddressSpace.LOCAL:
            continue
        builtin = bi.builtin_variable_of(gv.name) if m.dialect == Dialect.SPIRV else None
        if builtin is not None:
            region = Region(f"@{gv.name}", int(gv.addr_space), 0, bi.KIND_OF_VARIABLE[builtin])
        else:
            region = Region(f"@{gv.name}", int(gv.addr_space), alloc_size(gv.type))
            init = gv.initializer
            if isinstance(init, (IntConst, FloatConst)):
                _make_store(gv.type)(_getter(init)({}), Ptr(region, 0))
        global_regs["@" + gv.name] = Ptr(region, 0)
    for f in m.functions:
        global_regs.setdefault("@" + f.name, NULL)

    args: list = []
    buffers: dict[str, tuple[Region, TypeRef]] = {}
    for p in fn.params:
        b = by_name.get(p.name)
        if b is None:
            raise LaunchError(f"missing binding for argument {p.name!r}")
        _check_binding(p, b)
        if isinstance(p.type, PointerType):
            data = encode_values(b.elem_type, b.values)
            region = Region(p.name, int(AddressSpace.GLOBAL), len(data))
            region.data[:] = data
            buffers[p.name] = (region, b.elem_type)
            args.append(Ptr(region, 0))
        else:
            args.append(_getter(IntConst(int(b.values[0]), p.type) if isinstance(p.type, IntType)
                                else FloatConst(fpmath.to_f32(float(b.values[0])) if p.type.bits == 32
                                                else float(b.values[0]), p.type))({}))
    unknown = set(by_name) - {p.name for p in fn.params}
    if unknown:
        raise LaunchError(f"bindings for unknown arguments: {', '.join(sorted(unknown))}")

    waves_per_block, trap = _Launch(prog, cfg, sched).run(fn, args, global_regs)
    raw = {name: bytes(region.data) for name, (region, _t) in buffers.items()}
    return LaunchResult(
        buffers={name: decode_values(t, raw[name]) for name, (_r, t) in buffers.items()},
        raw=raw,
        elem_types={name: t for name, (_r, t) in buffers.items()},
        barrier_waves=sum(waves_per_block),
        waves_per_block=waves_per_block,
        trap=trap,
    )


# ============================================================
# DIFFERENTIAL CHECK
# ============================================================


@dataclass(frozen=True)
class DiffResult:
    status: str  # equal | mismatch | trap
    buffer: str | None = None
    index: int | None = None
    src_value: object = None
    dst_value: object = None
    src_trap: Trap | None = None
    dst_trap: Trap | None = None

    @property
    def equal(self) -> bool:
        return self.status == "equal"

    def __str__(self) -> str:
        if self.status == "equal":
            return "equal"
        if self.status == "mismatch":
            return (
                f"mismatch in {self.buffer}[{self.index}]: source {self.src_value!r}, "
                f"translated {self.dst_value!r}"
            )
        parts = []
        if self.src_trap:
            parts.append(f"source {self.src_trap}")
        if self.dst_trap:
            parts.append(f"translated {self.dst_trap}")
        return "; ".join(parts)


def compare_results(src: LaunchResult, dst: LaunchResult) -> DiffResult:
    """Element-wise bit comparison of two launches' global buffers."""
    if src.trap or dst.trap:
        return DiffResult("trap", src_trap=src.trap, dst_trap=dst.trap)
    for name in sorted(set(src.raw) | set(dst.raw)):
        a, b = src.raw.get(name), dst.raw.get(name)
        t = src.elem_types.get(name) or dst.elem_types.get(name)
        if a is None or b is None:
            return DiffResult("mismatch", name, 0, None if a is None else "present", None if b is None else "present")
        if a == b:
            continue
        size = store_size(t)
        for i in range(max(len(a), len(b)) // size):
            ca, cb = a[i * size:(i + 1) * size], b[i * size:(i + 1) * size]
            if ca != cb:
                va = decode_values(t, ca)[0] if len(ca) == size else None
                vb = decode_values(t, cb)[0] if len(cb) == size else None
                return DiffResult("mismatch", name, i, va, vb)
    return DiffResult("equal")


def differential_check(
    src: Module,
    dst: Module,
    kernel: str,
    cfg: DispatchConfig,
    bindings: list[BufferBinding],
) -> DiffResult:
    """Run ``kernel`` from both modules on identical inputs; equal iff all buffers are bit-identical."""
    a = launch(src, kernel, cfg, bindings, Schedule.canonical())
    b = launch(dst, kernel, cfg, bindings, Schedule.canonical())
    return compare_results(a, b)


__all__ = [
    "BufferBinding",
    "DiffResult",
    "DispatchConfig",
    "LaunchError",
    "LaunchResult",
    "Schedule",
    "Trap",
    "compare_results",
    "decode_values",
    "differential_check",
    "encode_values",
    "launch",
]
