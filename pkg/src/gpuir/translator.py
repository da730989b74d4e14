"""NVVM -> SPIR-V -> OpenCL kernel translation.

Translation treats an NVVM module in three parts.  Module-level metadata is
copied, dropped or rewritten; calls to NVVM builtins and ``atomicrmw``
instructions are device dependent and are rewritten one by one; every other
instruction is device independent and is passed through untouched.

The SPIR-V stage reads thread coordinates from 3-lane builtin variables.
Lowering to OpenCL folds each builtin-variable load and lane extract back
into a single ``get_*`` call.
"""

from __future__ import annotations

import copy
from collections import Counter
from dataclasses import dataclass, field, replace

from . import builtins as bi
from .builtins import BuiltinKind
from .ir import (
    I32,
    I64,
    NVVM_TRIPLE,
    SPIR_TRIPLE,
    AddressSpace,
    Dialect,
    Function,
    GlobalRef,
    GlobalVariable,
    Instruction,
    IntConst,
    MDString,
    MetadataNode,
    Module,
    Param,
    PointerType,
    Register,
    TypeRef,
    VectorType,
    VoidType,
    kernel_arg_type_name,
)
from .verify import annotated_kernel_names, verify_module

DEVICE_DEPENDENT = "device_dependent"
DEVICE_INDEPENDENT = "device_independent"

STANDARD_METADATA = frozenset({"llvm.ident", "llvm.module.flags"})
BUILTIN_VECTOR = VectorType(I64, 3)
BUILTIN_SPACE = AddressSpace.GLOBAL


class TranslationError(Exception):
    """Translation could not produce a module.  ``report`` says why."""

    def __init__(self, message: str, report: "TranslationReport | None" = None):
        super().__init__(message)
        self.report = report if report is not None else TranslationReport()


class UnsupportedBuiltinError(TranslationError):
    pass


class LoweringError(TranslationError):
    pass


@dataclass
class TranslationReport:
    rewritten_calls: Counter = field(default_factory=Counter)
    dropped_metadata: list[str] = field(default_factory=list)
    added_metadata: list[str] = field(default_factory=list)
    unsupported: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return bool(self.unsupported)

    @property
    def total_rewrites(self) -> int:
        return sum(self.rewritten_calls.values())

    def count(self, kind: BuiltinKind | str) -> int:
        return self.rewritten_calls.get(str(kind), 0)

    def summary(self) -> str:
        lines = []
        if self.unsupported:
            lines.append(f"translation failed: {len(self.unsupported)} unsupported instruction(s)")
            for fn, index, callee in self.unsupported:
                lines.append(f"  unsupported: @{fn} #{index}: {callee}")
        else:
            lines.append(f"translated: {self.total_rewrites} device-dependent rewrite(s)")
        for key in sorted(self.rewritten_calls):
            lines.append(f"  rewrite {key}: {self.rewritten_calls[key]}")
        if self.added_metadata:
            lines.append(f"  added metadata: {', '.join(self.added_metadata)}")
        if self.dropped_metadata:
            lines.append(f"  dropped metadata: {', '.join(self.dropped_metadata)}")
        return "\n".join(lines)


# ------------------------------------------------------------
# classification
# ------------------------------------------------------------


def classify_instruction(inst: Instruction) -> str:
    """``device_dependent`` for NVVM builtin calls and atomics, else ``device_independent``."""
    if inst.opcode == "atomicrmw":
        return DEVICE_DEPENDENT
    if inst.opcode == "call" and inst.callee is not None and inst.callee.startswith("llvm."):
        if bi.lookup(inst.callee) is not None:
            return DEVICE_DEPENDENT
    return DEVICE_INDEPENDENT


def _unsupported_reason(inst: Instruction, m: Module) -> str | None:
    """Callee name if ``inst`` cannot be translated, else None."""
    if inst.opcode == "atomicrmw":
        val = inst.operands[1]
        if val.type != I32:
            return f"atomicrmw {inst.pred} {val.type}"
        return None
    if inst.opcode != "call":
        return None
    mapping = bi.lookup(inst.callee)
    if mapping is None:
        target = m.get_function(inst.callee)
        if target is not None and not target.is_declaration:
            return None
        return inst.callee
    if mapping.kind.is_index:
        if inst.operands or inst.type != I32:
            return inst.callee
    elif mapping.kind.kind == "barrier":
        if inst.operands:
            return inst.callee
    return None


# ------------------------------------------------------------
# per-instruction rewrites
# ------------------------------------------------------------


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    n = 1
    while name in taken:
        name = f"{base}{n}"
        n += 1
    taken.add(name)
    return name


def map_index_builtin(call: Instruction, taken: set[str] | None = None) -> list[Instruction]:
    """Replace an index/size query call by builtin-variable load, lane extract and truncation.

    The truncation defines the call's original result register, so existing
    uses need no rewriting.  ``taken`` holds register names already in use
    in the function and is updated with the fresh names.
    """
    mapping = bi.lookup(call.callee or "")
    if mapping is None or not mapping.kind.is_index:
        raise UnsupportedBuiltinError(f"{call.callee} is not an index builtin")
    if call.result is None:
        return []
    taken = taken if taken is not None else {call.result.name}
    var = bi.builtin_variable_name(mapping.spirv_variable)
    vec = Register(_fresh(f"{call.result.name}.bv", taken), BUILTIN_VECTOR)
    lane = Register(_fresh(f"{call.result.name}.lane", taken), I64)
    return [
        Instruction("load", (GlobalRef(var, PointerType(BUILTIN_VECTOR, BUILTIN_SPACE)),), vec, align=32),
        Instruction("extractelement", (vec, IntConst(mapping.kind.dim, I32)), lane),
        Instruction("trunc", (lane,), call.result),
    ]


def map_barrier(call: Instruction) -> Instruction:
    """``llvm.nvvm.barrier0()`` -> ``barrier(CLK_LOCAL_MEM_FENCE | CLK_GLOBAL_MEM_FENCE)``."""
    if call.callee != "llvm.nvvm.barrier0" or call.operands:
        raise UnsupportedBuiltinError(f"cannot map {call.callee} as a barrier")
    return Instruction("call", (IntConst(bi.BARRIER_FLAGS, I32),), None, callee=bi.SPIRV_BARRIER)


def map_atomic(inst: Instruction) -> Instruction:
    """``atomicrmw OP ptr, v`` -> ``%old = call atomic_OP(ptr, v)``, operands copied verbatim."""
    if inst.opcode != "atomicrmw":
        raise TranslationError(f"expected atomicrmw, got {inst.opcode}")
    ptr, val = inst.operands
    if val.type != I32 or not isinstance(ptr.type, PointerType):
        raise UnsupportedBuiltinError(f"atomicrmw {inst.pred} on {val.type} is not supported")
    return Instruction("call", (ptr, val), inst.result, callee=bi.ATOMIC_CALLEES[inst.pred], type=val.type)


def _map_math(call: Instruction) -> Instruction:
    mapping = bi.lookup(call.callee)
    spv, _cl = bi.math_names(mapping.kind.kind, mapping.float_type.bits)
    return replace(call, callee=spv, flags=tuple(f for f in call.flags if f != "tail"))


# ------------------------------------------------------------
# module-level passes
# ------------------------------------------------------------


def rewrite_triple(m: Module) -> Module:
    """Copy of ``m`` retargeted from ``nvptx64-nvidia-cuda`` to ``spir64-unknown-unknown``."""
    if m.target_triple != NVVM_TRIPLE:
        raise TranslationError(f"cannot retarget triple {m.target_triple!r}; expected {NVVM_TRIPLE!r}")
    out = copy.deepcopy(m)
    out.target_triple = SPIR_TRIPLE
    return out


def transform_metadata(m: Module, report: TranslationReport | None = None) -> Module:
    """Replace ``nvvm.annotations`` by per-kernel ``kernel_arg_*`` metadata.

    Every annotated kernel is flagged ``is_kernel`` and gains
    ``kernel_arg_addr_space`` (1 for each pointer parameter, 0 otherwise)
    and ``kernel_arg_type``.  Standard module metadata is copied; all other
    named metadata and any function attachments are dropped and reported.
    """
    if m.dialect != Dialect.NVVM:
        raise TranslationError(f"transform_metadata expects an NVVM module, got {m.dialect.value}")
    report = report if report is not None else TranslationReport()
    out = copy.deepcopy(m)
    kernels = []
    for name in annotated_kernel_names(m):
        fn = out.get_function(name)
        if fn is None:
            raise TranslationError(f"nvvm.annotations names unknown function @{name}", report)
        if fn.is_declaration:
            raise TranslationError(f"nvvm.annotations names declaration-only function @{name}", report)
        if fn not in kernels:
            kernels.append(fn)

    named = {}
    for key, nodes in out.named_metadata.items():
        if key in STANDARD_METADATA:
            named[key] = nodes
        else:
            report.dropped_metadata.append(key)
    out.named_metadata = named

    for fn in out.functions:
        for key, _node in fn.metadata:
            report.dropped_metadata.append(f"{fn.name}:{key}")
        fn.metadata = []
    for fn in kernels:
        spaces = tuple(
            IntConst(int(AddressSpace.GLOBAL) if isinstance(p.type, PointerType) else int(AddressSpace.PRIVATE), I32)
            for p in fn.params
        )
        types = tuple(MDString(kernel_arg_type_name(p.type)) for p in fn.params)
        fn.is_kernel = True
        fn.metadata = [
            ("kernel_arg_addr_space", MetadataNode(spaces)),
            ("kernel_arg_type", MetadataNode(types)),
        ]
    if kernels:
        for key in ("kernel_arg_addr_space", "kernel_arg_type"):
            if key not in report.added_metadata:
                report.added_metadata.append(key)
    return out


def _linear_index(fn: Function, block_index: int, inst_index: int) -> int:
    return sum(len(b.instructions) for b in fn.blocks[:block_index]) + inst_index


def _find_unsupported(m: Module) -> list[tuple[str, int, str]]:
    found = []
    for fn in m.functions:
        for bi_, b in enumerate(fn.blocks):
            for i, inst in enumerate(b.instructions):
                reason = _unsupported_reason(inst, m)
                if reason is not None:
                    found.append((fn.name, _linear_index(fn, bi_, i), reason))
    return found


class _Declarations:
    """Tracks external declarations a pass needs, numbering clashing overloads."""

    def __init__(self, m: Module, cconv: str | None):
        self.m = m
        self.cconv = cconv
        self.by_signature: dict[tuple[str, TypeRef, tuple[TypeRef, ...]], str] = {}

    def name_for(self, base: str, ret: TypeRef, params: tuple[TypeRef, ...]) -> str:
        key = (base, ret, params)
        if key in self.by_signature:
            return self.by_signature[key]
        name = base
        n = 0
        while True:
            existing = self.m.get_function(name)
            if existing is None:
                self.m.functions.append(
                    Function(name, ret, [Param(None, t) for t in params], cconv=self.cconv)
                )
                break
            if existing.is_declaration and existing.signature.ret == ret and existing.signature.params == params:
                break
            n += 1
            name = f"{base}.{n}"
        self.by_signature[key] = name
        return name


def _drop_unused_declarations(m: Module, names: set[str]) -> None:
    used = set()
    for fn in m.functions:
        for _b, _i, inst in fn.instructions():
            if inst.opcode == "call":
                used.add(inst.callee)
    m.functions = [f for f in m.functions if not (f.is_declaration and f.name in names and f.name not in used)]


def _register_names(fn: Function) -> set[str]:
    names = {p.name for p in fn.params if p.name}
    for _b, _i, inst in fn.instructions():
        if inst.result is not None:
            names.add(inst.result.name)
    return names


def _verify_or_raise(m: Module, stage: str, report: TranslationReport) -> None:
    diags = verify_module(m)
    if diags:
        detail = "; ".join(str(d) for d in diags[:5])
        raise TranslationError(f"{stage} produced an invalid module: {detail}", report)


def translate_nvvm_to_spirv(m: Module) -> tuple[Module, TranslationReport]:
    """Translate an NVVM module into the SPIR-V dialect.

    Raises :class:`UnsupportedBuiltinError` (carrying the report with every
    unsupported instruction) if any builtin has no mapping; no module is
    produced in that case.
    """
    report = TranslationReport()
    if m.dialect != Dialect.NVVM:
        raise TranslationError(f"expected an NVVM module, got {m.dialect.value}", report)
    diags = verify_module(m)
    if diags:
        raise TranslationError("input module is invalid: " + "; ".join(str(d) for d in diags[:5]), report)
    report.unsupported = _find_unsupported(m)
    if report.unsupported:
        names = ", ".join(sorted({c for _f, _i, c in report.unsupported}))
        raise UnsupportedBuiltinError(f"unsupported builtins: {names}", report)

    out = transform_metadata(rewrite_triple(m), report)
    out.dialect = Dialect.SPIRV
    decls = _Declarations(out, cconv=None)
    variables: list[str] = []

    for fn in out.functions:
        taken = _register_names(fn)
        for b in fn.blocks:
            new: list[Instruction] = []
            for inst in b.instructions:
                if classify_instruction(inst) == DEVICE_INDEPENDENT:
                    new.append(inst)
                    continue
                if inst.opcode == "atomicrmw":
                    call = map_atomic(inst)
                    name = decls.name_for(call.callee, call.type, tuple(o.type for o in call.operands))
                    new.append(replace(call, callee=name))
                    report.rewritten_calls[call.callee] += 1
                    continue
                mapping = bi.lookup(inst.callee)
                kind = mapping.kind
                if kind.is_index:
                    var = bi.builtin_variable_name(mapping.spirv_variable)
                    if var not in variables:
                        variables.append(var)
                    new.extend(map_index_builtin(inst, taken))
                elif kind.kind == "barrier":
                    call = map_barrier(inst)
                    decls.name_for(call.callee, VoidType(), (I32,))
                    new.append(call)
                else:
                    call = _map_math(inst)
                    decls.name_for(call.callee, call.type, tuple(o.type for o in call.operands))
                    new.append(call)
                report.rewritten_calls[str(kind)] += 1
            b.instructions = new

    _drop_unused_declarations(out, set(bi.BUILTIN_TABLE))
    for var in variables:
        out.global_variables.append(
            GlobalVariable(var, BUILTIN_VECTOR, BUILTIN_SPACE, None, constant=True, linkage=("external",))
        )
    _verify_or_raise(out, "NVVM to SPIR-V translation", report)
    return out, report


def lower_spirv_to_opencl(m: Module) -> Module:
    """Lower a SPIR-V dialect module to OpenCL-dialect IR.

    Each builtin-variable load whose uses are all constant-lane extracts is
    folded into ``get_*(lane)`` calls.  Any other use of a builtin variable
    raises :class:`LoweringError`, since OpenCL IR has no builtin variables.
    """
    if m.dialect != Dialect.SPIRV:
        raise TranslationError(f"expected a SPIR-V dialect module, got {m.dialect.value}")
    out = copy.deepcopy(m)
    out.dialect = Dialect.OPENCL
    decls = _Declarations(out, cconv="spir_func")
    var_names = {g.name for g in out.global_variables if bi.builtin_variable_of(g.name)}

    renamed: set[str] = set()
    for fn in out.functions:
        loads: dict[str, str] = {}
        for _b, _i, inst in fn.instructions():
            if inst.opcode == "load" and isinstance(inst.operands[0], GlobalRef) and inst.operands[0].name in var_names:
                loads[inst.result.name] = bi.builtin_variable_of(inst.operands[0].name)
            else:
                for op in inst.operands:
                    if isinstance(op, GlobalRef) and op.name in var_names:
                        raise LoweringError(f"@{fn.name}: builtin variable @{op.name} used by {inst.opcode}")
        for _b, _i, inst in fn.instructions():
            for k, op in enumerate(inst.operands):
                if isinstance(op, Register) and op.name in loads:
                    if not (inst.opcode == "extractelement" and k == 0 and isinstance(inst.operands[1], IntConst)):
                        raise LoweringError(
                            f"@{fn.name}: builtin vector %{op.name} used by {inst.opcode}; "
                            "only constant-lane extracts can be lowered"
                        )
        for b in fn.blocks:
            new: list[Instruction] = []
            for inst in b.instructions:
                if inst.opcode == "load" and inst.result is not None and inst.result.name in loads:
                    continue
                if inst.opcode == "extractelement" and isinstance(inst.operands[0], Register) and inst.operands[0].name in loads:
                    kind = bi.KIND_OF_VARIABLE[loads[inst.operands[0].name]]
                    callee = next(m for m, k in bi.KIND_OF_OPENCL_INDEX.items() if k == kind)
                    name = decls.name_for(callee, I64, (I32,))
                    lane = inst.operands[1].value
                    new.append(Instruction("call", (IntConst(lane, I32),), inst.result, callee=name, type=I64,
                                           cconv="spir_func"))
                    continue
                if inst.opcode == "call":
                    target = out.get_function(inst.callee)
                    if target is not None and target.is_declaration:
                        callee = _opencl_callee(inst.callee)
                        ret = inst.type if inst.type is not None else VoidType()
                        if callee != inst.callee:
                            renamed.add(inst.callee)
                        name = decls.name_for(callee, ret, tuple(o.type for o in inst.operands))
                        new.append(replace(inst, callee=name, cconv="spir_func"))
                        continue
                new.append(inst)
            b.instructions = new
    out.global_variables = [g for g in out.global_variables if g.name not in var_names]
    _drop_unused_declarations(out, renamed)
    for fn in out.functions:
        if fn.is_declaration and fn.cconv is None:
            fn.cconv = "spir_func"
    _verify_or_raise(out, "SPIR-V to OpenCL lowering", TranslationReport())
    return out


def _opencl_callee(spirv_name: str) -> str:
    base = bi.strip_overload_suffix(spirv_name)
    if base == bi.SPIRV_BARRIER:
        return bi.OPENCL_BARRIER
    if spirv_name in bi.MATH_SPIRV:
        kind, bits = bi.MATH_SPIRV[spirv_name]
        return bi.math_names(kind, bits)[1]
    return base if base in bi.ATOMIC_OP_OF_CALLEE else spirv_name


def translate(m: Module) -> tuple[Module, TranslationReport]:
    """NVVM module -> OpenCL-dialect module, via the SPIR-V stage."""
    spirv, report = translate_nvvm_to_spirv(m)
    try:
        return lower_spirv_to_opencl(spirv), report
    except TranslationError as e:
        e.report = report
        raise


__all__ = [
    "DEVICE_DEPENDENT",
    "DEVICE_INDEPENDENT",
    "LoweringError",
    "TranslationError",
    "TranslationReport",
    "UnsupportedBuiltinError",
    "classify_instruction",
    "lower_spirv_to_opencl",
    "map_atomic",
    "map_barrier",
    "map_index_builtin",
    "rewrite_triple",
    "transform_metadata",
    "translate",
    "translate_nvvm_to_spirv",
]
