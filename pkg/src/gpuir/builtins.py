"""Builtin catalog: how each device primitive is spelled in every dialect.

``num_groups`` (``nctaid``) is an extension beyond the commonly cited CUDA
builtin list; grid-stride kernels need it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ir import F32, F64, FloatType

INDEX_KINDS = ("thread_index", "group_index", "group_size", "num_groups")
OTHER_KINDS = ("barrier", "sqrt", "fabs", "fma")

# CLK_LOCAL_MEM_FENCE | CLK_GLOBAL_MEM_FENCE
CLK_LOCAL_MEM_FENCE = 1
CLK_GLOBAL_MEM_FENCE = 2
BARRIER_FLAGS = CLK_LOCAL_MEM_FENCE | CLK_GLOBAL_MEM_FENCE

SPIRV_BARRIER = "barrier"
OPENCL_BARRIER = "_Z7barrierj"


@dataclass(frozen=True)
class BuiltinKind:
    kind: str
    dim: int | None = None

    def __post_init__(self) -> None:
        if self.kind in INDEX_KINDS:
            if self.dim not in (0, 1, 2):
                raise ValueError(f"{self.kind} needs a dimension in 0..2")
        elif self.kind in OTHER_KINDS:
            if self.dim is not None:
                raise ValueError(f"{self.kind} takes no dimension")
        else:
            raise ValueError(f"unknown builtin kind {self.kind!r}")

    @property
    def is_index(self) -> bool:
        return self.kind in INDEX_KINDS

    def __str__(self) -> str:
        return self.kind if self.dim is None else f"{self.kind}({self.dim})"


@dataclass(frozen=True)
class BuiltinMapping:
    nvvm_name: str
    kind: BuiltinKind
    spirv_variable: str | None
    opencl_callee: str
    float_type: FloatType | None = None


# sreg prefix, kind, SPIR-V builtin variable, OpenCL name, mangled OpenCL name
_INDEX_ROWS = (
    ("tid", "thread_index", "LocalInvocationId", "get_local_id", "_Z12get_local_idj"),
    ("ctaid", "group_index", "WorkgroupId", "get_group_id", "_Z12get_group_idj"),
    ("ntid", "group_size", "WorkgroupSize", "get_local_size", "_Z14get_local_sizej"),
    ("nctaid", "num_groups", "NumWorkgroups", "get_num_groups", "_Z14get_num_groupsj"),
)
SUFFIX_DIM = {"x": 0, "y": 1, "z": 2}

# SPIR-V dialect math callee, mangled OpenCL callee
_MATH_NAMES = {
    ("sqrt", 32): ("sqrt.f32", "_Z4sqrtf"),
    ("sqrt", 64): ("sqrt.f64", "_Z4sqrtd"),
    ("fabs", 32): ("fabs.f32", "_Z4fabsf"),
    ("fabs", 64): ("fabs.f64", "_Z4fabsd"),
    ("fma", 32): ("fma.f32", "_Z3fmafff"),
    ("fma", 64): ("fma.f64", "_Z3fmaddd"),
}

ATOMIC_CALLEES = {
    "add": "atomic_add",
    "sub": "atomic_sub",
    "xchg": "atomic_xchg",
    "and": "atomic_and",
    "or": "atomic_or",
    "xor": "atomic_xor",
    "min": "atomic_min",
    "max": "atomic_max",
    "umin": "atomic_umin",
    "umax": "atomic_umax",
}
ATOMIC_OP_OF_CALLEE = {v: k for k, v in ATOMIC_CALLEES.items()}


def dim_from_suffix(name: str) -> int:
    """Dimension encoded by the trailing ``.x``/``.y``/``.z`` of a builtin name."""
    head, dot, last = name.rpartition(".")
    if not dot or last not in SUFFIX_DIM:
        raise ValueError(f"{name!r} has no .x/.y/.z suffix")
    return SUFFIX_DIM[last]


def _build_table() -> dict[str, BuiltinMapping]:
    table: dict[str, BuiltinMapping] = {}
    for sreg, kind, var, cl, _mangled in _INDEX_ROWS:
        for suffix in "xyz":
            name = f"llvm.nvvm.read.ptx.sreg.{sreg}.{suffix}"
            table[name] = BuiltinMapping(name, BuiltinKind(kind, dim_from_suffix(name)), var, cl)
    table["llvm.nvvm.barrier0"] = BuiltinMapping("llvm.nvvm.barrier0", BuiltinKind("barrier"), None, "barrier")
    for op in ("sqrt", "fabs", "fma"):
        for ft in (F32, F64):
            name = f"llvm.{op}.f{ft.bits}"
            table[name] = BuiltinMapping(name, BuiltinKind(op), None, op, ft)
    return table


BUILTIN_TABLE: dict[str, BuiltinMapping] = _build_table()

INDEX_MANGLED = {cl: mangled for _s, _k, _v, cl, mangled in _INDEX_ROWS}
VARIABLE_OF_KIND = {kind: var for _s, kind, var, _cl, _m in _INDEX_ROWS}
KIND_OF_VARIABLE = {var: kind for _s, kind, var, _cl, _m in _INDEX_ROWS}
KIND_OF_OPENCL_INDEX = {mangled: kind for _s, kind, _v, _cl, mangled in _INDEX_ROWS}

SPIRV_VARIABLE_PREFIX = "__spirv_BuiltIn"


def builtin_variable_name(variable: str) -> str:
    return SPIRV_VARIABLE_PREFIX + variable


def builtin_variable_of(global_name: str) -> str | None:
    """``LocalInvocationId`` for ``__spirv_BuiltInLocalInvocationId``, else None."""
    if global_name.startswith(SPIRV_VARIABLE_PREFIX):
        var = global_name[len(SPIRV_VARIABLE_PREFIX):]
        if var in KIND_OF_VARIABLE:
            return var
    return None


def math_names(kind: str, bits: int) -> tuple[str, str]:
    """(SPIR-V dialect callee, OpenCL callee) for a math builtin."""
    return _MATH_NAMES[(kind, bits)]


MATH_SPIRV = {spv: (kind, bits) for (kind, bits), (spv, _cl) in _MATH_NAMES.items()}
MATH_OPENCL = {cl: (kind, bits) for (kind, bits), (_spv, cl) in _MATH_NAMES.items()}
MATH_NVVM = {f"llvm.{kind}.f{bits}": (kind, bits) for (kind, bits) in _MATH_NAMES}

_OVERLOAD_SUFFIX = re.compile(r"\.\d+$")


def strip_overload_suffix(name: str) -> str:
    """``atomic_add.1`` -> ``atomic_add``; distinct pointer types get numbered copies."""
    return _OVERLOAD_SUFFIX.sub("", name)


def lookup(nvvm_name: str) -> BuiltinMapping | None:
    return BUILTIN_TABLE.get(nvvm_name)
