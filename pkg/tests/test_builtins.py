import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpuir.builtins import (
    BARRIER_FLAGS,
    BUILTIN_TABLE,
    INDEX_MANGLED,
    BuiltinKind,
    dim_from_suffix,
    lookup,
    math_names,
    strip_overload_suffix,
)

# written out by hand rather than derived from the implementation's rows
EXPECTED_INDEX = [
    ("tid.x", "LocalInvocationId", 0, "get_local_id"),
    ("tid.y", "LocalInvocationId", 1, "get_local_id"),
    ("tid.z", "LocalInvocationId", 2, "get_local_id"),
    ("ctaid.x", "WorkgroupId", 0, "get_group_id"),
    ("ctaid.y", "WorkgroupId", 1, "get_group_id"),
    ("ctaid.z", "WorkgroupId", 2, "get_group_id"),
    ("ntid.x", "WorkgroupSize", 0, "get_local_size"),
    ("ntid.y", "WorkgroupSize", 1, "get_local_size"),
    ("ntid.z", "WorkgroupSize", 2, "get_local_size"),
    ("nctaid.x", "NumWorkgroups", 0, "get_num_groups"),
    ("nctaid.y", "NumWorkgroups", 1, "get_num_groups"),
    ("nctaid.z", "NumWorkgroups", 2, "get_num_groups"),
]


@pytest.mark.parametrize("sreg, variable, dim, callee", EXPECTED_INDEX)
def test_index_builtin_row(sreg, variable, dim, callee):
    m = lookup(f"llvm.nvvm.read.ptx.sreg.{sreg}")
    assert m is not None
    assert (m.spirv_variable, m.kind.dim, m.opencl_callee) == (variable, dim, callee)
    assert m.kind.is_index


def test_table_has_exactly_twelve_index_rows():
    index_rows = [m for m in BUILTIN_TABLE.values() if m.kind.is_index]
    assert len(index_rows) == 12


def test_mangled_index_callees():
    assert INDEX_MANGLED == {
        "get_local_id": "_Z12get_local_idj",
        "get_group_id": "_Z12get_group_idj",
        "get_local_size": "_Z14get_local_sizej",
        "get_num_groups": "_Z14get_num_groupsj",
    }


def test_barrier_row():
    m = lookup("llvm.nvvm.barrier0")
    assert m.kind == BuiltinKind("barrier") and m.opencl_callee == "barrier"
    assert BARRIER_FLAGS == 3


@pytest.mark.parametrize("op", ["sqrt", "fabs", "fma"])
@pytest.mark.parametrize("bits", [32, 64])
def test_math_rows(op, bits):
    m = lookup(f"llvm.{op}.f{bits}")
    assert m.kind == BuiltinKind(op) and m.float_type.bits == bits
    spirv, opencl = math_names(op, bits)
    assert spirv == f"{op}.f{bits}"
    assert opencl.startswith(f"_Z{len(op)}{op}")


@pytest.mark.parametrize(
    "name", ["llvm.nvvm.tex.1d.f32.s32", "llvm.nvvm.d2i.rz", "llvm.nvvm.lg2.approx.f", "llvm.nvvm.read.ptx.sreg.tid.w"]
)
def test_unknown_names_have_no_mapping(name):
    assert lookup(name) is None


@given(
    st.lists(st.text(alphabet="abcdefghijklmnopqrstuvwxyz_0123456789", min_size=1, max_size=8), min_size=1, max_size=5),
    st.sampled_from("xyz"),
)
def test_suffix_decodes_to_dim(parts, suffix):
    name = ".".join(parts + [suffix])
    assert dim_from_suffix(name) == "xyz".index(suffix)


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz.", max_size=20))
def test_names_without_a_dim_suffix_are_rejected(name):
    if name.rpartition(".")[1] and name.rpartition(".")[2] in ("x", "y", "z"):
        return
    with pytest.raises(ValueError):
        dim_from_suffix(name)


def test_suffix_dim_is_a_bijection_over_the_table():
    seen = {}
    for name, m in BUILTIN_TABLE.items():
        if m.kind.is_index:
            key = (m.kind.kind, m.kind.dim)
            assert key not in seen
            seen[key] = name
            assert m.kind.dim == dim_from_suffix(name)
    assert len(seen) == 12


@pytest.mark.parametrize("kind, dim", [("thread_index", 3), ("thread_index", None), ("barrier", 0), ("warp", None)])
def test_builtin_kind_validation(kind, dim):
    with pytest.raises(ValueError):
        BuiltinKind(kind, dim)


def test_overload_suffix():
    assert strip_overload_suffix("atomic_add.1") == "atomic_add"
    assert strip_overload_suffix("atomic_add") == "atomic_add"
