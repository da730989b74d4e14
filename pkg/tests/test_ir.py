import pytest

from gpuir.ir import (
    F32,
    F64,
    I1,
    I8,
    I32,
    I64,
    ArrayType,
    FloatConst,
    FunctionType,
    IntType,
    PointerType,
    VectorType,
    AddressSpace,
    alloc_size,
    format_float,
    kernel_arg_type_name,
    store_size,
    validate_type,
)


@pytest.mark.parametrize(
    "t, text",
    [
        (I32, "i32"),
        (F32, "float"),
        (F64, "double"),
        (PointerType(I32), "i32*"),
        (PointerType(F32, AddressSpace.LOCAL), "float addrspace(3)*"),
        (VectorType(I64, 3), "<3 x i64>"),
        (ArrayType(I32, 256), "[256 x i32]"),
        (PointerType(FunctionType(I32, (I32, PointerType(I8)))), "i32 (i32, i8*)*"),
    ],
)
def test_type_text(t, text):
    assert str(t) == text


def test_address_space_numbering():
    assert [int(a) for a in AddressSpace] == [0, 1, 2, 3]
    assert PointerType(I32).addr_space == AddressSpace.PRIVATE


@pytest.mark.parametrize(
    "t, store, alloc",
    [
        (I1, 1, 1),
        (I32, 4, 4),
        (F64, 8, 8),
        (VectorType(F64, 3), 24, 32),
        (VectorType(I32, 2), 8, 8),
        (ArrayType(I32, 10), 40, 40),
        (PointerType(I8), 8, 8),
    ],
)
def test_sizes(t, store, alloc):
    assert store_size(t) == store
    assert alloc_size(t) == alloc


@pytest.mark.parametrize(
    "t",
    [IntType(7), VectorType(I32, 5), VectorType(I32, 1), PointerType(I32, 9)],
)
def test_invalid_types_are_reported(t):
    assert validate_type(t)


@pytest.mark.parametrize(
    "t, name",
    [
        (PointerType(I32, AddressSpace.GLOBAL), "int*"),
        (PointerType(F32), "float*"),
        (F64, "double"),
        (I32, "int"),
        (I64, "long"),
        (PointerType(VectorType(F64, 3)), "double3*"),
    ],
)
def test_kernel_arg_type_name(t, name):
    assert kernel_arg_type_name(t) == name


@pytest.mark.parametrize("x", [0.1, -2.0, 1e300, 5e-324, float("inf"), float("-inf"), -0.0])
def test_format_float_round_trips(x):
    text = format_float(x)
    if text.startswith("0x"):
        import struct

        back = struct.unpack("<d", int(text, 16).to_bytes(8, "little"))[0]
    else:
        assert "." in text
        back = float(text)
    assert back == x and str(back)[0] == str(x)[0]


def test_float_const_prints_hex_for_nan():
    assert str(FloatConst(float("nan"), F64)).startswith("0x7FF8")
