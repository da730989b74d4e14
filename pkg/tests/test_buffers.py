import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpuir.buffers import BufferFormatError, format_binding, format_buffers, format_float, parse_buffers
from gpuir.fpmath import to_f32
from gpuir.ir import F32, F64, I32, I64


def test_parse_basic_file():
    text = "# inputs\na:i32:1,2,3\n\nx:f64:0.5,-2\n"
    a, x = parse_buffers(text)
    assert (a.arg_name, a.elem_type, a.values) == ("a", I32, (1, 2, 3))
    assert (x.arg_name, x.elem_type, x.values) == ("x", F64, (0.5, -2.0))


def test_empty_value_list():
    (b,) = parse_buffers("out:i64:\n")
    assert b.values == () and b.elem_type == I64


def test_hex_floats():
    (b,) = parse_buffers("x:f64:0x1.8p+1,-0x1p-2\n")
    assert b.values == (3.0, -0.25)


def test_f32_values_are_rounded():
    (b,) = parse_buffers("x:f32:0.1\n")
    assert b.values == (to_f32(0.1),)


def test_special_floats_are_accepted():
    (b,) = parse_buffers("x:f32:inf,-inf,nan,-0.0\n")
    assert b.values[:2] == (math.inf, -math.inf) and math.isnan(b.values[2])
    assert math.copysign(1, b.values[3]) == -1


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("a:i32\n", 1, "name:elemtype:values"),
        ("# ok\na:u8:1\n", 2, "element type"),
        ("a:i32:1,x\n", 1, "invalid integer"),
        ("a:i32:1_000\n", 1, "invalid integer"),
        ("a:i32:4294967296\n", 1, "does not fit"),
        ("a:i32:1\na:i32:2\n", 2, "duplicate"),
        ("a b:i32:1\n", 1, "bad argument name"),
        ("x:f64:1.0.0\n", 1, ""),
    ],
)
def test_format_errors_carry_the_line(text, line, fragment):
    with pytest.raises(BufferFormatError) as info:
        parse_buffers(text)
    assert info.value.line == line and fragment in str(info.value)


@pytest.mark.parametrize(
    "x, bits, text",
    [(0.1, 64, "0.1"), (to_f32(0.1), 32, "0.1"), (1.0, 32, "1.0"), (-0.0, 32, "-0.0"), (1e-45, 32, "1e-45"),
     (3.4028234663852886e38, 32, "3.4028235e+38"), (math.inf, 32, "inf")],
)
def test_format_float_is_short(x, bits, text):
    x = to_f32(x) if bits == 32 else x
    assert format_float(x, bits) == text


@given(st.floats(width=32))
def test_f32_text_round_trips(x):
    (b,) = parse_buffers(format_binding("x", F32, [x]) + "\n")
    y = b.values[0]
    assert (math.isnan(x) and math.isnan(y)) or (y == x and math.copysign(1, y) == math.copysign(1, x))


@given(st.floats())
def test_f64_text_round_trips(x):
    (b,) = parse_buffers(format_binding("x", F64, [x]) + "\n")
    y = b.values[0]
    assert (math.isnan(x) and math.isnan(y)) or (y == x and math.copysign(1, y) == math.copysign(1, x))


@given(st.lists(st.integers(min_value=-(1 << 63), max_value=(1 << 63) - 1), max_size=8))
def test_int_text_round_trips(values):
    (b,) = parse_buffers(format_binding("v", I64, values))
    assert list(b.values) == values


def test_format_buffers_follows_order():
    text = format_buffers({"c": [3], "a": [1]}, {"a": I32, "c": I32}, order=["a", "c", "missing"])
    assert text == "a:i32:1\nc:i32:3\n"
