import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, buffers, corpus_module, fixture_module, load_ir
from gpuir.interp import (
    BufferBinding,
    DispatchConfig,
    LaunchError,
    Schedule,
    decode_values,
    differential_check,
    encode_values,
    launch,
)
from gpuir.ir import F32, F64, I32, I64, Dialect
from gpuir.parser import parse_module
from gpuir.translator import translate, translate_nvvm_to_spirv

ONE = DispatchConfig((1, 1, 1), (1, 1, 1))
SEEDS = [Schedule.seeded(s) for s in range(10)]
VECADD_IN = "a:i32:1,2,3\nb:i32:10,20,30\nc:i32:0,0,0\n"


def i32s(values):
    return BufferBinding("d", I32, values)


def all_dialects(m):
    spirv, _ = translate_nvvm_to_spirv(m)
    opencl, _ = translate(m)
    return {Dialect.NVVM: m, Dialect.SPIRV: spirv, Dialect.OPENCL: opencl}


@pytest.mark.parametrize("dialect", list(Dialect))
def test_vecadd_in_every_dialect(vecadd, dialect):
    m = all_dialects(vecadd)[dialect]
    r = launch(m, "vecadd", DispatchConfig((1, 1, 1), (3, 1, 1)), buffers(VECADD_IN))
    assert r.trap is None and r.authoritative
    # sequential oracle
    a, b = [1, 2, 3], [10, 20, 30]
    assert r.buffers["c"] == [a[i] + b[i] for i in range(3)] == [11, 22, 33]
    assert r.buffers["a"] == a and r.barrier_waves == 0


@pytest.mark.parametrize("sched", [Schedule.canonical()] + SEEDS, ids=str)
def test_counter_reaches_thread_count(sched):
    m = fixture_module("counter")
    for dialect_module in all_dialects(m).values():
        r = launch(dialect_module, "counter", DispatchConfig((1, 1, 1), (64, 1, 1)), [i32s([0])], sched)
        assert r.buffers["d"] == [64]


def test_commutative_atomics_are_schedule_independent():
    m = fixture_module("atomic_mix")
    cfg = DispatchConfig((2, 1, 1), (48, 1, 1))
    init = [0, 0, -1, 0, 0, 0, 0, -1, 0, 0]
    ref = launch(m, "mix", cfg, [i32s(init)])
    assert ref.trap is None
    for sched in SEEDS:
        assert launch(m, "mix", cfg, [i32s(init)], sched).raw == ref.raw
    # independent oracle for a few slots
    vals = [(t * 7919) & 0xFFFFFFFF for _ in range(2) for t in range(48)]
    signed = [v - (1 << 32) if v >= 1 << 31 else v for v in vals]
    d = ref.buffers["d"]
    total = sum(vals) & 0xFFFFFFFF
    assert d[0] == (total - (1 << 32) if total >= 1 << 31 else total)
    assert d[6] == max(0, *signed)
    assert d[9] == 96


def test_atomics_return_old_values():
    m = fixture_module("atomics_basic")
    for mod in all_dialects(m).values():
        r = launch(mod, "atomics", ONE, [BufferBinding("data", I32, [5, 9]), BufferBinding("old", I32, [0, 0, 0])])
        # add 1 -> 6, sub -1 -> 7, xchg slot 1 with 1
        assert r.buffers["data"] == [7, 1]
        assert r.buffers["old"] == [5, 6, 9]


@pytest.mark.parametrize("block", [2, 32, 64, 256])
def test_reduction_matches_sequential_sums(block):
    m = corpus_module("reduction")
    blocks = 3
    rng = random.Random(block)
    data = [rng.randint(-(1 << 31), (1 << 31) - 1) for _ in range(block * blocks)]
    binds = [BufferBinding("in", I32, data), BufferBinding("out", I32, [0] * blocks)]
    cfg = DispatchConfig((blocks, 1, 1), (block, 1, 1))
    r = launch(m, "reduce", cfg, binds)
    expected = []
    for b in range(blocks):
        s = sum(data[b * block:(b + 1) * block]) & 0xFFFFFFFF
        expected.append(s - (1 << 32) if s >= 1 << 31 else s)
    assert r.buffers["out"] == expected
    per_thread = 1 + block.bit_length() - 1
    assert r.waves_per_block == [per_thread] * blocks
    assert r.barrier_waves == per_thread * blocks
    out, _ = translate(m)
    assert differential_check(m, out, "reduce", cfg, binds).equal
    for sched in SEEDS[:3]:
        assert launch(out, "reduce", cfg, binds, sched).raw == r.raw


def test_launch_is_deterministic():
    m = fixture_module("atomic_mix")
    cfg = DispatchConfig((2, 1, 1), (16, 2, 1))
    a = launch(m, "mix", cfg, [i32s([0] * 10)], Schedule.seeded(7))
    b = launch(m, "mix", cfg, [i32s([0] * 10)], Schedule.seeded(7))
    assert a == b


LOCAL_COUNTER = """
target triple = "nvptx64-nvidia-cuda"

@scratch = internal addrspace(3) global [4 x i32] zeroinitializer, align 4

define void @bump(i32* %out) {
entry:
  %t = call i32 @llvm.nvvm.read.ptx.sreg.tid.x()
  %b = call i32 @llvm.nvvm.read.ptx.sreg.ctaid.x()
  %p = getelementptr inbounds [4 x i32], [4 x i32] addrspace(3)* @scratch, i64 0, i64 0
  %old = atomicrmw add i32 addrspace(3)* %p, i32 1 seq_cst
  call void @llvm.nvvm.barrier0()
  %z = icmp eq i32 %t, 0
  br i1 %z, label %w, label %done
w:
  %v = load i32, i32 addrspace(3)* %p, align 4
  %b64 = sext i32 %b to i64
  %q = getelementptr inbounds i32, i32* %out, i64 %b64
  store i32 %v, i32* %q, align 4
  br label %done
done:
  ret void
}

declare i32 @llvm.nvvm.read.ptx.sreg.tid.x()
declare i32 @llvm.nvvm.read.ptx.sreg.ctaid.x()
declare void @llvm.nvvm.barrier0()

!nvvm.annotations = !{!0}
!0 = !{void (i32*)* @bump, !"kernel", i32 1}
"""


def test_local_memory_is_zeroed_per_block():
    m = parse_module(LOCAL_COUNTER)
    r = launch(m, "bump", DispatchConfig((3, 1, 1), (5, 1, 1)), [BufferBinding("out", I32, [0, 0, 0])])
    assert r.buffers["out"] == [5, 5, 5]


# traps


def test_divergent_barrier_traps():
    r = launch(fixture_module("divergence"), "diverge", DispatchConfig((1, 1, 1), (4, 1, 1)), [i32s([0])])
    assert r.trap.kind == "barrier_divergence" and not r.authoritative


def test_split_barrier_traps():
    r = launch(fixture_module("split_barrier"), "split", DispatchConfig((1, 1, 1), (4, 1, 1)), [i32s([0])])
    assert r.trap.kind == "barrier_divergence"
    assert "@split:%a" in r.trap.message and "@split:%b" in r.trap.message


def test_uniform_exit_is_not_divergence():
    r = launch(fixture_module("divergence"), "diverge", DispatchConfig((1, 1, 1), (1, 1, 1)), [i32s([0])])
    assert r.trap is None


def test_out_of_bounds_store_reports_the_thread(vecadd):
    binds = buffers(VECADD_IN)
    r = launch(vecadd, "vecadd", DispatchConfig((1, 1, 1), (4, 1, 1)), binds)
    assert r.trap.kind == "oob"
    assert r.trap.thread == (3, 0, 0) and r.trap.block == (0, 0, 0)
    assert (r.trap.function, r.trap.label, r.trap.index) == ("vecadd", "entry", 3)
    # the first three threads completed before the trap
    assert r.buffers["c"] == [11, 22, 33]


def test_division_by_zero_traps():
    binds = [BufferBinding("in", I32, [5, 0]), BufferBinding("out", I32, [0, 0])]
    r = launch(fixture_module("divide"), "divide", DispatchConfig((1, 1, 1), (2, 1, 1)), binds)
    assert r.trap.kind == "div_by_zero" and r.trap.thread == (1, 0, 0)
    assert r.buffers["out"] == [20, 0]


MYSTERY = """
target triple = "nvptx64-nvidia-cuda"

define void @k(i32* %d) {
entry:
  %v = call i32 @mystery(i32 1)
  store i32 %v, i32* %d, align 4
  ret void
}

declare i32 @mystery(i32)

!nvvm.annotations = !{!0}
!0 = !{void (i32*)* @k, !"kernel", i32 1}
"""


def test_unknown_external_callee_traps():
    r = launch(parse_module(MYSTERY), "k", ONE, [i32s([0])])
    assert r.trap.kind == "unresolved_callee" and "mystery" in r.trap.message


def test_trap_text_names_the_locus(vecadd):
    r = launch(vecadd, "vecadd", DispatchConfig((1, 1, 1), (4, 1, 1)), buffers(VECADD_IN))
    assert str(r.trap).startswith("oob in block (0, 0, 0) thread (3, 0, 0) at @vecadd:%entry#3")


# request validation


@pytest.mark.parametrize(
    "grid, block, message",
    [
        ((1, 1, 1), (0, 1, 1), "block dims must be positive"),
        ((0, 1, 1), (1, 1, 1), "grid dims must be positive"),
        ((1, 1, 1), (1025, 1, 1), "threads per block"),
        ((1 << 11, 1 << 10, 1), (1, 1, 1), "blocks"),
    ],
)
def test_dispatch_config_validation(grid, block, message):
    with pytest.raises(ValueError, match=message):
        DispatchConfig(grid, block)


def test_dispatch_config_limits_are_inclusive():
    assert DispatchConfig((1 << 20, 1, 1), (32, 32, 1)).threads_per_block == 1024


def test_missing_binding(vecadd):
    with pytest.raises(LaunchError, match="'c'"):
        launch(vecadd, "vecadd", ONE, buffers("a:i32:1\nb:i32:1\n"))


def test_unknown_binding(vecadd):
    with pytest.raises(LaunchError, match="zz"):
        launch(vecadd, "vecadd", ONE, buffers(VECADD_IN + "zz:i32:1\n"))


def test_element_type_must_match(vecadd):
    with pytest.raises(LaunchError):
        launch(vecadd, "vecadd", ONE, buffers("a:f32:1\nb:i32:1\nc:i32:0\n"))


def test_unknown_kernel(vecadd):
    with pytest.raises(LaunchError):
        launch(vecadd, "nope", ONE, buffers(VECADD_IN))


def test_scalar_argument_takes_one_value():
    m = fixture_module("scalar_arg")
    r = launch(m, "fill", DispatchConfig((1, 1, 1), (3, 1, 1)),
               [BufferBinding("out", I32, [0, 0, 0]), BufferBinding("v", I32, [7])])
    assert r.buffers["out"] == [7, 7, 7]
    with pytest.raises(LaunchError):
        launch(m, "fill", ONE, [BufferBinding("out", I32, [0]), BufferBinding("v", I32, [7, 8])])


@pytest.mark.parametrize("text", ["canonical", "seed:0", "seed:123"])
def test_schedule_parse_round_trips(text):
    assert str(Schedule.parse(text)) == text


@pytest.mark.parametrize("text", ["random", "seed:", "seed:x"])
def test_schedule_parse_rejects(text):
    with pytest.raises(ValueError):
        Schedule.parse(text)


@pytest.mark.parametrize(
    "t, values",
    [(I32, [0, -1, 2**31 - 1, -(2**31)]), (I64, [2**63 - 1, -5]), (F32, [1.5, -0.0, float("inf")]), (F64, [0.1, 1e300])],
)
def test_encode_decode(t, values):
    assert decode_values(t, encode_values(t, values)) == values


# differential checks


def test_vecadd_source_and_translation_agree(vecadd):
    out, _ = translate(vecadd)
    assert differential_check(vecadd, out, "vecadd", DispatchConfig((1, 1, 1), (3, 1, 1)), buffers(VECADD_IN)).equal


def test_corrupted_translation_is_caught(vecadd):
    bad = load_ir(FIXTURES / "vecadd_corrupted.ocl.ll")
    d = differential_check(vecadd, bad, "vecadd", DispatchConfig((1, 1, 1), (3, 1, 1)), buffers(VECADD_IN))
    assert d.status == "mismatch"
    assert (d.buffer, d.index, d.src_value, d.dst_value) == ("c", 1, 22, 0)
    assert str(d) == "mismatch in c[1]: source 22, translated 0"


def test_empty_kernel_is_equal_to_itself():
    m = fixture_module("empty")
    assert differential_check(m, m, "nothing", DispatchConfig((2, 1, 1), (4, 1, 1)), []).equal


def test_traps_are_reported_apart_from_mismatches(vecadd):
    out, _ = translate(vecadd)
    d = differential_check(vecadd, out, "vecadd", DispatchConfig((1, 1, 1), (4, 1, 1)), buffers(VECADD_IN))
    assert d.status == "trap" and d.src_trap.kind == "oob" and d.dst_trap.kind == "oob"


# bounds safety against adversarial indices

PROBE = """
target triple = "nvptx64-nvidia-cuda"

define void @probe(i32* %a, i32* %out, i64 %k, i32 %wide) {
entry:
  %t = call i32 @llvm.nvvm.read.ptx.sreg.tid.x()
  %t64 = sext i32 %t to i64
  %i = add i64 %t64, %k
  %p = getelementptr inbounds i32, i32* %a, i64 %i
  %w = icmp ne i32 %wide, 0
  br i1 %w, label %wide_load, label %narrow_load
wide_load:
  %pw = bitcast i32* %p to i64*
  %x = load i64, i64* %pw, align 4
  %xt = trunc i64 %x to i32
  br label %join
narrow_load:
  %y = load i32, i32* %p, align 4
  br label %join
join:
  %v = phi i32 [ %xt, %wide_load ], [ %y, %narrow_load ]
  %q = getelementptr inbounds i32, i32* %out, i64 %t64
  store i32 %v, i32* %q, align 4
  ret void
}

declare i32 @llvm.nvvm.read.ptx.sreg.tid.x()

!nvvm.annotations = !{!0}
!0 = !{void (i32*, i32*, i64, i32)* @probe, !"kernel", i32 1}
"""


@settings(max_examples=150, deadline=None)
@given(
    n=st.integers(1, 12),
    threads=st.integers(1, 12),
    k=st.integers(-20, 20) | st.sampled_from([2**62, -(2**63), 2**63 - 1]),
    wide=st.booleans(),
)
def test_every_access_is_bounds_checked(n, threads, k, wide):
    m = parse_module(PROBE)
    binds = [
        BufferBinding("a", I32, list(range(100, 100 + n))),
        BufferBinding("out", I32, [0] * threads),
        BufferBinding("k", I64, [k]),
        BufferBinding("wide", I32, [int(wide)]),
    ]
    r = launch(m, "probe", DispatchConfig((1, 1, 1), (threads, 1, 1)), binds)
    width = 2 if wide else 1
    bad = [t for t in range(threads) if not (0 <= t + k and t + k + width <= n)]
    if bad:
        assert r.trap is not None and r.trap.kind == "oob"
        assert r.trap.thread == (bad[0], 0, 0)
        assert r.buffers["a"] == list(range(100, 100 + n))
    else:
        assert r.trap is None
        assert r.buffers["out"] == [100 + t + k for t in range(threads)]
