"""Device-independent instructions must come through translation untouched.

Random device-independent modules get device-dependent instructions
sprinkled into every block; after translation, walking the input and output
side by side must find each device-independent instruction unchanged and in
its original order, with every device-dependent one replaced by its
expansion.
"""

import random

import pytest

from irgen import ModuleGenerator
from gpuir.builtins import BUILTIN_TABLE
from gpuir.ir import F32, F64, I32, VOID, Dialect, FloatConst, Function, Instruction, IntConst, Param, PointerType, Register
from gpuir.translator import DEVICE_DEPENDENT, DEVICE_INDEPENDENT, classify_instruction, translate_nvvm_to_spirv
from gpuir.verify import verify_module

INDEX_NAMES = sorted(n for n, m in BUILTIN_TABLE.items() if m.kind.is_index)
MATH = {
    "llvm.sqrt.f32": (F32, 1),
    "llvm.sqrt.f64": (F64, 1),
    "llvm.fabs.f32": (F32, 1),
    "llvm.fabs.f64": (F64, 1),
    "llvm.fma.f32": (F32, 3),
    "llvm.fma.f64": (F64, 3),
}


class Injector:
    def __init__(self, m, rng):
        self.m = m
        self.rng = rng
        self.n = 0

    def declare(self, name, ret, params):
        if self.m.get_function(name) is None:
            self.m.functions.append(Function(name, ret, [Param(None, t) for t in params]))

    def fresh(self, t):
        self.n += 1
        return Register(f"dd{self.n}", t)

    def make(self, fn):
        rng = self.rng
        i32_ptrs = [Register(p.name, p.type) for p in fn.params
                    if isinstance(p.type, PointerType) and p.type.pointee == I32]
        kind = rng.choice(["index", "index", "barrier", "math", "atomic"])
        if kind == "atomic" and i32_ptrs:
            op = rng.choice(["add", "sub", "xchg", "and", "or", "xor", "min", "max"])
            return Instruction("atomicrmw", (rng.choice(i32_ptrs), IntConst(rng.randint(-9, 9), I32)),
                               self.fresh(I32), pred=op, ordering="seq_cst")
        if kind == "barrier":
            self.declare("llvm.nvvm.barrier0", VOID, [])
            return Instruction("call", (), None, callee="llvm.nvvm.barrier0", type=None)
        if kind == "math":
            name = rng.choice(sorted(MATH))
            t, arity = MATH[name]
            self.declare(name, t, [t] * arity)
            args = tuple(FloatConst(1.5, t) for _ in range(arity))
            return Instruction("call", args, self.fresh(t), callee=name, type=t)
        name = rng.choice(INDEX_NAMES)
        self.declare(name, I32, [])
        return Instruction("call", (), self.fresh(I32), callee=name, type=I32, flags=("tail",) * rng.randint(0, 1))

    def inject(self):
        for fn in list(self.m.functions):
            for b in fn.blocks:
                insts = b.instructions
                first = sum(1 for i in insts if i.opcode == "phi")
                for _ in range(self.rng.randint(0, 3)):
                    pos = self.rng.randint(first, len(insts) - 1)
                    insts.insert(pos, self.make(fn))


def expansion_size(inst):
    if inst.opcode == "call" and BUILTIN_TABLE[inst.callee].kind.is_index:
        return 3
    return 1


def check_passthrough(src, dst):
    compared = 0
    for f_src in src.functions:
        f_dst = dst.get_function(f_src.name)
        if f_src.is_declaration:
            continue
        assert [b.label for b in f_src.blocks] == [b.label for b in f_dst.blocks]
        for b_src, b_dst in zip(f_src.blocks, f_dst.blocks):
            out = iter(b_dst.instructions)
            for inst in b_src.instructions:
                if classify_instruction(inst) == DEVICE_DEPENDENT:
                    replaced = [next(out) for _ in range(expansion_size(inst))]
                    assert replaced[-1].result == inst.result
                else:
                    assert next(out) == inst
                    compared += 1
            assert next(out, None) is None
    return compared


def generated_case(seed):
    m = ModuleGenerator(seed).module(dialect=Dialect.NVVM, device_independent_only=True)
    Injector(m, random.Random(seed)).inject()
    assert verify_module(m) == []
    return m


@pytest.mark.parametrize("start", range(0, 500, 100))
def test_device_independent_instructions_pass_through(start):
    for seed in range(start, start + 100):
        m = generated_case(seed)
        out, report = translate_nvvm_to_spirv(m)
        check_passthrough(m, out)
        dependent = sum(classify_instruction(i) == DEVICE_DEPENDENT for f in m.functions for _b, _i, i in f.instructions())
        assert report.total_rewrites == dependent


def test_generated_cases_contain_both_kinds():
    kinds = set()
    for seed in range(50):
        m = generated_case(seed)
        kinds |= {classify_instruction(i) for f in m.functions for _b, _i, i in f.instructions()}
    assert kinds == {DEVICE_DEPENDENT, DEVICE_INDEPENDENT}


def test_vecadd_passthrough(vecadd):
    out, _ = translate_nvvm_to_spirv(vecadd)
    assert check_passthrough(vecadd, out) == 9
