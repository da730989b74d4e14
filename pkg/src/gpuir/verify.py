"""Structural checks over :mod:`gpuir.ir` modules."""

from __future__ import annotations

from dataclasses import dataclass

from .ir import (
    ATOMIC_OPS,
    FCMP_PREDS,
    I1,
    ICMP_PREDS,
    INT_BINOPS,
    FLOAT_BINOPS,
    NVVM_TRIPLE,
    ORDERINGS,
    ArrayType,
    BasicBlock,
    Dialect,
    FloatConst,
    FloatType,
    Function,
    FunctionType,
    GlobalRef,
    Instruction,
    IntConst,
    IntType,
    MDString,
    MetadataNode,
    Module,
    PointerType,
    Register,
    Undef,
    VectorType,
    VoidType,
    ZeroInit,
    is_first_class,
    scalar_of,
    store_size,
    validate_type,
)


class IRError(Exception):
    """Raised when a query is made against a malformed module."""


@dataclass(frozen=True)
class Diagnostic:
    function: str | None
    block: str | None
    index: int | None
    message: str

    def __str__(self) -> str:
        where = []
        if self.function is not None:
            where.append(f"@{self.function}")
        if self.block is not None:
            where.append(f"%{self.block}")
        if self.index is not None:
            where.append(f"#{self.index}")
        loc = ":".join(where)
        return f"{loc}: {self.message}" if loc else self.message


# ------------------------------------------------------------
# kernel discovery
# ------------------------------------------------------------


def _annotation_entries(node: MetadataNode) -> tuple[GlobalRef | None, list[tuple[str, object]]]:
    items = node.contents
    target = items[0] if items and isinstance(items[0], GlobalRef) else None
    pairs = []
    rest = items[1:] if target is not None else items
    for i in range(0, len(rest) - 1, 2):
        key, val = rest[i], rest[i + 1]
        if isinstance(key, MDString):
            pairs.append((key.text, val))
    return target, pairs


def annotated_kernel_names(m: Module) -> list[str]:
    """Function names tagged ``"kernel"`` in ``nvvm.annotations``, in order, with repeats."""
    names = []
    for node in m.named_metadata.get("nvvm.annotations", []):
        target, pairs = _annotation_entries(node)
        if target is None:
            continue
        for key, val in pairs:
            if key == "kernel" and isinstance(val, IntConst) and val.value == 1:
                names.append(target.name)
    return names


def kernels_of(m: Module) -> list[Function]:
    """Kernel entry points of ``m``.

    NVVM modules name their kernels in ``nvvm.annotations``; the other
    dialects flag them on the function itself.
    """
    if m.dialect != Dialect.NVVM:
        return [f for f in m.functions if f.is_kernel]
    out: list[Function] = []
    for name in annotated_kernel_names(m):
        f = m.get_function(name)
        if f is None:
            raise IRError(f"nvvm.annotations names unknown function @{name}")
        if f not in out:
            out.append(f)
    return out


# ------------------------------------------------------------
# dominance
# ------------------------------------------------------------


def predecessors(fn: Function) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {b.label: [] for b in fn.blocks}
    for b in fn.blocks:
        for s in b.successors():
            if s in preds and b.label not in preds[s]:
                preds[s].append(b.label)
    return preds


def reverse_post_order(fn: Function) -> list[str]:
    labels = {b.label: b for b in fn.blocks}
    seen: set[str] = set()
    order: list[str] = []
    stack: list[tuple[str, int]] = [(fn.blocks[0].label, 0)]
    seen.add(fn.blocks[0].label)
    while stack:
        label, i = stack.pop()
        succs = [s for s in labels[label].successors() if s in labels]
        if i < len(succs):
            stack.append((label, i + 1))
            nxt = succs[i]
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, 0))
        else:
            order.append(label)
    order.reverse()
    return order


def immediate_dominators(fn: Function) -> dict[str, str]:
    """Cooper/Harvey/Kennedy iterative dominators over reachable blocks."""
    rpo = reverse_post_order(fn)
    index = {label: i for i, label in enumerate(rpo)}
    preds = predecessors(fn)
    entry = rpo[0]
    idom = {entry: entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for label in rpo[1:]:
            done = [p for p in preds[label] if p in idom]
            if not done:
                continue
            new = done[0]
            for p in done[1:]:
                new = intersect(p, new)
            if idom.get(label) != new:
                idom[label] = new
                changed = True
    return idom


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    """Whether block ``a`` dominates block ``b`` (reflexive)."""
    while True:
        if a == b:
            return True
        parent = idom.get(b)
        if parent is None or parent == b:
            return False
        b = parent


# ------------------------------------------------------------
# verifier
# ------------------------------------------------------------


class _Verifier:
    def __init__(self, m: Module):
        self.m = m
        self.diags: list[Diagnostic] = []

    def err(self, message: str, fn: str | None = None, block: str | None = None, index: int | None = None):
        self.diags.append(Diagnostic(fn, block, index, message))

    def run(self) -> list[Diagnostic]:
        m = self.m
        seen: set[str] = set()
        for g in m.global_variables:
            if g.name in seen:
                self.err(f"duplicate symbol @{g.name}")
            seen.add(g.name)
            reason = validate_type(g.type)
            if reason:
                self.err(f"global @{g.name}: {reason}")
            init = g.initializer
            if init is not None and init.type != g.type:
                self.err(f"global @{g.name}: initializer type {init.type} does not match {g.type}")
        for f in m.functions:
            if f.name in seen:
                self.err(f"duplicate symbol @{f.name}", f.name)
            seen.add(f.name)
        self._check_dialect()
        for f in m.functions:
            self._check_function(f)
        self._check_metadata()
        return self.diags

    # -- module level --------------------------------------------------

    def _check_dialect(self) -> None:
        m = self.m
        if m.dialect == Dialect.NVVM:
            if m.target_triple != NVVM_TRIPLE:
                self.err(f"NVVM module must have triple {NVVM_TRIPLE!r}, got {m.target_triple!r}")
            names = annotated_kernel_names(m)
            seen: set[str] = set()
            for name in names:
                f = m.get_function(name)
                if f is None:
                    self.err(f"nvvm.annotations names unknown function @{name}")
                    continue
                if name in seen:
                    self.err(f"function @{name} annotated as kernel more than once", name)
                seen.add(name)
                if not isinstance(f.ret_type, VoidType):
                    self.err("kernel must return void", name)
                if f.is_declaration:
                    self.err("kernel annotation names a declaration", name)
            for f in m.functions:
                if f.is_kernel:
                    self.err("NVVM functions are marked kernels only through nvvm.annotations", f.name)
            return
        if "nvvm.annotations" in m.named_metadata:
            self.err(f"nvvm.annotations is not allowed in {m.dialect.value} dialect")
        for f in m.functions:
            if not f.is_kernel:
                continue
            if not isinstance(f.ret_type, VoidType):
                self.err("kernel must return void", f.name)
            if f.is_declaration:
                self.err("kernel must have a body", f.name)
            for key in ("kernel_arg_addr_space", "kernel_arg_type"):
                node = f.get_metadata(key)
                if node is None:
                    self.err(f"kernel is missing {key} metadata", f.name)
                elif len(node.contents) != len(f.params):
                    self.err(
                        f"{key} has {len(node.contents)} entries for {len(f.params)} parameters", f.name
                    )

    def _check_metadata(self) -> None:
        def walk(node: MetadataNode, where: str | None, path: tuple[int, ...]) -> None:
            if id(node) in path:
                self.err("metadata node refers to itself", where)
                return
            for item in node.contents:
                if isinstance(item, GlobalRef):
                    expected = self.m.symbol_type(item.name)
                    if expected is None:
                        self.err(f"metadata refers to unknown symbol @{item.name}", where)
                    elif expected != item.type:
                        self.err(f"metadata reference @{item.name} has type {item.type}, expected {expected}", where)
                elif isinstance(item, MetadataNode):
                    walk(item, where, path + (id(node),))

        for nodes in self.m.named_metadata.values():
            for node in nodes:
                walk(node, None, ())
        for f in self.m.functions:
            for _, node in f.metadata:
                walk(node, f.name, ())

    # -- function level ------------------------------------------------

    def _check_function(self, f: Function) -> None:
        for t in (f.ret_type, *[p.type for p in f.params]):
            reason = validate_type(t)
            if reason:
                self.err(reason, f.name)
        for p in f.params:
            if isinstance(p.type, PointerType) and isinstance(p.type.pointee, FunctionType) and (
                f.is_kernel or f.name in annotated_kernel_names(self.m)
            ):
                self.err("kernel parameter points to a function type", f.name)
        if f.is_declaration:
            return

        defs: dict[str, tuple[str | None, int, Register]] = {}
        for p in f.params:
            if p.name is None:
                self.err("parameters of a definition must be named", f.name)
                continue
            if p.name in defs:
                self.err(f"SSA violation: %{p.name} defined more than once", f.name)
            defs[p.name] = (None, -1, Register(p.name, p.type))

        labels: set[str] = set()
        for b in f.blocks:
            if b.label in labels:
                self.err(f"duplicate block label %{b.label}", f.name, b.label)
            labels.add(b.label)
            if not b.instructions:
                self.err("empty block", f.name, b.label)
                continue
            for i, inst in enumerate(b.instructions):
                last = i == len(b.instructions) - 1
                if inst.is_terminator and not last:
                    self.err(f"terminator {inst.opcode} in the middle of a block", f.name, b.label, i)
                if last and not inst.is_terminator:
                    self.err(f"block %{b.label} does not end with a terminator", f.name, b.label, i)
                if inst.result is not None:
                    name = inst.result.name
                    if name in defs:
                        self.err(f"SSA violation: %{name} defined more than once", f.name, b.label, i)
                    else:
                        defs[name] = (b.label, i, inst.result)

        for b in f.blocks:
            for s in b.successors():
                if s not in labels:
                    self.err(f"branch to unknown block %{s}", f.name, b.label, len(b.instructions) - 1)
        if self.diags_for(f.name):
            return

        preds = predecessors(f)
        if preds[f.blocks[0].label]:
            self.err("entry block must not have predecessors", f.name, f.blocks[0].label)
            return
        idom = immediate_dominators(f)

        for b in f.blocks:
            seen_non_phi = False
            for i, inst in enumerate(b.instructions):
                if inst.opcode == "phi":
                    if seen_non_phi:
                        self.err("phi after a non-phi instruction", f.name, b.label, i)
                    if sorted(inst.targets) != sorted(preds[b.label]):
                        self.err("phi incoming blocks do not match predecessors", f.name, b.label, i)
                else:
                    seen_non_phi = True
                self._check_inst(f, b, i, inst)
                self._check_uses(f, b, i, inst, defs, idom)

    def diags_for(self, fn: str) -> bool:
        return any(d.function == fn for d in self.diags)

    def _check_uses(self, f, b: BasicBlock, i: int, inst: Instruction, defs, idom) -> None:
        for k, op in enumerate(inst.operands):
            if isinstance(op, GlobalRef):
                expected = self.m.symbol_type(op.name)
                if expected is None:
                    self.err(f"unknown global @{op.name}", f.name, b.label, i)
                elif expected != op.type:
                    self.err(f"@{op.name} used as {op.type}, declared {expected}", f.name, b.label, i)
                continue
            if isinstance(op, ZeroInit):
                self.err("zeroinitializer is only valid as a global initializer", f.name, b.label, i)
                continue
            if not isinstance(op, Register):
                continue
            d = defs.get(op.name)
            if d is None:
                self.err(f"use of undefined value %{op.name}", f.name, b.label, i)
                continue
            dblock, dindex, dreg = d
            if dreg.type != op.type:
                self.err(f"%{op.name} used as {op.type} but defined as {dreg.type}", f.name, b.label, i)
            if dblock is None or b.label not in idom:
                continue
            if inst.opcode == "phi":
                if k >= len(inst.targets):
                    continue
                pred = inst.targets[k]
                if pred in idom and not dominates(idom, dblock, pred):
                    self.err(f"%{op.name} does not dominate incoming edge from %{pred}", f.name, b.label, i)
            elif dblock == b.label:
                if dindex >= i:
                    self.err(f"%{op.name} used before its definition", f.name, b.label, i)
            elif not dominates(idom, dblock, b.label):
                self.err(f"%{op.name} does not dominate its use", f.name, b.label, i)

    def _check_inst(self, f: Function, b: BasicBlock, i: int, inst: Instruction) -> None:
        def bad(msg: str) -> None:
            self.err(f"{inst.opcode}: {msg}", f.name, b.label, i)

        op = inst.opcode
        ops = inst.operands
        res = inst.result
        rt = res.type if res is not None else None
        for v in ops:
            if isinstance(v, (IntConst, FloatConst, Undef)):
                reason = validate_type(v.type)
                if reason:
                    bad(reason)
                    return
            if isinstance(v, IntConst) and not isinstance(v.type, IntType):
                bad("integer constant with non-integer type")
                return
            if isinstance(v, FloatConst) and not isinstance(v.type, FloatType):
                bad("float constant with non-float type")
                return
        if rt is not None:
            reason = validate_type(rt)
            if reason:
                bad(reason)
                return
            if not is_first_class(rt):
                bad(f"result type {rt} cannot be held in a register")
                return

        def need_result(flag: bool = True) -> bool:
            if flag and res is None:
                bad("missing result")
                return False
            if not flag and res is not None:
                bad("instruction produces no value")
                return False
            return True

        def arity(n: int) -> bool:
            if len(ops) != n:
                bad(f"expected {n} operands, got {len(ops)}")
                return False
            return True

        if op in INT_BINOPS or op in FLOAT_BINOPS:
            if not (need_result() and arity(2)):
                return
            want = IntType if op in INT_BINOPS else FloatType
            if ops[0].type != ops[1].type or ops[0].type != rt:
                bad("operand and result types must match")
            elif not isinstance(scalar_of(rt), want):
                bad(f"operands must be {'integer' if want is IntType else 'floating point'}")
        elif op in ("icmp", "fcmp"):
            if not (need_result() and arity(2)):
                return
            preds = ICMP_PREDS if op == "icmp" else FCMP_PREDS
            if inst.pred not in preds:
                bad(f"unknown predicate {inst.pred!r}")
            if ops[0].type != ops[1].type:
                bad("operand types differ")
            t = ops[0].type
            ok = isinstance(t, (IntType, PointerType)) if op == "icmp" else isinstance(t, FloatType)
            if not ok:
                bad(f"cannot compare {t}")
            if rt != I1:
                bad("result must be i1")
        elif op == "load":
            if not (need_result() and arity(1)):
                return
            pt = ops[0].type
            if not isinstance(pt, PointerType):
                bad("operand is not a pointer")
            elif pt.pointee != rt:
                bad(f"loading {rt} through {pt}")
        elif op == "store":
            if not (need_result(False) and arity(2)):
                return
            pt = ops[1].type
            if not isinstance(pt, PointerType):
                bad("address is not a pointer")
            elif pt.pointee != ops[0].type:
                bad(f"storing {ops[0].type} through {pt}")
        elif op == "getelementptr":
            if not need_result() or not ops:
                if res is not None:
                    bad("missing base pointer")
                return
            pt = ops[0].type
            if not isinstance(pt, PointerType):
                bad("base is not a pointer")
                return
            if len(ops) < 2:
                bad("at least one index required")
                return
            cur = pt.pointee
            for idx in ops[1:]:
                if not isinstance(idx.type, IntType):
                    bad("indices must be integers")
                    return
            for idx in ops[2:]:
                if isinstance(cur, (ArrayType, VectorType)):
                    cur = cur.elem
                else:
                    bad(f"cannot index into {cur}")
                    return
            if rt != PointerType(cur, pt.addr_space):
                bad(f"result type {rt} does not match computed {PointerType(cur, pt.addr_space)}")
        elif op == "call":
            self._check_call(inst, bad)
        elif op == "atomicrmw":
            if not (need_result() and arity(2)):
                return
            if inst.pred not in ATOMIC_OPS:
                bad(f"unknown atomic operation {inst.pred!r}")
            if inst.ordering not in ORDERINGS:
                bad(f"unknown ordering {inst.ordering!r}")
            pt = ops[0].type
            if not isinstance(pt, PointerType):
                bad("operand 0 is not a pointer")
            elif not isinstance(ops[1].type, IntType) or pt.pointee != ops[1].type:
                bad("operand 1 must be an integer of the pointee width")
            elif rt != ops[1].type:
                bad("result type must match the value type")
        elif op == "select":
            if not (need_result() and arity(3)):
                return
            if ops[0].type != I1:
                bad("condition must be i1")
            if not (ops[1].type == ops[2].type == rt):
                bad("arm and result types must match")
        elif op == "phi":
            if not need_result():
                return
            if not ops:
                bad("phi needs incoming values")
            if len(ops) != len(inst.targets):
                bad("incoming values and blocks differ in number")
            if any(v.type != rt for v in ops):
                bad("incoming value types must match the result")
        elif op == "br":
            if not need_result(False):
                return
            if not ((len(ops) == 0 and len(inst.targets) == 1) or (len(ops) == 1 and len(inst.targets) == 2)):
                bad("expected 'br label' or 'br i1, label, label'")
            elif ops and ops[0].type != I1:
                bad("condition must be i1")
        elif op == "ret":
            if not need_result(False):
                return
            if isinstance(f.ret_type, VoidType):
                if ops:
                    bad("void function returns a value")
            elif len(ops) != 1 or ops[0].type != f.ret_type:
                bad(f"must return {f.ret_type}")
        elif op in ("sext", "zext", "trunc", "fptosi", "sitofp", "bitcast"):
            if not (need_result() and arity(1)):
                return
            src = ops[0].type
            if op in ("sext", "zext", "trunc"):
                if not (isinstance(src, IntType) and isinstance(rt, IntType)):
                    bad("integer operands required")
                elif op == "trunc" and not rt.bits < src.bits:
                    bad("destination must be narrower")
                elif op != "trunc" and not rt.bits > src.bits:
                    bad("destination must be wider")
            elif op == "fptosi":
                if not (isinstance(src, FloatType) and isinstance(rt, IntType)):
                    bad("float to integer required")
            elif op == "sitofp":
                if not (isinstance(src, IntType) and isinstance(rt, FloatType)):
                    bad("integer to float required")
            else:
                if isinstance(src, PointerType) or isinstance(rt, PointerType):
                    if not (isinstance(src, PointerType) and isinstance(rt, PointerType)):
                        bad("cannot bitcast between pointer and non-pointer")
                    elif src.addr_space != rt.addr_space:
                        bad("bitcast cannot change address space")
                elif store_size(src) != store_size(rt) or (
                    isinstance(src, IntType) and src.bits == 1
                ):
                    bad("bitcast requires types of equal size")
        elif op == "extractelement":
            if not (need_result() and arity(2)):
                return
            vt = ops[0].type
            if not isinstance(vt, VectorType):
                bad("operand 0 is not a vector")
            elif vt.elem != rt:
                bad("result must be the element type")
            if not isinstance(ops[1].type, IntType):
                bad("index must be an integer")
            elif isinstance(ops[1], IntConst) and isinstance(vt, VectorType) and not 0 <= ops[1].value < vt.lanes:
                bad("constant lane index out of range")
        elif op == "alloca":
            if not (need_result() and arity(0)):
                return
            if not isinstance(rt, PointerType) or rt.addr_space != 0:
                bad("result must be a private pointer")
        else:
            bad("unknown opcode")

    def _check_call(self, inst: Instruction, bad) -> None:
        callee = self.m.get_function(inst.callee or "")
        if callee is None:
            bad(f"call to undeclared function @{inst.callee}")
            return
        if callee.is_kernel:
            bad("kernels cannot be called")
        ret = inst.type if inst.type is not None else VoidType()
        if ret != callee.ret_type:
            bad(f"return type {ret} does not match @{callee.name} returning {callee.ret_type}")
        if isinstance(ret, VoidType):
            if inst.result is not None:
                bad("void call cannot have a result")
        elif inst.result is not None and inst.result.type != ret:
            bad("result type does not match the return type")
        params = [p.type for p in callee.params]
        args = [a.type for a in inst.operands]
        if params != args:
            bad(f"argument types ({', '.join(map(str, args))}) do not match @{callee.name}")


def verify_module(m: Module) -> list[Diagnostic]:
    """Return every invariant violation in ``m``; an empty list means well-formed."""
    return _Verifier(m).run()
