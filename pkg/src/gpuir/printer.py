"""Deterministic text emission for modules.

NVVM and OpenCL modules print as re-parseable ``.ll`` text.  The SPIR-V
stage only exists in memory; :func:`print_module` renders it as a
line-oriented ``.spvdump`` listing that the parser deliberately rejects.
"""

from __future__ import annotations

from .ir import (
    BasicBlock,
    Dialect,
    Function,
    GlobalRef,
    GlobalVariable,
    Instruction,
    IntConst,
    MDString,
    MetadataNode,
    Module,
    VoidType,
)

SPIRV_DUMP_HEADER = "; SPIR-V dialect dump -- inspection only, not re-parseable"


class _MetadataNumbering:
    """Dense ``!0``, ``!1``, ... numbering in first-visit order.

    Structurally equal nodes share one number.
    """

    def __init__(self) -> None:
        self.ids: dict[MetadataNode, int] = {}
        self.order: list[MetadataNode] = []

    def visit(self, node: MetadataNode) -> int:
        if node in self.ids:
            return self.ids[node]
        self.ids[node] = len(self.order)
        self.order.append(node)
        for item in node.contents:
            if isinstance(item, MetadataNode):
                self.visit(item)
        return self.ids[node]

    def item(self, item) -> str:
        if isinstance(item, MDString):
            return f'!"{item.text}"'
        if isinstance(item, MetadataNode):
            return f"!{self.ids[item]}"
        if isinstance(item, (IntConst, GlobalRef)):
            return f"{item.type} {item}"
        raise TypeError(f"unexpected metadata item {item!r}")

    def lines(self) -> list[str]:
        return [
            f"!{i} = !{{{', '.join(self.item(x) for x in node.contents)}}}"
            for i, node in enumerate(self.order)
        ]


def format_instruction(inst: Instruction) -> str:
    """One instruction in LLVM assembly syntax, without indentation."""
    op = inst.opcode
    ops = inst.operands
    lhs = f"{inst.result} = " if inst.result is not None else ""

    def tv(v) -> str:
        return f"{v.type} {v}"

    def align() -> str:
        return f", align {inst.align}" if inst.align is not None else ""

    flags = "".join(f" {f}" for f in inst.flags)
    if op in ("add", "sub", "mul", "sdiv", "udiv", "and", "or", "xor", "shl", "lshr", "ashr",
              "fadd", "fsub", "fmul", "fdiv"):
        body = f"{op}{flags} {ops[0].type} {ops[0]}, {ops[1]}"
    elif op == "icmp":
        body = f"icmp {inst.pred} {ops[0].type} {ops[0]}, {ops[1]}"
    elif op == "fcmp":
        body = f"fcmp{flags} {inst.pred} {ops[0].type} {ops[0]}, {ops[1]}"
    elif op == "load":
        vol = " volatile" if inst.volatile else ""
        body = f"load{vol} {inst.result.type}, {tv(ops[0])}{align()}"
    elif op == "store":
        vol = " volatile" if inst.volatile else ""
        body = f"store{vol} {tv(ops[0])}, {tv(ops[1])}{align()}"
    elif op == "getelementptr":
        idx = "".join(f", {tv(i)}" for i in ops[1:])
        body = f"getelementptr{flags} {ops[0].type.pointee}, {tv(ops[0])}{idx}"
    elif op == "call":
        prefix = "tail " if "tail" in inst.flags else ""
        cc = f" {inst.cconv}" if inst.cconv else ""
        ret = inst.type if inst.type is not None else VoidType()
        args = ", ".join(tv(a) for a in ops)
        body = f"{prefix}call{cc} {ret} @{inst.callee}({args})"
    elif op == "atomicrmw":
        vol = " volatile" if inst.volatile else ""
        body = f"atomicrmw{vol} {inst.pred} {tv(ops[0])}, {tv(ops[1])} {inst.ordering}{align()}"
    elif op == "select":
        body = f"select {tv(ops[0])}, {tv(ops[1])}, {tv(ops[2])}"
    elif op == "phi":
        incoming = ", ".join(f"[ {v}, %{label} ]" for v, label in zip(ops, inst.targets))
        body = f"phi {inst.result.type} {incoming}"
    elif op == "br":
        if ops:
            body = f"br {tv(ops[0])}, label %{inst.targets[0]}, label %{inst.targets[1]}"
        else:
            body = f"br label %{inst.targets[0]}"
    elif op == "ret":
        body = f"ret {tv(ops[0])}" if ops else "ret void"
    elif op in ("sext", "zext", "trunc", "fptosi", "sitofp", "bitcast"):
        body = f"{op} {tv(ops[0])} to {inst.result.type}"
    elif op == "extractelement":
        body = f"extractelement {tv(ops[0])}, {tv(ops[1])}"
    elif op == "alloca":
        body = f"alloca {inst.result.type.pointee}{align()}"
    else:
        raise ValueError(f"cannot print opcode {op!r}")
    return lhs + body


def _global_line(g: GlobalVariable) -> str:
    parts = [f"@{g.name} ="]
    parts.extend(g.linkage)
    if g.addr_space:
        parts.append(f"addrspace({int(g.addr_space)})")
    parts.append("constant" if g.constant else "global")
    parts.append(str(g.type))
    if g.initializer is not None:
        parts.append(str(g.initializer))
    text = " ".join(parts)
    if g.align is not None:
        text += f", align {g.align}"
    return text


def _params(fn: Function) -> str:
    out = []
    for p in fn.params:
        words = [str(p.type), *p.attrs]
        if p.name is not None:
            words.append(f"%{p.name}")
        out.append(" ".join(words))
    return ", ".join(out)


def _header(fn: Function, numbering: _MetadataNumbering | None) -> str:
    words = ["declare" if fn.is_declaration else "define", *fn.keywords]
    if fn.is_kernel:
        words.append("spir_kernel")
    elif fn.cconv:
        words.append(fn.cconv)
    words.append(f"{fn.ret_type} @{fn.name}({_params(fn)})")
    if numbering is not None:
        for key, node in fn.metadata:
            words.append(f"!{key} !{numbering.ids[node]}")
    return " ".join(words)


def _block_lines(b: BasicBlock) -> list[str]:
    return [f"{b.label}:"] + [f"  {format_instruction(i)}" for i in b.instructions]


def print_module(m: Module) -> str:
    """Render ``m`` as text; equal modules always produce identical output."""
    if m.dialect == Dialect.SPIRV:
        return print_spirv_dump(m)
    numbering = _MetadataNumbering()
    for fn in m.functions:
        for _, node in fn.metadata:
            numbering.visit(node)
    named = sorted(m.named_metadata.items())
    for _, nodes in named:
        for node in nodes:
            numbering.visit(node)

    sections: list[list[str]] = [[f'target triple = "{m.target_triple}"']]
    if m.global_variables:
        sections.append([_global_line(g) for g in m.global_variables])
    for fn in m.functions:
        if fn.is_declaration:
            sections.append([_header(fn, numbering)])
        else:
            lines = [_header(fn, numbering) + " {"]
            for b in fn.blocks:
                lines.extend(_block_lines(b))
            lines.append("}")
            sections.append(lines)
    meta: list[str] = []
    for name, nodes in named:
        refs = ", ".join(f"!{numbering.ids[n]}" for n in nodes)
        meta.append(f"!{name} = !{{{refs}}}")
    meta.extend(numbering.lines())
    if meta:
        sections.append(meta)
    return "\n\n".join("\n".join(s) for s in sections) + "\n"


def print_spirv_dump(m: Module) -> str:
    """Human-readable listing of a SPIR-V dialect module."""
    from .builtins import builtin_variable_of

    lines = [SPIRV_DUMP_HEADER, f"OpModule triple={m.target_triple}"]
    for g in m.global_variables:
        bv = builtin_variable_of(g.name)
        if bv is not None:
            lines.append(f"OpVariable @{g.name} : {g.pointer_type} BuiltIn {bv}")
        else:
            lines.append(f"OpVariable {_global_line(g)}")
    for fn in m.functions:
        if fn.is_kernel:
            lines.append(f"OpEntryPoint Kernel @{fn.name}")
    for fn in m.functions:
        if fn.is_declaration:
            lines.append(f"OpFunctionDecl {fn.ret_type} @{fn.name}({_params(fn)})")
            continue
        lines.append(f"OpFunction {fn.ret_type} @{fn.name}({_params(fn)})")
        for key, node in fn.metadata:
            items = ", ".join(
                f'"{x.text}"' if isinstance(x, MDString) else str(getattr(x, "value", x)) for x in node.contents
            )
            lines.append(f"  OpDecorate {key} [{items}]")
        for b in fn.blocks:
            lines.append(f"  OpLabel %{b.label}")
            for inst in b.instructions:
                lines.append(f"    {format_instruction(inst)}")
        lines.append("OpFunctionEnd")
    return "\n".join(lines) + "\n"
