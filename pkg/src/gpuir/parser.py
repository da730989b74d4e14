"""Parser for the textual IR subset.

The accepted grammar is a frozen slice of LLVM assembly: ``target triple``,
global variables, ``declare``/``define``, the opcodes listed in
:data:`gpuir.ir.OPCODES`, named metadata and numbered metadata nodes, and
``!key !N`` attachments on function definitions.  Anything else is reported
as a :class:`ParseError` with its source location.  Errors resynchronise at
the next line, so one call reports every independent problem.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .ir import (
    ATOMIC_OPS,
    FCMP_PREDS,
    I1,
    ICMP_PREDS,
    NVVM_TRIPLE,
    OPCODES,
    ORDERINGS,
    AddressSpace,
    ArrayType,
    BasicBlock,
    Dialect,
    FloatConst,
    FloatType,
    Function,
    FunctionType,
    GlobalRef,
    GlobalVariable,
    Instruction,
    IntConst,
    IntType,
    MDString,
    MetadataNode,
    Module,
    Param,
    PointerType,
    Register,
    TypeRef,
    Undef,
    Value,
    VectorType,
    VoidType,
    ZeroInit,
    validate_type,
)
from .verify import verify_module

LINKAGE_WORDS = frozenset(
    {"internal", "external", "private", "dso_local", "dso_preemptable", "hidden", "protected",
     "linkonce_odr", "weak_odr", "local_unnamed_addr", "unnamed_addr"}
)
CALLING_CONVENTIONS = frozenset({"spir_kernel", "spir_func", "ptx_kernel", "ptx_device"})
PARAM_ATTRS = frozenset(
    {"nocapture", "readonly", "readnone", "writeonly", "noalias", "nonnull", "noundef", "signext",
     "zeroext", "inreg", "returned"}
)
INT_FLAGS = frozenset({"nuw", "nsw", "exact"})
FAST_MATH_FLAGS = frozenset({"fast", "nnan", "ninf", "nsz", "arcp", "contract", "afn", "reassoc"})


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    expected: str | None = None

    def __str__(self) -> str:
        text = f"{self.span}: {self.message}"
        if self.expected:
            text += f" (expected {self.expected})"
        return text


class ParseFailure(Exception):
    """Raised by :func:`parse_module` and :func:`parse_type` with every error found."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


# ============================================================
# LEXER
# ============================================================


@dataclass(frozen=True)
class Token:
    kind: str  # punct, local, global, meta, mdstr, str, int, float, ident, eof
    text: str
    line: int
    col: int
    length: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.col, max(1, self.length))


_NAME_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._$-")
_PUNCT = frozenset("=,(){}[]<>*:")
_DIGITS = frozenset("0123456789")
_WORD_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_.$")


def tokenize(text: str) -> tuple[list[Token], list[ParseError]]:
    tokens: list[Token] = []
    errors: list[ParseError] = []
    i, n = 0, len(text)
    line, line_start = 1, 0

    def name_end(j: int) -> int:
        while j < n and text[j] in _NAME_CHARS:
            j += 1
        return j

    while i < n:
        c = text[i]
        col = i - line_start + 1
        if c == "\n":
            line += 1
            line_start = i + 1
            i += 1
        elif c in " \t\r":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in _PUNCT:
            tokens.append(Token("punct", c, line, col, 1))
            i += 1
        elif c in "%@":
            j = name_end(i + 1)
            if j == i + 1:
                errors.append(ParseError(SourceSpan(line, col, 1), f"expected a name after {c!r}"))
                i += 1
                continue
            tokens.append(Token("local" if c == "%" else "global", text[i + 1:j], line, col, j - i))
            i = j
        elif c == "!":
            if i + 1 < n and text[i + 1] == '"':
                j = text.find('"', i + 2)
                nl = text.find("\n", i + 2)
                if j < 0 or (0 <= nl < j):
                    errors.append(ParseError(SourceSpan(line, col, 2), "unterminated metadata string"))
                    i = nl if nl >= 0 else n
                    continue
                tokens.append(Token("mdstr", text[i + 2:j], line, col, j + 1 - i))
                i = j + 1
            else:
                j = name_end(i + 1)
                tokens.append(Token("meta", text[i + 1:j], line, col, j - i))
                i = j
        elif c == '"':
            j = text.find('"', i + 1)
            nl = text.find("\n", i + 1)
            if j < 0 or (0 <= nl < j):
                errors.append(ParseError(SourceSpan(line, col, 1), "unterminated string"))
                i = nl if nl >= 0 else n
                continue
            tokens.append(Token("str", text[i + 1:j], line, col, j + 1 - i))
            i = j + 1
        elif c in _DIGITS or (c in "-+" and i + 1 < n and text[i + 1] in _DIGITS):
            j = i + 1
            if text.startswith("0x", i):
                j = i + 2
                while j < n and text[j] in "0123456789abcdefABCDEF":
                    j += 1
                tokens.append(Token("float", text[i:j], line, col, j - i))
                i = j
                continue
            while j < n and text[j] in _DIGITS:
                j += 1
            kind = "int"
            if j < n and text[j] == ".":
                kind = "float"
                j += 1
                while j < n and text[j] in _DIGITS:
                    j += 1
                if j < n and text[j] in "eE":
                    k = j + 1
                    if k < n and text[k] in "+-":
                        k += 1
                    if k < n and text[k] in _DIGITS:
                        j = k
                        while j < n and text[j] in _DIGITS:
                            j += 1
            if kind == "int" and j < n and text[j] in _NAME_CHARS and text[j] != "-":
                # numeric label or identifier such as 3:
                j = name_end(j)
                kind = "ident"
            tokens.append(Token(kind, text[i:j], line, col, j - i))
            i = j
        elif c in _WORD_START:
            j = name_end(i)
            tokens.append(Token("ident", text[i:j], line, col, j - i))
            i = j
        else:
            errors.append(ParseError(SourceSpan(line, col, 1), f"unexpected character {c!r}"))
            i += 1
    tokens.append(Token("eof", "", line, i - line_start + 1, 0))
    return tokens, errors


# ============================================================
# PARSER
# ============================================================


class _Error(Exception):
    def __init__(self, tok: Token, message: str, expected: str | None = None):
        self.error = ParseError(tok.span, message, expected)


@dataclass
class _RawNode:
    items: list
    span: SourceSpan


class _Parser:
    def __init__(self, text: str):
        self.tokens, self.errors = tokenize(text)
        self.pos = 0
        self.triple: str | None = None
        self.triple_tok: Token | None = None
        self.functions: list[Function] = []
        self.globals: list[GlobalVariable] = []
        self.symbols: set[str] = set()
        self.raw_nodes: dict[str, _RawNode] = {}
        self.named_raw: dict[str, list[tuple[str, Token]]] = {}
        self.attach_raw: dict[str, list[tuple[str, str, Token]]] = {}
        self.fn_spans: dict[str, SourceSpan] = {}
        self.inst_spans: dict[tuple[str, str, int], SourceSpan] = {}
        self.block_spans: dict[tuple[str, str], SourceSpan] = {}

    # -- token helpers -------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_punct(self, c: str) -> bool:
        return self.at("punct", c)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        if self.at(kind, text):
            return self.next()
        desc = what or (repr(text) if text else kind)
        found = self.tok.text or "end of input"
        raise _Error(self.tok, f"expected {desc}, found {found!r}", desc)

    def expect_punct(self, c: str) -> Token:
        return self.expect("punct", c)

    def skip_line(self, line: int) -> None:
        while self.tok.kind != "eof" and self.tok.line <= line:
            self.next()

    def line_start(self) -> bool:
        return self.pos == 0 or self.tokens[self.pos - 1].line < self.tok.line

    # -- types ---------------------------------------------------------

    def parse_type(self) -> TypeRef:
        start = self.tok
        t = self._base_type()
        while True:
            if self.at("ident", "addrspace"):
                self.next()
                self.expect_punct("(")
                n = self.expect("int", what="address space number")
                self.expect_punct(")")
                self.expect_punct("*")
                space = int(n.text)
                if space not in AddressSpace._value2member_map_:
                    raise _Error(n, f"unknown address space {space}")
                t = PointerType(t, AddressSpace(space))
            elif self.at_punct("*"):
                self.next()
                t = PointerType(t)
            elif self.at_punct("(") and not isinstance(t, FunctionType):
                self.next()
                params = []
                if not self.at_punct(")"):
                    params.append(self.parse_type())
                    while self.accept("punct", ","):
                        params.append(self.parse_type())
                self.expect_punct(")")
                t = FunctionType(t, tuple(params))
            else:
                break
        reason = validate_type(t)
        if reason:
            raise _Error(start, reason)
        return t

    def _base_type(self) -> TypeRef:
        t = self.tok
        if t.kind == "ident":
            if t.text == "void":
                self.next()
                return VoidType()
            if t.text == "float":
                self.next()
                return FloatType(32)
            if t.text == "double":
                self.next()
                return FloatType(64)
            if t.text.startswith("i") and t.text[1:].isdigit():
                self.next()
                bits = int(t.text[1:])
                if bits not in (1, 8, 16, 32, 64):
                    raise _Error(t, f"unsupported integer width {t.text}")
                return IntType(bits)
        if t.kind == "punct" and t.text in "<[":
            self.next()
            n = self.expect("int", what="element count")
            self.expect("ident", "x")
            elem = self.parse_type()
            self.expect_punct(">" if t.text == "<" else "]")
            count = int(n.text)
            if t.text == "<":
                if count not in (2, 3, 4):
                    raise _Error(n, f"vector lanes must be 2, 3 or 4, got {count}")
                if not isinstance(elem, (IntType, FloatType)):
                    raise _Error(n, "vector elements must be integer or float")
                return VectorType(elem, count)
            if count <= 0:
                raise _Error(n, "array length must be positive")
            return ArrayType(elem, count)
        raise _Error(t, f"malformed type {t.text!r}" if t.text else "expected a type", "type")

    # -- values --------------------------------------------------------

    def parse_value(self, ty: TypeRef) -> Value:
        t = self.tok
        if t.kind == "local":
            self.next()
            return Register(t.text, ty)
        if t.kind == "global":
            self.next()
            return GlobalRef(t.text, ty)
        if t.kind == "ident" and t.text in ("true", "false"):
            self.next()
            if ty != I1:
                raise _Error(t, f"boolean constant for type {ty}")
            return IntConst(1 if t.text == "true" else 0, ty)
        if t.kind == "ident" and t.text == "undef":
            self.next()
            return Undef(ty)
        if t.kind == "ident" and t.text == "zeroinitializer":
            self.next()
            return ZeroInit(ty)
        if t.kind == "int":
            self.next()
            if isinstance(ty, FloatType):
                return FloatConst(_to_width(float(int(t.text)), ty.bits), ty)
            if not isinstance(ty, IntType):
                raise _Error(t, f"integer constant for type {ty}")
            v = int(t.text)
            if not -(1 << (ty.bits - 1)) <= v < (1 << ty.bits) and not (ty.bits == 1 and v in (0, 1)):
                raise _Error(t, f"constant {v} does not fit in {ty}")
            return IntConst(v, ty)
        if t.kind == "float":
            self.next()
            if not isinstance(ty, FloatType):
                raise _Error(t, f"floating-point constant for type {ty}")
            if t.text.startswith("0x"):
                digits = t.text[2:]
                if len(digits) != 16:
                    raise _Error(t, "hex float constants must have 16 digits")
                (v,) = struct.unpack("<d", struct.pack("<Q", int(digits, 16)))
            else:
                v = float(t.text)
            return FloatConst(_to_width(v, ty.bits), ty)
        raise _Error(t, f"expected a value, found {t.text or 'end of input'!r}", "value")

    def typed_value(self) -> Value:
        ty = self.parse_type()
        return self.parse_value(ty)

    # -- top level -----------------------------------------------------

    def parse(self) -> None:
        while not self.at("eof"):
            start = self.tok
            try:
                self.top_level()
            except _Error as e:
                self.errors.append(e.error)
                if start.kind == "ident" and start.text == "define":
                    self.skip_function_body()
                else:
                    self.skip_line(max(start.line, e.error.span.line))

    def skip_function_body(self) -> None:
        while not self.at("eof"):
            t = self.next()
            if t.kind == "punct" and t.text == "}" and t.col == 1:
                return

    def top_level(self) -> None:
        t = self.tok
        if t.kind == "ident" and t.text == "target":
            self.next()
            self.expect("ident", "triple")
            self.expect_punct("=")
            s = self.expect("str", what="triple string")
            if self.triple is not None:
                raise _Error(t, "duplicate target triple")
            self.triple, self.triple_tok = s.text, s
        elif t.kind == "global":
            self.global_variable()
        elif t.kind == "ident" and t.text == "declare":
            self.next()
            self.function_header(define=False)
        elif t.kind == "ident" and t.text == "define":
            self.next()
            self.function_definition()
        elif t.kind == "meta":
            self.metadata_statement()
        else:
            raise _Error(t, f"unexpected {t.text or 'end of input'!r} at top level")

    def declare_symbol(self, tok: Token) -> None:
        if tok.text in self.symbols:
            raise _Error(tok, f"duplicate symbol @{tok.text}")
        self.symbols.add(tok.text)

    def global_variable(self) -> None:
        name = self.next()
        self.expect_punct("=")
        linkage = []
        while self.tok.kind == "ident" and self.tok.text in LINKAGE_WORDS:
            linkage.append(self.next().text)
        space = AddressSpace.PRIVATE
        if self.accept("ident", "addrspace"):
            self.expect_punct("(")
            n = self.expect("int", what="address space number")
            self.expect_punct(")")
            if int(n.text) not in AddressSpace._value2member_map_:
                raise _Error(n, f"unknown address space {n.text}")
            space = AddressSpace(int(n.text))
        kind = self.tok
        if not (kind.kind == "ident" and kind.text in ("global", "constant")):
            raise _Error(kind, f"expected 'global' or 'constant', found {kind.text!r}", "global")
        self.next()
        ty = self.parse_type()
        if isinstance(ty, (VoidType, FunctionType)):
            raise _Error(kind, f"global of type {ty}")
        init = None
        if self.tok.line == kind.line and not self.at_punct(",") and not self.at("eof"):
            init = self.parse_value(ty)
            if isinstance(init, (Register, GlobalRef)):
                raise _Error(self.tokens[self.pos - 1], "global initializer must be a constant")
        align = None
        if self.accept("punct", ","):
            self.expect("ident", "align")
            align = int(self.expect("int", what="alignment").text)
        self.declare_symbol(name)
        self.globals.append(
            GlobalVariable(name.text, ty, space, init, kind.text == "constant", tuple(linkage), align)
        )

    def function_header(self, define: bool) -> Function:
        keywords = []
        while self.tok.kind == "ident" and self.tok.text in LINKAGE_WORDS:
            keywords.append(self.next().text)
        cconv = None
        if self.tok.kind == "ident" and self.tok.text in CALLING_CONVENTIONS:
            cconv = self.next().text
        ret = self.parse_type()
        if isinstance(ret, FunctionType):
            raise _Error(self.tok, "function cannot return a function type")
        name = self.expect("global", what="function name")
        self.expect_punct("(")
        params: list[Param] = []
        if not self.at_punct(")"):
            while True:
                params.append(self.param(define))
                if not self.accept("punct", ","):
                    break
        self.expect_punct(")")
        fn = Function(
            name=name.text,
            ret_type=ret,
            params=params,
            is_kernel=cconv == "spir_kernel",
            keywords=tuple(keywords),
            cconv=None if cconv == "spir_kernel" else cconv,
        )
        self.declare_symbol(name)
        self.fn_spans[name.text] = name.span
        self.functions.append(fn)
        return fn

    def param(self, define: bool) -> Param:
        ty = self.parse_type()
        if isinstance(ty, (VoidType, FunctionType)):
            raise _Error(self.tok, f"parameter of type {ty}")
        attrs = []
        while True:
            if self.tok.kind == "ident" and self.tok.text in PARAM_ATTRS:
                attrs.append(self.next().text)
            elif self.at("ident", "align"):
                self.next()
                attrs.append(f"align {self.expect('int', what='alignment').text}")
            else:
                break
        name = None
        if self.at("local"):
            name = self.next().text
        elif define:
            raise _Error(self.tok, "parameters of a definition must be named", "%name")
        return Param(name, ty, tuple(attrs))

    def function_definition(self) -> None:
        fn = self.function_header(define=True)
        while self.at("meta"):
            key = self.next()
            ref = self.expect("meta", what="metadata reference")
            if not ref.text.isdigit():
                raise _Error(ref, "expected a numbered metadata node")
            self.attach_raw.setdefault(fn.name, []).append((key.text, ref.text, ref))
        self.expect_punct("{")
        block: BasicBlock | None = None
        while True:
            t = self.tok
            if t.kind == "eof":
                raise _Error(t, f"unterminated body of @{fn.name}", "'}'")
            if t.kind == "punct" and t.text == "}":
                self.next()
                break
            try:
                if t.kind in ("ident", "int") and self.peek().kind == "punct" and self.peek().text == ":":
                    self.next()
                    self.next()
                    if any(b.label == t.text for b in fn.blocks):
                        raise _Error(t, f"duplicate block label {t.text}")
                    block = BasicBlock(t.text)
                    fn.blocks.append(block)
                    self.block_spans[(fn.name, t.text)] = t.span
                    continue
                if block is None:
                    block = BasicBlock("entry")
                    fn.blocks.append(block)
                    self.block_spans[(fn.name, "entry")] = t.span
                inst = self.instruction()
                self.inst_spans[(fn.name, block.label, len(block.instructions))] = t.span
                block.instructions.append(inst)
                if self.tok.line == t.line and not self.at("eof") and not self.at_punct("}"):
                    raise _Error(self.tok, f"unexpected {self.tok.text!r} after instruction", "end of line")
            except _Error as e:
                self.errors.append(e.error)
                self.skip_line(max(t.line, e.error.span.line))
        if not fn.blocks:
            raise _Error(self.tokens[self.pos - 1], f"definition of @{fn.name} has no body")

    # -- instructions --------------------------------------------------

    def instruction(self) -> Instruction:
        result_tok = None
        if self.at("local"):
            result_tok = self.next()
            self.expect_punct("=")
        flags: list[str] = []
        if self.at("ident", "tail"):
            flags.append(self.next().text)
        op_tok = self.tok
        if op_tok.kind != "ident" or op_tok.text not in OPCODES:
            if op_tok.kind in ("ident", "int"):
                raise _Error(op_tok, f"unknown instruction {op_tok.text!r}", "instruction")
            raise _Error(op_tok, f"expected an instruction, found {op_tok.text or 'end of input'!r}", "instruction")
        if flags and op_tok.text != "call":
            raise _Error(op_tok, "'tail' only applies to call")
        self.next()
        op = op_tok.text
        inst = getattr(self, "_op_" + op, None)
        if inst is None:
            method = "_binop" if op in _BINOP_NAMES else "_cast"
            inst = getattr(self, method)
        kwargs = inst(op, op_tok, tuple(flags))
        res_type = kwargs.pop("result_type", None)
        result = None
        if result_tok is not None:
            if res_type is None or isinstance(res_type, VoidType):
                raise _Error(result_tok, f"{op} does not produce a value")
            result = Register(result_tok.text, res_type)
        elif op not in ("store", "br", "ret", "call"):
            raise _Error(op_tok, f"{op} must assign its result", "%name =")
        return Instruction(opcode=op, result=result, **kwargs)

    def _flags(self, allowed: frozenset[str]) -> list[str]:
        out = []
        while self.tok.kind == "ident" and self.tok.text in allowed:
            out.append(self.next().text)
        return out

    def _align(self) -> int | None:
        if self.accept("punct", ","):
            self.expect("ident", "align")
            return int(self.expect("int", what="alignment").text)
        return None

    def _binop(self, op, tok, _flags):
        allowed = FAST_MATH_FLAGS if op.startswith("f") else INT_FLAGS
        flags = self._flags(allowed)
        ty = self.parse_type()
        a = self.parse_value(ty)
        self.expect_punct(",")
        b = self.parse_value(ty)
        return dict(operands=(a, b), flags=tuple(flags), result_type=ty)

    def _cast(self, op, tok, _flags):
        src = self.typed_value()
        self.expect("ident", "to")
        dst = self.parse_type()
        return dict(operands=(src,), result_type=dst)

    def _op_icmp(self, op, tok, _flags):
        pred = self.expect("ident", what="comparison predicate")
        if pred.text not in ICMP_PREDS:
            raise _Error(pred, f"unknown icmp predicate {pred.text!r}")
        ty = self.parse_type()
        a = self.parse_value(ty)
        self.expect_punct(",")
        b = self.parse_value(ty)
        return dict(operands=(a, b), pred=pred.text, result_type=I1)

    def _op_fcmp(self, op, tok, _flags):
        flags = self._flags(FAST_MATH_FLAGS)
        pred = self.expect("ident", what="comparison predicate")
        if pred.text not in FCMP_PREDS:
            raise _Error(pred, f"unknown fcmp predicate {pred.text!r}")
        ty = self.parse_type()
        a = self.parse_value(ty)
        self.expect_punct(",")
        b = self.parse_value(ty)
        return dict(operands=(a, b), pred=pred.text, flags=tuple(flags), result_type=I1)

    def _op_load(self, op, tok, _flags):
        volatile = bool(self.accept("ident", "volatile"))
        ty = self.parse_type()
        self.expect_punct(",")
        ptr = self.typed_value()
        return dict(operands=(ptr,), volatile=volatile, align=self._align(), result_type=ty)

    def _op_store(self, op, tok, _flags):
        volatile = bool(self.accept("ident", "volatile"))
        val = self.typed_value()
        self.expect_punct(",")
        ptr = self.typed_value()
        return dict(operands=(val, ptr), volatile=volatile, align=self._align())

    def _op_getelementptr(self, op, tok, _flags):
        flags = self._flags(frozenset({"inbounds"}))
        src = self.parse_type()
        self.expect_punct(",")
        ptr_tok = self.tok
        ptr = self.typed_value()
        if not isinstance(ptr.type, PointerType):
            raise _Error(ptr_tok, "getelementptr base must be a pointer")
        if ptr.type.pointee != src:
            raise _Error(ptr_tok, f"explicit type {src} does not match pointer type {ptr.type}")
        indices = []
        cur = src
        while self.accept("punct", ","):
            idx_tok = self.tok
            idx = self.typed_value()
            if not isinstance(idx.type, IntType):
                raise _Error(idx_tok, "getelementptr indices must be integers")
            if indices:
                if not isinstance(cur, (ArrayType, VectorType)):
                    raise _Error(idx_tok, f"cannot index into {cur}")
                cur = cur.elem
            indices.append(idx)
        if not indices:
            raise _Error(self.tok, "getelementptr needs at least one index", "index")
        return dict(
            operands=(ptr, *indices), flags=tuple(flags), result_type=PointerType(cur, ptr.type.addr_space)
        )

    def _op_call(self, op, tok, flags):
        cconv = None
        if self.tok.kind == "ident" and self.tok.text in CALLING_CONVENTIONS:
            cconv = self.next().text
        ret = self.parse_type()
        callee = self.expect("global", what="callee")
        self.expect_punct("(")
        args = []
        if not self.at_punct(")"):
            while True:
                ty = self.parse_type()
                self._flags(PARAM_ATTRS)
                args.append(self.parse_value(ty))
                if not self.accept("punct", ","):
                    break
        self.expect_punct(")")
        return dict(
            operands=tuple(args),
            callee=callee.text,
            type=None if isinstance(ret, VoidType) else ret,
            flags=flags,
            cconv=cconv,
            result_type=ret,
        )

    def _op_atomicrmw(self, op, tok, _flags):
        volatile = bool(self.accept("ident", "volatile"))
        aop = self.expect("ident", what="atomic operation")
        if aop.text not in ATOMIC_OPS:
            raise _Error(aop, f"unknown atomicrmw operation {aop.text!r}")
        ptr = self.typed_value()
        self.expect_punct(",")
        val = self.typed_value()
        order = self.expect("ident", what="memory ordering")
        if order.text not in ORDERINGS:
            raise _Error(order, f"unknown memory ordering {order.text!r}")
        return dict(
            operands=(ptr, val), pred=aop.text, ordering=order.text, volatile=volatile,
            align=self._align(), result_type=val.type,
        )

    def _op_select(self, op, tok, _flags):
        c = self.typed_value()
        self.expect_punct(",")
        a = self.typed_value()
        self.expect_punct(",")
        b = self.typed_value()
        return dict(operands=(c, a, b), result_type=a.type)

    def _op_phi(self, op, tok, _flags):
        ty = self.parse_type()
        vals, labels = [], []
        while True:
            self.expect_punct("[")
            vals.append(self.parse_value(ty))
            self.expect_punct(",")
            labels.append(self.expect("local", what="incoming block").text)
            self.expect_punct("]")
            if not self.accept("punct", ","):
                break
        return dict(operands=tuple(vals), targets=tuple(labels), result_type=ty)

    def _op_br(self, op, tok, _flags):
        if self.accept("ident", "label"):
            return dict(targets=(self.expect("local", what="block label").text,))
        cond = self.typed_value()
        self.expect_punct(",")
        self.expect("ident", "label")
        a = self.expect("local", what="block label").text
        self.expect_punct(",")
        self.expect("ident", "label")
        b = self.expect("local", what="block label").text
        return dict(operands=(cond,), targets=(a, b))

    def _op_ret(self, op, tok, _flags):
        ty = self.parse_type()
        if isinstance(ty, VoidType):
            return dict()
        return dict(operands=(self.parse_value(ty),))

    def _op_extractelement(self, op, tok, _flags):
        vec_tok = self.tok
        vec = self.typed_value()
        if not isinstance(vec.type, VectorType):
            raise _Error(vec_tok, "extractelement needs a vector operand")
        self.expect_punct(",")
        idx = self.typed_value()
        return dict(operands=(vec, idx), result_type=vec.type.elem)

    def _op_alloca(self, op, tok, _flags):
        ty = self.parse_type()
        return dict(align=self._align(), result_type=PointerType(ty))

    # -- metadata ------------------------------------------------------

    def metadata_statement(self) -> None:
        head = self.next()
        self.expect_punct("=")
        if head.text.isdigit():
            self.accept("ident", "distinct")
            self.expect("meta", "", what="'!{'")
            items = self.metadata_tuple()
            if head.text in self.raw_nodes:
                raise _Error(head, f"duplicate metadata node !{head.text}")
            self.raw_nodes[head.text] = _RawNode(items, head.span)
            return
        if not head.text:
            raise _Error(head, "expected a metadata name")
        self.expect("meta", "", what="'!{'")
        self.expect_punct("{")
        refs = []
        if not self.at_punct("}"):
            while True:
                r = self.expect("meta", what="metadata reference")
                if not r.text.isdigit():
                    raise _Error(r, "named metadata may only list numbered nodes")
                refs.append((r.text, r))
                if not self.accept("punct", ","):
                    break
        self.expect_punct("}")
        if head.text in self.named_raw:
            raise _Error(head, f"duplicate named metadata !{head.text}")
        self.named_raw[head.text] = refs

    def metadata_tuple(self) -> list:
        self.expect_punct("{")
        items: list = []
        if not self.at_punct("}"):
            while True:
                items.append(self.metadata_item())
                if not self.accept("punct", ","):
                    break
        self.expect_punct("}")
        return items

    def metadata_item(self):
        t = self.tok
        if t.kind == "mdstr":
            self.next()
            return MDString(t.text)
        if t.kind == "meta" and t.text.isdigit():
            self.next()
            return ("ref", t.text, t)
        if t.kind == "meta" and t.text == "":
            self.next()
            return ("inline", self.metadata_tuple(), t)
        ty = self.parse_type()
        v = self.parse_value(ty)
        if isinstance(v, IntConst):
            return v
        if isinstance(v, GlobalRef):
            return (v, t)
        raise _Error(t, "metadata operands must be strings, integers, symbols or nodes")

    # -- finishing -----------------------------------------------------

    def resolve_metadata(self) -> tuple[dict[str, list[MetadataNode]], dict[str, list[tuple[str, MetadataNode]]]]:
        memo: dict[str, MetadataNode] = {}
        active: set[str] = set()

        def build(items: list, name: str | None) -> MetadataNode:
            out = []
            for it in items:
                if isinstance(it, tuple) and it[0] == "ref":
                    node = node_by_id(it[1], it[2])
                    if node is not None:
                        out.append(node)
                elif isinstance(it, tuple) and it[0] == "inline":
                    out.append(build(it[1], None))
                elif isinstance(it, tuple):
                    ref, tok = it
                    if ref.name not in self.symbols:
                        self.errors.append(ParseError(tok.span, f"metadata refers to unknown symbol @{ref.name}"))
                    out.append(ref)
                else:
                    out.append(it)
            return MetadataNode(tuple(out), name)

        def node_by_id(ident: str, tok: Token) -> MetadataNode | None:
            if ident in memo:
                return memo[ident]
            raw = self.raw_nodes.get(ident)
            if raw is None:
                self.errors.append(ParseError(tok.span, f"unresolved metadata reference !{ident}"))
                return None
            if ident in active:
                self.errors.append(ParseError(tok.span, f"cyclic metadata reference !{ident}"))
                return None
            active.add(ident)
            node = build(raw.items, ident)
            active.discard(ident)
            memo[ident] = node
            return node

        named = {}
        for name, refs in self.named_raw.items():
            nodes = [node_by_id(i, tok) for i, tok in refs]
            named[name] = [n for n in nodes if n is not None]
        attached = {}
        for fn, refs in self.attach_raw.items():
            attached[fn] = []
            for key, ident, tok in refs:
                node = node_by_id(ident, tok)
                if node is not None:
                    attached[fn].append((key, node))
        for ident, raw in self.raw_nodes.items():
            node_by_id(ident, Token("meta", ident, raw.span.line, raw.span.column, raw.span.length))
        return named, attached

    def finish(self) -> Module:
        named, attached = self.resolve_metadata()
        for fn in self.functions:
            fn.metadata = attached.get(fn.name, [])
        if self.triple is None:
            first = self.tokens[0]
            self.errors.append(ParseError(SourceSpan(first.line, first.col, max(1, first.length)),
                                          "missing target triple", "target triple"))
            dialect = Dialect.NVVM
        elif self.triple == NVVM_TRIPLE:
            dialect = Dialect.NVVM
        elif self.triple.startswith("spir"):
            dialect = Dialect.OPENCL
        else:
            self.errors.append(ParseError(self.triple_tok.span, f"unsupported target triple {self.triple!r}"))
            dialect = Dialect.NVVM
        return Module(self.triple or "", dialect, self.functions, self.globals, named)


_BINOP_NAMES = frozenset(
    {"add", "sub", "mul", "sdiv", "udiv", "and", "or", "xor", "shl", "lshr", "ashr",
     "fadd", "fsub", "fmul", "fdiv"}
)


def _to_width(v: float, bits: int) -> float:
    if bits == 32:
        try:
            return struct.unpack("<f", struct.pack("<f", v))[0]
        except OverflowError:
            return float("inf") if v > 0 else float("-inf")
    return v


def parse_module(text: str) -> Module:
    """Parse ``text`` into a verified :class:`Module`.

    Raises :class:`ParseFailure` listing every syntax error, or every
    verifier diagnostic mapped back to its source location.
    """
    p = _Parser(text)
    p.parse()
    m = p.finish()
    if p.errors:
        raise ParseFailure(sorted(p.errors, key=lambda e: (e.span.line, e.span.column)))
    diags = verify_module(m)
    if diags:
        errors = []
        for d in diags:
            span = None
            if d.function is not None and d.block is not None and d.index is not None:
                span = p.inst_spans.get((d.function, d.block, d.index))
            if span is None and d.function is not None and d.block is not None:
                span = p.block_spans.get((d.function, d.block))
            if span is None and d.function is not None:
                span = p.fn_spans.get(d.function)
            if span is None:
                span = p.triple_tok.span if p.triple_tok else SourceSpan(1, 1, 1)
            errors.append(ParseError(span, str(d)))
        raise ParseFailure(errors)
    return m


def parse_type(text: str) -> TypeRef:
    """Parse a single type such as ``float addrspace(3)*`` or ``<3 x i64>``."""
    p = _Parser(text)
    if p.errors:
        raise ParseFailure(p.errors)
    try:
        t = p.parse_type()
        if not p.at("eof"):
            raise _Error(p.tok, f"trailing text {p.tok.text!r} after type")
    except _Error as e:
        raise ParseFailure([e.error]) from None
    return t


__all__ = ["ParseError", "ParseFailure", "SourceSpan", "parse_module", "parse_type", "tokenize"]
