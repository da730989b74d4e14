"""Command-line entry point.

Exit codes: 0 ok, 1 input error, 2 mismatch, 3 unsupported builtins,
4 runtime trap.  Standard output carries only results; everything else
goes to standard error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .buffers import BufferFormatError, format_buffers, parse_buffers
from .corpus import format_table, run_corpus
from .interp import DispatchConfig, LaunchError, Schedule, compare_results, launch
from .ir import Dialect, PointerType
from .parser import ParseFailure, parse_module
from .printer import print_module
from .translator import TranslationError, UnsupportedBuiltinError, translate, translate_nvvm_to_spirv
from .verify import kernels_of

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MISMATCH = 2
EXIT_UNSUPPORTED = 3
EXIT_TRAP = 4


class _InputError(Exception):
    pass


def _color() -> bool:
    env = os.environ.get("GPUIR_COLOR")
    if env is not None:
        return env == "1"
    return sys.stderr.isatty()


def _err(msg: str, label: str = "error") -> None:
    prefix = f"\033[31m{label}:\033[0m" if _color() else f"{label}:"
    print(f"{prefix} {msg}", file=sys.stderr)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dims(text: str) -> tuple[int, int, int]:
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected up to three comma-separated integers, got {text!r}") from None
    if not 1 <= len(parts) <= 3:
        raise argparse.ArgumentTypeError(f"expected up to three comma-separated integers, got {text!r}")
    return tuple(parts + [1] * (3 - len(parts)))


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise _InputError(f"{path}: {e.strerror}") from None
    try:
        return parse_module(text)
    except ParseFailure as e:
        raise _InputError("\n".join(f"{path}:{err}" for err in e.errors)) from None


def _bindings(args):
    if args.buffers is None:
        return []
    try:
        return parse_buffers(Path(args.buffers).read_text(encoding="utf-8"))
    except OSError as e:
        raise _InputError(f"{args.buffers}: {e.strerror}") from None
    except BufferFormatError as e:
        raise _InputError(f"{args.buffers}: {e}") from None


def _config(args) -> DispatchConfig:
    try:
        return DispatchConfig(args.grid, args.block)
    except ValueError as e:
        raise _InputError(str(e)) from None


def _kernel_name(m, requested: str | None) -> str:
    if requested is not None:
        return requested
    names = [k.name for k in kernels_of(m)]
    if len(names) != 1:
        raise _InputError(f"module has {len(names)} kernels; pick one with --kernel")
    return names[0]


def _translate(m, stage: str = "opencl"):
    if m.dialect != Dialect.NVVM:
        raise _InputError(f"translate expects an NVVM module, got {m.dialect.value}")
    fn = translate_nvvm_to_spirv if stage == "spirv" else translate
    return fn(m)


def _buffer_order(m, kernel: str) -> list[str]:
    fn = m.get_function(kernel)
    return [p.name for p in fn.params if isinstance(p.type, PointerType)] if fn else []


def cmd_translate(args) -> int:
    m = _load(args.input)
    out, report = _translate(m, args.stage)
    _note(report.summary())
    text = print_module(out)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    m = _load(args.input)
    cfg = _config(args)
    bindings = _bindings(args)
    kernel = _kernel_name(m, args.kernel)
    try:
        sched = Schedule.parse(args.schedule)
        result = launch(m, kernel, cfg, bindings, sched)
    except (ValueError, LaunchError) as e:
        raise _InputError(str(e)) from None
    if result.trap is not None:
        _err(str(result.trap), "trap")
        return EXIT_TRAP
    if args.waves:
        _note(f"barrier waves: {result.barrier_waves}")
    sys.stdout.write(format_buffers(result.buffers, result.elem_types, _buffer_order(m, kernel)))
    return EXIT_OK


def cmd_diff(args) -> int:
    src = _load(args.input)
    if args.translated:
        dst = _load(args.translated)
    else:
        dst, report = _translate(src, args.stage)
        _note(report.summary())
    cfg = _config(args)
    bindings = _bindings(args)
    kernel = _kernel_name(src, args.kernel)
    try:
        a = launch(src, kernel, cfg, bindings)
        b = launch(dst, kernel, cfg, bindings)
    except LaunchError as e:
        raise _InputError(str(e)) from None
    result = compare_results(a, b)
    if result.status == "trap":
        _err(str(result), "trap")
        return EXIT_TRAP
    if result.status == "mismatch":
        print(str(result))
        return EXIT_MISMATCH
    print("equal")
    return EXIT_OK


def cmd_corpus(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise _InputError(f"{directory}: not a directory")
    rows = run_corpus(directory)
    sys.stdout.write(format_table(rows))
    for r in rows:
        if r.detail and not r.ok:
            _err(f"{r.name}: {r.detail}", "fail")
    if any(r.translate == "error" for r in rows):
        return EXIT_INPUT
    return EXIT_OK if all(r.ok for r in rows) else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpuir", description="Translate NVVM kernels to OpenCL IR and check them by simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="translate an NVVM module")
    t.add_argument("input")
    t.add_argument("-o", "--output", help="output file (default: standard output)")
    t.add_argument("--stage", choices=("spirv", "opencl"), default="opencl")
    t.set_defaults(func=cmd_translate)

    def launch_args(sp):
        sp.add_argument("input")
        sp.add_argument("--kernel", help="kernel name (default: the only kernel)")
        sp.add_argument("--grid", type=_dims, default=(1, 1, 1), metavar="GX,GY,GZ")
        sp.add_argument("--block", type=_dims, default=(1, 1, 1), metavar="BX,BY,BZ")
        sp.add_argument("--buffers", metavar="PATH", help="buffer bindings file")

    r = sub.add_parser("run", help="run a kernel in the interpreter")
    launch_args(r)
    r.add_argument("--schedule", default="canonical", help="canonical or seed:N")
    r.add_argument("--waves", action="store_true", help="report barrier waves on standard error")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("diff", help="run a kernel and its translation and compare buffers")
    launch_args(d)
    d.add_argument("--stage", choices=("spirv", "opencl"), default="opencl")
    d.add_argument("--translated", metavar="PATH", help="compare against this module instead of translating")
    d.set_defaults(func=cmd_diff)

    c = sub.add_parser("corpus", help="run every manifest in a corpus directory")
    c.add_argument("directory")
    c.set_defaults(func=cmd_corpus)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as e:
        _err(str(e))
        return EXIT_INPUT
    except UnsupportedBuiltinError as e:
        _err(e.report.summary(), "unsupported")
        return EXIT_UNSUPPORTED
    except TranslationError as e:
        _err(str(e))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
