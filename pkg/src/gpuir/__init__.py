"""NVVM to OpenCL kernel translation with a SIMT interpreter for checking it."""

from .interp import (
    BufferBinding,
    DiffResult,
    DispatchConfig,
    LaunchError,
    LaunchResult,
    Schedule,
    Trap,
    differential_check,
    launch,
)
from .ir import AddressSpace, Dialect, Module
from .parser import ParseError, ParseFailure, SourceSpan, parse_module, parse_type
from .printer import print_module
from .translator import (
    TranslationError,
    TranslationReport,
    UnsupportedBuiltinError,
    lower_spirv_to_opencl,
    translate,
    translate_nvvm_to_spirv,
)
from .verify import Diagnostic, kernels_of, verify_module

__version__ = "0.1.0"

__all__ = [
    "AddressSpace",
    "BufferBinding",
    "Diagnostic",
    "DiffResult",
    "Dialect",
    "DispatchConfig",
    "LaunchError",
    "LaunchResult",
    "Module",
    "ParseError",
    "ParseFailure",
    "Schedule",
    "SourceSpan",
    "TranslationError",
    "TranslationReport",
    "Trap",
    "UnsupportedBuiltinError",
    "differential_check",
    "kernels_of",
    "launch",
    "lower_spirv_to_opencl",
    "parse_module",
    "parse_type",
    "print_module",
    "translate",
    "translate_nvvm_to_spirv",
    "verify_module",
]
