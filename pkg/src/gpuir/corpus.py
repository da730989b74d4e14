"""Kernel corpus: YAML manifests plus a runner that builds the support matrix.

A manifest describes one kernel::

    name: vecadd
    source: vecadd.ll
    kernel: vecadd
    features: [thread index]
    expect: supported
    dispatch:
      - {grid: [1, 1, 1], block: [3, 1, 1], buffers: vecadd.buf}

A dispatch entry may carry its own ``kernel`` to exercise several kernels of
one module.  Every kernel of a supported module must appear in at least one
dispatch.  Kernels expected to be unsupported only need ``source`` and
``expect: unsupported``; they pass when translation rejects them cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .buffers import BufferFormatError, parse_buffers
from .interp import BufferBinding, DispatchConfig, LaunchError, differential_check
from .parser import ParseFailure, parse_module
from .translator import TranslationError, UnsupportedBuiltinError, translate, translate_nvvm_to_spirv
from .verify import kernels_of


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Dispatch:
    kernel: str
    config: DispatchConfig
    bindings: tuple[BufferBinding, ...]
    label: str


@dataclass
class Manifest:
    name: str
    path: Path
    source: Path
    kernels: list[str]
    features: list[str]
    expect: str
    dispatches: list[Dispatch] = field(default_factory=list)


def _dims(value, what: str) -> tuple[int, int, int]:
    if isinstance(value, int):
        value = [value]
    if not isinstance(value, list) or not 1 <= len(value) <= 3 or not all(isinstance(v, int) for v in value):
        raise ManifestError(f"{what} must be a list of up to three integers")
    return tuple(list(value) + [1] * (3 - len(value)))


def load_manifest(path: Path) -> Manifest:
    """Read and validate one manifest; relative paths resolve against its directory."""
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ManifestError(f"invalid YAML: {e}") from None
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a mapping")
    for key in ("source", "expect"):
        if key not in doc:
            raise ManifestError(f"missing key {key!r}")
    expect = doc["expect"]
    if expect not in ("supported", "unsupported"):
        raise ManifestError(f"expect must be 'supported' or 'unsupported', got {expect!r}")
    base = path.parent
    features = doc.get("features") or []
    if not isinstance(features, list):
        raise ManifestError("features must be a list")
    dispatches = []
    for i, entry in enumerate(doc.get("dispatch") or []):
        if not isinstance(entry, dict):
            raise ManifestError(f"dispatch #{i} must be a mapping")
        try:
            cfg = DispatchConfig(_dims(entry.get("grid", [1]), "grid"), _dims(entry.get("block", [1]), "block"))
        except ValueError as e:
            raise ManifestError(f"dispatch #{i}: {e}") from None
        buf_path = base / entry["buffers"] if "buffers" in entry else None
        try:
            bindings = tuple(parse_buffers(buf_path.read_text(encoding="utf-8"))) if buf_path else ()
        except (OSError, BufferFormatError) as e:
            raise ManifestError(f"dispatch #{i}: {buf_path}: {e}") from None
        kernel = entry.get("kernel", doc.get("kernel"))
        if not isinstance(kernel, str):
            raise ManifestError(f"dispatch #{i} needs a kernel name")
        label = f"{kernel} grid={','.join(map(str, cfg.grid))} block={','.join(map(str, cfg.block))}"
        dispatches.append(Dispatch(kernel, cfg, bindings, label))
    if expect == "supported" and not dispatches:
        raise ManifestError("a supported kernel needs at least one dispatch")
    return Manifest(
        name=str(doc.get("name", path.stem)),
        path=path,
        source=base / doc["source"],
        kernels=sorted({d.kernel for d in dispatches}) or [str(doc.get("kernel", ""))],
        features=[str(f) for f in features],
        expect=expect,
        dispatches=dispatches,
    )


@dataclass
class CorpusRow:
    name: str
    features: list[str]
    expect: str
    translate: str  # pass | unsupported | fail | error
    diff: str  # pass | fail | n/a
    ok: bool
    detail: str = ""


def run_manifest(man: Manifest) -> CorpusRow:
    """Translate and differential-test one kernel under every dispatch in its manifest."""

    def row(translate_status: str, diff: str, ok: bool, detail: str = "") -> CorpusRow:
        return CorpusRow(man.name, man.features, man.expect, translate_status, diff, ok, detail)

    try:
        src = parse_module(man.source.read_text(encoding="utf-8"))
    except OSError as e:
        return row("error", "n/a", False, str(e))
    except ParseFailure as e:
        return row("error", "n/a", False, f"{man.source.name}: {e.errors[0]}")
    try:
        spirv, _report = translate_nvvm_to_spirv(src)
        opencl, _report = translate(src)
    except UnsupportedBuiltinError as e:
        callees = sorted({c for _f, _i, c in e.report.unsupported})
        detail = "unsupported: " + ", ".join(callees)
        return row("unsupported", "n/a", man.expect == "unsupported", detail)
    except TranslationError as e:
        return row("fail", "n/a", False, str(e))
    if man.expect == "unsupported":
        return row("pass", "n/a", False, "expected translation to be rejected")
    for d in man.dispatches:
        for stage, dst in (("spirv", spirv), ("opencl", opencl)):
            try:
                result = differential_check(src, dst, d.kernel, d.config, list(d.bindings))
            except LaunchError as e:
                return row("pass", "fail", False, f"{d.label}: {e}")
            if not result.equal:
                return row("pass", "fail", False, f"{d.label} [{stage}]: {result}")
    untested = sorted({k.name for k in kernels_of(src)} - set(man.kernels))
    if untested:
        return row("pass", "fail", False, "no dispatch for kernel(s): " + ", ".join(untested))
    return row("pass", "pass", True, f"{len(man.dispatches)} dispatch config(s)")


def run_corpus(directory: Path) -> list[CorpusRow]:
    """One row per ``*.yaml`` manifest, in file-name order; bad manifests become error rows."""
    rows = []
    for path in sorted(Path(directory).glob("*.yaml")):
        try:
            man = load_manifest(path)
        except (ManifestError, OSError, KeyError) as e:
            rows.append(CorpusRow(path.stem, [], "?", "error", "n/a", False, f"{path.name}: {e}"))
            continue
        rows.append(run_manifest(man))
    return rows


def format_table(rows: list[CorpusRow]) -> str:
    header = ("kernel", "features", "expect", "translate", "diff", "result")
    body = [
        (r.name, ", ".join(r.features) or "-", r.expect, r.translate, r.diff, "ok" if r.ok else "FAIL")
        for r in rows
    ]
    widths = [max(len(x[i]) for x in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *body]]
    return "\n".join(lines) + "\n"


__all__ = ["CorpusRow", "Dispatch", "Manifest", "ManifestError", "format_table", "load_manifest", "run_corpus", "run_manifest"]
