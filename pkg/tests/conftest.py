from __future__ import annotations

from pathlib import Path

import pytest

from gpuir.buffers import parse_buffers
from gpuir.parser import parse_module

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
FIXTURES = Path(__file__).resolve().parent / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

SUPPORTED = ["vecadd", "index_probe", "reduction", "histogram", "saxpy_double3", "two_kernel", "loop_branch"]
UNSUPPORTED = ["texture", "d2i", "log2f"]

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def load_ir(path: Path):
    return parse_module(path.read_text(encoding="utf-8"))


def corpus_module(name: str):
    return load_ir(CORPUS / f"{name}.ll")


def fixture_module(name: str):
    return load_ir(FIXTURES / f"{name}.ll")


def buffers(text: str):
    return parse_buffers(text)


@pytest.fixture
def vecadd():
    return corpus_module("vecadd")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
