import pytest

from conftest import CORPUS, FIXTURES, GOLDEN
from gpuir.cli import EXIT_INPUT, EXIT_MISMATCH, EXIT_OK, EXIT_TRAP, EXIT_UNSUPPORTED, main
from gpuir.parser import parse_module

VECADD = str(CORPUS / "vecadd.ll")
VECADD3 = str(FIXTURES / "vecadd3.buf")


@pytest.fixture(autouse=True)
def _plain(monkeypatch):
    monkeypatch.setenv("GPUIR_COLOR", "0")


def test_translate_prints_opencl_and_reports_on_stderr(capsys):
    assert main(["translate", VECADD]) == EXIT_OK
    out, err = capsys.readouterr()
    assert out == (GOLDEN / "vecadd.ocl.ll").read_text()
    assert "thread_index(0)" in err


def test_translate_to_file(tmp_path, capsys):
    dest = tmp_path / "out.ll"
    assert main(["translate", VECADD, "-o", str(dest)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert parse_module(dest.read_text()).get_function("vecadd") is not None


def test_translate_spirv_stage_prints_the_dump(capsys):
    assert main(["translate", VECADD, "--stage", "spirv"]) == EXIT_OK
    assert capsys.readouterr().out == (GOLDEN / "vecadd.spvdump").read_text()


@pytest.mark.parametrize("name", ["texture", "d2i", "log2f"])
def test_unsupported_kernels_exit_3(name, capsys):
    assert main(["translate", str(CORPUS / f"{name}.ll")]) == EXIT_UNSUPPORTED
    out, err = capsys.readouterr()
    assert out == "" and err.startswith("unsupported:")


def test_translate_refuses_opencl_input(tmp_path, capsys):
    dest = tmp_path / "ocl.ll"
    main(["translate", VECADD, "-o", str(dest)])
    assert main(["translate", str(dest)]) == EXIT_INPUT
    assert "expects an NVVM module" in capsys.readouterr().err


def test_parse_errors_carry_the_path(tmp_path, capsys):
    bad = tmp_path / "bad.ll"
    bad.write_text("define void @f() {\nentry:\n  frobnicate\n}\n")
    assert main(["translate", str(bad)]) == EXIT_INPUT
    assert f"{bad}:3:" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["translate", "/nonexistent.ll"]) == EXIT_INPUT
    assert "/nonexistent.ll" in capsys.readouterr().err


def test_run_vecadd(capsys):
    assert main(["run", VECADD, "--block", "3", "--buffers", VECADD3]) == EXIT_OK
    assert capsys.readouterr().out == "a:i32:1,2,3\nb:i32:10,20,30\nc:i32:11,22,33\n"


def test_run_with_seeded_schedule_and_waves(capsys):
    args = ["run", str(CORPUS / "reduction.ll"), "--grid", "2", "--block", "64",
            "--buffers", str(CORPUS / "reduction.buf"), "--waves"]
    assert main(args) == EXIT_OK
    canonical, err = capsys.readouterr()
    assert "barrier waves:" in err and "barrier" not in canonical
    assert main(args + ["--schedule", "seed:7"]) == EXIT_OK
    assert capsys.readouterr().out == canonical


@pytest.mark.parametrize(
    "extra, fragment",
    [
        (["--block", "0,1,1"], "block dims must be positive"),
        (["--schedule", "shuffle"], "schedule"),
        (["--kernel", "nope"], "nope"),
    ],
)
def test_run_input_errors(extra, fragment, capsys):
    assert main(["run", VECADD, "--buffers", VECADD3] + extra) == EXIT_INPUT
    assert fragment in capsys.readouterr().err


def test_run_missing_binding_names_the_argument(tmp_path, capsys):
    buf = tmp_path / "partial.buf"
    buf.write_text("a:i32:1\nb:i32:2\n")
    assert main(["run", VECADD, "--buffers", str(buf)]) == EXIT_INPUT
    assert "missing binding for argument 'c'" in capsys.readouterr().err


def test_run_bad_dims_is_an_argparse_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", VECADD, "--block", "1,2,3,4"])
    assert info.value.code == 2


def test_run_trap_exits_4_with_coordinates(capsys):
    assert main(["run", VECADD, "--block", "4", "--buffers", VECADD3]) == EXIT_TRAP
    out, err = capsys.readouterr()
    assert out == ""
    assert err.startswith("trap: oob in block (0, 0, 0) thread (3, 0, 0)")


def test_diff_equal(capsys):
    assert main(["diff", VECADD, "--block", "3", "--buffers", VECADD3]) == EXIT_OK
    assert capsys.readouterr().out == "equal\n"


@pytest.mark.parametrize("stage", ["spirv", "opencl"])
def test_diff_equal_at_both_stages(stage, capsys):
    assert main(["diff", VECADD, "--block", "3", "--buffers", VECADD3, "--stage", stage]) == EXIT_OK


def test_diff_detects_corruption(capsys):
    args = ["diff", VECADD, "--block", "3", "--buffers", VECADD3,
            "--translated", str(FIXTURES / "vecadd_corrupted.ocl.ll")]
    assert main(args) == EXIT_MISMATCH
    assert "mismatch in c[1]: source 22, translated 0" in capsys.readouterr().out


def test_diff_unsupported_exits_3(capsys):
    assert main(["diff", str(CORPUS / "texture.ll")]) == EXIT_UNSUPPORTED


def test_diff_trap(capsys):
    assert main(["diff", VECADD, "--block", "4", "--buffers", VECADD3]) == EXIT_TRAP
    assert capsys.readouterr().out == ""


def test_corpus_passes(capsys):
    assert main(["corpus", str(CORPUS)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["kernel", "features", "expect", "translate", "diff", "result"]
    assert "FAIL" not in out


def test_empty_corpus(tmp_path, capsys):
    assert main(["corpus", str(tmp_path)]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 1


def test_corpus_manifest_error_exits_1(tmp_path, capsys):
    (tmp_path / "broken.yaml").write_text("source: missing.ll\n")
    assert main(["corpus", str(tmp_path)]) == EXIT_INPUT
    assert "fail: broken" in capsys.readouterr().err


def test_corpus_not_a_directory(capsys):
    assert main(["corpus", VECADD]) == EXIT_INPUT


@pytest.mark.parametrize("value, colored", [("1", True), ("0", False)])
def test_color_follows_environment(value, colored, monkeypatch, capsys):
    monkeypatch.setenv("GPUIR_COLOR", value)
    main(["translate", "/nonexistent.ll"])
    assert ("\033[31m" in capsys.readouterr().err) == colored
