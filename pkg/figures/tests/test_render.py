"""The renderer consumes the primary CLI only through its CSV files: the
fixtures here are produced by invoking that CLI as a subprocess."""

import shutil
import subprocess
import sys

import pytest

from ckl_figures.cli import main
from ckl_figures.render import FigureSpec, SchemaError, read_rows, render


def _primary_cli(args):
    proc = subprocess.run(
        [sys.executable, "-m", "ckl.cli", *args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        pytest.skip(f"primary CLI unavailable: {proc.stderr.strip()[:200]}")


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("goldens")
    _primary_cli(["weights", "--out", str(out / "weights.csv")])
    _primary_cli(["curves", "--ratio-points", "40", "--out", str(out / "curves.csv")])
    train_args = [
        "--queries", "8", "--eval-queries", "2", "--positives", "2", "--negatives", "5",
        "--dim", "6", "--epochs", "3", "--batch-size", "4",
    ]
    _primary_cli(["train", "--loss", "ckl", *train_args, "--out", str(out / "trainlog_ckl.csv")])
    _primary_cli(["train", "--loss", "kl", *train_args, "--out", str(out / "trainlog_kl.csv")])
    return out


KINDS = [
    ("weights", "weights.csv"),
    ("curves", "curves.csv"),
    ("trainlog", "trainlog_ckl.csv"),
]


class TestRender:
    @pytest.mark.parametrize("kind,name", KINDS)
    @pytest.mark.parametrize("ext", ["png", "svg"])
    def test_each_golden_renders(self, golden_dir, tmp_path, kind, name, ext):
        out = tmp_path / f"{kind}.{ext}"
        spec = FigureSpec(kind=kind, input_path=str(golden_dir / name), output_path=str(out))
        render(spec)
        assert out.exists() and out.stat().st_size > 0

    @pytest.mark.parametrize("kind,name", KINDS)
    @pytest.mark.parametrize("ext", ["png", "svg"])
    def test_rerender_is_byte_identical(self, golden_dir, tmp_path, kind, name, ext):
        out = tmp_path / f"{kind}.{ext}"
        spec = FigureSpec(kind=kind, input_path=str(golden_dir / name), output_path=str(out))
        render(spec)
        first = out.read_bytes()
        render(spec)
        assert out.read_bytes() == first

    def test_trainlog_overlay(self, golden_dir, tmp_path):
        out = tmp_path / "overlay.png"
        spec = FigureSpec(
            kind="trainlog",
            input_path=str(golden_dir / "trainlog_ckl.csv"),
            second_input_path=str(golden_dir / "trainlog_kl.csv"),
            output_path=str(out),
        )
        render(spec)
        assert out.exists() and out.stat().st_size > 0


class TestSchemaValidation:
    def test_wrong_schema_reports_column_diff(self, golden_dir):
        with pytest.raises(SchemaError, match="column mismatch"):
            read_rows(str(golden_dir / "curves.csv"), "weights")

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="does not exist"):
            read_rows(str(tmp_path / "nope.csv"), "weights")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("doc_index,kind,q,weight\n0,positive,abc,0.5\n")
        with pytest.raises(SchemaError, match="non-numeric"):
            read_rows(str(path), "weights")

    def test_empty_data(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("doc_index,kind,q,weight\n")
        with pytest.raises(SchemaError, match="no data rows"):
            read_rows(str(path), "weights")

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown figure kind"):
            FigureSpec(kind="heatmap", input_path="x.csv", output_path="x.png")

    def test_unknown_extension_rejected(self):
        with pytest.raises(ValueError, match="unsupported image format"):
            FigureSpec(kind="weights", input_path="x.csv", output_path="x.pdf")


class TestCli:
    def test_schema_mismatch_exits_two(self, golden_dir, tmp_path, capsys):
        code = main(
            [
                "--kind", "weights",
                "--in", str(golden_dir / "curves.csv"),
                "--out", str(tmp_path / "x.png"),
            ]
        )
        assert code == 2
        assert "column mismatch" in capsys.readouterr().err

    def test_render_via_cli(self, golden_dir, tmp_path):
        out = tmp_path / "weights.png"
        code = main(
            ["--kind", "weights", "--in", str(golden_dir / "weights.csv"), "--out", str(out)]
        )
        assert code == 0
        assert out.exists()

    def test_in2_restricted_to_trainlog(self, golden_dir, tmp_path, capsys):
        code = main(
            [
                "--kind", "weights",
                "--in", str(golden_dir / "weights.csv"),
                "--in2", str(golden_dir / "weights.csv"),
                "--out", str(tmp_path / "x.png"),
            ]
        )
        assert code == 1

    def test_missing_args_exit_one(self, capsys):
        assert main([]) == 1

    def test_console_script_installed(self, golden_dir, tmp_path):
        exe = shutil.which("render") or shutil.which("ckl-render")
        if exe is None:
            pytest.skip("console script not on PATH")
        out = tmp_path / "cli.png"
        proc = subprocess.run(
            [exe, "--kind", "weights", "--in", str(golden_dir / "weights.csv"), "--out", str(out)],
            capture_output=True,
        )
        assert proc.returncode == 0 and out.exists()
