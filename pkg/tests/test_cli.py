"""Command-line interface: argument handling, exit codes, artifact layout."""

import json
import subprocess
import sys

import pytest

from coae.cli import build_parser, main

SUBCOMMANDS = (
    "synth",
    "distort",
    "train-cae",
    "train-dae",
    "train-visor",
    "eval",
    "cross-eval",
    "ablate",
    "analyze",
)


class TestParsing:
    def test_top_level_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["--help"])
        assert e.value.code == 0
        assert "subcommand" in capsys.readouterr().out or True

    @pytest.mark.parametrize("cmd", SUBCOMMANDS)
    def test_subcommand_help_exits_zero(self, cmd):
        with pytest.raises(SystemExit) as e:
            main([cmd, "--help"])
        assert e.value.code == 0

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 2

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["transmogrify"])
        assert e.value.code == 2

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["synth", "--n", "2", "--out", "x", "--frobnicate"])
        assert e.value.code == 2

    def test_missing_required_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["synth", "--n", "2"])  # --out missing
        assert e.value.code == 2

    def test_parser_lists_all_subcommands(self):
        fmt = build_parser().format_help()
        for cmd in SUBCOMMANDS:
            assert cmd in fmt


class TestErrorPaths:
    def test_distort_empty_dir_fails_cleanly(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        rc = main(
            ["distort", "--pristine-dir", str(tmp_path / "empty"), "--out", str(tmp_path / "c")]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_train_dae_missing_cae_fails_cleanly(self, tmp_path, capsys):
        rc = main(
            [
                "train-dae",
                "--corpus", str(tmp_path),
                "--cae", str(tmp_path / "nope.pt"),
                "--out", str(tmp_path / "d.pt"),
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_distortion_type_fails_cleanly(self, tmp_path, capsys):
        main(["synth", "--n", "2", "--size", "32", "--seed", "0", "--out", str(tmp_path / "p")])
        rc = main(
            [
                "distort",
                "--pristine-dir", str(tmp_path / "p"),
                "--types", "motion_warp",
                "--out", str(tmp_path / "c"),
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def cli_pipeline(tmp_path_factory):
    """Runs the full command chain once on a miniature corpus."""
    root = tmp_path_factory.mktemp("cli")
    fast = ["--epochs", "1", "--batch-size", "2", "--patch-size", "32", "--profile", "tiny"]
    assert main(["synth", "--n", "3", "--size", "32", "--seed", "4", "--out", str(root / "pristine")]) == 0
    assert (
        main(
            [
                "distort",
                "--pristine-dir", str(root / "pristine"),
                "--types", "gaussian_blur,gaussian_noise",
                "--levels", "1,5",
                "--seed", "4",
                "--name", "cli-demo",
                "--out", str(root / "corpus"),
            ]
        )
        == 0
    )
    assert (
        main(
            ["train-cae", "--corpus", str(root / "corpus"), "--seed", "0",
             "--out", str(root / "cae.pt"), "--log", str(root / "cae_log.jsonl")] + fast
        )
        == 0
    )
    assert (
        main(
            ["train-dae", "--corpus", str(root / "corpus"), "--cae", str(root / "cae.pt"),
             "--seed", "0", "--out", str(root / "dae.pt")] + fast
        )
        == 0
    )
    assert (
        main(
            ["train-visor", "--corpus", str(root / "corpus"), "--cae", str(root / "cae.pt"),
             "--dae", str(root / "dae.pt"), "--seed", "0", "--out", str(root / "visor.pt"),
             "--epochs", "2", "--batch-size", "8"]
        )
        == 0
    )
    return root


class TestPipeline:
    def test_synth_writes_images_and_manifest(self, cli_pipeline):
        files = sorted(p.name for p in (cli_pipeline / "pristine").glob("*.png"))
        assert files == ["0000.png", "0001.png", "0002.png"]
        assert (cli_pipeline / "pristine" / "manifest.jsonl").exists()

    def test_distort_layout(self, cli_pipeline):
        man = cli_pipeline / "corpus" / "manifest.jsonl"
        lines = [json.loads(l) for l in man.read_text().splitlines() if l.strip()]
        records = [l for l in lines if "type_id" in l]
        # 3 pristine + 3 refs x 2 types x 2 levels = 15 records after the header
        assert len(records) == 15

    def test_checkpoints_exist(self, cli_pipeline):
        for name in ("cae.pt", "dae.pt", "visor.pt"):
            assert (cli_pipeline / name).exists()
        assert (cli_pipeline / "cae_log.jsonl").read_text().strip()

    def test_eval_writes_report(self, cli_pipeline, capsys):
        out = cli_pipeline / "report.jsonl"
        rc = main(
            ["eval", "--corpus", str(cli_pipeline / "corpus"), "--cae", str(cli_pipeline / "cae.pt"),
             "--dae", str(cli_pipeline / "dae.pt"), "--sessions", "2", "--base-seed", "1",
             "--epochs", "2", "--batch-size", "8", "--out", str(out)]
        )
        assert rc == 0
        assert "SRCC" in capsys.readouterr().out
        row = json.loads(out.read_text().splitlines()[0])
        assert row["corpus_name"] == "cli-demo"
        assert len(row["sessions"]) == 2
        assert row["n_failed"] == 0

    def test_analyze_artifacts(self, cli_pipeline, capsys):
        out = cli_pipeline / "analysis"
        rc = main(
            ["analyze", "--corpus", str(cli_pipeline / "corpus"), "--cae", str(cli_pipeline / "cae.pt"),
             "--dae", str(cli_pipeline / "dae.pt"), "--max-pairs", "4", "--out", str(out)]
        )
        assert rc == 0
        for name in ("features.jsonl", "analysis.json", "embedding_types.svg", "embedding_scores.svg"):
            assert (out / name).exists()
        report = json.loads((out / "analysis.json").read_text())
        assert report["n_records"] == 15
        assert "probe accuracy" in capsys.readouterr().out

    def test_cross_eval_rejects_same_corpus(self, cli_pipeline, capsys):
        rc = main(
            ["cross-eval", "--train-corpus", str(cli_pipeline / "corpus"),
             "--test-corpus", str(cli_pipeline / "corpus"), "--cae", str(cli_pipeline / "cae.pt"),
             "--dae", str(cli_pipeline / "dae.pt"), "--epochs", "1", "--batch-size", "8"]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestDataDirResolution:
    def test_relative_paths_resolve_against_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COAE_DATA_DIR", str(tmp_path))
        assert main(["synth", "--n", "2", "--size", "32", "--seed", "0", "--out", "pristine"]) == 0
        assert (tmp_path / "pristine" / "0000.png").exists()

    def test_absolute_paths_ignore_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COAE_DATA_DIR", str(tmp_path / "elsewhere"))
        out = tmp_path / "direct"
        assert main(["synth", "--n", "1", "--size", "32", "--seed", "0", "--out", str(out)]) == 0
        assert (out / "0000.png").exists()


class TestDeterminism:
    def test_synth_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            assert main(["synth", "--n", "2", "--size", "32", "--seed", "9", "--out", str(tmp_path / d)]) == 0
        a = (tmp_path / "a" / "0000.png").read_bytes()
        b = (tmp_path / "b" / "0000.png").read_bytes()
        assert a == b

    def test_module_entrypoint_runs(self):
        out = subprocess.run(
            [sys.executable, "-m", "coae.cli", "--help"], capture_output=True, text=True
        )
        assert out.returncode == 0
        assert "coae" in out.stdout
