"""Command-line interface: subcommands, config precedence, exit codes."""

import json

import pytest

from cornerclip import cli, evaluation, text_encoder


def run(capsys, *argv):
    code = cli.dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def manifest(tmp_path, capsys):
    path = tmp_path / "corpus.jsonl"
    code, _, _ = run(capsys, "gen-corpus", "--seed", "1", "--n", "8",
                     "--attributes", "2", "--feature-dim", "8",
                     "--out", str(path))
    assert code == 0
    return str(path)


class TestBasicCommands:
    def test_no_command_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 1

    def test_help_exits_zero(self, capsys):
        for argv in (["--help"], ["train", "--help"], ["sweep", "--help"]):
            with pytest.raises(SystemExit) as exc:
                cli.build_parser().parse_args(argv)
            assert exc.value.code == 0
            capsys.readouterr()
        assert cli.dispatch(["train", "--help"]) == 0
        capsys.readouterr()

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, err = run(capsys, "mask", "--len", "5", "--corners", "1",
                           "--frobnicate")
        assert code == 1
        assert "usage" in err.lower()

    def test_gen_corpus_and_stats(self, manifest, capsys):
        code, out, _ = run(capsys, "stats", "--corpus", manifest, "--json")
        assert code == 0
        stats = json.loads(out)
        assert stats["n_images"] == 8
        assert stats["n_texts"] == 24  # one short + two long per record

    def test_tokenize(self, capsys):
        code, out, _ = run(capsys, "tokenize", "--text", "a cat.",
                           "--limit", "8", "--corners", "2", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["tokens"][:3] == ["[CLS]", "[COR_1]", "[COR_2]"]
        assert payload["true_length"] == 6


class TestMaskCommand:
    def test_golden_grid(self, capsys):
        code, out, _ = run(capsys, "mask", "--len", "6", "--corners", "2")
        assert code == 0
        assert out.strip() == "\n".join([
            "1 0 0 1 1 1",
            "0 1 0 1 1 1",
            "0 0 1 1 1 1",
            "1 0 0 1 1 1",
            "1 0 0 1 1 1",
            "1 0 0 1 1 1",
        ])

    def test_full_mode_all_ones(self, capsys):
        code, out, _ = run(capsys, "mask", "--len", "4", "--corners", "1",
                           "--mode", "full", "--json")
        assert code == 0
        mask = json.loads(out)["mask"]
        assert all(all(v == 1 for v in row) for row in mask)

    def test_too_short_rejected(self, capsys):
        code, _, err = run(capsys, "mask", "--len", "3", "--corners", "2")
        assert code == 1


class TestFlopsCommand:
    def test_matches_library_closed_form(self, capsys):
        code, out, _ = run(capsys, "flops", "--limit", "32", "--depth", "2",
                           "--dim", "64", "--heads", "4", "--corners", "2",
                           "--proj-dim", "32", "--json")
        assert code == 0
        cfg = text_encoder.TextEncoderConfig(
            vocab_size=2, limit=32, m=2, depth=2, width=64, heads=4,
            projection_dim=32)
        assert json.loads(out)["flops"] == evaluation.flops_estimate(cfg, 32)


class TestTrainEvalCommands:
    def test_train_then_eval_and_inspect(self, manifest, tmp_path, capsys):
        out_dir = str(tmp_path / "run")
        code, out, _ = run(capsys, "train", "--corpus", manifest,
                           "--out-dir", out_dir, "--steps", "2",
                           "--batch-size", "4", "--warmup-steps", "1",
                           "--limit", "16", "--text-depth", "1",
                           "--text-width", "16", "--text-heads", "2",
                           "--projection-dim", "8", "--json")
        assert code == 0
        assert json.loads(out)["steps"] == 2

        ckpt_path = f"{out_dir}/ckpt_final.bin"
        code, out, _ = run(capsys, "eval", "--corpus", manifest,
                           "--checkpoint", ckpt_path, "--json")
        assert code == 0
        report = json.loads(out)
        assert "i2t_r@1" in report and report["n_images"] == 8

        code, out, _ = run(capsys, "inspect", "--checkpoint", ckpt_path, "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["step"] == 2 and payload["m"] == 2

    def test_eval_missing_checkpoint_is_runtime_error(self, manifest, capsys):
        code, _, err = run(capsys, "eval", "--corpus", manifest,
                           "--checkpoint", "/nonexistent.bin")
        assert code == 2

    def test_train_missing_corpus_is_runtime_error(self, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--corpus", "/nonexistent.jsonl",
                         "--out-dir", str(tmp_path / "x"), "--steps", "1")
        assert code == 2


class TestConfigPrecedence:
    def test_print_config_defaults(self, capsys):
        code, out, _ = run(capsys, "train", "--corpus", "unused",
                           "--out-dir", "unused", "--print-config", "--json")
        assert code == 0
        assert json.loads(out)["steps"] == 600

    def test_file_overrides_defaults_flags_override_file(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg"
        cfg_file.write_text("steps = 50\nlr = 0.005\nuse_long_texts = false\n")
        code, out, _ = run(capsys, "train", "--corpus", "u", "--out-dir", "u",
                           "--config", str(cfg_file), "--lr", "0.001",
                           "--print-config", "--json")
        assert code == 0
        cfg = json.loads(out)
        assert cfg["steps"] == 50            # from file
        assert cfg["lr"] == 0.001            # flag wins
        assert cfg["use_long_texts"] is False

    def test_env_var_config(self, tmp_path, capsys, monkeypatch):
        cfg_file = tmp_path / "cfg"
        cfg_file.write_text("m = 4\n")
        monkeypatch.setenv(cli.CONFIG_ENV, str(cfg_file))
        code, out, _ = run(capsys, "train", "--corpus", "u", "--out-dir", "u",
                           "--print-config", "--json")
        assert code == 0
        assert json.loads(out)["m"] == 4

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg"
        cfg_file.write_text("frobnicate = 1\n")
        code, _, err = run(capsys, "train", "--corpus", "u", "--out-dir", "u",
                           "--config", str(cfg_file), "--print-config")
        assert code == 1
        assert "unknown config field" in err

    def test_malformed_config_line_is_usage_error(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg"
        cfg_file.write_text("steps 50\n")
        code, _, _ = run(capsys, "train", "--corpus", "u", "--out-dir", "u",
                         "--config", str(cfg_file), "--print-config")
        assert code == 1


class TestSweepCommand:
    def test_tiny_sweep(self, manifest, tmp_path, capsys):
        out_dir = str(tmp_path / "sweep")
        code, out, _ = run(capsys, "sweep", "--axis", "m_corners",
                           "--values", "0,2", "--seeds", "1",
                           "--corpus", manifest, "--out", out_dir,
                           "--steps", "2", "--batch-size", "4",
                           "--warmup-steps", "1", "--limit", "16",
                           "--text-depth", "1", "--text-width", "16",
                           "--text-heads", "2", "--projection-dim", "8",
                           "--json")
        assert code == 0
        assert json.loads(out)["cells"] == 2
        assert (tmp_path / "sweep" / "rows.csv").exists()
        assert (tmp_path / "sweep" / "plot_data.csv").exists()
        assert (tmp_path / "sweep" / "plot_data_agg.csv").exists()

    def test_bad_values_is_usage_error(self, manifest, tmp_path, capsys):
        code, _, err = run(capsys, "sweep", "--axis", "m_corners",
                           "--values", "two", "--corpus", manifest,
                           "--out", str(tmp_path / "s"))
        assert code == 1
        assert "bad --values" in err
