"""Extraction CLI: exit codes, file naming, config precedence."""

import numpy as np
import pytest
from click.testing import CliRunner

from xsns import tensorstore
from xsns.baselines import read_language_vectors

from xsns_adapter.cli import main
from xsns_adapter.jobs import AdapterError, parse_seeds, read_config


def run_cli(*args):
    return CliRunner().invoke(main, [str(a) for a in args],
                              catch_exceptions=False)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "job.cfg"
        path.write_text(
            "# defaults for the nightly run\n"
            "model = /ckpts/base   # local directory\n"
            "sample_size= 64\n"
            "seeds =0,1\n",
            encoding="utf-8",
        )
        assert read_config(path) == {
            "model": "/ckpts/base",
            "sample_size": "64",
            "seeds": "0,1",
        }

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "job.cfg"
        path.write_text("models=/x\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="unknown config key"):
            read_config(path)

    def test_missing_separator_rejected(self, tmp_path):
        path = tmp_path / "job.cfg"
        path.write_text("model /x\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="expected key=value"):
            read_config(path)


class TestParseSeeds:
    def test_parses_comma_list(self):
        assert parse_seeds("0,1,2") == (0, 1, 2)

    @pytest.mark.parametrize("text", ["", "a,b", "1,1"])
    def test_rejects_bad_lists(self, text):
        with pytest.raises(AdapterError):
            parse_seeds(text)


class TestGroup:
    def test_help_lists_commands(self):
        result = run_cli("--help")
        assert result.exit_code == 0
        for command in ("fisher", "embed", "make-checkpoint"):
            assert command in result.output

    def test_bad_config_exits_1(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("nonsense=1\n", encoding="utf-8")
        result = run_cli("--config", path, "fisher", "--help")
        assert result.exit_code == 1
        assert "xsns-adapter: error:" in result.output

    def test_missing_config_exits_2(self):
        result = run_cli("--config", "no-such.cfg", "fisher", "--help")
        assert result.exit_code == 2


class TestMakeCheckpoint:
    def test_builds_loadable_checkpoint(self, tmp_path):
        dest = tmp_path / "ck"
        result = run_cli("make-checkpoint", dest, "--hidden-size", "16",
                         "--layers", "1", "--heads", "2",
                         "--intermediate", "32")
        assert result.exit_code == 0
        assert "wrote checkpoint" in result.output
        from xsns_adapter import load_model

        model, tok = load_model(str(dest))
        assert model.config.hidden_size == 16
        assert tok.mask_token_id is not None

    def test_indivisible_heads_exit_1(self, tmp_path):
        result = run_cli("make-checkpoint", tmp_path / "ck",
                         "--hidden-size", "30", "--heads", "4")
        assert result.exit_code == 1
        assert "divisible" in result.output


class TestFisherCommand:
    def test_one_dump_per_seed(self, ckpt_dir, latin_lines, corpus_file,
                               tmp_path):
        corpus = corpus_file(latin_lines[:10], "lat.txt")
        out = tmp_path / "dumps"
        result = run_cli("fisher", corpus, "--model", ckpt_dir,
                         "--language", "lat", "--seeds", "0,1",
                         "--sample-size", "4", "--max-length", "32",
                         "--out-dir", out)
        assert result.exit_code == 0
        for seed in (0, 1):
            dump = tensorstore.load_dump(out / f"lat_lm_masked_s{seed}.fgrd")
            assert dump.seed == seed
            assert dump.example_count == 4
        assert result.output.count("wrote ") == 2

    def test_missing_language_exits_1(self, ckpt_dir, latin_lines,
                                      corpus_file):
        corpus = corpus_file(latin_lines[:4])
        result = run_cli("fisher", corpus, "--model", ckpt_dir)
        assert result.exit_code == 1
        assert "--language" in result.output

    def test_missing_model_exits_1(self, latin_lines, corpus_file):
        corpus = corpus_file(latin_lines[:4])
        result = run_cli("fisher", corpus, "--language", "xx")
        assert result.exit_code == 1
        assert "no model" in result.output

    def test_missing_corpus_exits_2(self, ckpt_dir):
        result = run_cli("fisher", "no-such.txt", "--model", ckpt_dir,
                         "--language", "xx")
        assert result.exit_code == 2

    def test_duplicate_seeds_exit_1(self, ckpt_dir, latin_lines, corpus_file):
        corpus = corpus_file(latin_lines[:4])
        result = run_cli("fisher", corpus, "--model", ckpt_dir,
                         "--language", "xx", "--seeds", "1,1")
        assert result.exit_code == 1

    def test_small_corpus_warns_about_replacement(self, ckpt_dir, latin_lines,
                                                  corpus_file, tmp_path):
        corpus = corpus_file(latin_lines[:3], "xs.txt")
        result = run_cli("fisher", corpus, "--model", ckpt_dir,
                         "--language", "xs", "--seeds", "0",
                         "--sample-size", "5", "--max-length", "32",
                         "--out-dir", tmp_path / "d")
        assert result.exit_code == 0
        assert "sampling with replacement" in result.output

    def test_config_supplies_model_and_flags_win(self, ckpt_dir, latin_lines,
                                                 corpus_file, tmp_path):
        corpus = corpus_file(latin_lines[:10], "cf.txt")
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"model={ckpt_dir}\nsample_size=3\nseeds=7\nmax_length=32\n"
            f"out_dir={tmp_path / 'd'}\n",
            encoding="utf-8",
        )
        result = run_cli("--config", cfg, "fisher", corpus,
                         "--language", "cf", "--sample-size", "5")
        assert result.exit_code == 0
        dump = tensorstore.load_dump(tmp_path / "d" / "cf_lm_masked_s7.fgrd")
        assert dump.example_count == 5  # flag beat the file's 3
        assert dump.seed == 7

    def test_loop_flag_matches_batched_output(self, ckpt_dir, latin_lines,
                                              corpus_file, tmp_path):
        corpus = corpus_file(latin_lines[:6], "lp.txt")
        shared = ["--model", ckpt_dir, "--language", "lp", "--seeds", "0",
                  "--sample-size", "4", "--max-length", "32"]
        run_cli("fisher", corpus, *shared, "--out-dir", tmp_path / "a")
        run_cli("fisher", corpus, *shared, "--loop", "--out-dir",
                tmp_path / "b")
        a = tensorstore.load_dump(tmp_path / "a" / "lp_lm_masked_s0.fgrd")
        b = tensorstore.load_dump(tmp_path / "b" / "lp_lm_masked_s0.fgrd")
        gap = np.abs(a.values - b.values).max() / a.values.max()
        assert gap < 1e-5


class TestEmbedCommand:
    def test_writes_vectors_with_metadata(self, ckpt_dir, latin_lines,
                                          cyrillic_lines, corpus_file,
                                          tmp_path):
        lat = corpus_file(latin_lines[:6], "lat.txt")
        cyr = corpus_file(cyrillic_lines[:6], "cyr.txt")
        out = tmp_path / "vecs.txt"
        result = run_cli("embed", lat, cyr, "--model", ckpt_dir,
                         "--sample-size", "4", "--max-length", "32",
                         "-o", out)
        assert result.exit_code == 0
        vectors = read_language_vectors(out, kind="embedding")
        assert [v.language for v in vectors] == ["lat", "cyr"]
        assert all(np.isfinite(v.vector).all() for v in vectors)
        text = out.read_text(encoding="utf-8")
        assert "# pooling=" in text
        assert "# model_id=" in text

    def test_duplicate_stems_exit_1(self, ckpt_dir, latin_lines, corpus_file,
                                    tmp_path):
        one = corpus_file(latin_lines[:4], "same.txt")
        other_dir = tmp_path / "other"
        other_dir.mkdir()
        two = other_dir / "same.txt"
        two.write_text("\n".join(latin_lines[:4]) + "\n", encoding="utf-8")
        result = run_cli("embed", one, two, "--model", ckpt_dir)
        assert result.exit_code == 1
        assert "duplicate" in result.output

    def test_missing_model_exits_1(self, latin_lines, corpus_file):
        corpus = corpus_file(latin_lines[:4])
        result = run_cli("embed", corpus)
        assert result.exit_code == 1
