import json

import numpy as np
import pytest

from lammsc import channel, cge, cli, corpus, pipeline


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def tiny_model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "tiny.cge"
    pattern = channel.make_pilot_pattern(16, 16, 4, 4, seed=97)
    pairs = cge.make_training_set(64, 16, 16, 2.0, 2.0, pattern, 10.0, seed=2)
    model = cge.train_cgan(pairs, cge.TrainConfig(epochs=2), seed=5)
    cge.save_model(model, path)
    return str(path)


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "scenes.jsonl"
    corpus.save_corpus(path, corpus.synthetic_corpus(6, seed=21))
    return str(path)


class TestGenChannels:
    def test_writes_loadable_dataset(self, capsys, tmp_path):
        out = tmp_path / "chan.lmch"
        code, stdout, _ = run_cli(capsys, "gen-channels", "--out", str(out),
                                  "--count", "4", "--rows", "16", "--cols", "16",
                                  "--sigma-f", "2", "--sigma-t", "2")
        assert code == 0
        loaded = channel.load_channel_dataset(out)
        assert len(loaded) == 4
        assert loaded[0].gains.shape == (16, 16)

    def test_deterministic_bytes(self, capsys, tmp_path):
        a, b = tmp_path / "a.lmch", tmp_path / "b.lmch"
        for out in (a, b):
            run_cli(capsys, "gen-channels", "--out", str(out), "--count", "3",
                    "--rows", "16", "--cols", "16", "--seed", "9")
        assert a.read_bytes() == b.read_bytes()


class TestTrainEval:
    def test_train_then_eval(self, capsys, tmp_path):
        model_path = tmp_path / "model.cge"
        code, stdout, _ = run_cli(
            capsys, "train-cge", "--out", str(model_path), "--pairs", "64",
            "--epochs", "1", "--rows", "16", "--cols", "16", "--sigma-f", "2",
            "--sigma-t", "2", "--snr-db", "10", "--seed", "3", "--data-seed", "4")
        assert code == 0
        assert "validation NMSE" in stdout
        model = cge.load_model(model_path)
        assert (model.rows, model.cols) == (16, 16)

        code, stdout, _ = run_cli(
            capsys, "eval-cge", "--model", str(model_path), "--count", "5",
            "--rows", "16", "--cols", "16", "--sigma-f", "2", "--sigma-t", "2",
            "--snr-db", "5,10")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0] == "snr_db,cge_nmse,ls_nmse,n"
        assert len(lines) == 3

    def test_train_from_channel_dataset(self, capsys, tmp_path):
        chan_path = tmp_path / "chan.lmch"
        run_cli(capsys, "gen-channels", "--out", str(chan_path), "--count", "64",
                "--rows", "16", "--cols", "16", "--sigma-f", "2", "--sigma-t", "2")
        model_path = tmp_path / "model.cge"
        code, _, _ = run_cli(
            capsys, "train-cge", "--out", str(model_path), "--channels",
            str(chan_path), "--epochs", "1", "--rows", "16", "--cols", "16",
            "--snr-db", "10")
        assert code == 0
        assert model_path.exists()


class TestRun:
    def test_text_payload(self, capsys):
        code, stdout, _ = run_cli(capsys, "run", "--text", "over the air",
                                  "--snr-db", "inf", "--estimator", "perfect",
                                  "--lkb-enabled", "false")
        assert code == 0
        record = json.loads(stdout)
        assert record["recovered_text"] == "over the air"
        assert record["cosine"] == 1.0

    def test_corpus_payload(self, capsys, corpus_path):
        code, stdout, _ = run_cli(capsys, "run", "--corpus", corpus_path,
                                  "--index", "1", "--snr-db", "inf",
                                  "--estimator", "perfect")
        assert code == 0
        record = json.loads(stdout)
        assert record["correct"] is True

    def test_cge_estimator_via_flags(self, capsys, tiny_model_path, corpus_path):
        code, stdout, _ = run_cli(
            capsys, "run", "--corpus", corpus_path, "--rows", "16", "--cols", "16",
            "--sigma-f", "2", "--sigma-t", "2", "--snr-db", "10",
            "--estimator", "cge", "--model-path", tiny_model_path)
        assert code == 0
        record = json.loads(stdout)
        assert record["estimator"] == "cge"
        assert record["nmse"] > 0.0

    def test_missing_payload_is_config_error(self, capsys):
        code, _, stderr = run_cli(capsys, "run")
        assert code == 1
        assert "config error" in stderr

    def test_missing_corpus_file_is_runtime_error(self, capsys):
        code, _, stderr = run_cli(capsys, "run", "--corpus", "/nope/missing.jsonl")
        assert code == 2


class TestSweep:
    def test_report_file_and_determinism(self, capsys, tmp_path, corpus_path):
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        for out in (out1, out2):
            code, _, _ = run_cli(
                capsys, "sweep", "--corpus", corpus_path, "--out", str(out),
                "--snr-db", "0,10", "--estimators", "perfect,none",
                "--master-seed", "17")
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert lines[0] == pipeline.REPORT_HEADER
        assert len(lines) == 5

    def test_config_file_with_flag_override(self, capsys, tmp_path, corpus_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"snr_db": [0.0], "estimator": "none",
                                        "corpus_path": corpus_path}))
        code, stdout, _ = run_cli(capsys, "sweep", "--config", str(cfg_path),
                                  "--snr-db", "20")
        assert code == 0
        assert stdout.splitlines()[1].startswith("20,none,")

    def test_missing_corpus_is_config_error(self, capsys):
        code, _, stderr = run_cli(capsys, "sweep", "--snr-db", "10")
        assert code == 1
        assert "config error" in stderr
