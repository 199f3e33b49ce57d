import hashlib
import json

import numpy as np
import pytest

from dualpath.cli import main
from dualpath.data import load_dataset
from dualpath.model import load_checkpoint


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny generated dataset plus one trained checkpoint, shared across
    CLI tests (none of them mutate it)."""
    root = tmp_path_factory.mktemp("cli")
    data_dir = root / "data"
    rc = main(["synth-gen", "--out-dir", str(data_dir),
               "--train", "120", "--dev", "40", "--test", "40", "--seed", "3"])
    assert rc == 0
    ckpt = root / "model.ckpt"
    rc = main(["train", "--data", str(data_dir / "train.jsonl"), "--out", str(ckpt),
               "--mode", "dual", "--dim", "8", "--seed", "1", "--epochs", "2",
               "--answers", "10"])
    assert rc == 0
    return root


class TestSynthGen:
    def test_outputs_exist(self, workspace):
        data_dir = workspace / "data"
        for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "question_vocab.txt"):
            assert (data_dir / name).exists()

    def test_deterministic(self, tmp_path):
        for sub in ("x", "y"):
            rc = main(["synth-gen", "--out-dir", str(tmp_path / sub),
                       "--train", "10", "--dev", "5", "--test", "5", "--seed", "11"])
            assert rc == 0
        assert sha(tmp_path / "x" / "train.jsonl") == sha(tmp_path / "y" / "train.jsonl")

    def test_bad_sizes_exit_1(self, tmp_path, capsys):
        rc = main(["synth-gen", "--out-dir", str(tmp_path), "--train", "0"])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_and_log_produced(self, workspace):
        assert (workspace / "model.ckpt").exists()
        log = workspace / "model.ckpt.log.csv"
        assert log.exists()
        lines = log.read_text().splitlines()
        assert lines[0] == "epoch,split,loss,All,YesNo,Num,Others"
        assert len(lines) == 3  # 2 train epochs

    def test_checkpoint_carries_vocabs(self, workspace):
        model = load_checkpoint(workspace / "model.ckpt")
        assert model.answer_vocab is not None and len(model.answer_vocab) == 10
        assert model.question_vocab[0] == "<unk>"
        assert model.source_names == ["holistic", "regional"]

    def test_dim_1024_works(self, workspace, tmp_path):
        ckpt = tmp_path / "big.ckpt"
        rc = main(["train", "--data", str(workspace / "data" / "train.jsonl"),
                   "--out", str(ckpt), "--mode", "dual", "--dim", "1024",
                   "--seed", "0", "--epochs", "1", "--answers", "10"])
        assert rc == 0
        assert load_checkpoint(ckpt).fusion_config.common_dim == 1024

    def test_mode_aliases(self, workspace, tmp_path):
        for alias, mode in (("sum", "sum_only"), ("mul", "mul_only")):
            ckpt = tmp_path / f"{alias}.ckpt"
            rc = main(["train", "--data", str(workspace / "data" / "train.jsonl"),
                       "--out", str(ckpt), "--mode", alias, "--dim", "8",
                       "--seed", "0", "--epochs", "1", "--answers", "10"])
            assert rc == 0
            assert load_checkpoint(ckpt).fusion_config.mode == mode

    def test_config_file_fields(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epochs": 1, "answer_vocab_size": 10,
                                   "common_dim": 12, "hidden_dim": 8, "embed_dim": 8,
                                   "num_layers": 1, "head_dim": 16,
                                   "learning_rate": 0.001}))
        ckpt = tmp_path / "cfg.ckpt"
        rc = main(["train", "--data", str(workspace / "data" / "train.jsonl"),
                   "--out", str(ckpt), "--config", str(cfg), "--seed", "0"])
        assert rc == 0
        model = load_checkpoint(ckpt)
        assert model.fusion_config.common_dim == 12
        assert model.lstm_config.num_layers == 1

    def test_determinism_bit_identical(self, workspace, tmp_path):
        outs = []
        for sub in ("r1", "r2"):
            d = tmp_path / sub
            d.mkdir()
            ckpt, log = d / "m.ckpt", d / "m.csv"
            rc = main(["train", "--data", str(workspace / "data" / "train.jsonl"),
                       "--out", str(ckpt), "--log", str(log), "--mode", "dual",
                       "--dim", "8", "--seed", "7", "--epochs", "2", "--answers", "10"])
            assert rc == 0
            outs.append((sha(ckpt), sha(log)))
        assert outs[0] == outs[1]

    def test_missing_data_file_exit_1(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "none.jsonl"),
                   "--out", str(tmp_path / "m.ckpt")])
        assert rc == 1

    def test_inputs_not_mutated(self, workspace):
        train_path = workspace / "data" / "train.jsonl"
        before = sha(train_path)
        main(["eval", "--ckpt", str(workspace / "model.ckpt"),
              "--data", str(train_path)])
        assert sha(train_path) == before


class TestEval:
    def test_table_columns(self, workspace, capsys):
        rc = main(["eval", "--ckpt", str(workspace / "model.ckpt"),
                   "--data", str(workspace / "data" / "test.jsonl")])
        assert rc == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].split() == ["All", "Y/N", "Num", "Others"]
        assert len(out[1].split()) == 4

    def test_multiple_choice_mode(self, workspace, capsys):
        rc = main(["eval", "--ckpt", str(workspace / "model.ckpt"),
                   "--data", str(workspace / "data" / "test.jsonl"),
                   "--mode", "multiple_choice"])
        assert rc == 0

    def test_requires_target(self, workspace, capsys):
        rc = main(["eval", "--data", str(workspace / "data" / "test.jsonl")])
        assert rc == 1


class TestPredict:
    def test_prints_vocab_answer(self, workspace, capsys):
        rc = main(["predict", "--ckpt", str(workspace / "model.ckpt"),
                   "--data", str(workspace / "data" / "test.jsonl"), "--index", "3"])
        assert rc == 0
        answer = capsys.readouterr().out.strip()
        assert answer in load_checkpoint(workspace / "model.ckpt").answer_vocab

    def test_index_out_of_range(self, workspace, capsys):
        rc = main(["predict", "--ckpt", str(workspace / "model.ckpt"),
                   "--data", str(workspace / "data" / "test.jsonl"), "--index", "999"])
        assert rc == 1


class TestEnsembleTune:
    def test_tunes_and_writes_spec(self, workspace, tmp_path, capsys):
        ckpts = [str(workspace / "model.ckpt")]
        second = tmp_path / "m2.ckpt"
        rc = main(["train", "--data", str(workspace / "data" / "train.jsonl"),
                   "--out", str(second), "--mode", "dual", "--dim", "12",
                   "--seed", "5", "--epochs", "2", "--answers", "10"])
        assert rc == 0
        ckpts.append(str(second))
        spec_path = tmp_path / "spec.json"
        rc = main(["ensemble-tune", "--ckpts", *ckpts,
                   "--data", str(workspace / "data" / "dev.jsonl"),
                   "--iterations", "3", "--out", str(spec_path)])
        assert rc == 0
        spec = json.loads(spec_path.read_text())
        assert len(spec["units"]) == 2
        rc = main(["eval", "--ensemble", str(spec_path),
                   "--data", str(workspace / "data" / "test.jsonl")])
        assert rc == 0


class TestGradcheck:
    def test_passes_on_fresh_build(self, capsys):
        rc = main(["gradcheck", "--sources", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "model/N=2" in out
        assert "FAIL" not in out

    def test_bad_sources_flag(self, capsys):
        assert main(["gradcheck", "--sources", "9"]) == 1


class TestEncode:
    def write_features(self, path, rows):
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps({"feature": list(row)}) + "\n")

    def test_l2(self, tmp_path):
        src, dst = tmp_path / "in.jsonl", tmp_path / "out.jsonl"
        self.write_features(src, [[3.0, 4.0], [1.0, 0.0]])
        assert main(["encode", "--op", "l2", "--input", str(src), "--output", str(dst)]) == 0
        rows = [json.loads(line)["feature"] for line in dst.read_text().splitlines()]
        assert np.allclose(rows[0], [0.6, 0.8])

    def test_pca_fit_apply(self, tmp_path):
        src = tmp_path / "in.jsonl"
        rng = np.random.default_rng(0)
        self.write_features(src, rng.normal(size=(12, 5)))
        model = tmp_path / "pca.npz"
        assert main(["encode", "--op", "pca-fit", "--input", str(src),
                     "--model", str(model), "--k", "2"]) == 0
        out = tmp_path / "out.jsonl"
        assert main(["encode", "--op", "pca-apply", "--input", str(src),
                     "--model", str(model), "--output", str(out)]) == 0
        rows = [json.loads(line)["feature"] for line in out.read_text().splitlines()]
        assert len(rows) == 12 and len(rows[0]) == 2

    def test_vlad_fit_apply(self, tmp_path):
        src = tmp_path / "regions.jsonl"
        self.write_features(src, [[1.0, 0.0], [0.0, 1.0]])
        center = tmp_path / "center.npz"
        assert main(["encode", "--op", "vlad-fit", "--input", str(src),
                     "--model", str(center)]) == 0
        out = tmp_path / "vlad.json"
        assert main(["encode", "--op", "vlad-apply", "--input", str(src),
                     "--model", str(center), "--output", str(out)]) == 0
        vec = json.loads(out.read_text())["feature"]
        assert len(vec) == 2

    def test_coords(self, tmp_path):
        src, dst = tmp_path / "boxes.jsonl", tmp_path / "coords.jsonl"
        with open(src, "w") as fh:
            fh.write(json.dumps({"bbox": [10, 20, 30, 60], "image_size": [100, 200]}) + "\n")
        assert main(["encode", "--op", "coords", "--input", str(src),
                     "--output", str(dst)]) == 0
        vec = json.loads(dst.read_text().splitlines()[0])["feature"]
        assert vec == [0.1, 0.1, 0.3, 0.3, 0.2, 0.2, 0.2, 0.2]

    def test_avg_softmax(self, tmp_path):
        src, dst = tmp_path / "probs.jsonl", tmp_path / "avg.json"
        self.write_features(src, [[1.0, 0.0], [0.0, 1.0]])
        assert main(["encode", "--op", "avg-softmax", "--input", str(src),
                     "--output", str(dst), "--expected-count", "2"]) == 0
        assert json.loads(dst.read_text())["feature"] == [0.5, 0.5]

    def test_missing_required_flag(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        self.write_features(src, [[1.0, 2.0]])
        assert main(["encode", "--op", "pca-fit", "--input", str(src)]) == 1


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["gradcheck", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand(self, capsys):
        assert main([]) == 1
