import numpy as np
import pytest

from dualpath.data import VqaExample
from dualpath.ensemble import (
    EnsembleSpec,
    EnsembleUnit,
    LoadedEnsemble,
    ensemble_predict,
    load_ensemble_spec,
    save_ensemble_spec,
    tune_ensemble_weights,
)
from dualpath.lstm import LstmConfig
from dualpath.model import DualPathConfig, DualPathModel, save_checkpoint
from dualpath.training import TrainConfig, evaluate, train

ANSWERS = ["a0", "a1", "a2"]
QUESTION_VOCAB = ["<unk>", "is", "w1", "w2", "w3"]


def unit_model(seed=0, dim=6):
    lstm_cfg = LstmConfig(vocab_size=5, embed_dim=3, hidden_dim=4, num_layers=1)
    fus_cfg = DualPathConfig(image_dims=(4,), question_dim=4, common_dim=dim,
                             num_answers=3, mode="dual", head_dim=8)
    return DualPathModel.build(lstm_cfg, fus_cfg, seed=seed, answer_vocab=ANSWERS,
                               question_vocab=QUESTION_VOCAB, source_names=["img"])


def toy_examples(n=30, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(rng.integers(0, 3))
        v = rng.uniform(-0.2, 0.2, 4)
        v[label] += 2.0
        out.append(VqaExample(example_id=f"e{i}", image_feats={"img": v},
                              question="is w1 w2", human_answers=[f"a{label}"] * 10))
    return out


def trained_unit(seed, examples, epochs=30):
    model = unit_model(seed=seed)
    train(model, examples, TrainConfig(batch_size=10, epochs=epochs, learning_rate=0.01,
                                       answer_vocab_size=3, seed=seed))
    return model


class TestSpecFiles:
    def test_round_trip(self, tmp_path):
        spec = EnsembleSpec(units=[EnsembleUnit("a.ckpt", 16, 0.25),
                                   EnsembleUnit("b.ckpt", 32, 0.75)])
        path = tmp_path / "spec.json"
        save_ensemble_spec(path, spec)
        loaded = load_ensemble_spec(path)
        assert loaded.units == spec.units

    def test_weights_normalize(self):
        spec = EnsembleSpec(units=[EnsembleUnit("a", 8, 2.0), EnsembleUnit("b", 8, 6.0)])
        assert np.allclose(spec.normalized_weights(), [0.25, 0.75])
        assert spec.normalized_weights().sum() == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            EnsembleSpec(units=[])
        with pytest.raises(ValueError):
            EnsembleSpec(units=[EnsembleUnit("a", 8, -1.0)])
        with pytest.raises(ValueError):
            EnsembleSpec(units=[EnsembleUnit("a", 8, 0.0)])

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text('{"units": [{"checkpoint": "x"}]}')
        with pytest.raises(ValueError):
            load_ensemble_spec(path)

    def test_from_spec_checks_common_dim(self, tmp_path):
        model = unit_model(dim=6)
        ckpt = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, model)
        spec = EnsembleSpec(units=[EnsembleUnit(str(ckpt), 32, 1.0)])
        with pytest.raises(ValueError, match="common_dim"):
            LoadedEnsemble.from_spec(spec)


class TestLoadedEnsemble:
    def test_degenerate_weight_matches_single_unit(self):
        examples = toy_examples()
        a, b = trained_unit(1, examples, epochs=10), trained_unit(2, examples, epochs=2)
        ens = LoadedEnsemble([a, b], [1.0, 0.0])
        from dualpath.training import predict_dataset
        assert ens.predict_answers(examples, "open_ended") == predict_dataset(a, examples)

    def test_equal_weights_order_invariant(self):
        examples = toy_examples()
        units = [trained_unit(s, examples, epochs=5) for s in (1, 2, 3)]
        p1 = LoadedEnsemble(units, [1, 1, 1]).probabilities(examples)
        p2 = LoadedEnsemble(units[::-1], [1, 1, 1]).probabilities(examples)
        assert np.allclose(p1, p2, atol=1e-12)

    def test_probabilities_are_convex_mixture(self):
        examples = toy_examples(n=10)
        units = [trained_unit(s, examples, epochs=3) for s in (1, 2)]
        probs = LoadedEnsemble(units, [0.3, 0.7]).probabilities(examples)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-10)
        assert (probs >= 0).all()

    def test_vocab_mismatch_rejected(self):
        a = unit_model(seed=1)
        b = unit_model(seed=2)
        b.answer_vocab = ["x0", "x1", "x2"]
        with pytest.raises(ValueError, match="vocabulary"):
            LoadedEnsemble([a, b], [0.5, 0.5])

    def test_weight_validation(self):
        a, b = unit_model(1), unit_model(2)
        with pytest.raises(ValueError):
            LoadedEnsemble([a, b], [0.5])
        with pytest.raises(ValueError):
            LoadedEnsemble([a, b], [-0.5, 1.5])

    def test_ensemble_predict_single_example(self):
        examples = toy_examples(n=4)
        units = [trained_unit(s, examples, epochs=10) for s in (1, 2)]
        ens = LoadedEnsemble(units, [0.5, 0.5])
        idx = ensemble_predict(ens, examples[0])
        assert 0 <= idx < 3
        probs = ens.probabilities([examples[0]])[0]
        assert idx == int(np.argmax(probs))


class TestTuning:
    def test_needs_two_units_and_dev_data(self):
        examples = toy_examples(n=4)
        single = LoadedEnsemble([trained_unit(1, examples, epochs=2)], [1.0])
        with pytest.raises(ValueError):
            tune_ensemble_weights(single, examples)
        pair = LoadedEnsemble([trained_unit(1, examples, epochs=2),
                               trained_unit(2, examples, epochs=2)], [0.5, 0.5])
        with pytest.raises(ValueError):
            tune_ensemble_weights(pair, [])

    def test_dominant_unit_gets_top_weight(self):
        examples = toy_examples(n=40, seed=3)
        good = trained_unit(1, examples, epochs=40)
        bad = unit_model(seed=9)  # untrained
        ens = LoadedEnsemble([bad, good], [0.5, 0.5])
        weights = tune_ensemble_weights(ens, examples, iterations=8)
        assert weights[1] >= weights[0]
        assert weights.sum() == pytest.approx(1.0)

    def test_identical_units_keep_single_unit_accuracy(self):
        examples = toy_examples(n=30, seed=4)
        a = trained_unit(5, examples, epochs=20)
        b = trained_unit(5, examples, epochs=20)  # same seed: identical twin
        single_acc = evaluate(a, examples)["All"]
        ens = LoadedEnsemble([a, b], [0.5, 0.5])
        tune_ensemble_weights(ens, examples, iterations=4)
        assert evaluate(ens, examples)["All"] == pytest.approx(single_acc)

    def test_never_worse_than_uniform(self):
        examples = toy_examples(n=40, seed=6)
        units = [trained_unit(s, examples, epochs=8) for s in (1, 2, 3)]
        uniform = LoadedEnsemble(units, [1, 1, 1])
        uniform_acc = evaluate(uniform, examples)["All"]
        tuned = LoadedEnsemble(units, [1, 1, 1])
        tune_ensemble_weights(tuned, examples, iterations=6)
        assert evaluate(tuned, examples)["All"] >= uniform_acc

    def test_weights_stay_on_simplex(self):
        examples = toy_examples(n=20, seed=7)
        units = [trained_unit(s, examples, epochs=5) for s in (1, 2, 3)]
        ens = LoadedEnsemble(units, [1, 1, 1])
        weights = tune_ensemble_weights(ens, examples, iterations=5)
        assert (weights >= 0).all()
        assert weights.sum() == pytest.approx(1.0)
