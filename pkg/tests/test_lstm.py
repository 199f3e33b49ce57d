import math

import numpy as np
import pytest

import dualpath.autograd as ag
from dualpath.autograd import Tensor, grad_check
from dualpath.lstm import (
    GATES,
    LstmConfig,
    build_vocab_index,
    embed,
    encode_question,
    encode_question_batch,
    init_lstm_params,
    load_vocabulary,
    lstm_step,
    save_vocabulary,
    tokenize,
    tokens_to_ids,
)


# ---------------------------------------------------------------------------
# Independent oracle: plain Python loops over floats, no numpy vector math.


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def oracle_step(x, h, c, layer):
    hidden = len(h)
    gates = {}
    for g in GATES:
        wx, wh, b = layer.wx[g].data, layer.wh[g].data, layer.b[g].data
        act = math.tanh if g == "g" else _sig
        vals = []
        for j in range(hidden):
            pre = b[j]
            for k in range(len(x)):
                pre += wx[j, k] * x[k]
            for k in range(hidden):
                pre += wh[j, k] * h[k]
            vals.append(act(pre))
        gates[g] = vals
    c_new = [gates["f"][j] * c[j] + gates["i"][j] * gates["g"][j] for j in range(hidden)]
    h_new = [gates["o"][j] * math.tanh(c_new[j]) for j in range(hidden)]
    return h_new, c_new


def oracle_encode(token_ids, params, config):
    inputs = [list(params.embedding.data[i]) for i in token_ids]
    for layer in params.layers:
        h = [0.0] * config.hidden_dim
        c = [0.0] * config.hidden_dim
        outputs = []
        for x in inputs:
            h, c = oracle_step(x, h, c, layer)
            outputs.append(h)
        inputs = outputs
    return np.array(inputs[-1])


def small_params(config, seed=0):
    return init_lstm_params(config, np.random.default_rng(seed))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LstmConfig(vocab_size=0, embed_dim=1, hidden_dim=1, num_layers=1)
        with pytest.raises(ValueError):
            LstmConfig(vocab_size=5, embed_dim=1, hidden_dim=1, num_layers=0)


class TestEmbed:
    def test_identity_matrix_gives_one_hot(self):
        config = LstmConfig(vocab_size=4, embed_dim=4, hidden_dim=2, num_layers=1)
        params = small_params(config)
        params.embedding.data[...] = np.eye(4)
        assert np.array_equal(embed(2, params).data, [0, 0, 1, 0])

    def test_zero_matrix_gives_zero(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=2, num_layers=1)
        params = small_params(config)
        params.embedding.data[...] = 0.0
        assert np.array_equal(embed(1, params).data, [0, 0, 0])

    def test_equals_one_hot_matmul(self):
        config = LstmConfig(vocab_size=6, embed_dim=4, hidden_dim=2, num_layers=1)
        params = small_params(config, seed=3)
        k = 4
        one_hot = np.zeros((1, 6))
        one_hot[0, k] = 1.0
        via_matmul = ag.matmul(Tensor(one_hot), params.embedding).data[0]
        assert np.array_equal(embed(k, params).data, via_matmul)

    def test_out_of_range(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=2, num_layers=1)
        with pytest.raises(ValueError):
            embed(4, small_params(config))


class TestStep:
    def test_all_zero_weights_and_state(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=5, num_layers=1)
        params = small_params(config)
        layer = params.layers[0]
        for g in GATES:
            layer.wx[g].data[...] = 0
            layer.wh[g].data[...] = 0
            layer.b[g].data[...] = 0
        h, c = lstm_step(Tensor(np.zeros(3)), Tensor(np.zeros(5)), Tensor(np.zeros(5)), layer)
        assert np.array_equal(h.data, np.zeros(5))
        assert np.array_equal(c.data, np.zeros(5))

    def test_perfect_memory_limit(self):
        # forget gate driven to 1, input gate to 0: the cell is carried over
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=4, num_layers=1)
        params = small_params(config, seed=1)
        layer = params.layers[0]
        layer.b["f"].data[...] = 50.0
        layer.b["i"].data[...] = -50.0
        c0 = np.array([0.3, -0.2, 0.8, 0.0])
        rng = np.random.default_rng(2)
        _, c1 = lstm_step(Tensor(rng.uniform(-1, 1, 3)), Tensor(rng.uniform(-1, 1, 4)),
                          Tensor(c0), layer)
        assert np.allclose(c1.data, c0, atol=1e-8)

    def test_matches_scalar_oracle(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=4, num_layers=1)
        params = small_params(config, seed=7)
        layer = params.layers[0]
        rng = np.random.default_rng(8)
        x, h, c = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
        h2, c2 = lstm_step(Tensor(x), Tensor(h), Tensor(c), layer)
        oh, oc = oracle_step(list(x), list(h), list(c), layer)
        assert np.allclose(h2.data, oh, atol=1e-12)
        assert np.allclose(c2.data, oc, atol=1e-12)

    def test_batched_matches_per_row(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=4, num_layers=1)
        layer = small_params(config, seed=9).layers[0]
        rng = np.random.default_rng(10)
        x, h, c = rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (3, 4))
        hb, cb = lstm_step(Tensor(x), Tensor(h), Tensor(c), layer)
        for i in range(3):
            hi, ci = lstm_step(Tensor(x[i]), Tensor(h[i]), Tensor(c[i]), layer)
            assert np.allclose(hb.data[i], hi.data, atol=1e-12)
            assert np.allclose(cb.data[i], ci.data, atol=1e-12)


class TestEncode:
    def test_single_token_zero_weights(self):
        config = LstmConfig(vocab_size=4, embed_dim=3, hidden_dim=5, num_layers=2)
        params = small_params(config)
        for layer in params.layers:
            for g in GATES:
                layer.wx[g].data[...] = 0
                layer.wh[g].data[...] = 0
                layer.b[g].data[...] = 0
        assert np.array_equal(encode_question([2], params, config).data, np.zeros(5))

    def test_one_layer_equals_manual_iteration(self):
        config = LstmConfig(vocab_size=6, embed_dim=3, hidden_dim=4, num_layers=1)
        params = small_params(config, seed=11)
        seq = [1, 5, 2]
        h = Tensor(np.zeros(4))
        c = Tensor(np.zeros(4))
        for tok in seq:
            h, c = lstm_step(embed(tok, params), h, c, params.layers[0])
        assert np.allclose(encode_question(seq, params, config).data, h.data, atol=1e-15)

    def test_matches_chained_oracle(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=2)
        params = small_params(config, seed=12)
        seq = [4, 7, 1]
        got = encode_question(seq, params, config).data
        want = oracle_encode(seq, params, config)
        assert np.allclose(got, want, atol=1e-12)

    def test_output_shape_independent_of_length(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=6, num_layers=2)
        params = small_params(config, seed=13)
        for n in (1, 4, 9):
            assert encode_question([1] * n, params, config).shape == (6,)

    def test_hidden_values_bounded_by_one(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=6, num_layers=2)
        params = small_params(config, seed=14)
        for p in params.named().values():
            p.data *= 5.0  # push gates toward saturation
        out = encode_question([1, 2, 3, 4, 5, 6, 7, 8], params, config)
        assert np.all(np.abs(out.data) < 1.0)

    def test_deterministic(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=2)
        params = small_params(config, seed=15)
        a = encode_question([1, 2, 3], params, config).data
        b = encode_question([1, 2, 3], params, config).data
        assert np.array_equal(a, b)

    def test_batch_matches_single(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=2)
        params = small_params(config, seed=16)
        seqs = [[1, 2, 3], [4, 5, 6]]
        batch = encode_question_batch(seqs, params, config)
        for i, seq in enumerate(seqs):
            assert np.allclose(batch.data[i], encode_question(seq, params, config).data,
                               atol=1e-15)

    def test_empty_sequence_rejected(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=1)
        with pytest.raises(ValueError):
            encode_question([], small_params(config), config)

    def test_out_of_range_token_rejected(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=1)
        with pytest.raises(ValueError, match="9"):
            encode_question([9], small_params(config), config)

    def test_gradient_through_five_token_two_layer_encoder(self):
        config = LstmConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=2)
        params = small_params(config, seed=17)
        # O(1) weights keep every gradient component clear of the
        # finite-difference noise floor.
        rng = np.random.default_rng(18)
        for p in params.named().values():
            p.data[...] = rng.uniform(-1, 1, size=p.shape)
        seq = [1, 2, 3, 4, 5]
        probe = Tensor(rng.uniform(-1, 1, 4))

        def loss_fn(_):
            return ag.sum_all(ag.ew_mul(encode_question(seq, params, config), probe))

        for name, p in sorted(params.named().items()):
            err = grad_check(loss_fn, p, eps=1e-5)
            assert err < 1e-4, f"{name}: {err}"


class TestVocabularyFiles:
    def test_round_trip_and_ids(self, tmp_path):
        path = tmp_path / "vocab.txt"
        tokens = ["<unk>", "is", "cat"]
        save_vocabulary(path, tokens)
        loaded = load_vocabulary(path)
        assert loaded == tokens
        index = build_vocab_index(loaded)
        assert tokens_to_ids(["cat", "dog", "is"], index) == [2, 0, 1]

    def test_line_number_is_id(self, tmp_path):
        path = tmp_path / "vocab.txt"
        save_vocabulary(path, ["<unk>", "a", "b"])
        index = build_vocab_index(load_vocabulary(path))
        assert index == {"<unk>": 0, "a": 1, "b": 2}

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("")
        with pytest.raises(ValueError):
            load_vocabulary(path)

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError):
            build_vocab_index(["a", "a"])

    def test_tokenize(self):
        assert tokenize("Is this a Laptop?") == ["is", "this", "a", "laptop"]
        with pytest.raises(ValueError):
            tokenize("  ?!  ")
