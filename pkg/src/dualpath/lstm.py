"""Word-embedding + multi-layer LSTM question encoder.

Questions arrive as sequences of vocabulary ids; the encoder embeds each
token, runs the sequence through stacked LSTM layers, and returns the final
hidden state of the top layer. Standard gate formulation, no peepholes,
forget-gate bias starts at 1.0. Variable-length batching is the caller's
problem: the batched entry point takes same-length sequences only.
"""

import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autograd import (
    Tensor,
    add_bias,
    embedding_lookup,
    ew_add,
    ew_mul,
    matmul,
    reshape,
    sigmoid,
    tanh,
    transpose,
)

GATES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class LstmConfig:
    vocab_size: int
    embed_dim: int
    hidden_dim: int
    num_layers: int

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "num_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


class LstmLayerParams:
    """One layer's gate weights: per gate, an input matrix, a recurrent
    matrix, and a bias."""

    def __init__(self, wx: dict, wh: dict, b: dict):
        self.wx = wx  # gate -> Tensor (hidden, input)
        self.wh = wh  # gate -> Tensor (hidden, hidden)
        self.b = b    # gate -> Tensor (hidden,)


class LstmParams:
    def __init__(self, embedding: Tensor, layers: list):
        self.embedding = embedding
        self.layers = layers

    def named(self) -> dict:
        """Canonical name -> tensor map, used for checkpoints and optimizers."""
        out = {"lstm.embed": self.embedding}
        for i, layer in enumerate(self.layers):
            for gate in GATES:
                out[f"lstm.l{i}.Wx_{gate}"] = layer.wx[gate]
                out[f"lstm.l{i}.Wh_{gate}"] = layer.wh[gate]
                out[f"lstm.l{i}.b_{gate}"] = layer.b[gate]
        return out


def init_lstm_params(config: LstmConfig, rng: np.random.Generator) -> LstmParams:
    """Uniform init in [-a, a] with a = 1/sqrt(hidden_dim); forget bias 1."""
    a = 1.0 / np.sqrt(config.hidden_dim)
    h = config.hidden_dim
    embedding = Tensor(rng.uniform(-a, a, size=(config.vocab_size, config.embed_dim)),
                       requires_grad=True)
    layers = []
    for i in range(config.num_layers):
        in_dim = config.embed_dim if i == 0 else h
        wx, wh, b = {}, {}, {}
        for gate in GATES:
            wx[gate] = Tensor(rng.uniform(-a, a, size=(h, in_dim)), requires_grad=True)
            wh[gate] = Tensor(rng.uniform(-a, a, size=(h, h)), requires_grad=True)
            bias = np.ones(h) if gate == "f" else np.zeros(h)
            b[gate] = Tensor(bias, requires_grad=True)
        layers.append(LstmLayerParams(wx, wh, b))
    return LstmParams(embedding, layers)


def embed(token_id: int, params: LstmParams) -> Tensor:
    """Embedding row for one token, as a 1-D vector."""
    row = embedding_lookup(params.embedding, [int(token_id)])
    return reshape(row, (params.embedding.shape[1],))


def _gate(x: Tensor, h: Tensor, layer: LstmLayerParams, gate: str, act) -> Tensor:
    pre = ew_add(matmul(x, transpose(layer.wx[gate])), matmul(h, transpose(layer.wh[gate])))
    return act(add_bias(pre, layer.b[gate]))


def lstm_step(x: Tensor, h: Tensor, c: Tensor, layer: LstmLayerParams):
    """One LSTM cell update.

    i, f, o = sigmoid(W x + U h + b); g = tanh(W x + U h + b);
    c' = f*c + i*g; h' = o*tanh(c'). Accepts single vectors or
    (batch, dim) rows; both states must match the input's batch shape.
    """
    single = x.data.ndim == 1
    if single:
        if h.data.ndim != 1 or c.data.ndim != 1:
            raise ValueError("x, h, c must all be vectors or all be batched rows")
        x = reshape(x, (1, x.shape[0]))
        h = reshape(h, (1, h.shape[0]))
        c = reshape(c, (1, c.shape[0]))
    i = _gate(x, h, layer, "i", sigmoid)
    f = _gate(x, h, layer, "f", sigmoid)
    g = _gate(x, h, layer, "g", tanh)
    o = _gate(x, h, layer, "o", sigmoid)
    c_new = ew_add(ew_mul(f, c), ew_mul(i, g))
    h_new = ew_mul(o, tanh(c_new))
    if single:
        n = h_new.shape[1]
        return reshape(h_new, (n,)), reshape(c_new, (n,))
    return h_new, c_new


def _validate_ids(token_ids, vocab_size: int) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("question must be a non-empty sequence of token ids")
    if (ids < 0).any() or (ids >= vocab_size).any():
        bad = int(ids[(ids < 0) | (ids >= vocab_size)][0])
        raise ValueError(f"token id {bad} out of range for vocabulary of {vocab_size}")
    return ids


def encode_question_batch(sequences: Sequence[Sequence[int]], params: LstmParams,
                          config: LstmConfig) -> Tensor:
    """Encode same-length id sequences into a (batch, hidden_dim) tensor.

    Layer l consumes layer l-1's full hidden sequence; the result is the top
    layer's hidden state at the last timestep.
    """
    if len(sequences) == 0:
        raise ValueError("empty batch")
    ids = np.stack([_validate_ids(s, config.vocab_size) for s in sequences])
    if ids.ndim != 2:
        raise ValueError("all sequences in a batch must share one length")
    batch, length = ids.shape
    h0 = config.hidden_dim

    # Layer 0 inputs: embedded tokens per timestep.
    inputs = [embedding_lookup(params.embedding, ids[:, t]) for t in range(length)]
    for layer in params.layers:
        h = Tensor(np.zeros((batch, h0)))
        c = Tensor(np.zeros((batch, h0)))
        outputs = []
        for x_t in inputs:
            h, c = lstm_step(x_t, h, c, layer)
            outputs.append(h)
        inputs = outputs
    return inputs[-1]


def encode_question(token_ids: Sequence[int], params: LstmParams,
                    config: LstmConfig) -> Tensor:
    """Encode one question into a 1-D hidden vector."""
    out = encode_question_batch([token_ids], params, config)
    return reshape(out, (config.hidden_dim,))


# ---------------------------------------------------------------------------
# Vocabulary files: one token per line, the line number is the id, and id 0
# is reserved for unknown tokens.

UNKNOWN_TOKEN = "<unk>"
UNKNOWN_ID = 0


def save_vocabulary(path, tokens: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok in tokens:
            fh.write(tok + "\n")


def load_vocabulary(path) -> list:
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    if not tokens:
        raise ValueError(f"vocabulary file {path} is empty")
    return tokens


def build_vocab_index(tokens: Sequence[str]) -> dict:
    index = {}
    for i, tok in enumerate(tokens):
        if tok in index:
            raise ValueError(f"duplicate vocabulary token {tok!r}")
        index[tok] = i
    return index


def tokens_to_ids(tokens: Sequence[str], index: dict) -> list:
    """Map tokens to ids; anything unknown becomes id 0."""
    return [index.get(tok, UNKNOWN_ID) for tok in tokens]


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list:
    """Lowercase, strip punctuation, split on whitespace."""
    tokens = text.lower().translate(_PUNCT_TABLE).split()
    if not tokens:
        raise ValueError(f"question {text!r} has no tokens")
    return tokens
