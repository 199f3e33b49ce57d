"""Encoding questions: tokens -> embeddings -> stacked LSTM -> one vector.

The encoder returns the top layer's final hidden state, so the output
dimension never depends on the question length.
"""

import numpy as np

from dualpath import LstmConfig, encode_question, encode_question_batch, init_lstm_params
from dualpath.lstm import build_vocab_index, tokenize, tokens_to_ids

vocab = ["<unk>", "is", "this", "a", "laptop", "how", "many", "trees"]
index = build_vocab_index(vocab)

config = LstmConfig(vocab_size=len(vocab), embed_dim=6, hidden_dim=8, num_layers=2)
params = init_lstm_params(config, np.random.default_rng(1))

for question in ("Is this a laptop?", "How many trees?", "Is this a zebra?"):
    ids = tokens_to_ids(tokenize(question), index)
    q = encode_question(ids, params, config)
    print(f"{question:22} ids={ids} -> vector of shape {q.shape}, "
          f"|q|_max={np.max(np.abs(q.data)):.3f}")

# "zebra" is out of vocabulary: it maps to the reserved id 0.
ids = tokens_to_ids(tokenize("Is this a zebra?"), index)
print("\nunknown words map to id 0:", ids)

# Same-length questions batch together; each row equals its solo encoding.
seqs = [[1, 2, 3], [5, 6, 7]]
batch = encode_question_batch(seqs, params, config)
solo = encode_question(seqs[1], params, config)
print("batch row matches solo encoding:", np.allclose(batch.data[1], solo.data))

# Hidden states are products of gates in (0,1) and tanh values in (-1,1),
# so every coordinate stays strictly inside the unit interval.
long_q = encode_question([1, 2, 3, 4, 5, 6, 7] * 3, params, config)
print("21-token encoding stays in (-1, 1):", np.all(np.abs(long_q.data) < 1))
