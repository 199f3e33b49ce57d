"""RMSProp training loop, answer vocabulary, and VQA-style evaluation.

Training is deterministic given (seed, config, data): shuffling, batching,
within-batch length grouping and the parameter update order are all fixed, so
two runs produce bit-identical parameters and loss logs.
"""

import logging
import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autograd import Tape, Tensor, backward, ew_add, scale, softmax, softmax_cross_entropy
from .data import VqaExample
from .features import QuestionType, classify_question
from .lstm import tokenize, tokens_to_ids
from .model import DualPathModel, predict

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 300
    learning_rate: float = 0.0004
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8
    epochs: int = 10
    answer_vocab_size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # learning_rate 0 is allowed: it makes a run a no-op, which is useful
        # for dry runs and for testing that the optimizer leaves params alone.
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ValueError(f"rmsprop_decay must be in (0, 1), got {self.rmsprop_decay}")
        if self.rmsprop_eps <= 0:
            raise ValueError(f"rmsprop_eps must be > 0, got {self.rmsprop_eps}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.answer_vocab_size < 2:
            raise ValueError(f"answer_vocab_size must be >= 2, got {self.answer_vocab_size}")


class AnswerVocab:
    """Ordered answer strings with a reverse index; ids are 0..K-1."""

    def __init__(self, answers: Sequence[str]):
        self.answers = list(answers)
        self.index = {}
        for i, ans in enumerate(self.answers):
            if ans in self.index:
                raise ValueError(f"duplicate answer {ans!r}")
            self.index[ans] = i

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, answer: str) -> bool:
        return answer in self.index

    def id_of(self, answer: str) -> Optional[int]:
        return self.index.get(answer)

    def answer_of(self, i: int) -> str:
        return self.answers[i]


def build_answer_vocab(answers, k: int) -> AnswerVocab:
    """Top-k answers by frequency; frequency ties break lexicographically."""
    counts = Counter(answers)
    if len(counts) < k:
        raise ValueError(f"need at least {k} distinct answers, got {len(counts)}")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return AnswerVocab([ans for ans, _ in ranked[:k]])


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(answer: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    return " ".join(answer.lower().translate(_PUNCT_TABLE).split())


def modal_answer(human_answers: Sequence[str]) -> str:
    """Most common answer; count ties break lexicographically."""
    counts = Counter(human_answers)
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))[0][0]


def vqa_accuracy(predicted: str, human_answers: Sequence[str]) -> float:
    """min(matches/3, 1) over the ten human answers, after normalization."""
    if len(human_answers) != 10:
        raise ValueError(f"expected exactly 10 human answers, got {len(human_answers)}")
    target = normalize_answer(predicted)
    matches = sum(1 for h in human_answers if normalize_answer(h) == target)
    return min(matches / 3.0, 1.0)


def rmsprop_step(param: Tensor, grad, cache, cfg: TrainConfig):
    """One RMSProp update, in place.

    cache <- decay*cache + (1-decay)*grad^2
    param <- param - lr * grad / (sqrt(cache) + eps)
    """
    g = grad.data if isinstance(grad, Tensor) else np.asarray(grad, dtype=np.float64)
    c = cache.data if isinstance(cache, Tensor) else cache
    if g.shape != param.data.shape or c.shape != param.data.shape:
        raise ValueError(
            f"param/grad/cache shapes differ: {param.data.shape}, {g.shape}, {c.shape}")
    c *= cfg.rmsprop_decay
    c += (1.0 - cfg.rmsprop_decay) * g * g
    param.data -= cfg.learning_rate * g / (np.sqrt(c) + cfg.rmsprop_eps)
    return param, cache


@dataclass
class TrainResult:
    epoch_losses: list
    dropped: int
    kept: int


def _example_arrays(model: DualPathModel, examples: Sequence[VqaExample]):
    """Stack features per source and tokenize questions once up front."""
    if model.source_names is None:
        raise ValueError("model has no feature source names; build it from a dataset schema")
    qindex = model.question_index()
    feats = []
    for name in model.source_names:
        try:
            feats.append(np.stack([ex.image_feats[name] for ex in examples]))
        except KeyError:
            raise ValueError(f"example is missing feature source {name!r}") from None
    ids = [np.asarray(tokens_to_ids(tokenize(ex.question), qindex), dtype=np.int64)
           for ex in examples]
    lengths = np.array([len(i) for i in ids])
    return feats, ids, lengths


def _length_groups(lengths: np.ndarray, index: np.ndarray):
    """Split `index` into sub-arrays of equal question length (ascending)."""
    sub = lengths[index]
    for length in np.unique(sub):
        yield index[sub == length]


def train(model: DualPathModel, examples: Sequence[VqaExample], cfg: TrainConfig,
          dev_examples: Optional[Sequence[VqaExample]] = None,
          log_path=None) -> TrainResult:
    """Shuffled mini-batch RMSProp on softmax cross-entropy.

    Examples whose modal answer is outside the model's answer vocabulary are
    dropped (and counted); the rest are batched, grouped by question length
    within each batch, and averaged into one loss per batch. When
    `dev_examples` is given, each epoch also logs dev accuracies.
    """
    if model.answer_vocab is None:
        raise ValueError("model needs an answer vocabulary before training")
    vocab = AnswerVocab(model.answer_vocab)

    targets, kept = [], []
    for i, ex in enumerate(examples):
        t = vocab.id_of(modal_answer(ex.human_answers))
        if t is not None:
            kept.append(i)
            targets.append(t)
    dropped = len(examples) - len(kept)
    if dropped:
        logger.info("dropped %d of %d examples with answers outside the vocabulary",
                    dropped, len(examples))
    if not kept:
        raise ValueError("no trainable examples: every answer is outside the vocabulary")
    kept_examples = [examples[i] for i in kept]
    targets = np.asarray(targets, dtype=np.int64)
    feats, ids, lengths = _example_arrays(model, kept_examples)

    params = model.parameters()
    names = sorted(params)
    caches = {name: np.zeros_like(params[name].data) for name in names}
    rng = np.random.default_rng(cfg.seed)
    n = len(kept_examples)

    log = _MetricLog(log_path)
    epoch_losses = []
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            total_nll = 0.0
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                with Tape() as tape:
                    loss_sum = None
                    for group in _length_groups(lengths, batch):
                        rows = [f[group] for f in feats]
                        seqs = [ids[i] for i in group]
                        logits = model.logits_for_batch(rows, seqs)
                        part = softmax_cross_entropy(logits, targets[group], reduction="sum")
                        loss_sum = part if loss_sum is None else ew_add(loss_sum, part)
                    loss = scale(loss_sum, 1.0 / batch.size)
                    backward(loss, tape)
                for name in names:
                    p = params[name]
                    rmsprop_step(p, p.grad, caches[name], cfg)
                    p.zero_grad()
                total_nll += loss.item() * batch.size
            epoch_loss = total_nll / n
            epoch_losses.append(epoch_loss)
            logger.info("epoch %d: train loss %.6f", epoch, epoch_loss)
            log.train_row(epoch, epoch_loss)
            if dev_examples is not None:
                log.eval_row(epoch, "dev", evaluate(model, dev_examples))
    finally:
        log.close()
    return TrainResult(epoch_losses=epoch_losses, dropped=dropped, kept=len(kept_examples))


class _MetricLog:
    """Append-only CSV: epoch, split, loss, All, YesNo, Num, Others."""

    HEADER = "epoch,split,loss,All,YesNo,Num,Others\n"

    def __init__(self, path):
        self._fh = None
        if path is not None:
            self._fh = open(path, "a", encoding="utf-8")
            if self._fh.tell() == 0:
                self._fh.write(self.HEADER)

    def train_row(self, epoch: int, loss: float) -> None:
        if self._fh:
            self._fh.write(f"{epoch},train,{loss!r},,,,\n")

    def eval_row(self, epoch: int, split: str, metrics: dict) -> None:
        if self._fh:
            cells = ",".join(repr(metrics[k]) for k in ("All", "YesNo", "Num", "Others"))
            self._fh.write(f"{epoch},{split},,{cells}\n")

    def close(self) -> None:
        if self._fh:
            self._fh.close()


# ---------------------------------------------------------------------------
# Prediction and scoring


def model_probabilities(model: DualPathModel, examples: Sequence[VqaExample],
                        chunk: int = 1024) -> np.ndarray:
    """Softmax answer probabilities, (n_examples, n_answers)."""
    feats, ids, lengths = _example_arrays(model, examples)
    n = len(examples)
    out = np.empty((n, model.fusion_config.num_answers))
    for group in _length_groups(lengths, np.arange(n)):
        for start in range(0, group.size, chunk):
            part = group[start:start + chunk]
            rows = [f[part] for f in feats]
            seqs = [ids[i] for i in part]
            logits = model.logits_for_batch(rows, seqs)
            out[part] = softmax(logits.data)
    return out


def _candidate_indices(example: VqaExample, vocab: AnswerVocab):
    """Vocabulary ids of an example's multiple-choice candidates.

    Returns None when no candidate maps into the vocabulary (the prediction
    then falls back to the unrestricted argmax; it cannot match anyway).
    """
    if example.multiple_choice is None:
        raise ValueError(f"example {example.example_id} has no multiple-choice candidates")
    indices = {vocab.id_of(c) for c in example.multiple_choice} - {None}
    return sorted(indices) if indices else None


def predictions_from_probabilities(probs: np.ndarray, examples, vocab: AnswerVocab,
                                   mode: str = "open_ended") -> list:
    if mode not in ("open_ended", "multiple_choice"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    answers = []
    for i, ex in enumerate(examples):
        restrict = _candidate_indices(ex, vocab) if mode == "multiple_choice" else None
        answers.append(vocab.answer_of(predict(probs[i], restrict=restrict)))
    return answers


def predict_dataset(model: DualPathModel, examples: Sequence[VqaExample],
                    mode: str = "open_ended") -> list:
    """Predicted answer strings for every example."""
    vocab = AnswerVocab(model.answer_vocab)
    probs = model_probabilities(model, examples)
    return predictions_from_probabilities(probs, examples, vocab, mode)


_CATEGORY_OF = {
    QuestionType.YES_NO: "YesNo",
    QuestionType.NUMBER: "Num",
    QuestionType.OTHER: "Others",
}


def score_predictions(examples: Sequence[VqaExample], predictions: Sequence[str]) -> dict:
    """Mean accuracy overall and per question category.

    Categories with no examples score NaN. Accuracies are fractions in
    [0, 1]; multiply by 100 for table display.
    """
    if len(examples) == 0:
        raise ValueError("no examples to score")
    if len(predictions) != len(examples):
        raise ValueError(f"{len(predictions)} predictions for {len(examples)} examples")
    buckets = {"All": [], "YesNo": [], "Num": [], "Others": []}
    for ex, pred in zip(examples, predictions):
        acc = vqa_accuracy(pred, ex.human_answers)
        buckets["All"].append(acc)
        buckets[_CATEGORY_OF[classify_question(ex.question)]].append(acc)
    return {key: (float(np.mean(vals)) if vals else math.nan)
            for key, vals in buckets.items()}


def evaluate(model_like, examples: Sequence[VqaExample], mode: str = "open_ended") -> dict:
    """Accuracy table for a single model or anything exposing
    `predict_answers(examples, mode)` (e.g. a loaded ensemble)."""
    if hasattr(model_like, "predict_answers"):
        predictions = model_like.predict_answers(examples, mode)
    else:
        predictions = predict_dataset(model_like, examples, mode)
    return score_predictions(examples, predictions)
