"""Weighted ensembles of independently trained fusion nets.

Units typically differ in common-space dimension and seed but share the
answer vocabulary. Prediction averages each unit's softmax probabilities
under non-negative weights; weights are tuned on a held-out split by
grid-based coordinate ascent.
"""

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import VqaExample
from .model import DualPathModel, load_checkpoint, predict
from .training import (
    AnswerVocab,
    model_probabilities,
    predictions_from_probabilities,
    vqa_accuracy,
)

logger = logging.getLogger(__name__)

WEIGHT_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class EnsembleUnit:
    checkpoint: str
    common_dim: int
    weight: float


@dataclass
class EnsembleSpec:
    units: list

    def __post_init__(self):
        if not self.units:
            raise ValueError("an ensemble needs at least one unit")
        for u in self.units:
            if u.weight < 0:
                raise ValueError(f"negative weight {u.weight} for {u.checkpoint}")
        if sum(u.weight for u in self.units) <= 0:
            raise ValueError("ensemble weights sum to zero")

    def normalized_weights(self) -> np.ndarray:
        w = np.array([u.weight for u in self.units], dtype=np.float64)
        return w / w.sum()


def save_ensemble_spec(path, spec: EnsembleSpec) -> None:
    payload = {"units": [{"checkpoint": u.checkpoint, "common_dim": u.common_dim,
                          "weight": u.weight} for u in spec.units]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ensemble_spec(path) -> EnsembleSpec:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        units = [EnsembleUnit(checkpoint=u["checkpoint"], common_dim=int(u["common_dim"]),
                              weight=float(u["weight"])) for u in payload["units"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed ensemble spec") from exc
    return EnsembleSpec(units=units)


class LoadedEnsemble:
    """Ensemble with all unit checkpoints resident in memory."""

    def __init__(self, models: Sequence[DualPathModel], weights):
        if not models:
            raise ValueError("an ensemble needs at least one unit")
        first = models[0]
        if first.answer_vocab is None:
            raise ValueError("ensemble units need answer vocabularies")
        for m in models[1:]:
            if m.answer_vocab != first.answer_vocab:
                raise ValueError("ensemble units disagree on the answer vocabulary")
        self.models = list(models)
        self.vocab = AnswerVocab(first.answer_vocab)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(self.models),):
            raise ValueError(f"need {len(self.models)} weights, got shape {weights.shape}")
        if (weights < 0).any() or weights.sum() <= 0:
            raise ValueError("weights must be non-negative and not all zero")
        self.weights = weights / weights.sum()

    @classmethod
    def from_spec(cls, spec: EnsembleSpec) -> "LoadedEnsemble":
        models = [load_checkpoint(u.checkpoint) for u in spec.units]
        for unit, m in zip(spec.units, models):
            if m.fusion_config.common_dim != unit.common_dim:
                raise ValueError(
                    f"{unit.checkpoint}: common_dim {m.fusion_config.common_dim} "
                    f"does not match spec entry {unit.common_dim}")
        return cls(models, spec.normalized_weights())

    def probabilities(self, examples: Sequence[VqaExample]) -> np.ndarray:
        """Weighted average of unit softmax probabilities, (n, answers)."""
        combined = None
        for w, m in zip(self.weights, self.models):
            p = w * model_probabilities(m, examples)
            combined = p if combined is None else combined + p
        return combined

    def predict_answers(self, examples: Sequence[VqaExample],
                        mode: str = "open_ended") -> list:
        probs = self.probabilities(examples)
        return predictions_from_probabilities(probs, examples, self.vocab, mode)


def ensemble_predict(ensemble: LoadedEnsemble, example: VqaExample) -> int:
    """Answer index for one example: argmax of the weighted probability mix,
    ties to the lowest index."""
    probs = ensemble.probabilities([example])[0]
    return predict(probs)


def _accuracy_table(examples: Sequence[VqaExample], vocab: AnswerVocab) -> np.ndarray:
    """acc[i, c] = metric score if example i were answered with vocab id c."""
    table = np.empty((len(examples), len(vocab)))
    for c in range(len(vocab)):
        ans = vocab.answer_of(c)
        table[:, c] = [vqa_accuracy(ans, ex.human_answers) for ex in examples]
    return table


def tune_ensemble_weights(ensemble: LoadedEnsemble, dev_examples: Sequence[VqaExample],
                          iterations: int = 10) -> np.ndarray:
    """Coordinate ascent on dev overall accuracy over the weight simplex.

    Starting from uniform weights, sweep the units repeatedly; for each unit
    try rescaling its weight by each factor in WEIGHT_GRID (renormalizing the
    rest) and keep the best strictly-improving candidate. Stops after
    `iterations` sweeps or a sweep with no improvement. The result never
    scores below uniform weights on the dev split.
    """
    if len(ensemble.models) < 2:
        raise ValueError("weight tuning needs at least 2 units")
    if len(dev_examples) == 0:
        raise ValueError("empty dev split")

    unit_probs = np.stack([model_probabilities(m, dev_examples) for m in ensemble.models])
    acc = _accuracy_table(dev_examples, ensemble.vocab)
    rows = np.arange(len(dev_examples))

    def dev_accuracy(w):
        mixed = np.tensordot(w, unit_probs, axes=1)
        return float(acc[rows, np.argmax(mixed, axis=1)].mean())

    n_units = len(ensemble.models)
    weights = np.full(n_units, 1.0 / n_units)
    best = dev_accuracy(weights)
    for sweep in range(iterations):
        improved = False
        for u in range(n_units):
            for factor in WEIGHT_GRID:
                candidate = weights.copy()
                candidate[u] = weights[u] * factor
                total = candidate.sum()
                if total <= 0:
                    continue
                candidate /= total
                score = dev_accuracy(candidate)
                if score > best:
                    weights, best = candidate, score
                    improved = True
        logger.info("tuning sweep %d: dev accuracy %.4f", sweep, best)
        if not improved:
            break
    ensemble.weights = weights
    return weights
