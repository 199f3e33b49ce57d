"""Dataset formats and the synthetic benchmark generator.

Datasets are JSON-lines: one header object describing the feature sources
(plus whatever produced the data), then one object per example. An example
carries named image-feature vectors, a question string, exactly ten human
answers, and optionally a multiple-choice candidate list.

The synthetic generator plants a frozen, randomly-initialized dual-mode
fusion network as a labeling teacher. Because the teacher genuinely uses both
a multiplicative and an additive fusion of its inputs, students restricted to
a single fusion operation cannot represent the labeling function; that gap is
what the ablation experiments measure. Teacher weight scales are chosen so
both paths carry comparable label information: the multiplication path is
driven into tanh saturation (sign/parity structure) while the summation path
stays in the smooth regime.
"""

import json
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .lstm import LstmConfig
from .model import DualPathConfig, DualPathModel


@dataclass
class VqaExample:
    example_id: str
    image_feats: dict            # source name -> 1-D float array
    question: str
    human_answers: list
    multiple_choice: Optional[list] = None


@dataclass
class DatasetSchema:
    sources: list                # [(name, dim), ...] in canonical order
    header: dict = field(default_factory=dict)

    def source_names(self) -> list:
        return [name for name, _ in self.sources]


# Toy question vocabulary. Id 0 is the reserved unknown token; the first few
# real words are question-type keywords so synthetic questions exercise the
# yes/no / number / other routing end to end.
_KEYWORDS = ["is", "are", "does", "how", "many", "what", "number", "color", "near"]
TOY_QUESTION_VOCAB = ["<unk>"] + _KEYWORDS + [f"w{i:02d}" for i in range(10, 50)]


@dataclass(frozen=True)
class TeacherSpec:
    """Frozen random labeler for synthetic data.

    The weight-scale knobs shape how label information splits across the two
    fusion paths; the defaults were picked empirically so that single-path
    students trail a dual-path student by a clear margin.
    """

    image_dims: tuple = (32, 24)
    source_names: tuple = ("holistic", "regional")
    num_answers: int = 10
    embed_dim: int = 8
    hidden_dim: int = 8
    num_layers: int = 1
    common_dim: int = 8
    head_dim: int = 16
    seed: int = 7
    mul_weight_scale: float = 3.5
    mul_q_scale: float = 1.0
    mul_q_bias: float = 1.0
    mul_head_gain: float = 0.9
    sum_weight_scale: float = 1.2

    def __post_init__(self):
        if len(self.image_dims) != len(self.source_names):
            raise ValueError("one source name per image dimension is required")


def build_teacher(spec: TeacherSpec) -> DualPathModel:
    """Materialize the teacher network for a spec (pure function of the
    spec, including its seed)."""
    lstm_config = LstmConfig(vocab_size=len(TOY_QUESTION_VOCAB), embed_dim=spec.embed_dim,
                             hidden_dim=spec.hidden_dim, num_layers=spec.num_layers)
    fusion_config = DualPathConfig(image_dims=spec.image_dims, question_dim=spec.hidden_dim,
                                   common_dim=spec.common_dim, num_answers=spec.num_answers,
                                   mode="dual", head_dim=spec.head_dim)
    answers = [f"a{i}" for i in range(spec.num_answers)]
    model = DualPathModel.build(lstm_config, fusion_config, seed=spec.seed,
                                answer_vocab=answers, question_vocab=TOY_QUESTION_VOCAB)
    # Image branches of the mul path are driven into tanh saturation, giving
    # the labels a sign/parity structure an additive model cannot express.
    # The question branch stays smooth but biased away from zero so products
    # keep their magnitude and the question modulates rather than gates.
    for proj in model.fusion_params.mul_img:
        proj.w.data *= spec.mul_weight_scale
    model.fusion_params.mul_q.w.data *= spec.mul_q_scale
    model.fusion_params.mul_q.b.data[...] = spec.mul_q_bias
    for proj in model.fusion_params.sum_img + [model.fusion_params.sum_q]:
        proj.w.data *= spec.sum_weight_scale
    d = spec.common_dim
    model.fusion_params.head_w1.data[:, :d] *= spec.mul_head_gain
    return model


def _teacher_labels(model: DualPathModel, feats: list, id_rows: list) -> np.ndarray:
    """Argmax answers for raw feature rows; grouped by question length so the
    encoder sees rectangular batches."""
    n = feats[0].shape[0]
    labels = np.empty(n, dtype=np.int64)
    lengths = np.array([len(ids) for ids in id_rows])
    for length in np.unique(lengths):
        idx = np.flatnonzero(lengths == length)
        for start in range(0, idx.size, 1024):
            chunk = idx[start:start + 1024]
            rows = [f[chunk] for f in feats]
            seqs = [id_rows[i] for i in chunk]
            logits = model.logits_for_batch(rows, seqs)
            labels[chunk] = np.argmax(logits.data, axis=1)
    return labels


def generate_synthetic(teacher: TeacherSpec, n_train: int, n_dev: int, n_test: int,
                       seed: int, out_dir, max_label_share: float = 0.9,
                       min_len: int = 3, max_len: int = 8) -> dict:
    """Write train/dev/test JSONL splits plus the question vocabulary file.

    Features are i.i.d. uniform [-1, 1]; questions are uniform token strings
    of length `min_len`..`max_len`. Labels come from the teacher's argmax. If
    any answer class covers more than `max_label_share` of the examples, the
    teacher seed is advanced and labeling retried; the header records the
    seed actually used. Returns the paths written.
    """
    for name, n in (("n_train", n_train), ("n_dev", n_dev), ("n_test", n_test)):
        if n < 1:
            raise ValueError(f"{name} must be >= 1")
    rng = np.random.default_rng(seed)
    vocab = TOY_QUESTION_VOCAB
    answers = [f"a{i}" for i in range(teacher.num_answers)]

    split_sizes = {"train": n_train, "dev": n_dev, "test": n_test}
    split_feats, split_ids = {}, {}
    for split, n in split_sizes.items():
        split_feats[split] = [rng.uniform(-1.0, 1.0, size=(n, dim)) for dim in teacher.image_dims]
        lengths = rng.integers(min_len, max_len + 1, size=n)
        split_ids[split] = [rng.integers(1, len(vocab), size=int(ln)) for ln in lengths]

    # Label with the teacher, advancing its seed until no class dominates.
    spec = teacher
    for attempt in range(32):
        model = build_teacher(spec)
        split_labels = {s: _teacher_labels(model, split_feats[s], split_ids[s])
                        for s in split_sizes}
        counts = np.bincount(np.concatenate(list(split_labels.values())),
                             minlength=teacher.num_answers)
        if counts.max() / counts.sum() <= max_label_share:
            break
        spec = TeacherSpec(**{**asdict(teacher), "seed": spec.seed + 1})
    else:
        raise RuntimeError("could not find a teacher seed with a non-degenerate label mix")

    header = {
        "kind": "header",
        "version": 1,
        "feature_sources": [{"name": name, "dim": int(dim)}
                            for name, dim in zip(teacher.source_names, teacher.image_dims)],
        "question_vocab": vocab,
        "answers": answers,
        "teacher": asdict(spec),
        "generator_seed": int(seed),
    }

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for split, n in split_sizes.items():
        examples = []
        for i in range(n):
            label = answers[split_labels[split][i]]
            others = [a for a in answers if a != label]
            distractors = [others[j] for j in rng.choice(len(others), size=3, replace=False)]
            candidates = [label] + distractors
            candidates = [candidates[j] for j in rng.permutation(4)]
            examples.append(VqaExample(
                example_id=f"{split}-{i:06d}",
                image_feats={name: split_feats[split][k][i]
                             for k, name in enumerate(teacher.source_names)},
                question=" ".join(vocab[t] for t in split_ids[split][i]),
                human_answers=[label] * 10,
                multiple_choice=candidates,
            ))
        path = os.path.join(out_dir, f"{split}.jsonl")
        save_dataset(path, examples, DatasetSchema(
            sources=[(name, int(dim)) for name, dim in zip(teacher.source_names, teacher.image_dims)],
            header=header))
        paths[split] = path

    vocab_path = os.path.join(out_dir, "question_vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        for tok in vocab:
            fh.write(tok + "\n")
    paths["vocab"] = vocab_path
    return paths


def save_dataset(path, examples, schema: DatasetSchema) -> None:
    header = dict(schema.header) if schema.header else {}
    header.setdefault("kind", "header")
    header.setdefault("version", 1)
    header["feature_sources"] = [{"name": n, "dim": int(d)} for n, d in schema.sources]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in examples:
            record = {
                "kind": "example",
                "example_id": ex.example_id,
                "features": {name: np.asarray(vec, dtype=np.float64).tolist()
                             for name, vec in ex.image_feats.items()},
                "question": ex.question,
                "human_answers": list(ex.human_answers),
            }
            if ex.multiple_choice is not None:
                record["multiple_choice"] = list(ex.multiple_choice)
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path):
    """Parse and validate a dataset file; returns (examples, schema).

    Errors name the offending line, field, or dimension.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: no examples")

    def parse(i, line):
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path} line {i}: invalid JSON ({exc.msg})") from exc

    header = parse(1, lines[0])
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise ValueError(f"{path} line 1: expected a header object")
    try:
        sources = [(s["name"], int(s["dim"])) for s in header["feature_sources"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path} line 1: malformed feature_sources") from exc

    examples = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = parse(i, line)
        if rec.get("kind") != "example":
            raise ValueError(f"{path} line {i}: expected an example record")
        for key in ("example_id", "features", "question", "human_answers"):
            if key not in rec:
                raise ValueError(f"{path} line {i}: missing field {key!r}")
        answers = rec["human_answers"]
        if not isinstance(answers, list) or len(answers) != 10:
            got = len(answers) if isinstance(answers, list) else type(answers).__name__
            raise ValueError(f"{path} line {i}: human_answers must have exactly 10 entries, got {got}")
        feats = {}
        for name, dim in sources:
            if name not in rec["features"]:
                raise ValueError(f"{path} line {i}: missing feature source {name!r}")
            vec = np.asarray(rec["features"][name], dtype=np.float64)
            if vec.shape != (dim,):
                raise ValueError(
                    f"{path} line {i}: feature {name!r} has dim {vec.shape}, expected ({dim},)")
            feats[name] = vec
        extra = set(rec["features"]) - {name for name, _ in sources}
        if extra:
            raise ValueError(f"{path} line {i}: unknown feature sources {sorted(extra)}")
        examples.append(VqaExample(
            example_id=str(rec["example_id"]),
            image_feats=feats,
            question=str(rec["question"]),
            human_answers=[str(a) for a in answers],
            multiple_choice=[str(c) for c in rec["multiple_choice"]]
            if rec.get("multiple_choice") is not None else None,
        ))
    if not examples:
        raise ValueError(f"{path}: no examples")
    return examples, DatasetSchema(sources=sources, header=header)
