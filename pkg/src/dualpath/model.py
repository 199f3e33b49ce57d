"""Dual-path fusion network over image features and an encoded question.

Each input (every image-feature source plus the question vector) is projected
into a shared d-dimensional space twice, with independent weights: once for a
multiplicative fusion branch and once for an additive one. The multiplication
path takes the element-wise product of all tanh-projected inputs; the
summation path takes their element-wise sum. The two fused vectors are
concatenated and classified by a two-layer head. Ablation modes keep a single
path and shrink the head input accordingly.

The two paths never share weights: mutating a multiplication-path matrix can
never change the summation path's output, and vice versa.
"""

import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import lstm as lstm_mod
from .autograd import Tensor, add_bias, concat, ew_mul, ew_add, matmul, reshape, tanh, transpose

MODES = ("dual", "sum_only", "mul_only")


@dataclass(frozen=True)
class DualPathConfig:
    image_dims: tuple
    question_dim: int
    common_dim: int
    num_answers: int
    mode: str = "dual"
    head_dim: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "image_dims", tuple(int(d) for d in self.image_dims))
        if len(self.image_dims) < 1:
            raise ValueError("need at least one image-feature source")
        if any(d < 1 for d in self.image_dims):
            raise ValueError(f"image dims must be positive, got {self.image_dims}")
        if self.question_dim < 1 or self.common_dim < 1 or self.head_dim < 1:
            raise ValueError("question_dim, common_dim and head_dim must be >= 1")
        if self.num_answers < 2:
            raise ValueError(f"need at least 2 answers, got {self.num_answers}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def fused_dim(self) -> int:
        return 2 * self.common_dim if self.mode == "dual" else self.common_dim


class Projection:
    """A weight matrix (out, in) and its bias (out,)."""

    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b


class DualPathParams:
    def __init__(self, mul_img, mul_q, sum_img, sum_q, head_w1, head_b1, head_w2, head_b2):
        self.mul_img: Optional[list] = mul_img   # list of Projection, one per source
        self.mul_q: Optional[Projection] = mul_q
        self.sum_img: Optional[list] = sum_img
        self.sum_q: Optional[Projection] = sum_q
        self.head_w1 = head_w1
        self.head_b1 = head_b1
        self.head_w2 = head_w2
        self.head_b2 = head_b2

    def named(self) -> dict:
        out = {}
        if self.mul_img is not None:
            for i, proj in enumerate(self.mul_img):
                out[f"mul.img{i}.W"] = proj.w
                out[f"mul.img{i}.b"] = proj.b
            out["mul.q.W"] = self.mul_q.w
            out["mul.q.b"] = self.mul_q.b
        if self.sum_img is not None:
            for i, proj in enumerate(self.sum_img):
                out[f"sum.img{i}.W"] = proj.w
                out[f"sum.img{i}.b"] = proj.b
            out["sum.q.W"] = self.sum_q.w
            out["sum.q.b"] = self.sum_q.b
        out["head.W1"] = self.head_w1
        out["head.b1"] = self.head_b1
        out["head.W2"] = self.head_w2
        out["head.b2"] = self.head_b2
        return out


def _init_projection(out_dim: int, in_dim: int, rng: np.random.Generator) -> Projection:
    a = 1.0 / np.sqrt(in_dim)
    w = Tensor(rng.uniform(-a, a, size=(out_dim, in_dim)), requires_grad=True)
    b = Tensor(np.zeros(out_dim), requires_grad=True)
    return Projection(w, b)


def init_dualpath_params(config: DualPathConfig, rng: np.random.Generator) -> DualPathParams:
    """Fresh parameters; draw order is fixed so a seed pins every weight.

    Path projections use uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Sum-path
    and head biases start at zero; multiplication-path biases start at 1 so
    the product of branches is not born near zero (a product of near-zero
    tanh outputs stalls early learning, much like a closed forget gate).
    Ablation modes allocate only the path they use.
    """
    d = config.common_dim
    mul_img = mul_q = sum_img = sum_q = None
    if config.mode in ("dual", "mul_only"):
        mul_img = [_init_projection(d, dim, rng) for dim in config.image_dims]
        mul_q = _init_projection(d, config.question_dim, rng)
        for proj in mul_img + [mul_q]:
            proj.b.data.fill(1.0)
    if config.mode in ("dual", "sum_only"):
        sum_img = [_init_projection(d, dim, rng) for dim in config.image_dims]
        sum_q = _init_projection(d, config.question_dim, rng)
    head1 = _init_projection(config.head_dim, config.fused_dim, rng)
    head2 = _init_projection(config.num_answers, config.head_dim, rng)
    return DualPathParams(mul_img, mul_q, sum_img, sum_q,
                          head1.w, head1.b, head2.w, head2.b)


def _as_rows(t: Tensor):
    if t.data.ndim == 1:
        return reshape(t, (1, t.shape[0])), True
    if t.data.ndim == 2:
        return t, False
    raise ValueError(f"expected a vector or (batch, dim) rows, got shape {t.shape}")


def _prepare_inputs(image_feats: Sequence[Tensor], q: Tensor, n_sources: int):
    if len(image_feats) != n_sources:
        raise ValueError(f"expected {n_sources} image-feature inputs, got {len(image_feats)}")
    rows = []
    singles = []
    for t in list(image_feats) + [q]:
        r, single = _as_rows(t)
        rows.append(r)
        singles.append(single)
    if len(set(singles)) != 1:
        raise ValueError("image features and question must all be vectors or all be batches")
    return rows[:-1], rows[-1], singles[0]


def _branch(x: Tensor, proj: Projection) -> Tensor:
    return tanh(add_bias(matmul(x, transpose(proj.w)), proj.b))


def mul_path(image_feats: Sequence[Tensor], q: Tensor, params: DualPathParams) -> Tensor:
    """Element-wise product of all projected branches (images first, then the
    question), multiplied left to right."""
    if params.mul_img is None:
        raise ValueError("model has no multiplication path (sum_only mode)")
    feats, q_rows, single = _prepare_inputs(list(image_feats), q, len(params.mul_img))
    out = _branch(feats[0], params.mul_img[0])
    for x, proj in zip(feats[1:], params.mul_img[1:]):
        out = ew_mul(out, _branch(x, proj))
    out = ew_mul(out, _branch(q_rows, params.mul_q))
    return reshape(out, (out.shape[1],)) if single else out


def sum_path(image_feats: Sequence[Tensor], q: Tensor, params: DualPathParams) -> Tensor:
    """Element-wise sum of all projected branches, added left to right."""
    if params.sum_img is None:
        raise ValueError("model has no summation path (mul_only mode)")
    feats, q_rows, single = _prepare_inputs(list(image_feats), q, len(params.sum_img))
    out = _branch(feats[0], params.sum_img[0])
    for x, proj in zip(feats[1:], params.sum_img[1:]):
        out = ew_add(out, _branch(x, proj))
    out = ew_add(out, _branch(q_rows, params.sum_q))
    return reshape(out, (out.shape[1],)) if single else out


def fused_features(image_feats: Sequence[Tensor], q: Tensor, params: DualPathParams,
                   config: DualPathConfig) -> Tensor:
    """The fused vector fed to the head: concat of both paths in dual mode,
    the single path's output otherwise."""
    if config.mode == "dual":
        return concat(mul_path(image_feats, q, params), sum_path(image_feats, q, params))
    if config.mode == "sum_only":
        return sum_path(image_feats, q, params)
    return mul_path(image_feats, q, params)


def forward(image_feats: Sequence[Tensor], q: Tensor, params: DualPathParams,
            config: DualPathConfig) -> Tensor:
    """Raw answer logits; no softmax is applied here."""
    fused = fused_features(image_feats, q, params, config)
    rows, single = _as_rows(fused)
    hidden = tanh(add_bias(matmul(rows, transpose(params.head_w1)), params.head_b1))
    logits = add_bias(matmul(hidden, transpose(params.head_w2)), params.head_b2)
    return reshape(logits, (logits.shape[1],)) if single else logits


def predict(logits, restrict=None) -> int:
    """Argmax answer index, optionally restricted to candidate indices.

    Ties go to the lowest index. `logits` may be a Tensor or an ndarray.
    """
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    values = values.reshape(-1)
    if restrict is None:
        return int(np.argmax(values))
    indices = sorted(set(int(i) for i in restrict))
    if not indices:
        raise ValueError("restriction set is empty")
    if indices[0] < 0 or indices[-1] >= values.size:
        raise ValueError(f"restriction index out of range for {values.size} answers")
    sub = values[indices]
    return indices[int(np.argmax(sub))]


class DualPathModel:
    """A fusion net plus its question encoder and the vocabularies they use.

    This is the trainable/checkpointable unit: `parameters()` exposes every
    weight under a stable name, and checkpoints restore bit-identical state.
    """

    def __init__(self, lstm_config, lstm_params, fusion_config, fusion_params,
                 answer_vocab=None, question_vocab=None, source_names=None):
        if fusion_config.question_dim != lstm_config.hidden_dim:
            raise ValueError(
                f"question_dim {fusion_config.question_dim} must equal the encoder's "
                f"hidden_dim {lstm_config.hidden_dim}")
        if source_names is not None and len(source_names) != len(fusion_config.image_dims):
            raise ValueError("need one source name per image-feature input")
        self.lstm_config = lstm_config
        self.lstm_params = lstm_params
        self.fusion_config = fusion_config
        self.fusion_params = fusion_params
        self.answer_vocab = list(answer_vocab) if answer_vocab is not None else None
        self.question_vocab = list(question_vocab) if question_vocab is not None else None
        self.source_names = list(source_names) if source_names is not None else None
        self._qindex = None

    @classmethod
    def build(cls, lstm_config: lstm_mod.LstmConfig, fusion_config: DualPathConfig,
              seed: int, answer_vocab=None, question_vocab=None,
              source_names=None) -> "DualPathModel":
        rng = np.random.default_rng(seed)
        lstm_params = lstm_mod.init_lstm_params(lstm_config, rng)
        fusion_params = init_dualpath_params(fusion_config, rng)
        return cls(lstm_config, lstm_params, fusion_config, fusion_params,
                   answer_vocab, question_vocab, source_names)

    def parameters(self) -> dict:
        out = dict(self.lstm_params.named())
        out.update(self.fusion_params.named())
        return out

    def question_index(self) -> dict:
        if self._qindex is None:
            if self.question_vocab is None:
                raise ValueError("model has no question vocabulary")
            self._qindex = lstm_mod.build_vocab_index(self.question_vocab)
        return self._qindex

    def encode_tokens(self, token_ids) -> Tensor:
        return lstm_mod.encode_question(token_ids, self.lstm_params, self.lstm_config)

    def logits_for_batch(self, feature_rows: Sequence[np.ndarray], sequences) -> Tensor:
        """Logits for a batch: one (batch, dim) array per source plus
        same-length token-id sequences."""
        q = lstm_mod.encode_question_batch(sequences, self.lstm_params, self.lstm_config)
        feats = [Tensor(rows) for rows in feature_rows]
        return forward(feats, q, self.fusion_params, self.fusion_config)


# ---------------------------------------------------------------------------
# Checkpoints: a deterministic self-describing container. One JSON manifest
# line (configs, vocabularies, parameter names/shapes in order) followed by
# the raw little-endian float64 bytes of each parameter. Byte-for-byte
# reproducible for identical state, unlike zip-based formats.

_MAGIC = "dualpath-checkpoint"


def save_checkpoint(path, model: DualPathModel) -> None:
    params = model.parameters()
    names = list(params.keys())
    manifest = {
        "format": _MAGIC,
        "version": 1,
        "lstm_config": {
            "vocab_size": model.lstm_config.vocab_size,
            "embed_dim": model.lstm_config.embed_dim,
            "hidden_dim": model.lstm_config.hidden_dim,
            "num_layers": model.lstm_config.num_layers,
        },
        "fusion_config": {
            "image_dims": list(model.fusion_config.image_dims),
            "question_dim": model.fusion_config.question_dim,
            "common_dim": model.fusion_config.common_dim,
            "num_answers": model.fusion_config.num_answers,
            "mode": model.fusion_config.mode,
            "head_dim": model.fusion_config.head_dim,
        },
        "answer_vocab": model.answer_vocab,
        "question_vocab": model.question_vocab,
        "source_names": model.source_names,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            arr = np.ascontiguousarray(params[name].data, dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path) -> DualPathModel:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: not a checkpoint file ({exc})") from exc
    if manifest.get("format") != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")

    try:
        lstm_config = lstm_mod.LstmConfig(**manifest["lstm_config"])
        fusion_config = DualPathConfig(**manifest["fusion_config"])
        param_entries = manifest["params"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed checkpoint manifest ({exc})") from exc
    model = DualPathModel.build(lstm_config, fusion_config, seed=0,
                                answer_vocab=manifest.get("answer_vocab"),
                                question_vocab=manifest.get("question_vocab"),
                                source_names=manifest.get("source_names"))
    params = model.parameters()
    reader = io.BytesIO(blob)
    seen = set()
    for entry in param_entries:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in params:
            raise ValueError(f"{path}: unknown parameter {name!r}")
        target = params[name]
        if target.shape != shape:
            raise ValueError(f"{path}: parameter {name} has shape {shape}, expected {target.shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = reader.read(count * 8)
        if len(raw) != count * 8:
            raise ValueError(f"{path}: truncated data for parameter {name}")
        target.data[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise ValueError(f"{path}: missing parameters {sorted(missing)}")
    return model
