"""Command-line interface.

Subcommands: synth-gen, train, eval, predict, ensemble-tune, gradcheck,
encode. Exit codes: 0 success, 1 validation/usage error, 2 internal error.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import data as data_mod
from . import ensemble as ens_mod
from . import features as feat_mod
from . import training as train_mod
from . import verify as verify_mod
from .autograd import NonFiniteError, ShapeError
from .lstm import LstmConfig, load_vocabulary, tokenize
from .model import DualPathConfig, DualPathModel, load_checkpoint, save_checkpoint


class CliError(Exception):
    """Bad usage or bad input; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


# Desk-scale model defaults; paper-scale values go in a config file.
MODEL_DEFAULTS = {
    "embed_dim": 16,
    "hidden_dim": 16,
    "num_layers": 2,
    "head_dim": 64,
    "common_dim": 32,
    "mode": "dual",
}
MODE_ALIASES = {"dual": "dual", "sum": "sum_only", "mul": "mul_only"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualpath", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth-gen", help="generate a synthetic teacher-labeled dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=8000)
    p.add_argument("--dev", type=int, default=1000)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--teacher-seed", type=int, default=None,
                   help="override the teacher's own seed")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("train", help="train one fusion net on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), default=None)
    p.add_argument("--dim", type=int, default=None, help="common-space dimension")
    p.add_argument("--config", default=None, help="JSON file of train/model fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--answers", type=int, default=None, help="answer vocabulary size")
    p.add_argument("--dev", default=None, help="dev split for per-epoch accuracy rows")
    p.add_argument("--log", default=None, help="metrics CSV (default: <out>.log.csv)")
    p.add_argument("--question-vocab", default=None, help="token-per-line vocabulary file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or ensemble on a dataset")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt")
    group.add_argument("--ensemble", help="ensemble spec JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["open_ended", "multiple_choice"], default="open_ended")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict the answer for one example")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--multiple-choice", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble-tune", help="tune ensemble weights on a dev split")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpts", nargs="+", help="unit checkpoints")
    group.add_argument("--spec", help="existing ensemble spec JSON")
    p.add_argument("--data", required=True, help="dev split")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--out", required=True, help="spec JSON to write")
    p.set_defaults(func=cmd_ensemble_tune)

    p = sub.add_parser("gradcheck", help="verify analytic gradients numerically")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--sources", default="1,2,3",
                   help="comma-separated source counts for the full-model sweeps")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("encode", help="run feature-coding transforms on a feature file")
    p.add_argument("--op", required=True,
                   choices=["l2", "pca-fit", "pca-apply", "coords",
                            "vlad-fit", "vlad-apply", "avg-softmax"])
    p.add_argument("--input", required=True, help="JSONL feature/region file")
    p.add_argument("--output", default=None)
    p.add_argument("--model", default=None, help="model file for pca/vlad fit+apply")
    p.add_argument("--k", type=int, default=None, help="target dimension for pca-fit")
    p.add_argument("--expected-count", type=int, default=10)
    p.set_defaults(func=cmd_encode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (CliError, ValueError, ShapeError, NonFiniteError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is a bug in us
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# Subcommand bodies


def cmd_synth_gen(args) -> int:
    teacher = data_mod.TeacherSpec()
    if args.teacher_seed is not None:
        teacher = data_mod.TeacherSpec(seed=args.teacher_seed)
    paths = data_mod.generate_synthetic(teacher, args.train, args.dev, args.test,
                                        seed=args.seed, out_dir=args.out_dir)
    for split, path in paths.items():
        print(f"{split}: {path}")
    return 0


_CONFIG_KEYS = frozenset([
    "batch_size", "learning_rate", "rmsprop_decay", "rmsprop_eps", "epochs",
    "answer_vocab_size", "seed", "embed_dim", "hidden_dim", "num_layers",
    "head_dim", "common_dim", "mode",
])


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"{path}: unknown config fields {sorted(unknown)}")
    return cfg


def _build_question_vocab(examples) -> list:
    tokens = set()
    for ex in examples:
        tokens.update(tokenize(ex.question))
    return ["<unk>"] + sorted(tokens)


def cmd_train(args) -> int:
    examples, schema = data_mod.load_dataset(args.data)
    file_cfg = _load_config_file(args.config)

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    train_fields = {f: file_cfg[f] for f in
                    ("batch_size", "learning_rate", "rmsprop_decay", "rmsprop_eps")
                    if f in file_cfg}
    cfg = train_mod.TrainConfig(
        epochs=int(pick(args.epochs, "epochs", 10)),
        answer_vocab_size=int(pick(args.answers, "answer_vocab_size", 2000)),
        seed=int(pick(args.seed, "seed", 0)),
        **train_fields,
    )
    mode = pick(MODE_ALIASES.get(args.mode) if args.mode else None, "mode",
                MODEL_DEFAULTS["mode"])
    common_dim = int(pick(args.dim, "common_dim", MODEL_DEFAULTS["common_dim"]))

    if args.question_vocab:
        question_vocab = load_vocabulary(args.question_vocab)
    elif "question_vocab" in schema.header:
        question_vocab = list(schema.header["question_vocab"])
    else:
        question_vocab = _build_question_vocab(examples)

    answer_vocab = train_mod.build_answer_vocab(
        [train_mod.modal_answer(ex.human_answers) for ex in examples],
        cfg.answer_vocab_size)

    lstm_config = LstmConfig(
        vocab_size=len(question_vocab),
        embed_dim=int(file_cfg.get("embed_dim", MODEL_DEFAULTS["embed_dim"])),
        hidden_dim=int(file_cfg.get("hidden_dim", MODEL_DEFAULTS["hidden_dim"])),
        num_layers=int(file_cfg.get("num_layers", MODEL_DEFAULTS["num_layers"])),
    )
    fusion_config = DualPathConfig(
        image_dims=tuple(dim for _, dim in schema.sources),
        question_dim=lstm_config.hidden_dim,
        common_dim=common_dim,
        num_answers=len(answer_vocab),
        mode=mode,
        head_dim=int(file_cfg.get("head_dim", MODEL_DEFAULTS["head_dim"])),
    )
    model = DualPathModel.build(lstm_config, fusion_config, seed=cfg.seed,
                                answer_vocab=answer_vocab.answers,
                                question_vocab=question_vocab,
                                source_names=schema.source_names())

    dev_examples = data_mod.load_dataset(args.dev)[0] if args.dev else None
    log_path = args.log if args.log is not None else args.out + ".log.csv"
    result = train_mod.train(model, examples, cfg, dev_examples=dev_examples,
                             log_path=log_path)
    save_checkpoint(args.out, model)
    final = f"{result.epoch_losses[-1]:.6f}" if result.epoch_losses else "n/a"
    print(f"trained {cfg.epochs} epochs on {result.kept} examples "
          f"({result.dropped} dropped); final loss {final}")
    print(f"checkpoint: {args.out}")
    print(f"log: {log_path}")
    return 0


def _format_table(metrics: dict) -> str:
    headers = ("All", "Y/N", "Num", "Others")
    keys = ("All", "YesNo", "Num", "Others")
    cells = []
    for key in keys:
        value = metrics[key]
        cells.append("-" if math.isnan(value) else f"{100.0 * value:.2f}")
    head = "".join(f"{h:<10}" for h in headers).rstrip()
    row = "".join(f"{c:<10}" for c in cells).rstrip()
    return head + "\n" + row


def cmd_eval(args) -> int:
    examples, _ = data_mod.load_dataset(args.data)
    if args.ckpt:
        target = load_checkpoint(args.ckpt)
    else:
        spec = ens_mod.load_ensemble_spec(args.ensemble)
        target = ens_mod.LoadedEnsemble.from_spec(spec)
    metrics = train_mod.evaluate(target, examples, mode=args.mode)
    print(_format_table(metrics))
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.ckpt)
    examples, _ = data_mod.load_dataset(args.data)
    if not 0 <= args.index < len(examples):
        raise CliError(f"--index {args.index} out of range for {len(examples)} examples")
    example = examples[args.index]
    mode = "multiple_choice" if args.multiple_choice else "open_ended"
    answer = train_mod.predict_dataset(model, [example], mode=mode)[0]
    print(answer)
    return 0


def cmd_ensemble_tune(args) -> int:
    if args.spec:
        spec = ens_mod.load_ensemble_spec(args.spec)
    else:
        units = []
        for path in args.ckpts:
            model = load_checkpoint(path)
            units.append(ens_mod.EnsembleUnit(checkpoint=path,
                                              common_dim=model.fusion_config.common_dim,
                                              weight=1.0))
        spec = ens_mod.EnsembleSpec(units=units)
    loaded = ens_mod.LoadedEnsemble.from_spec(spec)
    dev_examples, _ = data_mod.load_dataset(args.data)
    weights = ens_mod.tune_ensemble_weights(loaded, dev_examples,
                                            iterations=args.iterations)
    for unit, w in zip(spec.units, weights):
        unit.weight = float(w)
    ens_mod.save_ensemble_spec(args.out, spec)
    metrics = train_mod.evaluate(loaded, dev_examples)
    print(f"tuned weights: {', '.join(f'{w:.4f}' for w in weights)}")
    print(f"dev accuracy: {100.0 * metrics['All']:.2f}")
    print(f"spec: {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    try:
        sources = tuple(int(s) for s in args.sources.split(",") if s.strip())
    except ValueError:
        raise CliError(f"--sources must be comma-separated integers, got {args.sources!r}")
    if any(s not in (1, 2, 3) for s in sources):
        raise CliError("--sources entries must be 1, 2 or 3")
    results = verify_mod.full_suite(seed=args.seed, eps=args.eps, sources=sources)
    failures = 0
    for name in sorted(results):
        err = results[name]
        status = "ok" if err < verify_mod.GRAD_TOLERANCE else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"{status:4} {name:30} max rel err {err:.3e}")
    print(f"{len(results) - failures}/{len(results)} gradient checks passed "
          f"(tolerance {verify_mod.GRAD_TOLERANCE:g})")
    if failures:
        raise CliError(f"{failures} gradient checks failed")
    return 0


def _read_jsonl(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{path} line {i}: invalid JSON ({exc.msg})") from exc
    if not records:
        raise CliError(f"{path}: empty input")
    return records


def _feature_rows(records, path) -> np.ndarray:
    rows = []
    for i, rec in enumerate(records, start=1):
        if "feature" not in rec:
            raise CliError(f"{path} record {i}: missing 'feature'")
        rows.append(np.asarray(rec["feature"], dtype=np.float64))
    try:
        return np.stack(rows)
    except ValueError as exc:
        raise CliError(f"{path}: features have inconsistent dimensions") from exc


def _write_jsonl(path, vectors) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vec in vectors:
            fh.write(json.dumps({"feature": np.asarray(vec).tolist()}) + "\n")


def _write_vector(path, vector) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"feature": np.asarray(vector).tolist()}, fh)
        fh.write("\n")


def cmd_encode(args) -> int:
    records = _read_jsonl(args.input)

    if args.op == "l2":
        _require(args.output, "--output")
        rows = _feature_rows(records, args.input)
        _write_jsonl(args.output, [feat_mod.l2_normalize(r) for r in rows])
    elif args.op == "pca-fit":
        _require(args.model, "--model")
        _require(args.k, "--k")
        rows = _feature_rows(records, args.input)
        feat_mod.save_pca(args.model, feat_mod.pca_fit(rows, args.k))
        print(f"pca model: {args.model}")
        return 0
    elif args.op == "pca-apply":
        _require(args.output, "--output")
        _require(args.model, "--model")
        model = feat_mod.load_pca(args.model)
        rows = _feature_rows(records, args.input)
        _write_jsonl(args.output, feat_mod.pca_transform(model, rows))
    elif args.op == "coords":
        _require(args.output, "--output")
        vectors = []
        for i, rec in enumerate(records, start=1):
            if "bbox" not in rec or "image_size" not in rec:
                raise CliError(f"{args.input} record {i}: needs 'bbox' and 'image_size'")
            region = feat_mod.RegionDescriptor(feature=np.zeros(1), bbox=tuple(rec["bbox"]),
                                               image_size=tuple(rec["image_size"]))
            vectors.append(feat_mod.coordinate_vector(region))
        _write_jsonl(args.output, vectors)
    elif args.op == "vlad-fit":
        _require(args.model, "--model")
        rows = _feature_rows(records, args.input)
        np.savez(args.model, center=feat_mod.vlad_center(rows))
        print(f"vlad center: {args.model}")
        return 0
    elif args.op == "vlad-apply":
        _require(args.output, "--output")
        _require(args.model, "--model")
        with np.load(args.model) as data:
            center = data["center"]
        rows = _feature_rows(records, args.input)
        _write_vector(args.output, feat_mod.vlad_one_cluster(list(rows), center))
    elif args.op == "avg-softmax":
        _require(args.output, "--output")
        rows = _feature_rows(records, args.input)
        _write_vector(args.output,
                      feat_mod.avg_region_softmax(list(rows), args.expected_count))
    print(f"wrote {args.output}")
    return 0


def _require(value, flag: str) -> None:
    if value is None:
        raise CliError(f"{flag} is required for this operation")


if __name__ == "__main__":
    sys.exit(main())
