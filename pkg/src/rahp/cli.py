"""Command-line orchestration: prepare, pretrain, train, evaluate,
predict and overlap subcommands.

Every artifact-producing command writes a ``meta.json`` capturing the
effective configuration, seed and content hashes of its inputs, so runs
are auditable and reproducible. All outputs are deterministic for a
fixed seed; no timestamps are embedded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import data as data_mod
from . import nli as nli_mod
from . import training
from .embedding import Vocabulary, char_vocab_from_tokens, load_pretrained_vectors, load_vector_file, tokenize
from .instances import LabeledQAInstance
from .model import (
    ModelParams,
    RAHPConfig,
    forward,
    load_model_checkpoint,
    save_model_checkpoint,
)
from .ra import load_transferred
from .tensor import no_grad

log = logging.getLogger("rahp")


def _hash_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_meta(out_dir, config, inputs, extra=None):
    meta = {
        "config": config.to_dict(),
        "config_fingerprint": config.fingerprint(),
        "seed": config.seed,
        "input_hashes": {name: _hash_file(path) for name, path in inputs.items()},
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _build_config(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    for flag in ("no_ra_coherence", "no_q_to_r_attention", "no_char_embedding"):
        if getattr(args, flag, False):
            overrides[flag] = "true"
    if args.config:
        return RAHPConfig.from_file(args.config, overrides)
    coerced = {}
    if overrides:
        from .model import _coerce_config_values
        coerced = _coerce_config_values(overrides)
    return RAHPConfig(**coerced)


def _add_config_args(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field (repeatable)")
    parser.add_argument("--seed", type=int, help="override the config seed")


def _add_ablation_flags(parser):
    parser.add_argument("--no-ra-coherence", dest="no_ra_coherence",
                        action="store_true", help="drop the review pathway")
    parser.add_argument("--no-q-to-r-attention", dest="no_q_to_r_attention",
                        action="store_true", help="skip question-to-review attention")
    parser.add_argument("--no-char-embedding", dest="no_char_embedding",
                        action="store_true", help="use word vectors only")


def _load_vocabs(vocab_path, char_vocab_path):
    return Vocabulary.load(vocab_path), Vocabulary.load(char_vocab_path)


def _build_word_table(config, vocab, rng, vectors_path):
    if vectors_path:
        return load_pretrained_vectors(vectors_path, vocab, rng, dim=config.word_dim)
    from .embedding import WordEmbeddingTable
    return WordEmbeddingTable.random(vocab, config.word_dim, rng)


# ---------------------------------------------------------------------------
# prepare


def cmd_prepare(args):
    config = _build_config(args)
    os.makedirs(args.out, exist_ok=True)

    records = data_mod.read_qa_records(args.qa)
    labeled = []
    discarded = 0
    for rec in records:
        label = data_mod.derive_label(rec.vote_x, rec.vote_y)
        if label is data_mod.Label.DISCARD:
            discarded += 1
            continue
        labeled.append((rec, 1 if label is data_mod.Label.HELPFUL else 0))

    reviews = data_mod.read_review_records(args.reviews)
    sentences = data_mod.split_all_reviews(reviews)
    vectors, skipped = load_vector_file(args.vectors, config.word_dim)
    index = data_mod.RetrievalIndex.build(sentences, vectors, config.word_dim)

    instances = []
    for rec, label in labeled:
        review_set = data_mod.retrieve_top_k(
            rec.question, rec.product_id, index, config.k_reviews,
            query_extra=rec.answer if config.query_includes_answer else "",
        )
        instances.append(LabeledQAInstance(
            product_id=rec.product_id,
            question=rec.question,
            answer=rec.answer,
            question_tokens=tokenize(rec.question),
            answer_tokens=tokenize(rec.answer),
            label=label,
            votes=(rec.vote_x, rec.vote_y),
            reviews=review_set,
        ))

    splits = data_mod.make_splits(instances, config.seed)

    def train_tokens():
        for inst in splits.train:
            yield from inst.question_tokens
            yield from inst.answer_tokens
            for slot in inst.reviews.filled:
                yield from slot.tokens

    vocab = Vocabulary.build(train_tokens())
    char_vocab = char_vocab_from_tokens(vocab.tokens)

    paths = {}
    for name, shard in (("train", splits.train), ("valid", splits.valid), ("test", splits.test)):
        paths[name] = os.path.join(args.out, f"{name}.jsonl")
        data_mod.write_shard(paths[name], shard)
    vocab.save(os.path.join(args.out, "vocab.tsv"))
    char_vocab.save(os.path.join(args.out, "chars.tsv"))
    index.save(os.path.join(args.out, "index.jsonl"))

    _write_meta(
        args.out, config,
        {"qa": args.qa, "reviews": args.reviews, "vectors": args.vectors},
        extra={
            "instances": len(instances),
            "discarded": discarded,
            "shard_sizes": {k: len(v) for k, v in
                            (("train", splits.train), ("valid", splits.valid), ("test", splits.test))},
            "vector_lines_skipped": skipped,
            "vocabulary_size": len(vocab),
        },
    )
    print(f"prepared {len(instances)} instances "
          f"({len(splits.train)}/{len(splits.valid)}/{len(splits.test)} train/valid/test, "
          f"{discarded} discarded) in {args.out}")
    return 0


# ---------------------------------------------------------------------------
# pretrain


def cmd_pretrain(args):
    config = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    instances, stats = nli_mod.parse_nli_corpus(args.nli)
    if not instances:
        raise SystemExit(f"{args.nli}: no usable records")

    rng = np.random.default_rng(config.seed)
    vocab = char_vocab = word_table = None
    if args.vocab:
        vocab, char_vocab = _load_vocabs(args.vocab, args.char_vocab)
        word_table = _build_word_table(config, vocab, rng, args.vectors)
    elif args.vectors:
        vocab = Vocabulary.build(
            t for inst in instances for t in inst.premise_tokens + inst.hypothesis_tokens
        )
        char_vocab = char_vocab_from_tokens(vocab.tokens)
        word_table = _build_word_table(config, vocab, rng, args.vectors)

    checkpoint_path = os.path.join(args.out, "pretrain.ckpt")
    try:
        result, _params, vocab, char_vocab = nli_mod.pretrain(
            instances, config, checkpoint_path,
            vocab=vocab, char_vocab=char_vocab, word_table=word_table, rng=rng,
        )
    except nli_mod.TrainingDiverged as exc:
        raise SystemExit(f"pre-training diverged: {exc}")

    vocab.save(os.path.join(args.out, "vocab.tsv"))
    char_vocab.save(os.path.join(args.out, "chars.tsv"))
    with open(os.path.join(args.out, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(result.history, fh, sort_keys=True, indent=2)
        fh.write("\n")

    inputs = {"nli": args.nli}
    if args.vectors:
        inputs["vectors"] = args.vectors
    _write_meta(args.out, config, inputs, extra={
        "parse_stats": vars(stats),
        "epochs_run": result.epochs_run,
        "best_val_accuracy": result.best_val_accuracy,
        "final_train_accuracy": result.final_train_accuracy,
    })
    print(f"pretrained {result.epochs_run} epochs, "
          f"train acc {result.final_train_accuracy:.3f}, "
          f"best val acc {result.best_val_accuracy:.3f} -> {checkpoint_path}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    config = _build_config(args)
    os.makedirs(args.out, exist_ok=True)
    vocab, char_vocab = _load_vocabs(
        args.vocab or os.path.join(args.data, "vocab.tsv"),
        args.char_vocab or os.path.join(args.data, "chars.tsv"),
    )
    train_path = os.path.join(args.data, "train.jsonl")
    valid_path = os.path.join(args.data, "valid.jsonl")
    train_set = data_mod.read_shard(train_path, config.k_reviews)
    valid_set = data_mod.read_shard(valid_path, config.k_reviews)
    if not train_set:
        raise SystemExit(f"{train_path}: empty shard")
    if not valid_set:
        raise SystemExit(f"{valid_path}: empty shard")

    rng = np.random.default_rng(config.seed)
    word_table = _build_word_table(config, vocab, rng, args.vectors)
    params = ModelParams.build(config, vocab, char_vocab, rng, word_table=word_table)

    transferred = []
    if args.pretrained:
        transferred = load_transferred(
            params.named(), args.pretrained,
            include_embeddings=config.transfer_embeddings,
        )
        log.info("transferred %d tensors from %s", len(transferred), args.pretrained)

    result = training.train_rahp(train_set, valid_set, params, config, rng=rng)

    checkpoint_path = os.path.join(args.out, "model.ckpt")
    save_model_checkpoint(checkpoint_path, params, config)
    history = [
        {
            "epoch": r.epoch,
            "train_loss": r.train_loss,
            "train_accuracy": r.train_accuracy,
            "val": r.val_report.to_dict() if r.val_report else None,
        }
        for r in result.history
    ]
    with open(os.path.join(args.out, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(history, fh, sort_keys=True, indent=2)
        fh.write("\n")

    inputs = {"train": train_path, "valid": valid_path}
    if args.pretrained:
        inputs["pretrained"] = args.pretrained
    if args.vectors:
        inputs["vectors"] = args.vectors
    _write_meta(args.out, config, inputs, extra={
        "best_epoch": result.best_epoch,
        "best_val_auroc": result.best_val_auroc,
        "stop_reason": result.stop_reason,
        "diverged": result.diverged,
        "transferred_tensors": transferred,
    })
    if result.diverged:
        print(f"training diverged: {result.stop_reason}; "
              f"last finite parameters saved to {checkpoint_path}", file=sys.stderr)
        return 1
    print(f"trained to epoch {result.history[-1].epoch} "
          f"(best val AUROC {result.best_val_auroc:.4f} at epoch {result.best_epoch}) "
          f"-> {checkpoint_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _params_from_checkpoint(checkpoint_path, vocab_path, char_vocab_path):
    from .checkpoint import read_checkpoint
    stored_config, _tensors = read_checkpoint(checkpoint_path)
    config = RAHPConfig.from_dict(stored_config)
    vocab, char_vocab = _load_vocabs(vocab_path, char_vocab_path)
    rng = np.random.default_rng(config.seed)
    params = ModelParams.build(config, vocab, char_vocab, rng)
    load_model_checkpoint(checkpoint_path, params, config)
    return params, config


def cmd_evaluate(args):
    params, config = _params_from_checkpoint(args.checkpoint, args.vocab, args.char_vocab)
    instances = data_mod.read_shard(args.shard, config.k_reviews)
    if not instances:
        raise SystemExit(f"{args.shard}: empty shard")
    report, scores = training.evaluate_model(instances, params, config)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        _write_meta(args.out, config,
                    {"checkpoint": args.checkpoint, "shard": args.shard})
    if args.dump_scores:
        with open(args.dump_scores, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance_id", "score", "label"])
            for i, (inst, score) in enumerate(zip(instances, scores)):
                writer.writerow([i, f"{score:.8f}", inst.label])
    print(report.table())
    return 0


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args):
    params, config = _params_from_checkpoint(args.checkpoint, args.vocab, args.char_vocab)
    vectors, _skipped = load_vector_file(args.vectors, config.word_dim)
    index = data_mod.RetrievalIndex.load(args.index, vectors)
    review_set = data_mod.retrieve_top_k(
        args.question, args.product_id, index, config.k_reviews,
        query_extra=args.answer if config.query_includes_answer else "",
    )
    instance = LabeledQAInstance(
        product_id=args.product_id,
        question=args.question,
        answer=args.answer,
        question_tokens=tokenize(args.question),
        answer_tokens=tokenize(args.answer),
        label=0,
        votes=(0, 0),
        reviews=review_set,
    )
    with no_grad():
        prob, details = forward(instance, params, config, collect=True)
    prob = float(prob.data)
    print(f"helpful probability: {prob:.4f}")
    print(f"label at 0.5: {'Helpful' if prob >= 0.5 else 'Not helpful'}")
    print("retrieved review sentences:")
    for i, slot in enumerate(review_set.slots):
        if slot is None:
            print(f"  [{i + 1}] (empty slot)")
        else:
            print(f"  [{i + 1}] score {slot.score:+.4f}  {slot.text}")
    if args.dump_attention:
        os.makedirs(args.dump_attention, exist_ok=True)
        np.savetxt(os.path.join(args.dump_attention, "alpha_q.csv"),
                   details["alpha_q"], delimiter=",")
        np.savetxt(os.path.join(args.dump_attention, "alpha_a.csv"),
                   details["alpha_a"], delimiter=",")
        for i, beta in enumerate(details["betas"]):
            if beta is not None:
                np.savetxt(os.path.join(args.dump_attention, f"beta_{i + 1}.csv"),
                           beta, delimiter=",")
    return 0


# ---------------------------------------------------------------------------
# overlap


def _corpus_texts(path):
    texts = []
    if path.endswith(".jsonl"):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                for key in ("question", "answer", "review_text", "text"):
                    if key in rec:
                        texts.append(rec[key])
    elif path.endswith(".tsv"):
        instances, _stats = nli_mod.parse_nli_corpus(path)
        for inst in instances:
            texts.append(" ".join(inst.premise_tokens))
            texts.append(" ".join(inst.hypothesis_tokens))
    else:
        with open(path, encoding="utf-8") as fh:
            texts = [line.strip() for line in fh if line.strip()]
    return texts


def cmd_overlap(args):
    reference = _corpus_texts(args.reference)
    rows = []
    for item in args.category:
        if "=" not in item:
            raise SystemExit(f"--category expects name=path, got {item!r}")
        name, _, path = item.partition("=")
        ratio = data_mod.vocab_overlap(_corpus_texts(path), reference)
        rows.append((name, ratio))
        print(f"{name},{ratio:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "ratio"])
            for name, ratio in rows:
                writer.writerow([name, f"{ratio:.6f}"])
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rahp",
        description="review-guided answer helpfulness prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="label, retrieve and shard a raw corpus")
    p.add_argument("--qa", required=True, help="QA records (JSON lines)")
    p.add_argument("--reviews", required=True, help="review records (JSON lines)")
    p.add_argument("--vectors", required=True, help="word-vector text file")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("pretrain", help="train the inference network on an SNLI-format corpus")
    p.add_argument("--nli", required=True, help="NLI corpus (TSV)")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", help="shared vocabulary from prepare (recommended)")
    p.add_argument("--char-vocab", help="shared character vocabulary from prepare")
    p.add_argument("--vectors", help="word-vector text file")
    _add_config_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train the helpfulness model")
    p.add_argument("--data", required=True, help="directory produced by prepare")
    p.add_argument("--out", required=True)
    p.add_argument("--pretrained", help="pretrain checkpoint to transfer from")
    p.add_argument("--vectors", help="word-vector text file")
    p.add_argument("--vocab", help="override vocabulary path")
    p.add_argument("--char-vocab", help="override character vocabulary path")
    _add_config_args(p)
    _add_ablation_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a shard with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shard", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--char-vocab", required=True)
    p.add_argument("--out", help="directory for report.json")
    p.add_argument("--dump-scores", help="CSV path for per-instance scores")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score one question/answer pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--char-vocab", required=True)
    p.add_argument("--index", required=True, help="retrieval index from prepare")
    p.add_argument("--vectors", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--answer", required=True)
    p.add_argument("--product-id", required=True)
    p.add_argument("--dump-attention", help="directory for attention CSV dumps")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("overlap", help="vocabulary overlap against a reference corpus")
    p.add_argument("--category", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_overlap)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
