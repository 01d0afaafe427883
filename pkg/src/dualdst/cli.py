"""Command-line pipeline: preprocess, build-schema, train, evaluate, analyze, track."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus, evalkit
from .errors import DualDstError
from .model import DstModel, EncoderConfig, load_checkpoint
from .textenc import DEFAULT_VOCAB_SIZE, Vocabulary, build_vocab, slot_surface
from .tracker import Tracker
from .trainer import TrainConfig, evaluate_checkpoint, seed_everything, train


def _configure_logging() -> None:
    level = os.environ.get("DUAL_DST_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualdst",
        description="Dual-strategy dialog state tracking pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-schema", help="type pairs per variant and derive picklists")
    p.add_argument("--schema", required=True, help="base schema JSON")
    p.add_argument("--variant", choices=corpus.VARIANTS, default=corpus.VARIANT_DS_DST,
                   help="slot typing strategy")
    p.add_argument("--data-dir", help="directory with train.json (needed for picklists)")
    p.add_argument("--out", required=True, help="output schema JSON")
    p.set_defaults(func=cmd_build_schema)

    p = sub.add_parser("preprocess", help="materialize examples and train the vocabulary")
    p.add_argument("--data-dir", required=True, help="directory with {split}.json files")
    p.add_argument("--schema", required=True, help="schema JSON with picklists")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE,
                   help="vocabulary budget")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a preprocessed directory")
    p.add_argument("--data-dir", required=True, help="preprocess output directory")
    p.add_argument("--config", help="TrainConfig JSON (defaults when omitted)")
    p.add_argument("--out", required=True, help="run directory for checkpoints and logs")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score predictions or a checkpoint on a split")
    p.add_argument("--predictions", help="prediction state dump (JSONL)")
    p.add_argument("--gold", help="gold state dump (JSONL)")
    p.add_argument("--checkpoint", help="model checkpoint to run")
    p.add_argument("--data-dir", help="preprocess output directory")
    p.add_argument("--split", choices=corpus.SPLITS, default="test")
    p.add_argument("--out", help="write the metrics report JSON here")
    p.add_argument("--csv", help="write the per-slot accuracy CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="span-matchability (unfound value) statistics")
    p.add_argument("--data-dir", required=True, help="preprocess output directory")
    p.add_argument("--split", choices=corpus.SPLITS, default="validation")
    p.add_argument("--predictions", help="prediction state dump for recovery counts")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("track", help="print per-turn tracked states for one dialogue")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--data-dir", required=True, help="directory with raw {split}.json")
    p.add_argument("--split", choices=corpus.SPLITS, default="test")
    p.add_argument("--schema", required=True, help="schema JSON with picklists")
    p.add_argument("--dialogue-id", required=True, help="dialogue to track")
    p.add_argument("--out", help="also dump states as JSONL here")
    p.set_defaults(func=cmd_track)

    return parser


def cmd_build_schema(args) -> int:
    schema = corpus.apply_variant(corpus.load_schema(args.schema), args.variant)
    if any(p.is_categorical and not p.picklist for p in schema.pairs):
        if not args.data_dir:
            raise DualDstError(
                "schema has categorical pairs without picklists; pass --data-dir "
                "so they can be derived from the training split"
            )
        dialogues = corpus.load_dialogues(args.data_dir, "train", schema)
        schema = corpus.build_picklists(dialogues, schema)
    corpus.save_schema(schema, args.out)
    categorical = sum(p.is_categorical for p in schema.pairs)
    print(
        f"wrote {args.out}: {schema.size} pairs, "
        f"{categorical} categorical / {schema.size - categorical} non-categorical"
    )
    return 0


def cmd_preprocess(args) -> int:
    schema = corpus.load_schema(args.schema)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus.save_schema(schema, out_dir / "schema.json")

    train_dialogues = corpus.load_dialogues(args.data_dir, "train", schema)
    texts = [
        corpus.flatten_context(d, d.num_turns).text for d in train_dialogues
    ]
    texts += [slot_surface(pair) for pair in schema.pairs]
    texts += [value for pair in schema.pairs for value in pair.picklist]
    vocab = build_vocab(texts, size=args.vocab_size)
    vocab.save(out_dir / "vocab.txt")

    for split in corpus.SPLITS:
        if not (Path(args.data_dir) / f"{split}.json").exists():
            continue
        dialogues = (
            train_dialogues
            if split == "train"
            else corpus.load_dialogues(args.data_dir, split, schema)
        )
        records = corpus.materialize_examples(dialogues, schema)
        corpus.write_examples(records, schema, out_dir / f"{split}.examples.jsonl")
        evalkit.dump_states(
            evalkit.gold_states(dialogues, schema), out_dir / f"{split}.gold.jsonl"
        )
        print(f"{split}: {len(dialogues)} dialogues, {len(records)} examples")
    print(f"vocabulary: {len(vocab)} tokens")
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data_dir)
    schema = corpus.load_schema(data_dir / "schema.json")
    vocab = Vocabulary.load(data_dir / "vocab.txt")
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed

    train_records = corpus.read_examples(data_dir / "train.examples.jsonl")
    validation_path = data_dir / "validation.examples.jsonl"
    validation_records = (
        corpus.read_examples(validation_path) if validation_path.exists() else []
    )

    seed_everything(config.seed)
    model = DstModel(
        EncoderConfig.desk(vocab_size=len(vocab), max_len=config.max_len),
        margin=config.margin,
    )
    state = train(train_records, validation_records, schema, model, vocab, config, args.out)
    print(
        f"trained {state.step} steps; best validation joint accuracy "
        f"{state.best_validation_joint_accuracy}"
        + (f" -> {state.best_checkpoint_path}" if state.best_checkpoint_path else "")
    )
    return 0


def cmd_evaluate(args) -> int:
    if args.predictions:
        if not args.gold:
            raise DualDstError("--predictions needs --gold to compare against")
        predictions = evalkit.load_states(args.predictions)
        golds = evalkit.load_states(args.gold)
        report = evalkit.build_report(args.split, predictions, golds)
    else:
        if not (args.checkpoint and args.data_dir):
            raise DualDstError(
                "pass either --predictions/--gold or --checkpoint/--data-dir"
            )
        data_dir = Path(args.data_dir)
        schema = corpus.load_schema(data_dir / "schema.json")
        vocab = Vocabulary.load(data_dir / "vocab.txt")
        records = corpus.read_examples(data_dir / f"{args.split}.examples.jsonl")
        report = evaluate_checkpoint(
            args.checkpoint, records, schema, args.split, vocab=vocab
        )
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    if args.csv:
        evalkit.write_per_slot_csv(report, args.csv)
    print(payload)
    return 0


def cmd_analyze(args) -> int:
    data_dir = Path(args.data_dir)
    schema = corpus.load_schema(data_dir / "schema.json")
    records = corpus.read_examples(data_dir / f"{args.split}.examples.jsonl")
    predictions = evalkit.load_states(args.predictions) if args.predictions else None
    stats = evalkit.unfound_stats(records, schema, predictions=predictions)
    evalkit.write_unfound_csv(stats, args.out)
    total_unfound = sum(s.unfound for s in stats.values())
    total_relative = sum(s.relative_turns for s in stats.values())
    print(f"wrote {args.out}: {total_unfound}/{total_relative} values unfound")
    return 0


def cmd_track(args) -> int:
    schema = corpus.load_schema(args.schema)
    model, vocab, _ = load_checkpoint(args.checkpoint)
    dialogues = corpus.load_dialogues(args.data_dir, args.split, schema)
    matches = [d for d in dialogues if d.id == args.dialogue_id]
    if not matches:
        raise DualDstError(f"dialogue {args.dialogue_id!r} not found in split {args.split}")
    dialogue = matches[0]
    tracker = Tracker(model, schema, vocab, max_len=model.config.max_len)
    states = tracker.track_dialogue(dialogue)
    for turn, state in zip(dialogue.turns, states):
        if turn.system:
            print(f"system: {turn.system}")
        print(f"user:   {turn.user}")
        filled = {k: v for k, v in sorted(state.slots.items()) if v != corpus.GATE_NONE}
        rendered = ", ".join(f"<{k.replace('-', ', ')}, {v}>" for k, v in filled.items())
        print(f"state {state.turn}: {rendered or '(empty)'}")
        print()
    if args.out:
        evalkit.dump_states(
            {(dialogue.id, s.turn): s.slots for s in states}, args.out
        )
    return 0


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DualDstError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
