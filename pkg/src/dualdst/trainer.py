"""Joint training loop: warmup/decay schedule, periodic validation, best checkpoint."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from . import evalkit
from .corpus import ExampleRecord, GATE_PREDICTION, SlotSchema, coverage_warning_count
from .errors import ConfigurationError, TrainingError
from .model import (
    DstModel,
    GATE_CLASS,
    ModelExample,
    build_value_reps,
    collate,
    load_checkpoint,
    parameter_hash,
    save_checkpoint,
)
from .textenc import Vocabulary, build_input
from .tracker import Tracker, predict_states_for_records

logger = logging.getLogger(__name__)

BEST_CHECKPOINT_NAME = "best.ckpt"
TRAIN_LOG_NAME = "train_log.jsonl"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    warmup_proportion: float = 0.1
    batch_size: int = 16
    max_epochs: int = 5
    eval_every_iterations: int = 1000
    max_len: int = 512
    seed: int = 42
    margin: float = 0.5
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-6
    clip_norm: float = 1.0

    def __post_init__(self):
        if not 0 < self.warmup_proportion < 1:
            raise ConfigurationError("warmup_proportion must lie in (0, 1)")
        for name in ("learning_rate", "batch_size", "eval_every_iterations", "max_len"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be non-negative")

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


@dataclass
class TrainState:
    step: int = 0
    best_validation_joint_accuracy: float | None = None
    best_checkpoint_path: Path | None = None
    rng_state: tuple | None = None


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup to the peak rate, then linear decay to 0 at total_steps."""
    if total_steps <= 0:
        raise ConfigurationError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = config.warmup_proportion * total_steps
    if step <= warmup:
        return config.learning_rate * step / warmup
    return config.learning_rate * (total_steps - step) / (total_steps - warmup)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)


def prepare_examples(
    records: list[ExampleRecord],
    schema: SlotSchema,
    vocab: Vocabulary,
    max_len: int,
) -> list[ModelExample]:
    """Encode materialized records into model-ready examples."""
    examples = []
    for record in records:
        pair = schema.pair_by_id(record.pair_id)
        encoded = build_input(
            pair,
            record.context.text,
            vocab,
            max_len,
            gold_char_span=record.annotation.char_span,
        )
        examples.append(
            ModelExample(
                encoded=encoded,
                pair_id=pair.id,
                kind=pair.kind,
                gate_class=GATE_CLASS[record.annotation.gate],
                picklist_index=record.annotation.picklist_index,
                dialogue_id=record.dialogue_id,
                turn=record.turn,
            )
        )
    return examples


def _optimizer(model: DstModel, config: TrainConfig) -> torch.optim.AdamW:
    # weight decay skips biases and normalization gains
    norm_weights = {
        f"{name}.weight"
        for name, module in model.named_modules()
        if isinstance(module, nn.LayerNorm)
    }
    decay, no_decay = [], []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        if name.endswith(".bias") or name in norm_weights:
            no_decay.append(param)
        else:
            decay.append(param)
    return torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": config.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_epsilon,
    )


def _validate(
    model: DstModel,
    schema: SlotSchema,
    vocab: Vocabulary,
    records: list[ExampleRecord],
    max_len: int,
) -> float:
    if not records:
        return 0.0
    model.eval()
    tracker = Tracker(model, schema, vocab, max_len=max_len)
    predictions = predict_states_for_records(tracker, records)
    golds = evalkit.states_from_records(records, schema)
    return evalkit.joint_accuracy(predictions, golds)


def train(
    train_records: list[ExampleRecord],
    validation_records: list[ExampleRecord],
    schema: SlotSchema,
    model: DstModel,
    vocab: Vocabulary,
    config: TrainConfig,
    out_dir: str | Path,
) -> TrainState:
    """Optimize the joint loss over shuffled batches, keeping the best checkpoint.

    Validation joint accuracy runs every ``eval_every_iterations`` steps and
    once more after the final step; a checkpoint is written whenever it
    improves. Shuffling, parameter init, and dropout are all derived from
    ``config.seed``, so identical runs produce identical loss curves.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed_everything(config.seed)

    examples = prepare_examples(train_records, schema, vocab, config.max_len)
    value_reps = build_value_reps(model, schema, vocab)
    frozen_hash_before = parameter_hash(model.value_encoder)

    batches_per_epoch = math.ceil(len(examples) / config.batch_size) if examples else 0
    total_steps = config.max_epochs * batches_per_epoch
    state = TrainState()
    if total_steps == 0:
        return state

    optimizer = _optimizer(model, config)
    rng = random.Random(config.seed)
    checkpoint_path = out_dir / BEST_CHECKPOINT_NAME

    def run_validation() -> None:
        accuracy = _validate(model, schema, vocab, validation_records, config.max_len)
        if state.best_validation_joint_accuracy is None or accuracy > state.best_validation_joint_accuracy:
            state.best_validation_joint_accuracy = accuracy
            save_checkpoint(
                checkpoint_path,
                model,
                vocab,
                extra={"step": state.step, "validation_joint_accuracy": accuracy},
            )
            state.best_checkpoint_path = checkpoint_path
        logger.info(
            "step %d validation joint accuracy %.4f (best %.4f)",
            state.step, accuracy, state.best_validation_joint_accuracy,
        )

    with open(out_dir / TRAIN_LOG_NAME, "w", encoding="utf-8") as log:
        for _ in range(config.max_epochs):
            order = list(range(len(examples)))
            rng.shuffle(order)
            for lo in range(0, len(order), config.batch_size):
                batch_examples = [examples[i] for i in order[lo : lo + config.batch_size]]
                batch = collate(batch_examples, vocab.pad_id)
                lr = lr_at(state.step, total_steps, config)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                model.train()
                loss = model.total_loss(batch, value_reps)
                if not bool(torch.isfinite(loss.total)):
                    raise TrainingError(
                        f"non-finite loss at step {state.step}",
                        diagnostics={
                            "step": state.step,
                            "batch": [
                                (ex.dialogue_id, ex.turn, ex.pair_id)
                                for ex in batch_examples
                            ],
                            "gate": float(loss.gate.detach()),
                            "span": float(loss.span.detach()),
                            "picklist": float(loss.picklist.detach()),
                        },
                    )
                optimizer.zero_grad()
                loss.total.backward()
                torch.nn.utils.clip_grad_norm_(
                    [p for p in model.parameters() if p.requires_grad], config.clip_norm
                )
                optimizer.step()
                state.step += 1
                log.write(
                    json.dumps(
                        {
                            "step": state.step,
                            "lr": lr,
                            "total": float(loss.total.detach()),
                            "gate": float(loss.gate.detach()),
                            "span": float(loss.span.detach()),
                            "picklist": float(loss.picklist.detach()),
                            "skipped_spans": loss.skipped_spans,
                            "uncovered_picklists": loss.uncovered_picklists,
                        },
                        sort_keys=True,
                    )
                )
                log.write("\n")
                if state.step % config.eval_every_iterations == 0:
                    run_validation()
        if state.step % config.eval_every_iterations != 0:
            run_validation()

    state.rng_state = rng.getstate()
    if parameter_hash(model.value_encoder) != frozen_hash_before:
        raise TrainingError("frozen value encoder changed during training")
    return state


def evaluate_checkpoint(
    checkpoint_path: str | Path,
    records: list[ExampleRecord],
    schema: SlotSchema,
    split: str,
    vocab: Vocabulary | None = None,
) -> evalkit.MetricsReport:
    """Deterministic metrics for one split from a frozen snapshot."""
    model, checkpoint_vocab, _ = load_checkpoint(checkpoint_path, vocab=vocab)
    tracker = Tracker(model, schema, checkpoint_vocab, max_len=model.config.max_len)
    predictions = predict_states_for_records(tracker, records)
    golds = evalkit.states_from_records(records, schema)
    skipped = sum(
        1
        for r in records
        if not schema.pair_by_id(r.pair_id).is_categorical
        and r.annotation.gate == GATE_PREDICTION
        and r.annotation.char_span is None
    )
    return evalkit.build_report(
        split,
        predictions,
        golds,
        skipped_spans=skipped,
        coverage_warnings=coverage_warning_count(records, schema),
    )
