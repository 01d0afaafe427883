"""Joint/per-slot accuracy, span-matchability error analysis, oracle-gate ablation."""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .corpus import (
    Dialogue,
    ExampleRecord,
    GATE_PREDICTION,
    SlotSchema,
    derive_span,
)
from .errors import AlignmentError

# scoring convention: every schema pair is scored at every turn, "none" values
# included; dropping them is known to inflate joint accuracy
SCORING_CONVENTION = "all-slots-every-turn-strict-none"

StateMap = dict[tuple[str, int], dict[str, str]]


@dataclass
class MetricsReport:
    split: str
    joint_accuracy: float
    per_slot_accuracy: dict[str, float]
    turn_count: int
    skipped_spans: int = 0
    coverage_warnings: int = 0
    conventions: str = SCORING_CONVENTION

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "joint_accuracy": self.joint_accuracy,
            "per_slot": self.per_slot_accuracy,
            "turn_count": self.turn_count,
            "skipped_spans": self.skipped_spans,
            "coverage_warnings": self.coverage_warnings,
            "conventions": self.conventions,
        }


@dataclass
class UnfoundStats:
    """Span-matchability counters for one pair: turns where the gold value
    has no string occurrence anywhere in the context, and how many of those
    the model still predicted correctly."""

    relative_turns: int = 0
    unfound: int = 0
    recovered: int = 0


def _check_alignment(predictions: StateMap, golds: StateMap) -> None:
    missing = sorted(set(golds) - set(predictions))
    extra = sorted(set(predictions) - set(golds))
    if missing or extra:
        raise AlignmentError(
            f"prediction/gold turn sets differ; missing={missing[:10]} extra={extra[:10]}"
        )


def joint_accuracy(predictions: StateMap, golds: StateMap) -> float:
    """Fraction of turns whose full predicted state matches gold exactly."""
    _check_alignment(predictions, golds)
    if not golds:
        return 0.0
    correct = sum(1 for key, gold in golds.items() if predictions[key] == gold)
    return correct / len(golds)


def per_slot_accuracy(predictions: StateMap, golds: StateMap) -> dict[str, float]:
    """Per-pair fraction of turns with a matching value (denominator: all turns)."""
    _check_alignment(predictions, golds)
    if not golds:
        return {}
    labels = sorted({label for state in golds.values() for label in state})
    correct = {label: 0 for label in labels}
    for key, gold in golds.items():
        predicted = predictions[key]
        for label in labels:
            if predicted.get(label) == gold.get(label):
                correct[label] += 1
    return {label: correct[label] / len(golds) for label in labels}


def unfound_stats(
    records: Iterable[ExampleRecord],
    schema: SlotSchema,
    predictions: StateMap | None = None,
) -> dict[str, UnfoundStats]:
    """Per-pair matchability counters over prediction-gated examples.

    The search scans the full flattened context (recency only governs gold
    span selection, not matchability). ``recovered`` needs predictions and
    counts unfound values the model nevertheless got right.
    """
    stats = {pair.label: UnfoundStats() for pair in schema.pairs}
    for record in records:
        if record.annotation.gate != GATE_PREDICTION:
            continue
        label = schema.pair_by_id(record.pair_id).label
        entry = stats[label]
        entry.relative_turns += 1
        if derive_span(record.context, record.annotation.value) is None:
            entry.unfound += 1
            if predictions is not None:
                predicted = predictions[(record.dialogue_id, record.turn)].get(label)
                if predicted == record.annotation.value:
                    entry.recovered += 1
    return stats


def gold_states(dialogues: Iterable[Dialogue], schema: SlotSchema) -> StateMap:
    """Render dense annotations as per-turn state maps (gate labels become values)."""
    states: StateMap = {}
    for dialogue in dialogues:
        for t in range(1, dialogue.num_turns + 1):
            states[(dialogue.id, t)] = {
                pair.label: dialogue.annotations[(t, pair.id)].value
                for pair in schema.pairs
            }
    return states


def states_from_records(records: Iterable[ExampleRecord], schema: SlotSchema) -> StateMap:
    states: StateMap = {}
    for record in records:
        key = (record.dialogue_id, record.turn)
        states.setdefault(key, {})[
            schema.pair_by_id(record.pair_id).label
        ] = record.annotation.value
    return states


def predicted_states(tracker, dialogues: Iterable[Dialogue]) -> StateMap:
    states: StateMap = {}
    for dialogue in dialogues:
        for state in tracker.track_dialogue(dialogue):
            states[(dialogue.id, state.turn)] = state.slots
    return states


def oracle_gate_joint_accuracy(
    dialogues: list[Dialogue], schema: SlotSchema, tracker
) -> float:
    """Joint accuracy with gold gate decisions forced; decode heads unchanged."""
    golds = gold_states(dialogues, schema)
    states: StateMap = {}
    for dialogue in dialogues:
        for state in tracker.track_dialogue(dialogue, oracle_gates=True):
            states[(dialogue.id, state.turn)] = state.slots
    return joint_accuracy(states, golds)


def build_report(
    split: str,
    predictions: StateMap,
    golds: StateMap,
    skipped_spans: int = 0,
    coverage_warnings: int = 0,
) -> MetricsReport:
    return MetricsReport(
        split=split,
        joint_accuracy=joint_accuracy(predictions, golds),
        per_slot_accuracy=per_slot_accuracy(predictions, golds),
        turn_count=len(golds),
        skipped_spans=skipped_spans,
        coverage_warnings=coverage_warnings,
    )


# --------------------------------------------------------------------------
# serialization


def write_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_per_slot_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pair", "accuracy"])
        for label in sorted(report.per_slot_accuracy):
            writer.writerow([label, f"{report.per_slot_accuracy[label]:.6f}"])


def write_unfound_csv(stats: dict[str, UnfoundStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pair", "unfound", "relative_turns", "recovered", "recovery_rate"])
        for label in sorted(stats):
            entry = stats[label]
            rate = entry.recovered / entry.unfound if entry.unfound else 0.0
            writer.writerow(
                [label, entry.unfound, entry.relative_turns, entry.recovered, f"{rate:.6f}"]
            )


def dump_states(states: StateMap, path: str | Path) -> None:
    """Newline-delimited JSON, one per-turn state per line, sorted by key."""
    with open(path, "w", encoding="utf-8") as handle:
        for (dialogue_id, turn) in sorted(states):
            handle.write(
                json.dumps(
                    {
                        "dialogue_id": dialogue_id,
                        "turn": turn,
                        "slots": states[(dialogue_id, turn)],
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
            )
            handle.write("\n")


def load_states(path: str | Path) -> StateMap:
    states: StateMap = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            states[(raw["dialogue_id"], raw["turn"])] = raw["slots"]
    return states
