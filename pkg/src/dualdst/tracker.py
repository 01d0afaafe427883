"""Turn-level inference: gate decisions decoded into span or picklist values."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .corpus import (
    Dialogue,
    ExampleRecord,
    GATE_LABELS,
    GATE_PREDICTION,
    SlotSchema,
    flatten_context,
    normalize_value,
)
from .model import DstModel, ModelExample, build_value_reps, collate, cosine_scores, span_probs
from .textenc import TokenSequence, Vocabulary, build_input, detokenize

DEFAULT_MAX_SPAN_LEN = 10


@dataclass(frozen=True)
class SlotPrediction:
    pair_id: int
    gate_probs: tuple[float, float, float]
    decoded_gate: str
    value: str
    span: tuple[int, int] | None = None  # context-token indices
    picklist_scores: tuple[float, ...] | None = None


@dataclass(frozen=True)
class TrackedState:
    """Cumulative dialog state at one turn: one value per schema pair."""

    turn: int
    slots: dict[str, str]


def _argmax_lowest(values) -> int:
    """Index of the maximum; ties resolve to the lowest index."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def decode_span(
    p_start: Tensor,
    p_end: Tensor,
    token_seq: TokenSequence,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> tuple[int, int, str]:
    """Joint-product argmax over (start <= end, end - start < max_span_len).

    Ties prefer the smallest start, then the smallest end. The returned text
    is the normalized surface string covered by the winning pieces.
    """
    count = len(token_seq)
    if count == 0:
        raise ValueError("cannot decode a span over an empty context")
    start_p = p_start.tolist()
    end_p = p_end.tolist()
    best = (0, 0)
    best_score = -1.0
    for i in range(count):
        for k in range(i, min(i + max_span_len, count)):
            score = start_p[i] * end_p[k]
            if score > best_score:
                best_score = score
                best = (i, k)
    text = normalize_value(detokenize(token_seq, best[0], best[1]))
    return best[0], best[1], text


def decode_picklist(
    r_cls: Tensor, value_reps: Tensor, picklist: tuple[str, ...]
) -> tuple[int, str, tuple[float, ...]]:
    """Highest-cosine candidate; ties prefer the lowest index. Index is 1-based."""
    scores = cosine_scores(r_cls, value_reps).tolist()
    best = _argmax_lowest(scores)
    return best + 1, picklist[best], tuple(scores)


class Tracker:
    """Inference wrapper binding a trained model snapshot to a schema and vocabulary."""

    def __init__(
        self,
        model: DstModel,
        schema: SlotSchema,
        vocab: Vocabulary,
        max_len: int = 512,
        max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    ):
        self.model = model
        self.schema = schema
        self.vocab = vocab
        self.max_len = max_len
        self.max_span_len = max_span_len
        model.eval()
        self.value_reps = build_value_reps(model, schema, vocab)

    def predict_for_context(
        self, context: str, oracle_gates: dict[int, str] | None = None
    ) -> list[SlotPrediction]:
        """Predict every schema pair against one flattened context.

        ``oracle_gates`` substitutes gold gate decisions per pair id while
        leaving span/picklist decoding untouched (the gate-ablation mode).
        """
        examples = [
            ModelExample(
                encoded=build_input(pair, context, self.vocab, self.max_len),
                pair_id=pair.id,
                kind=pair.kind,
                gate_class=0,
            )
            for pair in self.schema.pairs
        ]
        batch = collate(examples, pad_id=self.vocab.pad_id)
        with torch.no_grad():
            hidden = self.model.encode(batch)
            r_cls = hidden[:, 0]
            gate_probs = self.model.gate_probs(r_cls)
            a_start, a_end = self.model.span_logits(hidden, batch.context_mask)

        predictions = []
        for i, pair in enumerate(self.schema.pairs):
            probs = tuple(gate_probs[i].tolist())
            decoded_gate = GATE_LABELS[_argmax_lowest(probs)]
            if oracle_gates is not None:
                decoded_gate = oracle_gates[pair.id]
            if decoded_gate != GATE_PREDICTION:
                predictions.append(
                    SlotPrediction(
                        pair_id=pair.id,
                        gate_probs=probs,
                        decoded_gate=decoded_gate,
                        value=decoded_gate,
                    )
                )
                continue
            if pair.is_categorical:
                index, value, scores = decode_picklist(
                    r_cls[i], self.value_reps[pair.id], pair.picklist
                )
                predictions.append(
                    SlotPrediction(
                        pair_id=pair.id,
                        gate_probs=probs,
                        decoded_gate=decoded_gate,
                        value=value,
                        picklist_scores=scores,
                    )
                )
            else:
                encoded = examples[i].encoded
                lo, hi = encoded.context_token_range
                p_start = span_probs(a_start[i, lo : hi + 1])
                p_end = span_probs(a_end[i, lo : hi + 1])
                start, end, text = decode_span(
                    p_start, p_end, encoded.context_tokens, self.max_span_len
                )
                predictions.append(
                    SlotPrediction(
                        pair_id=pair.id,
                        gate_probs=probs,
                        decoded_gate=decoded_gate,
                        value=text,
                        span=(start, end),
                    )
                )
        return predictions


    def predict_turn(
        self, dialogue: Dialogue, t: int, oracle_gates: dict[int, str] | None = None
    ) -> list[SlotPrediction]:
        context = flatten_context(dialogue, t)
        return self.predict_for_context(context.text, oracle_gates=oracle_gates)

    def track_dialogue(
        self, dialogue: Dialogue, oracle_gates: bool = False
    ) -> list[TrackedState]:
        """Re-predict the full cumulative state at every turn from its context."""
        states = []
        for t in range(1, dialogue.num_turns + 1):
            gates = None
            if oracle_gates:
                gates = {
                    pair.id: dialogue.annotations[(t, pair.id)].gate
                    for pair in self.schema.pairs
                }
            predictions = self.predict_turn(dialogue, t, oracle_gates=gates)
            states.append(self.render_state(t, predictions))
        return states

    def render_state(self, t: int, predictions: list[SlotPrediction]) -> TrackedState:
        return TrackedState(
            turn=t,
            slots={
                self.schema.pair_by_id(p.pair_id).label: p.value for p in predictions
            },
        )


def predict_states_for_records(
    tracker: Tracker, records: list[ExampleRecord], oracle_gates: bool = False
) -> dict[tuple[str, int], dict[str, str]]:
    """Predict full per-turn states from materialized example records.

    Records of one turn share a context, so each (dialogue, turn) group runs
    one forward pass; with ``oracle_gates`` the records' gold gates replace
    the classifier's decisions.
    """
    contexts: dict[tuple[str, int], str] = {}
    gates: dict[tuple[str, int], dict[int, str]] = {}
    for record in records:
        key = (record.dialogue_id, record.turn)
        contexts.setdefault(key, record.context.text)
        gates.setdefault(key, {})[record.pair_id] = record.annotation.gate
    states = {}
    for key in sorted(contexts):
        predictions = tracker.predict_for_context(
            contexts[key], oracle_gates=gates[key] if oracle_gates else None
        )
        states[key] = tracker.render_state(key[1], predictions).slots
    return states
