"""Dialogue corpus: loading, normalization, gate/span/picklist label derivation."""

from __future__ import annotations

import dataclasses
import json
import logging
import string
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, SchemaError

logger = logging.getLogger(__name__)

GATE_NONE = "none"
GATE_DONTCARE = "dontcare"
GATE_PREDICTION = "prediction"
# class index order is load-bearing: argmax ties resolve to the lower index
GATE_LABELS = (GATE_NONE, GATE_DONTCARE, GATE_PREDICTION)

CATEGORICAL = "categorical"
NONCATEGORICAL = "noncategorical"

VARIANT_DS_DST = "ds_dst"
VARIANT_DS_SPAN = "ds_span"
VARIANT_DS_PICKLIST = "ds_picklist"
VARIANTS = (VARIANT_DS_DST, VARIANT_DS_SPAN, VARIANT_DS_PICKLIST)

SYSTEM_MARKER = "[sys]"
USER_MARKER = "[usr]"

DEFAULT_DONTCARE_SYNONYMS = frozenset(
    {"dontcare", "dont care", "don't care", "do nt care", "do n't care"}
)

# slot names routed to span extraction under the ds_dst heuristic partition
# (time- and count-valued slots; everything else ranks a picklist)
SPAN_SLOT_NAMES = frozenset(
    {"leave at", "arrive by", "book time", "book people", "book stay"}
)

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class Turn:
    """One (system, user) utterance pair; ``index`` is 1-based."""

    index: int
    system: str
    user: str


@dataclass(frozen=True)
class TurnAnnotation:
    """Gold supervision for one (turn, slot): gate, value, and decode target."""

    gate: str
    value: str
    char_span: tuple[int, int] | None = None
    picklist_index: int | None = None  # 1-based into the slot's picklist


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]
    # dense: one entry for every (turn index, pair id) combination
    annotations: dict[tuple[int, int], TurnAnnotation] = field(default_factory=dict)

    @property
    def num_turns(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class DomainSlotPair:
    id: int  # 1-based position within the schema
    domain: str
    slot: str
    kind: str
    picklist: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return f"{self.domain}-{self.slot}"

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass(frozen=True)
class SlotSchema:
    pairs: tuple[DomainSlotPair, ...]
    variant: str = VARIANT_DS_DST

    def __post_init__(self):
        validate_schema(self)

    @property
    def size(self) -> int:
        return len(self.pairs)

    def pair_by_label(self, label: str) -> DomainSlotPair:
        index = getattr(self, "_label_index", None)
        if index is None:
            index = {p.label: p for p in self.pairs}
            object.__setattr__(self, "_label_index", index)
        return index[label]

    def pair_by_id(self, pair_id: int) -> DomainSlotPair:
        return self.pairs[pair_id - 1]


@dataclass(frozen=True)
class TurnBoundary:
    """Character extent of one utterance side inside a flattened context."""

    turn: int
    side: str  # "sys" | "usr"
    start: int
    end: int


@dataclass(frozen=True)
class FlatContext:
    text: str
    boundaries: tuple[TurnBoundary, ...]


@dataclass(frozen=True)
class ExampleRecord:
    """One materialized training/eval example for a (turn, slot) combination."""

    dialogue_id: str
    turn: int
    pair_id: int
    annotation: TurnAnnotation
    context: FlatContext


# --------------------------------------------------------------------------
# normalization


def normalize_text(text: str) -> str:
    """Lowercase and collapse runs of whitespace."""
    return " ".join(text.lower().split())


_STRIP_CHARS = string.punctuation + string.whitespace


def normalize_value(value: str, value_map: Mapping[str, str] | None = None) -> str:
    """Normalize a slot value: lowercase, collapse whitespace, strip edge punctuation.

    ``value_map`` is a pluggable synonym/label-fix map applied after
    normalization (identity when omitted).
    """
    v = normalize_text(value).strip(_STRIP_CHARS)
    if value_map:
        v = value_map.get(v, v)
    return v


def derive_gate(raw_value: str, dontcare_synonyms: frozenset[str] = DEFAULT_DONTCARE_SYNONYMS) -> str:
    """Map a normalized raw value onto the 3-way gate label."""
    if raw_value in ("", GATE_NONE):
        return GATE_NONE
    if raw_value in dontcare_synonyms:
        return GATE_DONTCARE
    return GATE_PREDICTION


# --------------------------------------------------------------------------
# schema


def validate_schema(schema: SlotSchema) -> None:
    if schema.variant not in VARIANTS:
        raise SchemaError(f"unknown schema variant {schema.variant!r}")
    seen: set[str] = set()
    for position, pair in enumerate(schema.pairs, start=1):
        if pair.id != position:
            raise SchemaError(
                f"pair {pair.label!r} has id {pair.id}, expected {position}"
            )
        if pair.label in seen:
            raise SchemaError(f"duplicate domain-slot pair {pair.label!r}")
        seen.add(pair.label)
        if pair.kind not in (CATEGORICAL, NONCATEGORICAL):
            raise SchemaError(f"pair {pair.label!r} has unknown kind {pair.kind!r}")
        if pair.kind == NONCATEGORICAL and pair.picklist:
            raise SchemaError(f"non-categorical pair {pair.label!r} carries a picklist")
        if schema.variant == VARIANT_DS_SPAN and pair.kind != NONCATEGORICAL:
            raise SchemaError(f"{VARIANT_DS_SPAN} schema contains categorical pair {pair.label!r}")
        if schema.variant == VARIANT_DS_PICKLIST and pair.kind != CATEGORICAL:
            raise SchemaError(
                f"{VARIANT_DS_PICKLIST} schema contains non-categorical pair {pair.label!r}"
            )


def heuristic_kind(slot: str) -> str:
    """ds_dst partition rule: time/count slots are span-extracted."""
    return NONCATEGORICAL if slot in SPAN_SLOT_NAMES else CATEGORICAL


def apply_variant(schema: SlotSchema, variant: str) -> SlotSchema:
    """Re-type every pair according to the requested model variant.

    ds_dst keeps the declared kinds, ds_span forces every pair to span
    extraction (dropping picklists), ds_picklist forces every pair to
    picklist ranking (picklists must then be (re)built from training data).
    """
    if variant not in VARIANTS:
        raise SchemaError(f"unknown schema variant {variant!r}")
    if variant == VARIANT_DS_DST:
        return dataclasses.replace(schema, variant=variant)
    if variant == VARIANT_DS_SPAN:
        pairs = tuple(
            dataclasses.replace(p, kind=NONCATEGORICAL, picklist=()) for p in schema.pairs
        )
        return SlotSchema(pairs=pairs, variant=variant)
    pairs = tuple(dataclasses.replace(p, kind=CATEGORICAL) for p in schema.pairs)
    return SlotSchema(pairs=pairs, variant=variant)


# MultiWOZ 2.0/2.1 configuration: 5 domains, 30 domain-slot pairs.
MULTIWOZ_PAIRS: tuple[tuple[str, str], ...] = (
    ("hotel", "price range"),
    ("hotel", "type"),
    ("hotel", "parking"),
    ("hotel", "book stay"),
    ("hotel", "book day"),
    ("hotel", "book people"),
    ("hotel", "area"),
    ("hotel", "stars"),
    ("hotel", "internet"),
    ("hotel", "name"),
    ("train", "destination"),
    ("train", "day"),
    ("train", "departure"),
    ("train", "arrive by"),
    ("train", "book people"),
    ("train", "leave at"),
    ("restaurant", "food"),
    ("restaurant", "price range"),
    ("restaurant", "area"),
    ("restaurant", "name"),
    ("restaurant", "book time"),
    ("restaurant", "book day"),
    ("restaurant", "book people"),
    ("attraction", "area"),
    ("attraction", "name"),
    ("attraction", "type"),
    ("taxi", "leave at"),
    ("taxi", "destination"),
    ("taxi", "departure"),
    ("taxi", "arrive by"),
)


def multiwoz_schema(variant: str = VARIANT_DS_DST) -> SlotSchema:
    """The 30-pair MultiWOZ schema with the heuristic kind partition."""
    pairs = tuple(
        DomainSlotPair(id=i, domain=d, slot=s, kind=heuristic_kind(s))
        for i, (d, s) in enumerate(MULTIWOZ_PAIRS, start=1)
    )
    return apply_variant(SlotSchema(pairs=pairs), variant)


def load_schema(path: str | Path) -> SlotSchema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"schema file {path}: {exc}") from exc
    if not isinstance(raw, dict) or "pairs" not in raw:
        raise ParseError(f"schema file {path}: missing field 'pairs'")
    pairs = []
    for i, entry in enumerate(raw["pairs"], start=1):
        for key in ("domain", "slot", "kind"):
            if key not in entry:
                raise ParseError(f"schema file {path}: pair {i} missing field {key!r}")
        pairs.append(
            DomainSlotPair(
                id=i,
                domain=entry["domain"],
                slot=entry["slot"],
                kind=entry["kind"],
                picklist=tuple(entry.get("picklist") or ()),
            )
        )
    return SlotSchema(pairs=tuple(pairs), variant=raw.get("variant", VARIANT_DS_DST))


def save_schema(schema: SlotSchema, path: str | Path) -> None:
    payload = {
        "variant": schema.variant,
        "pairs": [
            {
                "domain": p.domain,
                "slot": p.slot,
                "kind": p.kind,
                **({"picklist": list(p.picklist)} if p.is_categorical else {}),
            }
            for p in schema.pairs
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


# --------------------------------------------------------------------------
# loading


def load_dialogues(
    data_dir: str | Path,
    split: str,
    schema: SlotSchema,
    value_map: Mapping[str, str] | None = None,
) -> list[Dialogue]:
    """Load one split's dialogue file and densify annotations over the schema.

    Every (turn, pair) combination gets exactly one annotation; combinations
    absent from the raw cumulative state default to gate=none.
    """
    if split not in SPLITS:
        raise ParseError(f"unknown split {split!r}; expected one of {SPLITS}")
    path = Path(data_dir) / f"{split}.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"dialogue file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"dialogue file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"dialogue file {path}: top level must be a list of dialogues")
    return [
        _parse_dialogue(entry, i, schema, value_map) for i, entry in enumerate(raw)
    ]


def _parse_dialogue(
    entry: dict,
    position: int,
    schema: SlotSchema,
    value_map: Mapping[str, str] | None,
) -> Dialogue:
    if not isinstance(entry, dict) or "id" not in entry:
        raise ParseError(f"dialogue at index {position}: missing field 'id'")
    did = entry["id"]
    if "turns" not in entry or not entry["turns"]:
        raise ParseError(f"dialogue {did!r}: missing or empty field 'turns'")

    turns = []
    for t, turn_entry in enumerate(entry["turns"], start=1):
        for key in ("system", "user"):
            if key not in turn_entry:
                raise ParseError(f"dialogue {did!r}: turn {t} missing field {key!r}")
        system = normalize_text(turn_entry["system"])
        user = normalize_text(turn_entry["user"])
        if not user:
            raise ParseError(f"dialogue {did!r}: turn {t} has an empty user utterance")
        if not system and t > 1:
            raise ParseError(
                f"dialogue {did!r}: turn {t} has an empty system utterance "
                "(only turn 1 may omit the system side)"
            )
        turns.append(Turn(index=t, system=system, user=user))

    states: dict[int, dict[str, str]] = {}
    for state_entry in entry.get("states", ()):
        if "turn" not in state_entry or "slots" not in state_entry:
            raise ParseError(f"dialogue {did!r}: state entry missing 'turn' or 'slots'")
        t = state_entry["turn"]
        if not isinstance(t, int) or not 1 <= t <= len(turns):
            raise ParseError(f"dialogue {did!r}: state turn {t!r} out of range")
        states[t] = state_entry["slots"]

    annotations: dict[tuple[int, int], TurnAnnotation] = {}
    for t in range(1, len(turns) + 1):
        slots = states.get(t, {})
        for label in slots:
            try:
                schema.pair_by_label(label)
            except KeyError:
                raise SchemaError(
                    f"dialogue {did!r}: turn {t} annotates unknown domain-slot {label!r}"
                ) from None
        for pair in schema.pairs:
            value = normalize_value(str(slots.get(pair.label, "")), value_map)
            gate = derive_gate(value)
            if gate != GATE_PREDICTION:
                value = gate  # canonical "none"/"dontcare" rendering
            annotations[(t, pair.id)] = TurnAnnotation(gate=gate, value=value)
    return Dialogue(id=did, turns=turns, annotations=annotations)


def save_dialogues_json(dialogues: Iterable[dict], path: str | Path) -> None:
    """Write raw dialogue dicts in the on-disk JSON format."""
    Path(path).write_text(
        json.dumps(list(dialogues), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


# --------------------------------------------------------------------------
# context flattening and span derivation


def flatten_context(dialogue: Dialogue, t: int) -> FlatContext:
    """Concatenate turns 1..t into one string with per-side marker tokens.

    Each side is introduced by its marker ([sys]/[usr]); boundary records
    cover the utterance characters only, in chronological order with the most
    recent turn last.
    """
    if not 1 <= t <= dialogue.num_turns:
        raise IndexError(
            f"turn {t} out of range for dialogue {dialogue.id!r} with {dialogue.num_turns} turns"
        )
    parts: list[str] = []
    boundaries: list[TurnBoundary] = []
    length = 0

    def _append(piece: str) -> None:
        nonlocal length
        if parts:
            parts.append(" ")
            length += 1
        parts.append(piece)
        length += len(piece)

    for turn in dialogue.turns[:t]:
        for marker, side, utterance in (
            (SYSTEM_MARKER, "sys", turn.system),
            (USER_MARKER, "usr", turn.user),
        ):
            _append(marker)
            if utterance:
                _append(utterance)
                boundaries.append(
                    TurnBoundary(turn.index, side, length - len(utterance), length)
                )
            else:
                boundaries.append(TurnBoundary(turn.index, side, length, length))
    return FlatContext(text="".join(parts), boundaries=tuple(boundaries))


def _aligned_occurrences(text: str, value: str, lo: int, hi: int) -> list[int]:
    """Start offsets of word-boundary-aligned occurrences of value in text[lo:hi]."""
    if not value:
        return []
    found = []
    start = lo
    while True:
        i = text.find(value, start, hi)
        if i < 0:
            return found
        left_ok = not (value[0].isalnum() and i > 0 and text[i - 1].isalnum())
        j = i + len(value)
        right_ok = not (value[-1].isalnum() and j < len(text) and text[j].isalnum())
        if left_ok and right_ok:
            found.append(i)
        start = i + 1


def derive_span(context: FlatContext, value: str) -> tuple[int, int] | None:
    """Character span of the value's most recent occurrence, or None.

    Recency is turn-level; within the chosen turn the user side wins over the
    system side, and within a side the first occurrence wins. Absence is a
    value, not an error.
    """
    value = normalize_value(value)
    if not value:
        return None
    by_turn: dict[int, dict[str, TurnBoundary]] = {}
    for b in context.boundaries:
        by_turn.setdefault(b.turn, {})[b.side] = b
    for turn in sorted(by_turn, reverse=True):
        for side in ("usr", "sys"):
            bound = by_turn[turn].get(side)
            if bound is None:
                continue
            hits = _aligned_occurrences(context.text, value, bound.start, bound.end)
            if hits:
                return hits[0], hits[0] + len(value)
    return None


# --------------------------------------------------------------------------
# picklists and materialization


def build_picklists(train_dialogues: Iterable[Dialogue], schema: SlotSchema) -> SlotSchema:
    """Collect each categorical slot's candidate values from training labels.

    Picklists are the deduplicated, lexicographically sorted prediction-gated
    values observed for the slot; none/dontcare are handled by the gate and
    never enter a picklist.
    """
    observed: dict[int, set[str]] = {p.id: set() for p in schema.pairs if p.is_categorical}
    for dialogue in train_dialogues:
        for (t, pair_id), ann in dialogue.annotations.items():
            if pair_id in observed and ann.gate == GATE_PREDICTION:
                observed[pair_id].add(ann.value)
    pairs = []
    for pair in schema.pairs:
        if not pair.is_categorical:
            pairs.append(pair)
            continue
        values = observed[pair.id]
        if not values:
            raise SchemaError(
                f"categorical pair {pair.label!r} has no observed training values"
            )
        pairs.append(dataclasses.replace(pair, picklist=tuple(sorted(values))))
    return dataclasses.replace(schema, pairs=tuple(pairs))


def materialize_examples(
    dialogues: Iterable[Dialogue], schema: SlotSchema
) -> list[ExampleRecord]:
    """Emit one example per (dialogue, turn, pair), in deterministic order.

    Prediction-gated examples get their decode target attached here: a
    character span for non-categorical pairs (None when the value never
    occurs in the context) or a 1-based picklist index for categorical pairs.
    A categorical value missing from its picklist is logged and downgraded to
    gate-only supervision.
    """
    records: list[ExampleRecord] = []
    for dialogue in dialogues:
        for t in range(1, dialogue.num_turns + 1):
            context = flatten_context(dialogue, t)
            for pair in schema.pairs:
                ann = dialogue.annotations[(t, pair.id)]
                if ann.gate == GATE_PREDICTION:
                    if pair.is_categorical:
                        try:
                            index = pair.picklist.index(ann.value) + 1
                        except ValueError:
                            index = None
                            logger.warning(
                                "label coverage: value %r for %s not in picklist "
                                "(dialogue %s turn %d); gate supervision only",
                                ann.value, pair.label, dialogue.id, t,
                            )
                        ann = dataclasses.replace(ann, picklist_index=index)
                    else:
                        ann = dataclasses.replace(
                            ann, char_span=derive_span(context, ann.value)
                        )
                records.append(
                    ExampleRecord(
                        dialogue_id=dialogue.id,
                        turn=t,
                        pair_id=pair.id,
                        annotation=ann,
                        context=context,
                    )
                )
    return records


def coverage_warning_count(records: Iterable[ExampleRecord], schema: SlotSchema) -> int:
    """Number of categorical prediction examples downgraded to gate-only."""
    return sum(
        1
        for r in records
        if schema.pair_by_id(r.pair_id).is_categorical
        and r.annotation.gate == GATE_PREDICTION
        and r.annotation.picklist_index is None
    )


# --------------------------------------------------------------------------
# example record serialization (newline-delimited JSON)


def record_to_dict(record: ExampleRecord, schema: SlotSchema) -> dict:
    ann = record.annotation
    return {
        "dialogue_id": record.dialogue_id,
        "turn": record.turn,
        "pair_id": record.pair_id,
        "pair": schema.pair_by_id(record.pair_id).label,
        "gate": ann.gate,
        "value": ann.value,
        "char_span": list(ann.char_span) if ann.char_span else None,
        "picklist_index": ann.picklist_index,
        "context": record.context.text,
        "boundaries": [
            [b.turn, b.side, b.start, b.end] for b in record.context.boundaries
        ],
    }


def record_from_dict(raw: dict) -> ExampleRecord:
    span = raw.get("char_span")
    return ExampleRecord(
        dialogue_id=raw["dialogue_id"],
        turn=raw["turn"],
        pair_id=raw["pair_id"],
        annotation=TurnAnnotation(
            gate=raw["gate"],
            value=raw["value"],
            char_span=tuple(span) if span else None,
            picklist_index=raw.get("picklist_index"),
        ),
        context=FlatContext(
            text=raw["context"],
            boundaries=tuple(TurnBoundary(*b) for b in raw["boundaries"]),
        ),
    )


def write_examples(records: Iterable[ExampleRecord], schema: SlotSchema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(record_to_dict(record, schema), sort_keys=True, ensure_ascii=False)
            )
            handle.write("\n")


def read_examples(path: str | Path) -> list[ExampleRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(record_from_dict(json.loads(line)))
    return records
