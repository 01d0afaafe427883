from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from dualdst import corpus
from dualdst.errors import ParseError, SchemaError

from conftest import SYNTH_DIR


def write_dialogues(tmp_path, dialogues, split="train"):
    (tmp_path / f"{split}.json").write_text(json.dumps(dialogues), encoding="utf-8")
    return tmp_path


def two_turn_fixture():
    return {
        "id": "fix-0",
        "turns": [
            {"system": "hi", "user": "book a hotel"},
            {"system": "which area ?", "user": "the north"},
        ],
        "states": [
            {"turn": 1, "slots": {}},
            {"turn": 2, "slots": {"hotel-area": "north"}},
        ],
    }


# --------------------------------------------------------------------------
# normalization and gates


def test_normalize_text_lowercases_and_collapses():
    assert corpus.normalize_text("  The   North\tSide ") == "the north side"


def test_normalize_value_strips_edge_punctuation():
    assert corpus.normalize_value(" Cheap, ") == "cheap"
    assert corpus.normalize_value("8:15") == "8:15"


def test_normalize_value_applies_synonym_map():
    assert corpus.normalize_value("centre", {"centre": "center"}) == "center"


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("none", "none"),
        ("", "none"),
        ("dontcare", "dontcare"),
        ("dont care", "dontcare"),
        ("cheap", "prediction"),
    ],
)
def test_derive_gate(raw, expected):
    assert corpus.derive_gate(raw) == expected


# --------------------------------------------------------------------------
# schema


def test_multiwoz_schema_counts():
    schema = corpus.multiwoz_schema()
    assert schema.size == 30
    noncat = [p for p in schema.pairs if not p.is_categorical]
    assert len(noncat) == 9


def test_apply_variant_partitions():
    base = corpus.multiwoz_schema()
    span = corpus.apply_variant(base, "ds_span")
    assert all(not p.is_categorical for p in span.pairs)
    assert all(not p.picklist for p in span.pairs)
    pick = corpus.apply_variant(base, "ds_picklist")
    assert all(p.is_categorical for p in pick.pairs)


def test_bundled_multiwoz_schema_matches_heuristic():
    bundled = corpus.load_schema(SYNTH_DIR.parent / "multiwoz" / "schema.json")
    assert bundled.pairs == corpus.multiwoz_schema().pairs


def test_schema_rejects_duplicates():
    pair = corpus.DomainSlotPair(id=1, domain="hotel", slot="area", kind="categorical")
    dup = corpus.DomainSlotPair(id=2, domain="hotel", slot="area", kind="categorical")
    with pytest.raises(SchemaError):
        corpus.SlotSchema(pairs=(pair, dup))


def test_schema_variant_kind_consistency():
    pair = corpus.DomainSlotPair(id=1, domain="hotel", slot="area", kind="categorical")
    with pytest.raises(SchemaError):
        corpus.SlotSchema(pairs=(pair,), variant="ds_span")


# --------------------------------------------------------------------------
# loading


def test_load_empty_file_gives_empty_list(tmp_path):
    write_dialogues(tmp_path, [])
    assert corpus.load_dialogues(tmp_path, "train", corpus.multiwoz_schema()) == []


def test_load_two_turn_fixture_densifies_annotations(tmp_path):
    schema = corpus.multiwoz_schema()
    write_dialogues(tmp_path, [two_turn_fixture()])
    (dialogue,) = corpus.load_dialogues(tmp_path, "train", schema)
    assert dialogue.num_turns == 2
    assert len(dialogue.annotations) == 2 * schema.size
    ann = dialogue.annotations[(2, schema.pair_by_label("hotel-area").id)]
    assert ann.gate == "prediction" and ann.value == "north"
    # everything else defaults to none
    assert dialogue.annotations[(1, 1)].gate == "none"


def test_load_missing_id_names_position(tmp_path):
    write_dialogues(tmp_path, [{"turns": [{"system": "", "user": "hi"}]}])
    with pytest.raises(ParseError, match="index 0"):
        corpus.load_dialogues(tmp_path, "train", corpus.multiwoz_schema())


def test_load_unknown_slot_is_schema_error(tmp_path):
    bad = two_turn_fixture()
    bad["states"][1]["slots"]["hotel-swimming"] = "yes"
    write_dialogues(tmp_path, [bad])
    with pytest.raises(SchemaError, match="hotel-swimming"):
        corpus.load_dialogues(tmp_path, "train", corpus.multiwoz_schema())


def test_load_empty_system_only_allowed_at_turn_one(tmp_path):
    good = {
        "id": "a",
        "turns": [{"system": "", "user": "hi"}],
        "states": [],
    }
    write_dialogues(tmp_path, [good])
    assert len(corpus.load_dialogues(tmp_path, "train", corpus.multiwoz_schema())) == 1
    bad = {
        "id": "b",
        "turns": [{"system": "", "user": "hi"}, {"system": "", "user": "more"}],
        "states": [],
    }
    write_dialogues(tmp_path, [bad])
    with pytest.raises(ParseError, match="turn 2"):
        corpus.load_dialogues(tmp_path, "train", corpus.multiwoz_schema())


# --------------------------------------------------------------------------
# context flattening


def dialogue_from(turns):
    return corpus.Dialogue(
        id="d",
        turns=[
            corpus.Turn(index=i, system=s, user=u) for i, (s, u) in enumerate(turns, 1)
        ],
    )


def test_flatten_single_turn_empty_system():
    d = dialogue_from([("", "book a hotel")])
    flat = corpus.flatten_context(d, 1)
    assert flat.text == "[sys] [usr] book a hotel"
    sys_b, usr_b = flat.boundaries
    assert (sys_b.start, sys_b.end) == (5, 5)
    assert flat.text[usr_b.start : usr_b.end] == "book a hotel"


def test_flatten_two_turn_order_and_coverage():
    d = dialogue_from([("hi", "book a hotel"), ("which area ?", "the north")])
    flat = corpus.flatten_context(d, 2)
    sides = [(b.turn, b.side) for b in flat.boundaries]
    assert sides == [(1, "sys"), (1, "usr"), (2, "sys"), (2, "usr")]
    for boundary, expected in zip(
        flat.boundaries, ["hi", "book a hotel", "which area ?", "the north"]
    ):
        assert flat.text[boundary.start : boundary.end] == expected


def test_flatten_prefix_property():
    d = dialogue_from([("hi", "one"), ("two ?", "three"), ("four ?", "five")])
    assert corpus.flatten_context(d, 1).text == "[sys] hi [usr] one"


def test_flatten_turn_out_of_range():
    d = dialogue_from([("", "hi")])
    with pytest.raises(IndexError):
        corpus.flatten_context(d, 2)
    with pytest.raises(IndexError):
        corpus.flatten_context(d, 0)


# --------------------------------------------------------------------------
# span derivation, against a brute-force oracle


def oracle_spans(flat: corpus.FlatContext, value: str) -> list[tuple[int, int, int, str]]:
    """All word-aligned occurrences as (turn, side_rank, start, side) via naive scan."""
    hits = []
    for b in flat.boundaries:
        for start in range(b.start, b.end):
            if not flat.text.startswith(value, start) or start + len(value) > b.end:
                continue
            left = flat.text[start - 1] if start > 0 else " "
            right_i = start + len(value)
            right = flat.text[right_i] if right_i < len(flat.text) else " "
            if value[0].isalnum() and left.isalnum():
                continue
            if value[-1].isalnum() and right.isalnum():
                continue
            hits.append((b.turn, 0 if b.side == "usr" else 1, start, b.side))
    return hits


def oracle_best(flat, value):
    hits = oracle_spans(flat, value)
    if not hits:
        return None
    turn = max(h[0] for h in hits)
    candidates = sorted(h for h in hits if h[0] == turn)
    start = candidates[0][2]
    return start, start + len(value)


def test_derive_span_finds_recent_value():
    d = dialogue_from([("", "i need it for 3 nights")])
    flat = corpus.flatten_context(d, 1)
    span = corpus.derive_span(flat, "3")
    assert span is not None
    assert flat.text[span[0] : span[1]] == "3"
    assert span == oracle_best(flat, "3")


def test_derive_span_absent_value():
    d = dialogue_from([("", "the hotel has free wifi")])
    flat = corpus.flatten_context(d, 1)
    assert corpus.derive_span(flat, "yes") is None


def test_derive_span_whole_utterance():
    d = dialogue_from([("ok", "kings hedges learner pool")])
    flat = corpus.flatten_context(d, 1)
    span = corpus.derive_span(flat, "kings hedges learner pool")
    assert flat.text[span[0] : span[1]] == "kings hedges learner pool"


def test_derive_span_prefers_recent_turn_then_user_side():
    d = dialogue_from([("", "go north"), ("north it is , north ?", "fine , north")])
    flat = corpus.flatten_context(d, 2)
    span = corpus.derive_span(flat, "north")
    usr2 = [b for b in flat.boundaries if b.turn == 2 and b.side == "usr"][0]
    assert usr2.start <= span[0] < usr2.end


def test_derive_span_system_side_when_user_lacks_value():
    d = dialogue_from([("", "a pool please"), ("jesus green outdoor pool ?", "yes that one")])
    flat = corpus.flatten_context(d, 2)
    span = corpus.derive_span(flat, "jesus green outdoor pool")
    sys2 = [b for b in flat.boundaries if b.turn == 2 and b.side == "sys"][0]
    assert sys2.start <= span[0] < sys2.end


def test_derive_span_respects_word_boundaries():
    d = dialogue_from([("", "table 34 for 3")])
    flat = corpus.flatten_context(d, 1)
    span = corpus.derive_span(flat, "3")
    assert flat.text[span[0] - 1] == " "
    assert flat.text[span[0] : span[1]] == "3"


words = st.sampled_from(
    ["north", "cheap", "3", "pool", "guest", "house", "wifi", "free", "18:15", "a"]
)


@settings(max_examples=200, deadline=None)
@given(
    turns=st.lists(
        st.tuples(st.lists(words, max_size=4), st.lists(words, min_size=1, max_size=4)),
        min_size=1,
        max_size=4,
    ),
    value=st.lists(words, min_size=1, max_size=2),
)
def test_derive_span_matches_oracle(turns, value):
    d = dialogue_from(
        [
            (" ".join(sys) if i > 0 else "", " ".join(usr))
            for i, (sys, usr) in enumerate(turns)
        ]
    )
    flat = corpus.flatten_context(d, d.num_turns)
    value_text = " ".join(value)
    span = corpus.derive_span(flat, value_text)
    assert span == oracle_best(flat, value_text)
    if span is not None:
        # span soundness: the covered substring equals the normalized value
        assert flat.text[span[0] : span[1]] == corpus.normalize_value(value_text)


# --------------------------------------------------------------------------
# picklists and materialization


def annotated_dialogue(schema, values_by_turn):
    """Build a Dialogue whose annotations follow the given per-turn value maps."""
    turns = [("" if t == 0 else "ok .", "turn text") for t in range(len(values_by_turn))]
    d = dialogue_from(turns)
    for t in range(1, len(values_by_turn) + 1):
        for pair in schema.pairs:
            value = corpus.normalize_value(values_by_turn[t - 1].get(pair.label, ""))
            gate = corpus.derive_gate(value)
            d.annotations[(t, pair.id)] = corpus.TurnAnnotation(
                gate=gate, value=value if gate == "prediction" else gate
            )
    return d


def small_schema():
    return corpus.SlotSchema(
        pairs=(
            corpus.DomainSlotPair(id=1, domain="hotel", slot="area", kind="categorical"),
            corpus.DomainSlotPair(id=2, domain="hotel", slot="name", kind="noncategorical"),
        )
    )


def test_build_picklists_dedup_and_sort():
    schema = small_schema()
    dialogues = [
        annotated_dialogue(schema, [{"hotel-area": v}]) for v in ["a", "b", "a", "c"]
    ]
    built = corpus.build_picklists(dialogues, schema)
    assert built.pairs[0].picklist == ("a", "b", "c")


def test_build_picklists_singleton():
    schema = small_schema()
    built = corpus.build_picklists([annotated_dialogue(schema, [{"hotel-area": "x"}])], schema)
    assert built.pairs[0].picklist == ("x",)


def test_build_picklists_empty_slot_fails():
    schema = small_schema()
    with pytest.raises(SchemaError, match="hotel-area"):
        corpus.build_picklists([annotated_dialogue(schema, [{}])], schema)


def test_build_picklists_excludes_none_and_dontcare():
    schema = small_schema()
    dialogues = [
        annotated_dialogue(schema, [{"hotel-area": "dontcare"}]),
        annotated_dialogue(schema, [{"hotel-area": "east"}]),
    ]
    built = corpus.build_picklists(dialogues, schema)
    assert built.pairs[0].picklist == ("east",)


def test_synth_picklists(synth_schema):
    prices = synth_schema.pair_by_label("hotel-price range").picklist
    assert set(prices) == {"cheap", "expensive", "moderate"}
    assert list(prices) == sorted(prices)


def test_materialize_counts(tmp_path):
    schema = corpus.multiwoz_schema()
    write_dialogues(tmp_path, [two_turn_fixture()])
    dialogues = corpus.load_dialogues(tmp_path, "train", schema)
    records = corpus.materialize_examples(dialogues, schema)
    assert len(records) == 2 * 30


def test_materialize_none_examples_have_no_targets(synth_records, synth_schema):
    for record in synth_records:
        if record.annotation.gate != "prediction":
            assert record.annotation.char_span is None
            assert record.annotation.picklist_index is None


def test_materialize_picklist_closure(synth_records, synth_schema):
    for record in synth_records:
        ann = record.annotation
        pair = synth_schema.pair_by_id(record.pair_id)
        if pair.is_categorical and ann.gate == "prediction" and ann.picklist_index:
            assert pair.picklist[ann.picklist_index - 1] == ann.value


def test_materialize_span_fixture(tmp_path):
    schema = small_schema()
    raw = {
        "id": "z",
        "turns": [{"system": "", "user": "book the alpha lodge"}],
        "states": [{"turn": 1, "slots": {"hotel-name": "alpha lodge"}}],
    }
    write_dialogues(tmp_path, [raw])
    dialogues = corpus.load_dialogues(tmp_path, "train", schema)
    dialogues[0].annotations[(1, 1)] = corpus.TurnAnnotation(gate="none", value="none")
    records = corpus.materialize_examples(dialogues, schema)
    with_span = [r for r in records if r.annotation.char_span]
    assert len(with_span) == 1
    s, e = with_span[0].annotation.char_span
    assert with_span[0].context.text[s:e] == "alpha lodge"


def test_materialize_coverage_warning(tmp_path, caplog):
    schema = small_schema()
    train = annotated_dialogue(schema, [{"hotel-area": "north"}])
    schema = corpus.build_picklists([train], schema)
    stray = annotated_dialogue(schema, [{"hotel-area": "moon"}])
    with caplog.at_level("WARNING"):
        records = corpus.materialize_examples([stray], schema)
    assert any("coverage" in message for message in caplog.messages)
    assert corpus.coverage_warning_count(records, schema) == 1
    bad = [r for r in records if r.pair_id == 1][0]
    assert bad.annotation.gate == "prediction"
    assert bad.annotation.picklist_index is None


def test_example_stream_determinism(synth_records, synth_schema, tmp_path):
    corpus.write_examples(synth_records, synth_schema, tmp_path / "a.jsonl")
    corpus.write_examples(synth_records, synth_schema, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    loaded = corpus.read_examples(tmp_path / "a.jsonl")
    assert loaded == synth_records


def test_bundled_corpus_is_regenerable(tmp_path):
    from dualdst import synth

    synth.write_corpus(tmp_path)
    for name in ("train.json", "validation.json", "test.json", "schema.json"):
        assert (tmp_path / name).read_bytes() == (SYNTH_DIR / name).read_bytes()
