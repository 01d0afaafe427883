from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from dualdst import corpus, textenc
from dualdst.errors import ConfigurationError, ProjectionError, SchemaError

from conftest import make_vocab


# --------------------------------------------------------------------------
# vocabulary


def test_vocab_requires_specials():
    with pytest.raises(SchemaError, match="missing special"):
        textenc.Vocabulary(["a", "b"])


def test_vocab_rejects_duplicates():
    with pytest.raises(SchemaError, match="duplicate"):
        make_vocab("a", "a")


def test_vocab_save_load_roundtrip(tmp_path):
    vocab = make_vocab("cheap", "##s", "hotel")
    vocab.save(tmp_path / "vocab.txt")
    loaded = textenc.Vocabulary.load(tmp_path / "vocab.txt")
    assert loaded.tokens == vocab.tokens
    assert loaded.content_hash() == vocab.content_hash()


def test_vocab_loads_with_specials_anywhere(tmp_path):
    # standard WordPiece files do not put the specials first
    (tmp_path / "v.txt").write_text(
        "the\n[PAD]\nof\n[UNK]\n[CLS]\n[SEP]\n", encoding="utf-8"
    )
    vocab = textenc.Vocabulary.load(tmp_path / "v.txt")
    assert vocab.pad_id == 1 and vocab.cls_id == 4


def test_build_vocab_is_deterministic_and_budgeted():
    texts = ["the cheap hotel", "the cheap room", "a room"]
    a = textenc.build_vocab(texts, size=50)
    b = textenc.build_vocab(texts, size=50)
    assert a.tokens == b.tokens
    assert len(a) <= 50
    assert a.tokens[:4] == textenc.SPECIAL_TOKENS
    assert "the" in a and "cheap" in a


def test_build_vocab_chars_cover_oov_words():
    vocab = textenc.build_vocab(["abc"], size=100)
    seq = textenc.tokenize("cab bac", vocab)
    assert textenc.UNK_TOKEN not in seq.pieces  # char fallback segments anything


# --------------------------------------------------------------------------
# tokenizer


def test_tokenize_empty():
    seq = textenc.tokenize("", make_vocab("a"))
    assert len(seq) == 0


def test_tokenize_single_known_word():
    seq = textenc.tokenize("cheap", make_vocab("cheap"))
    assert seq.pieces == ("cheap",)
    assert seq.offsets == ((0, 5),)


def test_tokenize_greedy_longest_match():
    vocab = make_vocab("guest", "##houses", "##house", "##s")
    seq = textenc.tokenize("guesthouses", vocab)
    # greedy longest-match takes ##houses over ##house + ##s
    assert seq.pieces == ("guest", "##houses")
    assert seq.offsets == ((0, 5), (5, 11))


def test_tokenize_unknown_word_gets_whole_word_offsets():
    vocab = make_vocab("known")
    seq = textenc.tokenize("known unknowable", vocab)
    assert seq.pieces == ("known", textenc.UNK_TOKEN)
    assert seq.offsets[1] == (6, 16)


def test_tokenize_markers_stay_atomic():
    vocab = make_vocab("hi")
    seq = textenc.tokenize("[sys] hi [usr] hi", vocab)
    assert seq.pieces == ("[sys]", "hi", "[usr]", "hi")


def test_tokenize_splits_punctuation():
    vocab = make_vocab("8", "15", ":")
    seq = textenc.tokenize("8:15", vocab)
    assert seq.pieces == ("8", ":", "15")
    assert seq.offsets == ((0, 1), (1, 2), (2, 4))


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.sampled_from(["cheap", "guest", "guesthouses", "8:15", "x!", "zq"]),
        min_size=1,
        max_size=6,
    )
)
def test_tokenize_offsets_monotone_and_within_words(parts):
    text = " ".join(parts)
    vocab = make_vocab("cheap", "guest", "##houses", "8", "15", ":", "!", "x")
    seq = textenc.tokenize(text, vocab)
    previous_end = 0
    for (s, e), piece in zip(seq.offsets, seq.pieces):
        assert s >= previous_end or piece.startswith("##")
        assert s < e
        previous_end = e
        if piece not in (textenc.UNK_TOKEN,):
            surface = piece[2:] if piece.startswith("##") else piece
            assert text[s:e] == surface


# --------------------------------------------------------------------------
# span projection


def test_project_span_single_piece():
    seq = textenc.tokenize("cheap hotel", make_vocab("cheap", "hotel"))
    assert textenc.project_span((0, 5), seq) == (0, 0)


def test_project_span_multi_piece_range():
    vocab = make_vocab("a", "b", "c", "d", "e", "f", "g")
    seq = textenc.tokenize("a b c d e f g", vocab)
    start = seq.offsets[4][0]
    end = seq.offsets[6][1]
    assert textenc.project_span((start, end), seq) == (4, 6)


def test_project_span_time_value_three_pieces():
    vocab = make_vocab("8", "15", ":", "by", "arrive")
    seq = textenc.tokenize("arrive by 8 : 15", vocab)
    span = corpus.derive_span(
        corpus.FlatContext(
            text="arrive by 8 : 15",
            boundaries=(corpus.TurnBoundary(1, "usr", 0, 16),),
        ),
        "8 : 15",
    )
    start_tok, end_tok = textenc.project_span(span, seq)
    assert end_tok - start_tok + 1 == 3
    assert textenc.detokenize(seq, start_tok, end_tok) == "8 : 15"


def test_project_span_error_outside_pieces():
    seq = textenc.tokenize("a b", make_vocab("a", "b"))
    with pytest.raises(ProjectionError):
        textenc.project_span((1, 2), seq)  # the whitespace between pieces


# --------------------------------------------------------------------------
# input assembly


def build_pair(domain="hotel", slot="price range", kind="noncategorical"):
    return corpus.DomainSlotPair(id=1, domain=domain, slot=slot, kind=kind)


def test_build_input_layout():
    vocab = make_vocab("hotel", "price", "range", "i", "want", "something", "cheap")
    ex = textenc.build_input(build_pair(), "i want something cheap", vocab, max_len=64)
    pieces = [vocab.tokens[i] for i in ex.ids]
    assert pieces[:5] == ["[CLS]", "hotel", "price", "range", "[SEP]"]
    assert ex.segment_ids[:5] == (0, 0, 0, 0, 0)
    assert all(s == 1 for s in ex.segment_ids[5:])
    lo, hi = ex.context_token_range
    assert (lo, hi) == (5, len(ex.ids) - 1)


def test_build_input_slot_surface_expands_hyphens():
    pair = corpus.DomainSlotPair(id=1, domain="hotel", slot="price-range", kind="categorical")
    assert textenc.slot_surface(pair) == "hotel price range"


def test_build_input_truncates_oldest_context_first():
    vocab = make_vocab("hotel", "price", "range", *[f"w{i}" for i in range(30)], "cheap")
    context = " ".join(f"w{i}" for i in range(30)) + " cheap"
    gold = (len(context) - 5, len(context))
    full = textenc.tokenize(context, vocab)
    ex = textenc.build_input(build_pair(), context, vocab, max_len=16, gold_char_span=gold)
    assert len(ex) == 16
    # the kept context tokens are a suffix of the full stream
    kept = ex.context_tokens
    assert kept.pieces == full.pieces[len(full) - len(kept) :]
    # the gold span sits in the final turn and survives truncation
    assert ex.gold_start is not None and not ex.unprojectable
    lo, hi = ex.context_token_range
    assert textenc.detokenize(kept, ex.gold_start - lo, ex.gold_end - lo) == "cheap"


def test_build_input_flags_truncated_away_gold():
    vocab = make_vocab("hotel", "price", "range", *[f"w{i}" for i in range(30)], "cheap")
    context = "cheap " + " ".join(f"w{i}" for i in range(30))
    ex = textenc.build_input(
        build_pair(), context, vocab, max_len=16, gold_char_span=(0, 5)
    )
    assert ex.unprojectable
    assert ex.gold_start is None


def test_build_input_rejects_oversized_slot():
    vocab = make_vocab("hotel", "price", "range", "x")
    with pytest.raises(ConfigurationError):
        textenc.build_input(build_pair(), "x", vocab, max_len=5)


def test_round_trip_over_materialized_records(synth_records, synth_schema, synth_vocab):
    """Projectable training spans detokenize back to the normalized gold value."""
    checked = 0
    for record in synth_records:
        ann = record.annotation
        if ann.char_span is None:
            continue
        pair = synth_schema.pair_by_id(record.pair_id)
        ex = textenc.build_input(
            pair, record.context.text, synth_vocab, 96, gold_char_span=ann.char_span
        )
        assert ex.gold_start is not None
        lo, _ = ex.context_token_range
        text = textenc.detokenize(ex.context_tokens, ex.gold_start - lo, ex.gold_end - lo)
        assert corpus.normalize_value(text) == ann.value
        checked += 1
    assert checked > 50
