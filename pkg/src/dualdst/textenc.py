"""Subword tokenization and joint slot/context input assembly with offset tracking."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .corpus import DomainSlotPair, SYSTEM_MARKER, USER_MARKER
from .errors import ConfigurationError, ProjectionError, SchemaError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

DEFAULT_VOCAB_SIZE = 8000

# pre-tokenizer: side markers stay atomic; otherwise word chars vs single punctuation
_WORD_RE = re.compile(r"\[(?:sys|usr)\]|\w+|[^\w\s]")


class Vocabulary:
    """Immutable token->id map; specials are resolved by token string.

    The on-disk format is one token per line with the line number as the id.
    Vocabularies saved by this package put the four specials first, but any
    file that contains them somewhere (e.g. a standard 30k WordPiece
    vocabulary) loads fine.
    """

    def __init__(self, tokens: Iterable[str]):
        self.tokens = tuple(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise SchemaError("vocabulary contains duplicate tokens")
        for special in SPECIAL_TOKENS:
            if special not in self.index:
                raise SchemaError(f"vocabulary is missing special token {special}")
        self.pad_id = self.index[PAD_TOKEN]
        self.unk_id = self.index[UNK_TOKEN]
        self.cls_id = self.index[CLS_TOKEN]
        self.sep_id = self.index[SEP_TOKEN]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def content_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.tokens).encode("utf-8"))
        return digest.hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def build_vocab(
    texts: Iterable[str], size: int = DEFAULT_VOCAB_SIZE
) -> Vocabulary:
    """Train a frequency-ranked whole-word vocabulary over normalized texts.

    Layout: specials, side markers, then every observed character (plus its
    ## continuation form, so any word over seen characters segments without
    UNK), then the most frequent words until ``size`` is reached.
    """
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for text in texts:
        for word in _WORD_RE.findall(text):
            counts[word] += 1
            if word not in (SYSTEM_MARKER, USER_MARKER):
                chars.update(word)
    tokens = list(SPECIAL_TOKENS) + [SYSTEM_MARKER, USER_MARKER]
    for ch in sorted(chars):
        tokens.append(ch)
    for ch in sorted(chars):
        tokens.append(f"##{ch}")
    have = set(tokens)
    for word, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= size:
            break
        if word not in have:
            tokens.append(word)
            have.add(word)
    return Vocabulary(tokens)


@dataclass(frozen=True)
class TokenSequence:
    """Subword pieces of one text with per-piece character offsets."""

    text: str
    ids: tuple[int, ...]
    pieces: tuple[str, ...]
    offsets: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.ids)

    def suffix(self, start: int) -> "TokenSequence":
        return TokenSequence(
            text=self.text,
            ids=self.ids[start:],
            pieces=self.pieces[start:],
            offsets=self.offsets[start:],
        )


def _wordpiece(word: str, vocab: Vocabulary) -> list[str] | None:
    """Greedy longest-match segmentation; None when some position has no piece."""
    pieces = []
    i = 0
    while i < len(word):
        j = len(word)
        piece = None
        while j > i:
            candidate = word[i:j] if i == 0 else f"##{word[i:j]}"
            if candidate in vocab:
                piece = candidate
                break
            j -= 1
        if piece is None:
            return None
        pieces.append(piece)
        i = j
    return pieces


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Segment normalized text into subword pieces with character offsets.

    Words that cannot be segmented become a single UNK piece covering the
    whole word.
    """
    ids: list[int] = []
    pieces: list[str] = []
    offsets: list[tuple[int, int]] = []
    for match in _WORD_RE.finditer(text):
        word = match.group()
        start = match.start()
        segmented = _wordpiece(word, vocab)
        if segmented is None:
            ids.append(vocab.unk_id)
            pieces.append(UNK_TOKEN)
            offsets.append((start, match.end()))
            continue
        cursor = start
        for piece in segmented:
            width = len(piece) - 2 if piece.startswith("##") else len(piece)
            ids.append(vocab.index[piece])
            pieces.append(piece)
            offsets.append((cursor, cursor + width))
            cursor += width
    return TokenSequence(
        text=text, ids=tuple(ids), pieces=tuple(pieces), offsets=tuple(offsets)
    )


def detokenize(seq: TokenSequence, start: int, end: int) -> str:
    """Surface text covered by pieces start..end (inclusive), via offsets."""
    if not 0 <= start <= end < len(seq):
        raise IndexError(f"piece range ({start}, {end}) out of bounds for {len(seq)} pieces")
    return seq.text[seq.offsets[start][0] : seq.offsets[end][1]]


def project_span(char_span: tuple[int, int], seq: TokenSequence) -> tuple[int, int]:
    """Map a character span onto inclusive piece indices by offset overlap."""
    start_char, end_char = char_span
    start_tok = end_tok = None
    for i, (s, e) in enumerate(seq.offsets):
        if start_tok is None and s <= start_char < e:
            start_tok = i
        if s <= end_char - 1 < e:
            end_tok = i
    if start_tok is None or end_tok is None or start_tok > end_tok:
        raise ProjectionError(
            f"character span {char_span} does not align with any piece boundary"
        )
    return start_tok, end_tok


def slot_surface(pair: DomainSlotPair) -> str:
    """Textual form of a domain-slot pair, hyphens expanded to spaces."""
    return f"{pair.domain} {pair.slot}".replace("-", " ")


@dataclass(frozen=True)
class EncodedExample:
    """Model-ready [CLS] slot [SEP] context sequence with span bookkeeping.

    ``context_tokens`` holds the surviving (possibly truncated) context pieces
    with offsets into the original flattened text; ``gold_start``/``gold_end``
    index into ``ids`` and are None when no projectable gold span exists.
    ``unprojectable`` distinguishes a gold span lost to truncation or
    projection failure from a plain absent one.
    """

    ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    context_token_range: tuple[int, int]  # inclusive
    context_tokens: TokenSequence
    gold_start: int | None = None
    gold_end: int | None = None
    unprojectable: bool = False

    def __len__(self) -> int:
        return len(self.ids)


def build_input(
    pair: DomainSlotPair,
    context: str,
    vocab: Vocabulary,
    max_len: int,
    gold_char_span: tuple[int, int] | None = None,
) -> EncodedExample:
    """Assemble [CLS] + slot tokens + [SEP] + context tokens, capped at max_len.

    Truncation drops the oldest context tokens first so the most recent turns
    survive; a gold span that falls into the dropped prefix is flagged
    unprojectable rather than remapped.
    """
    slot_seq = tokenize(slot_surface(pair), vocab)
    prefix_len = len(slot_seq) + 2
    if max_len < prefix_len + 1:
        raise ConfigurationError(
            f"max_len {max_len} leaves no room for context after "
            f"{len(slot_seq)} slot tokens for pair {pair.label!r}"
        )
    context_seq = tokenize(context, vocab)
    budget = max_len - prefix_len
    cut = max(0, len(context_seq) - budget)
    kept = context_seq.suffix(cut)

    ids = (vocab.cls_id,) + slot_seq.ids + (vocab.sep_id,) + kept.ids
    segment_ids = (0,) * prefix_len + (1,) * len(kept)

    gold_start = gold_end = None
    unprojectable = False
    if gold_char_span is not None:
        try:
            s_tok, e_tok = project_span(gold_char_span, context_seq)
        except ProjectionError:
            unprojectable = True
        else:
            if s_tok < cut:
                unprojectable = True
            else:
                gold_start = s_tok - cut + prefix_len
                gold_end = e_tok - cut + prefix_len
    return EncodedExample(
        ids=ids,
        segment_ids=segment_ids,
        context_token_range=(prefix_len, len(ids) - 1),
        context_tokens=kept,
        gold_start=gold_start,
        gold_end=gold_end,
        unprojectable=unprojectable,
    )
