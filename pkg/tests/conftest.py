from __future__ import annotations

from pathlib import Path

import pytest
import torch

from dualdst import corpus, textenc
from dualdst.model import DstModel, EncoderConfig

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
SYNTH_DIR = DATA_DIR / "synth"


def make_vocab(*words: str) -> textenc.Vocabulary:
    """Tiny vocabulary: specials, side markers, then the given pieces."""
    return textenc.Vocabulary(
        list(textenc.SPECIAL_TOKENS)
        + [corpus.SYSTEM_MARKER, corpus.USER_MARKER]
        + list(words)
    )


@pytest.fixture(scope="session")
def synth_base_schema() -> corpus.SlotSchema:
    return corpus.load_schema(SYNTH_DIR / "schema.json")


@pytest.fixture(scope="session")
def synth_train(synth_base_schema) -> list[corpus.Dialogue]:
    return corpus.load_dialogues(SYNTH_DIR, "train", synth_base_schema)


@pytest.fixture(scope="session")
def synth_schema(synth_base_schema, synth_train) -> corpus.SlotSchema:
    return corpus.build_picklists(synth_train, synth_base_schema)


@pytest.fixture(scope="session")
def synth_records(synth_train, synth_schema) -> list[corpus.ExampleRecord]:
    return corpus.materialize_examples(synth_train, synth_schema)


@pytest.fixture(scope="session")
def synth_vocab(synth_train, synth_schema) -> textenc.Vocabulary:
    texts = [corpus.flatten_context(d, d.num_turns).text for d in synth_train]
    texts += [textenc.slot_surface(p) for p in synth_schema.pairs]
    texts += [v for p in synth_schema.pairs for v in p.picklist]
    return textenc.build_vocab(texts, size=2000)


@pytest.fixture()
def tiny_model(synth_vocab) -> DstModel:
    torch.manual_seed(0)
    model = DstModel(
        EncoderConfig(vocab_size=len(synth_vocab), layers=2, hidden_dim=32,
                      attention_heads=4, feedforward_dim=64, max_len=96, dropout=0.1)
    )
    model.eval()
    return model
