"""Dual-strategy network: shared encoder, gate/span/picklist heads, joint loss."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .corpus import CATEGORICAL, GATE_LABELS, GATE_PREDICTION
from .errors import CompatibilityError, ConfigurationError, DecodeError
from .textenc import EncodedExample, Vocabulary, tokenize

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12  # clamp inside cross-entropies
CHECKPOINT_VERSION = 1
GATE_CLASS = {label: i for i, label in enumerate(GATE_LABELS)}


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    layers: int = 2
    hidden_dim: int = 64
    attention_heads: int = 4
    feedforward_dim: int = 128
    max_len: int = 512
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden_dim % self.attention_heads != 0:
            raise ConfigurationError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"{self.attention_heads} attention heads"
            )

    @classmethod
    def desk(cls, vocab_size: int, max_len: int = 512) -> "EncoderConfig":
        """Small configuration trainable from scratch in minutes on one core."""
        return cls(vocab_size=vocab_size, max_len=max_len)


def _init_weights(module: nn.Module) -> None:
    # truncated normal (cut at 2 sigma) for matrices, zeros for biases; sigma is
    # dimension-scaled (Xavier) rather than a fixed 0.02, which is calibrated
    # for ~768-dim encoders and collapses representations at desk widths
    if isinstance(module, nn.Linear):
        fan_out, fan_in = module.weight.shape
        std = math.sqrt(2.0 / (fan_in + fan_out))
        nn.init.trunc_normal_(module.weight, std=std, a=-2 * std, b=2 * std)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        std = module.weight.shape[1] ** -0.5
        nn.init.trunc_normal_(module.weight, std=std, a=-2 * std, b=2 * std)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.output = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, hidden: Tensor, attention_mask: Tensor) -> Tensor:
        batch, length, dim = hidden.shape

        def split(x: Tensor) -> Tensor:
            return x.view(batch, length, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.query(hidden)), split(self.key(hidden)), split(self.value(hidden))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~attention_mask[:, None, None, :], float("-inf"))
        weights = self.dropout(torch.softmax(scores, dim=-1))
        merged = (weights @ v).transpose(1, 2).reshape(batch, length, dim)
        return self.output(merged)


class EncoderLayer(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        d = config.hidden_dim
        self.attention = SelfAttention(d, config.attention_heads, config.dropout)
        self.attention_norm = nn.LayerNorm(d, eps=1e-12)
        self.ff = nn.Sequential(
            nn.Linear(d, config.feedforward_dim),
            nn.GELU(),
            nn.Linear(config.feedforward_dim, d),
        )
        self.ff_norm = nn.LayerNorm(d, eps=1e-12)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, hidden: Tensor, attention_mask: Tensor) -> Tensor:
        hidden = self.attention_norm(hidden + self.dropout(self.attention(hidden, attention_mask)))
        hidden = self.ff_norm(hidden + self.dropout(self.ff(hidden)))
        return hidden


class TransformerEncoder(nn.Module):
    """Token+position+segment embeddings followed by self-attention layers."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        d = config.hidden_dim
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, d)
        self.position_embedding = nn.Embedding(config.max_len, d)
        self.segment_embedding = nn.Embedding(2, d)
        self.embedding_norm = nn.LayerNorm(d, eps=1e-12)
        self.dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.layers))

    def forward(self, ids: Tensor, segment_ids: Tensor, attention_mask: Tensor) -> Tensor:
        if ids.shape[-1] > self.config.max_len:
            raise ValueError(
                f"sequence length {ids.shape[-1]} exceeds max_len {self.config.max_len}"
            )
        positions = torch.arange(ids.shape[-1], device=ids.device).expand_as(ids)
        hidden = (
            self.token_embedding(ids)
            + self.position_embedding(positions)
            + self.segment_embedding(segment_ids)
        )
        hidden = self.dropout(self.embedding_norm(hidden))
        for layer in self.layers:
            hidden = layer(hidden, attention_mask)
        return hidden


@dataclass
class SlotContextEncoding:
    """Joint representation of one slot/context input: pooled + per-token."""

    r_cls: Tensor  # [d]
    token_reps: Tensor  # [K, d]


@dataclass(frozen=True)
class ModelExample:
    """A materialized example bound to its encoded input and loss routing."""

    encoded: EncodedExample
    pair_id: int
    kind: str
    gate_class: int
    picklist_index: int | None = None  # 1-based; None = uncovered / not applicable
    dialogue_id: str = ""
    turn: int = 0

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


@dataclass
class CollatedBatch:
    ids: Tensor
    segment_ids: Tensor
    attention_mask: Tensor
    context_mask: Tensor
    gate_targets: Tensor
    examples: list[ModelExample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)


def collate(examples: list[ModelExample], pad_id: int) -> CollatedBatch:
    """Pad a list of examples into batch tensors plus attention/context masks."""
    width = max(len(ex.encoded) for ex in examples)
    ids = torch.full((len(examples), width), pad_id, dtype=torch.long)
    segments = torch.zeros((len(examples), width), dtype=torch.long)
    attention = torch.zeros((len(examples), width), dtype=torch.bool)
    context = torch.zeros((len(examples), width), dtype=torch.bool)
    gates = torch.zeros(len(examples), dtype=torch.long)
    for i, ex in enumerate(examples):
        k = len(ex.encoded)
        ids[i, :k] = torch.tensor(ex.encoded.ids, dtype=torch.long)
        segments[i, :k] = torch.tensor(ex.encoded.segment_ids, dtype=torch.long)
        attention[i, :k] = True
        lo, hi = ex.encoded.context_token_range
        if hi >= lo:
            context[i, lo : hi + 1] = True
        gates[i] = ex.gate_class
    return CollatedBatch(
        ids=ids,
        segment_ids=segments,
        attention_mask=attention,
        context_mask=context,
        gate_targets=gates,
        examples=list(examples),
    )


# --------------------------------------------------------------------------
# loss / scoring primitives (dtype follows the inputs)


def gate_loss(probs: Tensor, onehot: Tensor) -> Tensor:
    """Cross-entropy against one-hot gate targets, summed over the batch."""
    picked = (probs * onehot).sum(dim=-1)
    return -torch.log(picked.clamp_min(LOG_EPS)).sum()


def span_probs(logits: Tensor) -> Tensor:
    """Softmax over unmasked (finite) positions; masked positions get exact 0."""
    finite = torch.isfinite(logits)
    if not bool(finite.any(dim=-1).all()):
        raise DecodeError("all span positions are masked")
    return torch.softmax(logits, dim=-1)


def span_loss(
    p_start: Tensor, p_end: Tensor, gold_start: int, gold_end: int
) -> Tensor:
    """Cross-entropy at the gold start position plus at the gold end position."""
    return -(
        torch.log(p_start[gold_start].clamp_min(LOG_EPS))
        + torch.log(p_end[gold_end].clamp_min(LOG_EPS))
    )


def cosine(r: Tensor, y: Tensor) -> Tensor:
    """Cosine similarity of two vectors; a zero-norm input scores 0 (warned)."""
    nr = torch.linalg.vector_norm(r)
    ny = torch.linalg.vector_norm(y)
    if nr.item() == 0.0 or ny.item() == 0.0:
        logger.warning("cosine similarity of a zero-norm vector; scoring 0")
        return r.new_zeros(())
    return (r * y).sum() / (nr * ny)


def cosine_scores(r: Tensor, reps: Tensor) -> Tensor:
    """Cosine of one query against rows of a value matrix, zero-norm safe."""
    denom = torch.linalg.vector_norm(reps, dim=-1) * torch.linalg.vector_norm(r)
    degenerate = denom == 0
    if bool(degenerate.any()):
        logger.warning("cosine similarity of a zero-norm vector; scoring 0")
    return (reps @ r) / torch.where(degenerate, torch.ones_like(denom), denom)


def picklist_loss(
    r_cls: Tensor, value_reps: Tensor, target_index: int, margin: float
) -> Tensor:
    """Hinge separating the target value's similarity from the best other value.

    A single-value picklist has an empty negative set and contributes 0.
    """
    count = value_reps.shape[0]
    if not 1 <= target_index <= count:
        raise IndexError(f"target index {target_index} outside picklist of size {count}")
    if count == 1:
        return r_cls.new_zeros(())
    sims = cosine_scores(r_cls, value_reps)
    target = sims[target_index - 1]
    negatives = torch.cat([sims[: target_index - 1], sims[target_index:]])
    return torch.clamp(margin - target + negatives.max(), min=0.0)


@dataclass
class LossBreakdown:
    total: Tensor
    gate: Tensor
    span: Tensor
    picklist: Tensor
    skipped_spans: int = 0
    uncovered_picklists: int = 0


# --------------------------------------------------------------------------
# the model


class DstModel(nn.Module):
    """Trainable slot-context encoder with gate/span heads and a frozen value encoder.

    The value encoder is a snapshot of the trainable encoder taken at
    construction (or refreshed on weight import); it never receives gradients
    and stays in eval mode.
    """

    def __init__(self, config: EncoderConfig, margin: float = 0.5):
        super().__init__()
        self.config = config
        self.margin = margin
        self.encoder = TransformerEncoder(config)
        self.gate_head = nn.Linear(config.hidden_dim, len(GATE_LABELS))
        self.span_head = nn.Linear(config.hidden_dim, 2)
        self.apply(_init_weights)
        # position/segment embeddings start at zero (learned during training);
        # their shared additive component otherwise dominates the position-0
        # output at desk widths and collapses value representations
        with torch.no_grad():
            self.encoder.position_embedding.weight.zero_()
            self.encoder.segment_embedding.weight.zero_()
        self.value_encoder = copy.deepcopy(self.encoder)
        self.value_encoder.requires_grad_(False)
        self.value_encoder.eval()
        self._value_cache: dict[str, Tensor] = {}

    def train(self, mode: bool = True) -> "DstModel":
        super().train(mode)
        self.value_encoder.eval()  # frozen feature extractor, dropout always off
        return self

    def _apply(self, fn, recurse=True):
        self._value_cache.clear()  # cached reps would hold the old dtype/device
        return super()._apply(fn, recurse)

    @property
    def dtype(self) -> torch.dtype:
        return self.gate_head.weight.dtype

    def encode(self, batch: CollatedBatch) -> Tensor:
        return self.encoder(batch.ids, batch.segment_ids, batch.attention_mask)

    def encode_slot_context(self, example: EncodedExample) -> SlotContextEncoding:
        """Joint representation of a single encoded example."""
        batch = collate(
            [ModelExample(encoded=example, pair_id=0, kind="", gate_class=0)],
            pad_id=0,
        )
        hidden = self.encode(batch)[0]
        return SlotContextEncoding(r_cls=hidden[0], token_reps=hidden)

    def gate_probs(self, r_cls: Tensor) -> Tensor:
        return torch.softmax(self.gate_head(r_cls), dim=-1)

    def span_logits(self, token_reps: Tensor, context_mask: Tensor) -> tuple[Tensor, Tensor]:
        """Per-position start/end scores, non-context positions masked to -inf."""
        alpha = self.span_head(token_reps)
        a_start = alpha[..., 0].masked_fill(~context_mask, float("-inf"))
        a_end = alpha[..., 1].masked_fill(~context_mask, float("-inf"))
        return a_start, a_end

    def encode_value(self, value: str, vocab: Vocabulary) -> Tensor:
        """Frozen-encoder representation of [CLS] + value + [SEP], cached."""
        if not value:
            raise ValueError("cannot encode an empty value")
        cached = self._value_cache.get(value)
        if cached is not None:
            return cached
        seq = tokenize(value, vocab)
        ids = torch.tensor(
            [vocab.cls_id, *seq.ids, vocab.sep_id], dtype=torch.long
        ).unsqueeze(0)
        segments = torch.zeros_like(ids)
        mask = torch.ones_like(ids, dtype=torch.bool)
        with torch.no_grad():
            rep = self.value_encoder(ids, segments, mask)[0, 0].detach()
        self._value_cache[value] = rep
        return rep

    def picklist_reps(self, picklist: tuple[str, ...], vocab: Vocabulary) -> Tensor:
        """Stacked frozen representations for a slot's candidate values: [L, d]."""
        return torch.stack([self.encode_value(v, vocab) for v in picklist])

    def total_loss(
        self, batch: CollatedBatch, value_reps: dict[int, Tensor]
    ) -> LossBreakdown:
        """Gate + span + picklist loss over a collated batch.

        Span terms apply only to non-categorical prediction examples with a
        projectable gold span; picklist terms only to categorical prediction
        examples whose value is covered by the picklist. Everything else is
        supervised through the gate alone.
        """
        hidden = self.encode(batch)
        r_cls = hidden[:, 0]
        probs = self.gate_probs(r_cls)
        onehot = F.one_hot(batch.gate_targets, len(GATE_LABELS)).to(probs.dtype)
        l_gate = gate_loss(probs, onehot)

        a_start, a_end = self.span_logits(hidden, batch.context_mask)
        zero = r_cls.new_zeros(())
        l_span = zero
        l_pick = zero
        skipped = 0
        uncovered = 0
        prediction_class = GATE_CLASS[GATE_PREDICTION]
        for i, ex in enumerate(batch.examples):
            if ex.gate_class != prediction_class:
                continue
            if ex.is_categorical:
                if ex.picklist_index is None:
                    uncovered += 1
                    continue
                l_pick = l_pick + picklist_loss(
                    r_cls[i], value_reps[ex.pair_id], ex.picklist_index, self.margin
                )
            else:
                if ex.encoded.gold_start is None:
                    skipped += 1
                    continue
                p_start = span_probs(a_start[i])
                p_end = span_probs(a_end[i])
                l_span = l_span + span_loss(
                    p_start, p_end, ex.encoded.gold_start, ex.encoded.gold_end
                )
        return LossBreakdown(
            total=l_gate + l_span + l_pick,
            gate=l_gate,
            span=l_span,
            picklist=l_pick,
            skipped_spans=skipped,
            uncovered_picklists=uncovered,
        )


def build_value_reps(
    model: DstModel, schema, vocab: Vocabulary
) -> dict[int, Tensor]:
    """Frozen value representations for every categorical pair, keyed by pair id."""
    return {
        pair.id: model.picklist_reps(pair.picklist, vocab)
        for pair in schema.pairs
        if pair.is_categorical
    }


def parameter_hash(module: nn.Module) -> str:
    """Stable digest of a module's named parameters and buffers."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


# --------------------------------------------------------------------------
# checkpoints and pretrained-weight import


def save_checkpoint(
    path: str | Path, model: DstModel, vocab: Vocabulary, extra: dict | None = None
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(model.config),
        "margin": model.margin,
        "vocab_hash": vocab.content_hash(),
        "vocab_tokens": list(vocab.tokens),
        "state": model.state_dict(),
        "frozen_value_encoder": True,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(
    path: str | Path, vocab: Vocabulary | None = None
) -> tuple[DstModel, Vocabulary, dict]:
    """Restore a model; verifies the vocabulary hash when one is supplied."""
    try:
        payload = torch.load(path, weights_only=True)
    except FileNotFoundError:
        raise CompatibilityError(f"checkpoint not found: {path}") from None
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CompatibilityError(
            f"checkpoint version {payload.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    checkpoint_vocab = Vocabulary(payload["vocab_tokens"])
    if vocab is not None and vocab.content_hash() != payload["vocab_hash"]:
        raise CompatibilityError("checkpoint vocabulary hash does not match")
    model = DstModel(EncoderConfig(**payload["config"]), margin=payload["margin"])
    model.load_state_dict(payload["state"])
    model.eval()
    return model, checkpoint_vocab, payload.get("extra", {})


def import_pretrained(model: DstModel, mapping: dict[str, Tensor]) -> list[str]:
    """Copy an external name->tensor mapping into the model by parameter name.

    After importing trainable-encoder weights the frozen value encoder is
    re-snapshotted from them (unless the mapping set it explicitly) and the
    value cache is dropped.
    """
    state = model.state_dict()
    imported = []
    explicit_frozen = False
    with torch.no_grad():
        for name, tensor in mapping.items():
            if name not in state:
                raise CompatibilityError(f"unknown parameter {name!r} in weight mapping")
            if tuple(state[name].shape) != tuple(tensor.shape):
                raise CompatibilityError(
                    f"shape mismatch for {name!r}: "
                    f"checkpoint {tuple(tensor.shape)} vs model {tuple(state[name].shape)}"
                )
            state[name].copy_(tensor.to(state[name].dtype))
            imported.append(name)
            explicit_frozen |= name.startswith("value_encoder.")
        if not explicit_frozen and any(n.startswith("encoder.") for n in imported):
            model.value_encoder.load_state_dict(model.encoder.state_dict())
    model._value_cache.clear()
    return imported
