"""Dual-strategy dialog state tracking: span extraction and picklist ranking
behind a 3-way per-slot gate, trained jointly under one text encoder."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Dialogue,
    DomainSlotPair,
    SlotSchema,
    Turn,
    TurnAnnotation,
)
from .model import DstModel, EncoderConfig  # noqa: F401
from .textenc import Vocabulary  # noqa: F401
from .tracker import Tracker  # noqa: F401
from .trainer import TrainConfig  # noqa: F401
