"""Tiny language-model harness for layout instruction pairs.

Trains a small decoder-only transformer on prompt/completion JSONL with the
loss restricted to completion tokens, and serves completions over the same
HTTP protocol the layout toolkit's generation client speaks.
"""

__version__ = "0.1.0"

from .records import SchemaError, TrainingRecord, load_records
from .sample import DecodeSettings, generate_text
from .train import NonFiniteLoss, TrainerConfig, load_checkpoint, train

__all__ = [
    "DecodeSettings",
    "NonFiniteLoss",
    "SchemaError",
    "TrainerConfig",
    "TrainingRecord",
    "generate_text",
    "load_checkpoint",
    "load_records",
    "train",
    "__version__",
]
