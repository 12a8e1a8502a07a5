"""Byte-level BPE tokenizer trained on the record corpus.

The separator "#" is registered as a special token so it can never merge
with neighbouring text; the loss-mask boundary is therefore a single token
lookup. <pad> fills batches, <eos> terminates every training sequence.
"""

from __future__ import annotations

from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers

from .records import SEPARATOR, TrainingRecord

PAD_TOKEN = "<pad>"
EOS_TOKEN = "<eos>"


def train_tokenizer(records: list[TrainingRecord], vocab_size: int = 512) -> Tokenizer:
    tok = Tokenizer(models.BPE(unk_token=None))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    # full byte alphabet so arbitrary request text always encodes losslessly
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_size,
        special_tokens=[PAD_TOKEN, EOS_TOKEN, SEPARATOR],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator((r.joined() for r in records), trainer)
    return tok


def pad_id(tok: Tokenizer) -> int:
    return tok.token_to_id(PAD_TOKEN)


def eos_id(tok: Tokenizer) -> int:
    return tok.token_to_id(EOS_TOKEN)


def separator_id(tok: Tokenizer) -> int:
    return tok.token_to_id(SEPARATOR)


def save_tokenizer(tok: Tokenizer, path: str) -> None:
    tok.save(path)


def load_tokenizer(path: str) -> Tokenizer:
    return Tokenizer.from_file(path)
