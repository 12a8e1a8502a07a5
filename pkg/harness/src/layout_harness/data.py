"""Token sequences and the completion-only loss mask.

Each record becomes ``encode(prompt + "#" + completion) + [<eos>]``. The mask
is True strictly after the separator token (so the completion and the
terminating <eos> carry loss, the prompt and the separator do not), False on
padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from tokenizers import Tokenizer

from .records import TrainingRecord
from .tokenizer import eos_id, pad_id, separator_id


@dataclass(frozen=True)
class EncodedRecord:
    ids: list[int]
    mask: list[bool]


def encode_record(record: TrainingRecord, tok: Tokenizer) -> EncodedRecord:
    ids = tok.encode(record.joined()).ids + [eos_id(tok)]
    sep = ids.index(separator_id(tok))
    mask = [i > sep for i in range(len(ids))]
    return EncodedRecord(ids=ids, mask=mask)


def encode_corpus(records: list[TrainingRecord], tok: Tokenizer,
                  max_seq_len: int) -> list[EncodedRecord]:
    encoded = []
    for i, record in enumerate(records):
        enc = encode_record(record, tok)
        if len(enc.ids) > max_seq_len:
            raise ValueError(
                f"record {i}: {len(enc.ids)} tokens exceeds max_seq_len {max_seq_len}")
        encoded.append(enc)
    return encoded


def collate(batch: list[EncodedRecord], tok: Tokenizer
            ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad to the batch max and shift for next-token prediction.

    Returns (inputs, targets, target_mask); the mask marks target positions
    whose predicted token is a completion token.
    """
    width = max(len(e.ids) for e in batch)
    fill = pad_id(tok)
    ids = torch.full((len(batch), width), fill, dtype=torch.long)
    mask = torch.zeros((len(batch), width), dtype=torch.bool)
    for row, enc in enumerate(batch):
        ids[row, :len(enc.ids)] = torch.tensor(enc.ids, dtype=torch.long)
        mask[row, :len(enc.mask)] = torch.tensor(enc.mask, dtype=torch.bool)
    return ids[:, :-1], ids[:, 1:], mask[:, 1:]


def batch_iterator(n_records: int, batch_size: int, steps: int, seed: int):
    """Yield `steps` index lists, reshuffling each epoch deterministically."""
    gen = torch.Generator().manual_seed(seed)
    order: list[int] = []
    for _ in range(steps):
        while len(order) < batch_size:
            order.extend(torch.randperm(n_records, generator=gen).tolist())
        yield order[:batch_size]
        del order[:batch_size]
