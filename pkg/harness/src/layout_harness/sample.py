"""Decoding: greedy, top-k, and full-distribution sampling with stop strings.

The model was trained on ``prompt + "#" + completion``, so the context fed to
it is the request prompt with the separator appended (unless the caller
already ended the prompt with one). Generation stops at <eos>, at any stop
string, or at the token budget; stop strings are cut out of the returned
text.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from tokenizers import Tokenizer

from .model import TinyLM
from .records import SEPARATOR
from .tokenizer import eos_id

STRATEGIES = ("greedy", "topk", "multinomial")


@dataclass(frozen=True)
class DecodeSettings:
    strategy: str = "greedy"
    k: int = 50
    temperature: float = 1.0
    max_new_tokens: int = 256
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; choose from "
                f"{', '.join(STRATEGIES)}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


def _pick(logits: torch.Tensor, settings: DecodeSettings,
          generator: torch.Generator | None) -> int:
    if settings.strategy == "greedy":
        return int(logits.argmax())
    logits = logits / settings.temperature
    if settings.strategy == "topk":
        k = min(settings.k, logits.shape[-1])
        values, indices = torch.topk(logits, k)
        choice = torch.multinomial(torch.softmax(values, dim=-1), 1,
                                   generator=generator)
        return int(indices[choice])
    probs = torch.softmax(logits, dim=-1)
    return int(torch.multinomial(probs, 1, generator=generator))


@torch.no_grad()
def generate_text(model: TinyLM, tok: Tokenizer, prompt: str,
                  settings: DecodeSettings,
                  generator: torch.Generator | None = None) -> str:
    """Complete `prompt` and return the generated text after the separator."""
    context = prompt if prompt.endswith(SEPARATOR) else prompt + SEPARATOR
    ids = tok.encode(context).ids
    # keep the most recent tokens if the prompt alone overflows the window
    window = model.cfg.max_seq_len - 1
    ids = ids[-window:]
    end_id = eos_id(tok)

    model.eval()
    logits, past = model(torch.tensor(ids, dtype=torch.long).unsqueeze(0))
    generated: list[int] = []
    text = ""
    for _ in range(settings.max_new_tokens):
        next_id = _pick(logits[0, -1], settings, generator)
        if next_id == end_id:
            break
        generated.append(next_id)
        text = tok.decode(generated, skip_special_tokens=False)
        hits = [text.index(s) for s in settings.stop if s in text]
        if hits:
            return text[:min(hits)]
        if len(ids) + len(generated) >= model.cfg.max_seq_len:
            break
        logits, past = model(
            torch.tensor([[next_id]], dtype=torch.long), past=past)
    return text
