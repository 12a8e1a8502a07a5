"""Tiny decoder-only transformer language model.

Pre-norm blocks, learned positional embeddings, tied input/output
embeddings. Attention is written by hand so incremental decoding can reuse
cached key/value tensors; at this scale nothing fancier is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

# layer geometry per preset; vocab/max_seq_len come from the trainer config
PRESETS = {
    "tiny": {"d_model": 96, "n_layers": 3, "n_heads": 3, "d_ff": 384},
    "small": {"d_model": 192, "n_layers": 4, "n_heads": 4, "d_ff": 768},
}

# (key, value) per layer, each (batch, heads, past_len, head_dim)
LayerCache = tuple[torch.Tensor, torch.Tensor]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_seq_len: int = 512
    d_model: int = 96
    n_layers: int = 3
    n_heads: int = 3
    d_ff: int = 384

    def __post_init__(self):
        for name in ("vocab_size", "max_seq_len", "d_model", "n_layers",
                     "n_heads", "d_ff"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @classmethod
    def from_preset(cls, preset: str, vocab_size: int,
                    max_seq_len: int = 512) -> "ModelConfig":
        if preset not in PRESETS:
            raise ValueError(
                f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        return cls(vocab_size=vocab_size, max_seq_len=max_seq_len, **PRESETS[preset])


class _Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.d_model // cfg.n_heads
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model)
        self.attn_out = nn.Linear(cfg.d_model, cfg.d_model)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff),
            nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model),
        )

    def forward(self, x: torch.Tensor,
                past: LayerCache | None = None) -> tuple[torch.Tensor, LayerCache]:
        bsz, q_len, d_model = x.shape
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)

        def heads(t):
            return t.view(bsz, q_len, self.n_heads, self.head_dim).transpose(1, 2)

        q, k, v = heads(q), heads(k), heads(v)
        if past is not None:
            k = torch.cat([past[0], k], dim=2)
            v = torch.cat([past[1], v], dim=2)
        past_len = k.shape[2] - q_len

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        # query i may see keys up to absolute position past_len + i
        q_pos = torch.arange(q_len, device=x.device).unsqueeze(1) + past_len
        k_pos = torch.arange(k.shape[2], device=x.device).unsqueeze(0)
        scores = scores.masked_fill(k_pos > q_pos, float("-inf"))

        att = torch.softmax(scores, dim=-1) @ v
        att = att.transpose(1, 2).reshape(bsz, q_len, d_model)
        x = x + self.attn_out(att)
        x = x + self.ff(self.ln2(x))
        return x, (k, v)


class TinyLM(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_seq_len, cfg.d_model)
        self.blocks = nn.ModuleList(_Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)
        self.head.weight = self.tok_emb.weight
        self.apply(self._init)

    @staticmethod
    def _init(module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, std=0.02)

    def param_count(self) -> int:
        # parameters() deduplicates the tied embedding/head weight
        return sum(p.numel() for p in self.parameters())

    def forward(self, ids: torch.Tensor,
                past: list[LayerCache] | None = None
                ) -> tuple[torch.Tensor, list[LayerCache]]:
        """Return logits (batch, len, vocab) and the updated per-layer cache."""
        bsz, q_len = ids.shape
        past_len = past[0][0].shape[2] if past else 0
        if past_len + q_len > self.cfg.max_seq_len:
            raise ValueError(
                f"sequence length {past_len + q_len} exceeds max_seq_len "
                f"{self.cfg.max_seq_len}")
        pos = torch.arange(past_len, past_len + q_len, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(pos).unsqueeze(0)
        new_past = []
        for i, block in enumerate(self.blocks):
            x, cache = block(x, past[i] if past else None)
            new_past.append(cache)
        return self.head(self.ln_f(x)), new_past


def save_model_config(cfg: ModelConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model_config(path: str) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return ModelConfig(**json.load(fh))
