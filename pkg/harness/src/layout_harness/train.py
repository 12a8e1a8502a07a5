"""Training loop: masked NLL over completion tokens, AdamW, cosine schedule.

A checkpoint is a directory holding model.pt, model_config.json,
trainer_config.json, tokenizer.json, and loss_curve.jsonl (one line per
optimization step).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import torch
from tokenizers import Tokenizer
from torch import nn

from .data import batch_iterator, collate, encode_corpus
from .model import ModelConfig, TinyLM, load_model_config, save_model_config
from .records import TrainingRecord
from .tokenizer import load_tokenizer, save_tokenizer, train_tokenizer


class NonFiniteLoss(RuntimeError):
    """Training produced a NaN or infinite loss."""


@dataclass(frozen=True)
class TrainerConfig:
    preset: str = "tiny"
    steps: int = 1500
    batch_size: int = 8
    peak_lr: float = 1e-4
    warmup_steps: int = 50
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    grad_clip: float = 1.0
    seed: int = 0
    vocab_size: int = 512
    max_seq_len: int = 512

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if self.peak_lr <= 0 or self.vocab_size < 8 or self.max_seq_len < 8:
            raise ValueError("peak_lr, vocab_size, max_seq_len out of range")
        if not 0 <= self.warmup_steps < self.steps:
            raise ValueError("warmup_steps must lie in [0, steps)")


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    checkpoint_dir: str = ""


def masked_loss(logits: torch.Tensor, targets: torch.Tensor,
                mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean NLL over masked target positions, plus the per-token loss grid.

    With an all-False mask the contribution is exactly zero.
    """
    per_token = nn.functional.cross_entropy(
        logits.transpose(1, 2), targets, reduction="none")
    per_token = per_token * mask
    count = mask.sum()
    if count == 0:
        return logits.new_zeros(()), per_token
    return per_token.sum() / count, per_token


def _lr_factor(step: int, cfg: TrainerConfig) -> float:
    # linear warmup, then cosine decay to zero at the final step
    if step < cfg.warmup_steps:
        return (step + 1) / cfg.warmup_steps
    span = max(1, cfg.steps - cfg.warmup_steps)
    progress = (step - cfg.warmup_steps) / span
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def train(records: list[TrainingRecord], cfg: TrainerConfig,
          out_dir: str) -> TrainResult:
    torch.manual_seed(cfg.seed)
    tok = train_tokenizer(records, vocab_size=cfg.vocab_size)
    encoded = encode_corpus(records, tok, cfg.max_seq_len)

    model_cfg = ModelConfig.from_preset(
        cfg.preset, vocab_size=tok.get_vocab_size(), max_seq_len=cfg.max_seq_len)
    model = TinyLM(model_cfg)
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.peak_lr,
                            betas=cfg.betas, weight_decay=cfg.weight_decay)

    losses: list[float] = []
    batches = batch_iterator(len(encoded), cfg.batch_size, cfg.steps, cfg.seed)
    for step, index_batch in enumerate(batches):
        for group in opt.param_groups:
            group["lr"] = cfg.peak_lr * _lr_factor(step, cfg)
        inputs, targets, mask = collate([encoded[i] for i in index_batch], tok)
        logits, _ = model(inputs)
        loss, _ = masked_loss(logits, targets, mask)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(
                f"step {step}: loss={loss.item()} lr={opt.param_groups[0]['lr']:.3e} "
                f"batch={index_batch}")
        opt.zero_grad()
        loss.backward()
        if cfg.grad_clip > 0:
            nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()
        losses.append(loss.item())

    save_checkpoint(out_dir, model, tok, cfg, losses)
    return TrainResult(losses=losses, checkpoint_dir=out_dir)


def save_checkpoint(out_dir: str, model: TinyLM, tok: Tokenizer,
                    cfg: TrainerConfig, losses: list[float]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    torch.save(model.state_dict(), os.path.join(out_dir, "model.pt"))
    save_model_config(model.cfg, os.path.join(out_dir, "model_config.json"))
    save_tokenizer(tok, os.path.join(out_dir, "tokenizer.json"))
    with open(os.path.join(out_dir, "trainer_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "loss_curve.jsonl"), "w",
              encoding="utf-8") as fh:
        for step, value in enumerate(losses):
            fh.write(json.dumps({"step": step, "loss": value}) + "\n")


def load_checkpoint(ckpt_dir: str) -> tuple[TinyLM, Tokenizer]:
    model_cfg = load_model_config(os.path.join(ckpt_dir, "model_config.json"))
    model = TinyLM(model_cfg)
    state = torch.load(os.path.join(ckpt_dir, "model.pt"), weights_only=True)
    model.load_state_dict(state)
    model.eval()
    tok = load_tokenizer(os.path.join(ckpt_dir, "tokenizer.json"))
    return model, tok
