import json
import os

import pytest
import torch

from layout_harness.data import collate, encode_record
from layout_harness.model import TinyLM
from layout_harness.train import (NonFiniteLoss, TrainerConfig,
                                  load_checkpoint, masked_loss, train)
from layout_harness.records import TrainingRecord
from conftest import make_records


def test_masked_loss_all_false_is_exactly_zero():
    torch.manual_seed(0)
    logits = torch.randn(2, 7, 50)
    targets = torch.randint(0, 50, (2, 7))
    mask = torch.zeros(2, 7, dtype=torch.bool)
    loss, per_token = masked_loss(logits, targets, mask)
    assert loss.item() == 0.0
    assert per_token.abs().sum().item() == 0.0


def test_masked_loss_ignores_unmasked_positions():
    torch.manual_seed(1)
    logits = torch.randn(1, 6, 20)
    targets = torch.randint(0, 20, (1, 6))
    mask = torch.tensor([[False, False, True, True, True, True]])
    loss, per_token = masked_loss(logits, targets, mask)
    assert per_token[0, :2].abs().sum().item() == 0.0
    expected = per_token[0, 2:].mean()
    assert torch.allclose(loss, expected)


def test_prompt_positions_carry_zero_loss_even_when_perturbed(corpus_tokenizer, random_model):
    """Changing prompt-side input tokens moves completion losses only."""
    record = TrainingRecord(prompt="unrefine;slide;2;1;;",
                            completion="text 5 1029 2058 3082;list 1 1025 2049 3073")
    enc = encode_record(record, corpus_tokenizer)
    inputs, targets, mask = collate([enc], corpus_tokenizer)

    logits, _ = random_model(inputs)
    _, before = masked_loss(logits, targets, mask)

    perturbed = inputs.clone()
    perturbed[0, 1] = (perturbed[0, 1] + 3) % random_model.cfg.vocab_size
    logits, _ = random_model(perturbed)
    _, after = masked_loss(logits, targets, mask)

    prompt_slots = ~mask
    assert before[prompt_slots].abs().sum().item() == 0.0
    assert after[prompt_slots].abs().sum().item() == 0.0
    assert not torch.allclose(before[mask], after[mask])


@pytest.mark.parametrize("kwargs", [
    {"steps": 0}, {"batch_size": 0}, {"peak_lr": 0.0}, {"vocab_size": 4},
    {"max_seq_len": 4}, {"warmup_steps": 10, "steps": 10},
])
def test_trainer_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainerConfig(**kwargs)


def _quick_config(**overrides):
    base = dict(preset="tiny", steps=10, batch_size=4, peak_lr=3e-4,
                warmup_steps=2, seed=5, vocab_size=280, max_seq_len=128)
    base.update(overrides)
    return TrainerConfig(**base)


def test_seeded_runs_repeat_first_losses(tmp_path):
    records = make_records(16)
    a = train(records, _quick_config(), str(tmp_path / "a"))
    b = train(records, _quick_config(), str(tmp_path / "b"))
    assert a.losses == b.losses
    assert len(a.losses) == 10


def test_loss_decreases_over_windows(tmp_path, corpus):
    cfg = TrainerConfig(preset="tiny", steps=300, batch_size=8, peak_lr=3e-4,
                        warmup_steps=20, seed=0, vocab_size=512, max_seq_len=512)
    result = train(corpus, cfg, str(tmp_path / "smoke"))
    windows = [sum(result.losses[i:i + 100]) / 100 for i in (0, 100, 200)]
    assert windows[0] > windows[1] > windows[2]


def test_non_finite_loss_aborts_with_diagnostics(tmp_path):
    records = make_records(12)
    cfg = _quick_config(peak_lr=1e12, steps=30, warmup_steps=0)
    with pytest.raises(NonFiniteLoss, match=r"step \d+.*lr="):
        train(records, cfg, str(tmp_path / "boom"))


def test_checkpoint_roundtrip(tmp_path):
    records = make_records(16)
    out = str(tmp_path / "ckpt")
    result = train(records, _quick_config(), out)
    assert result.checkpoint_dir == out
    for name in ("model.pt", "model_config.json", "trainer_config.json",
                 "tokenizer.json", "loss_curve.jsonl"):
        assert os.path.exists(os.path.join(out, name)), name

    model, tok = load_checkpoint(out)
    assert isinstance(model, TinyLM)
    assert not model.training
    enc = encode_record(records[0], tok)
    inputs, targets, mask = collate([enc], tok)
    logits, _ = model(inputs)
    loss, _ = masked_loss(logits, targets, mask)
    assert torch.isfinite(loss)


def test_loss_curve_file_matches_result(tmp_path):
    records = make_records(16)
    out = str(tmp_path / "curve")
    result = train(records, _quick_config(), out)
    with open(os.path.join(out, "loss_curve.jsonl"), encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh]
    assert [row["step"] for row in rows] == list(range(10))
    assert rows[3]["loss"] == pytest.approx(result.losses[3])


def test_reloaded_model_reproduces_logits(tmp_path):
    records = make_records(16)
    out = str(tmp_path / "repro")
    train(records, _quick_config(), out)
    model_a, tok = load_checkpoint(out)
    model_b, _ = load_checkpoint(out)
    enc = encode_record(records[3], tok)
    ids = torch.tensor(enc.ids, dtype=torch.long).unsqueeze(0)
    logits_a, _ = model_a(ids)
    logits_b, _ = model_b(ids)
    assert torch.equal(logits_a, logits_b)
