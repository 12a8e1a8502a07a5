import pytest
import torch
from torch import nn

from layout_harness.model import ModelConfig
from layout_harness.sample import DecodeSettings, generate_text
from layout_harness.tokenizer import eos_id, separator_id


class ScriptedLM(nn.Module):
    """Puppet model: emits a fixed token script, recording what it was fed."""

    def __init__(self, tok, script_ids, max_seq_len=64):
        super().__init__()
        self.cfg = ModelConfig(vocab_size=tok.get_vocab_size(),
                               max_seq_len=max_seq_len)
        self.script = list(script_ids)
        self.cursor = 0
        self.seen = []

    def forward(self, ids, past=None):
        self.seen.append(ids.tolist())
        logits = torch.full((1, ids.shape[1], self.cfg.vocab_size), -30.0)
        logits[0, -1, self.script[min(self.cursor, len(self.script) - 1)]] = 30.0
        self.cursor += 1
        return logits, past


def _script(tok, words, end=True):
    ids = [tok.token_to_id(w) for w in words]
    assert None not in ids, words
    return ids + ([eos_id(tok)] if end else [])


def test_appends_separator_to_context(corpus_tokenizer):
    model = ScriptedLM(corpus_tokenizer, _script(corpus_tokenizer, ["text"]))
    generate_text(model, corpus_tokenizer, "unrefine;slide",
                  DecodeSettings(max_new_tokens=4))
    first_context = model.seen[0][0]
    assert first_context[-1] == separator_id(corpus_tokenizer)
    assert first_context.count(separator_id(corpus_tokenizer)) == 1


def test_no_double_separator(corpus_tokenizer):
    model = ScriptedLM(corpus_tokenizer, _script(corpus_tokenizer, ["text"]))
    generate_text(model, corpus_tokenizer, "unrefine;slide#",
                  DecodeSettings(max_new_tokens=4))
    first_context = model.seen[0][0]
    assert first_context.count(separator_id(corpus_tokenizer)) == 1


def test_stops_at_eos(corpus_tokenizer):
    script = _script(corpus_tokenizer, ["text", ";", "title"])
    model = ScriptedLM(corpus_tokenizer, script)
    out = generate_text(model, corpus_tokenizer, "p",
                        DecodeSettings(max_new_tokens=50))
    assert out == "text;title"


def test_stop_string_truncates(corpus_tokenizer):
    script = _script(corpus_tokenizer, ["text", ";", "title"])
    model = ScriptedLM(corpus_tokenizer, script)
    out = generate_text(model, corpus_tokenizer, "p",
                        DecodeSettings(max_new_tokens=50, stop=(";",)))
    assert out == "text"


def test_budget_truncates(corpus_tokenizer):
    script = _script(corpus_tokenizer, ["text", ";", "title"], end=False)
    model = ScriptedLM(corpus_tokenizer, script)
    out = generate_text(model, corpus_tokenizer, "p",
                        DecodeSettings(max_new_tokens=1))
    assert out == "text"


def test_long_prompt_keeps_recent_window(corpus_tokenizer):
    model = ScriptedLM(corpus_tokenizer, _script(corpus_tokenizer, ["text"]),
                       max_seq_len=16)
    generate_text(model, corpus_tokenizer, "slide " * 60,
                  DecodeSettings(max_new_tokens=2))
    assert len(model.seen[0][0]) == 15
    assert model.seen[0][0][-1] == separator_id(corpus_tokenizer)


def test_greedy_is_repeatable(random_model, corpus_tokenizer):
    settings = DecodeSettings(strategy="greedy", max_new_tokens=12)
    a = generate_text(random_model, corpus_tokenizer, "unrefine;slide", settings)
    b = generate_text(random_model, corpus_tokenizer, "unrefine;slide", settings)
    assert a == b


def test_topk_k1_equals_greedy(random_model, corpus_tokenizer):
    prompt = "unrefine;slide;2;1;;"
    greedy = generate_text(random_model, corpus_tokenizer, prompt,
                           DecodeSettings(strategy="greedy", max_new_tokens=10))
    gen = torch.Generator().manual_seed(0)
    topk1 = generate_text(random_model, corpus_tokenizer, prompt,
                          DecodeSettings(strategy="topk", k=1, temperature=0.7,
                                         max_new_tokens=10), generator=gen)
    assert topk1 == greedy


def test_sampling_reproducible_with_seeded_generator(random_model, corpus_tokenizer):
    settings = DecodeSettings(strategy="multinomial", temperature=1.3,
                              max_new_tokens=10)
    outs = []
    for _ in range(2):
        gen = torch.Generator().manual_seed(99)
        outs.append(generate_text(random_model, corpus_tokenizer,
                                  "unrefine;slide", settings, generator=gen))
    assert outs[0] == outs[1]


def test_topk_samples_within_top_set(random_model, corpus_tokenizer):
    # k=2 at tiny temperature concentrates on the argmax: equals greedy
    prompt = "unrefine;slide"
    greedy = generate_text(random_model, corpus_tokenizer, prompt,
                           DecodeSettings(strategy="greedy", max_new_tokens=8))
    gen = torch.Generator().manual_seed(1)
    cold = generate_text(random_model, corpus_tokenizer, prompt,
                         DecodeSettings(strategy="topk", k=2, temperature=1e-4,
                                        max_new_tokens=8), generator=gen)
    assert cold == greedy


@pytest.mark.parametrize("kwargs", [
    {"strategy": "beam"}, {"k": 0}, {"temperature": 0.0},
    {"temperature": -1.0}, {"max_new_tokens": 0},
])
def test_settings_validation(kwargs):
    with pytest.raises(ValueError):
        DecodeSettings(**kwargs)
