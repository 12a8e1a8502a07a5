import pathlib

import pytest
import torch

from layout_harness.model import ModelConfig, TinyLM
from layout_harness.records import TrainingRecord, load_records
from layout_harness.tokenizer import train_tokenizer

FIXTURE_CORPUS = pathlib.Path(__file__).parent.parent / "fixtures" / "corpus_200.jsonl"


@pytest.fixture(scope="session")
def corpus():
    return load_records(str(FIXTURE_CORPUS))


@pytest.fixture(scope="session")
def corpus_tokenizer(corpus):
    return train_tokenizer(corpus, vocab_size=512)


@pytest.fixture(scope="session")
def random_model(corpus_tokenizer):
    """Untrained tiny model sharing the corpus vocabulary."""
    torch.manual_seed(11)
    cfg = ModelConfig.from_preset(
        "tiny", vocab_size=corpus_tokenizer.get_vocab_size(), max_seq_len=192)
    model = TinyLM(cfg)
    model.eval()
    return model


def make_records(n):
    return [TrainingRecord(prompt=f"unrefine;slide;{i};1;",
                           completion=f"text {i} {1024 + i} 2100 3100")
            for i in range(n)]
