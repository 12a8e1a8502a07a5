from layout_harness.records import TrainingRecord
from layout_harness.tokenizer import (EOS_TOKEN, PAD_TOKEN, eos_id,
                                      load_tokenizer, pad_id, save_tokenizer,
                                      separator_id, train_tokenizer)
from conftest import make_records


def test_special_ids_distinct(corpus_tokenizer):
    ids = {pad_id(corpus_tokenizer), eos_id(corpus_tokenizer),
           separator_id(corpus_tokenizer)}
    assert len(ids) == 3
    assert None not in ids


def test_separator_never_merges(corpus_tokenizer):
    enc = corpus_tokenizer.encode("text 49 1029#title 10 1044##")
    sep = separator_id(corpus_tokenizer)
    assert enc.ids.count(sep) == 3
    assert "#" in enc.tokens


def test_encode_decode_roundtrip(corpus_tokenizer, corpus):
    for record in corpus[:25]:
        enc = corpus_tokenizer.encode(record.joined())
        text = corpus_tokenizer.decode(enc.ids, skip_special_tokens=False)
        assert text == record.joined()


def test_arbitrary_bytes_roundtrip(corpus_tokenizer):
    # full byte alphabet: text far outside the corpus still encodes losslessly
    weird = "Zebra QUANTUM 日本語 café \U0001f600 \x00\x7f"
    enc = corpus_tokenizer.encode(weird)
    assert corpus_tokenizer.decode(enc.ids, skip_special_tokens=False) == weird


def test_vocab_size_respected(corpus):
    tok = train_tokenizer(corpus, vocab_size=384)
    assert tok.get_vocab_size() == 384


def test_special_strings():
    assert PAD_TOKEN == "<pad>"
    assert EOS_TOKEN == "<eos>"


def test_save_load_identity(tmp_path, corpus_tokenizer):
    path = str(tmp_path / "tokenizer.json")
    save_tokenizer(corpus_tokenizer, path)
    reloaded = load_tokenizer(path)
    sample = "unrefine;slide;3;1;;text 225 1316 2428 3137#done"
    assert reloaded.encode(sample).ids == corpus_tokenizer.encode(sample).ids


def test_training_is_deterministic():
    records = make_records(30)
    a = train_tokenizer(records, vocab_size=300)
    b = train_tokenizer(records, vocab_size=300)
    probe = records[7].joined()
    assert a.encode(probe).ids == b.encode(probe).ids
    assert a.get_vocab() == b.get_vocab()
