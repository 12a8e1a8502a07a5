import json
import threading

import pytest
import requests
import torch
from torch import nn

from layout_harness.model import ModelConfig
from layout_harness.server import CompletionServer, parse_request, serve


@pytest.fixture(scope="module")
def endpoint(random_model, corpus_tokenizer):
    server = serve(random_model, corpus_tokenizer, host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}/complete"
    server.shutdown()


def _post(endpoint, payload, raw=None):
    data = raw if raw is not None else json.dumps(payload)
    return requests.post(endpoint, data=data, timeout=30)


def test_valid_request_completes(endpoint):
    resp = _post(endpoint, {"prompt": "unrefine;slide", "max_new_tokens": 6,
                            "decoding": {"strategy": "greedy"}, "stop": ["#"]})
    assert resp.status_code == 200
    body = resp.json()
    assert set(body) == {"completion"}
    assert isinstance(body["completion"], str)


def test_minimal_request_uses_defaults(endpoint):
    resp = _post(endpoint, {"prompt": "p", "max_new_tokens": 4})
    assert resp.status_code == 200
    assert isinstance(resp.json()["completion"], str)


def test_unknown_fields_ignored(endpoint):
    resp = _post(endpoint, {"prompt": "p", "max_new_tokens": 3,
                            "decoding": {"strategy": "greedy", "nucleus": 0.9},
                            "echo": True})
    assert resp.status_code == 200


def test_budget_clamped_to_model_window(endpoint):
    resp = _post(endpoint, {"prompt": "p", "max_new_tokens": 10_000_000})
    assert resp.status_code == 200


@pytest.mark.parametrize("raw", ["{not json", "", "[1, 2]", '"just a string"'])
def test_malformed_body_is_400(endpoint, raw):
    resp = _post(endpoint, None, raw=raw)
    assert resp.status_code == 400
    assert "error" in resp.json()


@pytest.mark.parametrize("payload", [
    {},
    {"prompt": 7},
    {"prompt": None},
    {"prompt": "p", "max_new_tokens": 0},
    {"prompt": "p", "max_new_tokens": "many"},
    {"prompt": "p", "max_new_tokens": True},
    {"prompt": "p", "decoding": "greedy"},
    {"prompt": "p", "decoding": {"strategy": "beam"}},
    {"prompt": "p", "decoding": {"strategy": 5}},
    {"prompt": "p", "decoding": {"k": 0}},
    {"prompt": "p", "decoding": {"k": "fifty"}},
    {"prompt": "p", "decoding": {"temperature": 0}},
    {"prompt": "p", "decoding": {"temperature": "warm"}},
    {"prompt": "p", "stop": "#"},
    {"prompt": "p", "stop": [1, 2]},
])
def test_protocol_violations_are_400(endpoint, payload):
    resp = _post(endpoint, payload)
    assert resp.status_code == 400
    assert isinstance(resp.json()["error"], str)


def test_oversized_prompt_is_400(endpoint):
    resp = _post(endpoint, {"prompt": "x" * 70_000, "max_new_tokens": 2})
    assert resp.status_code == 400
    assert "longer than" in resp.json()["error"]


def test_get_is_405(endpoint):
    resp = requests.get(endpoint, timeout=10)
    assert resp.status_code == 405


def test_inference_failure_is_500(corpus_tokenizer):
    class BrokenLM(nn.Module):
        cfg = ModelConfig(vocab_size=512, max_seq_len=64)

        def forward(self, ids, past=None):
            raise RuntimeError("cursed weights")

    server = serve(BrokenLM(), corpus_tokenizer, host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        host, port = server.server_address[:2]
        resp = requests.post(f"http://{host}:{port}/complete",
                             json={"prompt": "p", "max_new_tokens": 2},
                             timeout=10)
        assert resp.status_code == 500
        assert "cursed weights" in resp.json()["error"]
    finally:
        server.shutdown()


def test_concurrent_requests_all_succeed(endpoint):
    results = []

    def worker(i):
        resp = _post(endpoint, {"prompt": f"unrefine;slide;{i};1;",
                                "max_new_tokens": 4})
        results.append(resp.status_code)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [200] * 8


def test_parse_request_clamps_budget():
    _, settings = parse_request(
        json.dumps({"prompt": "p", "max_new_tokens": 9999}).encode(), 63)
    assert settings.max_new_tokens == 63


def test_parse_request_filters_empty_stop_strings():
    _, settings = parse_request(
        json.dumps({"prompt": "p", "stop": ["", "#", ""]}).encode(), 63)
    assert settings.stop == ("#",)


def test_server_budget_cap_tracks_model(random_model, corpus_tokenizer):
    server = CompletionServer(("127.0.0.1", 0), random_model, corpus_tokenizer)
    try:
        assert server.budget_cap == random_model.cfg.max_seq_len - 1
    finally:
        server.server_close()
