"""HTTP endpoint speaking the layout-generation completion protocol.

POST any path with::

    {"prompt": str, "max_new_tokens": int, "decoding":
        {"strategy": "greedy"|"topk"|"multinomial", "k": int,
         "temperature": float}, "stop": [str, ...]}

Only "prompt" is required; unknown fields are ignored. The reply is
``{"completion": str}``. Malformed requests get 400, inference failures 500,
both as ``{"error": str}``. One request runs inference at a time; the
checkpoint is read-only, so threads only queue on the model lock.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from tokenizers import Tokenizer

from .model import TinyLM
from .sample import DecodeSettings, generate_text

MAX_PROMPT_CHARS = 65536


class RequestError(ValueError):
    """The request body does not follow the protocol."""


def parse_request(body: bytes, budget_cap: int) -> tuple[str, DecodeSettings]:
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise RequestError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise RequestError("request must be a JSON object")
    prompt = obj.get("prompt")
    if not isinstance(prompt, str):
        raise RequestError("field 'prompt' must be a string")
    if len(prompt) > MAX_PROMPT_CHARS:
        raise RequestError(f"prompt longer than {MAX_PROMPT_CHARS} characters")

    budget = obj.get("max_new_tokens", 256)
    if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
        raise RequestError("field 'max_new_tokens' must be a positive integer")

    decoding = obj.get("decoding", {})
    if not isinstance(decoding, dict):
        raise RequestError("field 'decoding' must be an object")
    strategy = decoding.get("strategy", "greedy")
    k = decoding.get("k", 50)
    temperature = decoding.get("temperature", 1.0)
    if not isinstance(strategy, str):
        raise RequestError("decoding field 'strategy' must be a string")
    if not isinstance(k, int) or isinstance(k, bool):
        raise RequestError("decoding field 'k' must be an integer")
    if isinstance(temperature, bool) or not isinstance(temperature, (int, float)):
        raise RequestError("decoding field 'temperature' must be a number")

    stop = obj.get("stop", [])
    if not isinstance(stop, list) or any(not isinstance(s, str) for s in stop):
        raise RequestError("field 'stop' must be a list of strings")

    try:
        settings = DecodeSettings(
            strategy=strategy, k=k, temperature=float(temperature),
            max_new_tokens=min(budget, budget_cap),
            stop=tuple(s for s in stop if s))
    except ValueError as exc:
        raise RequestError(str(exc)) from exc
    return prompt, settings


class _Handler(BaseHTTPRequestHandler):
    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # the protocol is POST-only
        self._reply(405, {"error": "use POST"})

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length)
            prompt, settings = parse_request(body, self.server.budget_cap)
        except RequestError as exc:
            self._reply(400, {"error": str(exc)})
            return
        except Exception as exc:  # unreadable body
            self._reply(400, {"error": f"unreadable request: {exc}"})
            return
        try:
            with self.server.model_lock:
                completion = generate_text(
                    self.server.model, self.server.tok, prompt, settings)
        except Exception as exc:
            self._reply(500, {"error": f"{type(exc).__name__}: {exc}"})
            return
        self._reply(200, {"completion": completion})

    def log_message(self, fmt, *args):
        pass


class CompletionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], model: TinyLM, tok: Tokenizer):
        super().__init__(address, _Handler)
        self.model = model
        self.tok = tok
        self.model_lock = threading.Lock()
        self.budget_cap = model.cfg.max_seq_len - 1


def serve(model: TinyLM, tok: Tokenizer, host: str = "127.0.0.1",
          port: int = 8080) -> CompletionServer:
    """Bind and return the server; the caller drives serve_forever()."""
    return CompletionServer((host, port), model, tok)
