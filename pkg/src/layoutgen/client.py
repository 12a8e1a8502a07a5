"""Client side of layout generation: decoding policy, backends, repair.

The wire protocol is a single JSON POST::

    {"prompt": str, "max_new_tokens": int,
     "decoding": {"strategy": "greedy"|"topk"|"multinomial",
                  "k": int, "temperature": float},
     "stop": ["#"]}

answered by ``{"completion": str}``.  A mock backend serves canned or
synthesized completions so the full pipeline runs without a model.
"""

from __future__ import annotations

import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests

from .codec import DEFAULT_CODEC, IntervalConfig, OutOfRangeError
from .core import (
    AttrKind,
    BoundingBox,
    CategoryRegistry,
    Domain,
    Element,
    GEOMETRY_KINDS,
    Layout,
    default_registry,
)
from .prompts import (
    PAIR_SEPARATOR,
    ConditionText,
    PromptError,
    ResponseParseError,
    _parse_group_tokens,
    build_response,
    parse_condition,
)
from .tasks import Task

STRATEGIES = ("greedy", "topk", "multinomial")
TOP_K_DEFAULT = 50
TOKENS_PER_ELEMENT = 6
MAX_NEW_TOKENS_FLOOR = 16
MAX_NEW_TOKENS_FALLBACK = 256


class ClientError(Exception):
    pass


class BackendError(ClientError):
    """Backend answered with a non-success status or a bad payload."""


class BackendTimeoutError(BackendError):
    """Endpoint unreachable after the configured retries."""


class EmptyCompletionError(ClientError):
    pass


class UnparseableError(ClientError):
    """No element group survived validation."""


@dataclass(frozen=True)
class DecodingParams:
    strategy: str = "topk"
    k: int = TOP_K_DEFAULT
    temperature: float = 1.0
    max_new_tokens: int = MAX_NEW_TOKENS_FALLBACK

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


def select_decoding(task: Task,
                    expected_elements: int | None = None,
                    strategy_override: str | None = None) -> DecodingParams:
    """Per-task decoding policy.

    Refinement samples from the full distribution (multinomial, no
    top-k); every other task uses top-k 50 at temperature 1.0.  The
    token budget is sized from the expected element count.
    """
    if expected_elements is not None and expected_elements >= 1:
        budget = TOKENS_PER_ELEMENT * expected_elements + MAX_NEW_TOKENS_FLOOR
    else:
        budget = MAX_NEW_TOKENS_FALLBACK
    if strategy_override is not None:
        strategy = strategy_override
    elif task is Task.REFINEMENT:
        strategy = "multinomial"
    else:
        strategy = "topk"
    return DecodingParams(strategy=strategy, k=TOP_K_DEFAULT,
                          temperature=1.0, max_new_tokens=budget)


def build_request(prompt: str, params: DecodingParams) -> dict:
    return {
        "prompt": prompt,
        "max_new_tokens": params.max_new_tokens,
        "decoding": {
            "strategy": params.strategy,
            "k": params.k,
            "temperature": params.temperature,
        },
        "stop": [PAIR_SEPARATOR],
    }


@dataclass(frozen=True)
class BackendEndpoint:
    url: str
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


class HttpBackend:
    """POSTs requests to a serving endpoint, retrying transport failures.

    Only connection-level failures are retried (the request is
    idempotent); protocol-level errors surface immediately.
    """

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint

    def complete(self, request: dict) -> str:
        last_exc = None
        for _ in range(self.endpoint.retries + 1):
            try:
                resp = requests.post(self.endpoint.url, json=request,
                                     timeout=self.endpoint.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
                completion = payload["completion"]
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendError(f"bad response payload: {exc}") from exc
            if not isinstance(completion, str):
                raise BackendError("completion must be a string")
            return completion
        raise BackendTimeoutError(
            f"{self.endpoint.url} unreachable after "
            f"{self.endpoint.retries + 1} attempts: {last_exc}")


_NL_COUNT_RE = re.compile(r"with (\d+) elements")
_MOCK_DEFAULT_ELEMENTS = 4
_MOCK_MAX_ELEMENTS = 64
_MOCK_MARGIN = 48


class MockBackend:
    """Offline stand-in: canned completions, else a deterministic stub.

    The synthesizer reads only the prompt's prefix fields (or scans a
    free-form prompt for a domain name and element count) and emits a
    grammatical single-column layout; identical prompts always yield
    identical completions.
    """

    def __init__(self,
                 registry: CategoryRegistry | None = None,
                 cfg: IntervalConfig = DEFAULT_CODEC,
                 table: dict | None = None):
        self.registry = registry if registry is not None else default_registry()
        self.cfg = cfg
        self.table = dict(table or {})
        self.calls = []

    def complete(self, request: dict) -> str:
        prompt = request.get("prompt")
        if not isinstance(prompt, str):
            raise BackendError("request has no prompt")
        self.calls.append({"prompt": prompt,
                           "decoding": dict(request.get("decoding") or {})})
        if prompt in self.table:
            return self.table[prompt]
        return self._synthesize(prompt)

    def _prompt_intent(self, prompt: str):
        try:
            parsed = parse_condition(prompt, cfg=self.cfg)
            return parsed.prefix.domain, parsed.prefix.object_number
        except PromptError:
            pass
        for domain in Domain:
            if domain.display in prompt or domain.value in prompt:
                count_match = _NL_COUNT_RE.search(prompt)
                return domain, int(count_match.group(1)) if count_match else None
        return Domain.ARTICLE, None

    def _synthesize(self, prompt: str) -> str:
        domain, count = self._prompt_intent(prompt)
        n = min(count or _MOCK_DEFAULT_ELEMENTS, _MOCK_MAX_ELEMENTS)
        rng = np.random.default_rng([zlib.crc32(prompt.encode("utf-8"))])
        labels = self.registry.labels_for(domain)
        side = self.cfg.max_side
        usable = side - 2 * _MOCK_MARGIN
        slot = usable // n
        elements = []
        for i in range(n):
            label = labels[int(rng.integers(len(labels)))]
            jitter = int(rng.integers(0, 17))
            x = _MOCK_MARGIN + jitter
            w = max(1, usable - 2 * jitter)
            y = _MOCK_MARGIN + i * slot
            h = max(1, slot - 8)
            elements.append(Element(label=label, box=BoundingBox(x, y, w, h)))
        layout = Layout(domain=domain, page_w=side, page_h=side,
                        elements=tuple(elements))
        return build_response(layout, self.cfg).text


def generate(prompt, params: DecodingParams, backend) -> str:
    """Request one completion and truncate it at the pair separator."""
    text = prompt.text if isinstance(prompt, ConditionText) else prompt
    completion = backend.complete(build_request(text, params))
    completion = completion.split(PAIR_SEPARATOR, 1)[0].strip()
    if not completion:
        raise EmptyCompletionError(f"empty completion for prompt {text[:80]!r}")
    return completion


def generate_many(prompts, params: DecodingParams, backend,
                  max_workers: int = 4) -> list:
    """Concurrent generation; results keep the order of ``prompts``."""
    prompts = list(prompts)
    if max_workers <= 1 or len(prompts) <= 1:
        return [generate(p, params, backend) for p in prompts]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda p: generate(p, params, backend), prompts))


@dataclass
class RepairLog:
    """Interventions applied while salvaging a completion."""

    events: list = field(default_factory=list)
    count_mismatch: bool = False

    def note(self, kind: str, detail: str) -> None:
        self.events.append({"kind": kind, "detail": detail})

    @property
    def interventions(self) -> int:
        return len(self.events)

    def to_dict(self) -> dict:
        return {"events": self.events, "count_mismatch": self.count_mismatch}


def validate_and_repair(text: str,
                        registry: CategoryRegistry,
                        domain: Domain,
                        cfg: IntervalConfig = DEFAULT_CODEC,
                        expected_elements: int | None = None,
                        page_w: int | None = None,
                        page_h: int | None = None,
                        column_count: int = 1):
    """Salvage a raw completion into a layout plus a repair log.

    Malformed element groups are dropped, zero-sized boxes bumped to one
    pixel, and out-of-page boxes clamped; every intervention is logged.
    An element-count mismatch against the prompt is flagged, not fixed.
    Raises :class:`UnparseableError` when nothing survives.
    """
    page_w = page_w if page_w is not None else cfg.max_side
    page_h = page_h if page_h is not None else cfg.max_side
    allowed = registry.labels_for(domain)
    log = RepairLog()
    elements = []
    for pos, group in enumerate(text.strip().split(";")):
        tokens = group.split()
        try:
            if not tokens:
                raise ResponseParseError("empty group")
            label, geometry = _parse_group_tokens(tokens, cfg)
            if label is None:
                raise ResponseParseError("no class label")
            if label not in allowed:
                raise ResponseParseError(f"label {label!r} not in registry")
            absent = [k.name for k in GEOMETRY_KINDS if k not in geometry]
            if absent:
                raise ResponseParseError(f"missing {','.join(absent)}")
        except (ResponseParseError, OutOfRangeError) as exc:
            log.note("dropped_group", f"group {pos}: {exc}")
            continue
        x, y = geometry[AttrKind.X], geometry[AttrKind.Y]
        w, h = geometry[AttrKind.W], geometry[AttrKind.H]
        if w < 1:
            log.note("zero_size", f"group {pos}: w bumped to 1")
            w = 1
        if h < 1:
            log.note("zero_size", f"group {pos}: h bumped to 1")
            h = 1
        if x > page_w - 1:
            log.note("out_of_page", f"group {pos}: x {x} clamped")
            x = page_w - 1
        if y > page_h - 1:
            log.note("out_of_page", f"group {pos}: y {y} clamped")
            y = page_h - 1
        if x + w > page_w:
            log.note("out_of_page", f"group {pos}: w {w} clamped")
            w = page_w - x
        if y + h > page_h:
            log.note("out_of_page", f"group {pos}: h {h} clamped")
            h = page_h - y
        elements.append(Element(label=label, box=BoundingBox(x, y, w, h)))

    if not elements:
        raise UnparseableError("no element group survived repair")
    if expected_elements is not None and len(elements) != expected_elements:
        log.count_mismatch = True
        log.note("count_mismatch",
                 f"prompt announced {expected_elements}, parsed {len(elements)}")
    layout = Layout(domain=domain, page_w=page_w, page_h=page_h,
                    elements=tuple(elements), column_count=column_count)
    return layout, log
