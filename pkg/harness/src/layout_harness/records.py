"""Training-pair records: JSONL loading, validation, and the joined text form.

A record is one prompt/completion pair emitted by the layout toolkit's
``emit-train`` command. The model is trained on ``prompt + "#" + completion``
with the loss restricted to the completion side, so neither half may contain
the separator itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

SEPARATOR = "#"


class SchemaError(ValueError):
    """A record file or record object does not match the expected shape."""


@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    completion: str

    def joined(self) -> str:
        return self.prompt + SEPARATOR + self.completion


def parse_record(obj: object, locus: str = "record") -> TrainingRecord:
    """Validate one decoded JSON object; extra fields are allowed and ignored."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{locus}: record must be a JSON object")
    for key in ("prompt", "completion"):
        if key not in obj:
            raise SchemaError(f"{locus}: missing field {key!r}")
        if not isinstance(obj[key], str):
            raise SchemaError(f"{locus}: field {key!r} must be a string")
        if SEPARATOR in obj[key]:
            raise SchemaError(f"{locus}: field {key!r} must not contain {SEPARATOR!r}")
    if not obj["completion"]:
        raise SchemaError(f"{locus}: completion must be non-empty")
    return TrainingRecord(prompt=obj["prompt"], completion=obj["completion"])


def load_records(path: str) -> list[TrainingRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            records.append(parse_record(obj, locus=f"{path}:{lineno}"))
    if not records:
        raise SchemaError(f"{path}: no records")
    return records
