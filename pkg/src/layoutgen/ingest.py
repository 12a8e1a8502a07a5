"""Dataset ingestion: raw annotation files to a normalized layout store.

Two input shapes are supported: COCO-style detection JSON (images +
annotations + categories) and a generic per-page JSON record::

    {"page": {"w": 612, "h": 792}, "domain": "article",
     "elements": [{"label": "text", "bbox": [61, 79, 122, 158]}]}

Generic records may be a single object, an array, or JSON Lines, and may
carry an optional ``"columns"`` override.  Filters run in a fixed order:
label drops, then the element-count cap, then normalization; dropped
records are reported, malformed files raise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    BoundingBox,
    CategoryRegistry,
    Domain,
    Element,
    Layout,
    LayoutError,
    infer_column_count,
    normalize_layout,
)


class IngestError(Exception):
    pass


class ParseError(IngestError):
    """Malformed input file or record; the message carries the locus."""


class TooFewSamplesError(IngestError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """Per-dataset ingestion rules."""

    name: str
    domain: Domain
    format: str                      # "coco" or "generic"
    max_elements: int | None = None
    drop_labels: frozenset = frozenset()
    official_split: bool = False     # separate train/test inputs vs seeded 9:1

    def __post_init__(self):
        if self.format not in ("coco", "generic"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.max_elements is not None and self.max_elements < 1:
            raise ValueError("max_elements must be >= 1")


PRESETS = {
    "publaynet": DatasetSpec(name="publaynet", domain=Domain.ARTICLE,
                             format="coco", max_elements=25,
                             official_split=True),
    "rico": DatasetSpec(name="rico", domain=Domain.APP_UI,
                        format="generic", max_elements=40),
    "magazine": DatasetSpec(name="magazine", domain=Domain.MAGAZINE,
                            format="generic", max_elements=24,
                            drop_labels=frozenset({"background"})),
    "slide": DatasetSpec(name="slide", domain=Domain.SLIDE,
                         format="generic"),
}


@dataclass
class FilterReport:
    """Outcome of one ingestion pass: kept count plus dropped loci."""

    kept: int = 0
    dropped: list = field(default_factory=list)

    def drop(self, locus: str, reason: str) -> None:
        self.dropped.append({"locus": locus, "reason": reason})

    def reason_counts(self) -> dict:
        counts = {}
        for entry in self.dropped:
            reason = entry["reason"].split(":", 1)[0]
            counts[reason] = counts.get(reason, 0) + 1
        return dict(sorted(counts.items()))

    def to_dict(self) -> dict:
        return {"kept": self.kept, "dropped": self.dropped,
                "reason_counts": self.reason_counts()}


@dataclass(frozen=True)
class IngestResult:
    layouts: tuple
    report: FilterReport


@dataclass(frozen=True)
class SplitResult:
    train: tuple
    test: tuple


def unify_labels(labels: Iterable[str]) -> tuple:
    """Lowercase labels and deduplicate, keeping first-occurrence order."""
    out, seen = [], set()
    for label in labels:
        low = label.lower()
        if low not in seen:
            seen.add(low)
            out.append(low)
    return tuple(out)


def registry_from_layouts(layouts: Iterable[Layout]) -> CategoryRegistry:
    """Derive a registry from observed labels, per domain, in data order."""
    per_domain: dict = {}
    for layout in layouts:
        bucket = per_domain.setdefault(layout.domain, [])
        for element in layout.elements:
            if element.label not in bucket:
                bucket.append(element.label)
    if not per_domain:
        raise ValueError("no layouts to derive a registry from")
    return CategoryRegistry({d: tuple(v) for d, v in per_domain.items()})


def _expand_paths(paths) -> list:
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    out = []
    for path in paths:
        path = os.fspath(path)
        if os.path.isdir(path):
            out.extend(os.path.join(path, name) for name in sorted(os.listdir(path)))
        else:
            out.append(path)
    return out


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def _iter_generic_records(path: str):
    """Yield (locus, record) pairs from .json or .jsonl generic files."""
    if path.endswith(".jsonl"):
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield f"{path}:{lineno}", json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        return
    payload = _load_json(path)
    if isinstance(payload, list):
        for i, record in enumerate(payload):
            yield f"{path}[{i}]", record
    else:
        yield path, payload


def _generic_raw_layout(locus: str, record, spec: DatasetSpec):
    if not isinstance(record, dict):
        raise ParseError(f"{locus}: record must be an object")
    try:
        page = record["page"]
        page_w, page_h = int(page["w"]), int(page["h"])
        raw_elements = record["elements"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{locus}: missing page/elements fields") from exc
    domain = spec.domain
    if "domain" in record and record["domain"] not in (domain.value, domain.display):
        raise ParseError(f"{locus}: domain {record['domain']!r} does not match "
                         f"preset {domain.value!r}")
    elements = []
    for i, entry in enumerate(raw_elements):
        try:
            label = str(entry["label"]).lower()
            x, y, w, h = (float(v) for v in entry["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{locus}: element {i} malformed") from exc
        elements.append((label, x, y, w, h))
    columns = record.get("columns")
    if columns is not None:
        columns = int(columns)
        if columns < 1:
            raise ParseError(f"{locus}: columns must be >= 1")
    return locus, page_w, page_h, elements, columns


def _iter_coco_layouts(path: str, spec: DatasetSpec):
    """Yield raw layout tuples from one COCO detection file, in file order."""
    payload = _load_json(path)
    try:
        images = payload["images"]
        annotations = payload["annotations"]
        categories = payload["categories"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: not a COCO detection file") from exc
    label_of = {}
    for cat in categories:
        try:
            label_of[cat["id"]] = str(cat["name"]).lower()
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: malformed category entry") from exc
    by_image: dict = {}
    for i, ann in enumerate(annotations):
        try:
            image_id = ann["image_id"]
            cat_id = ann["category_id"]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: annotation {i} malformed") from exc
        if cat_id not in label_of:
            raise ParseError(f"{path}: annotation {i} has unknown category {cat_id}")
        by_image.setdefault(image_id, []).append((label_of[cat_id], x, y, w, h))
    for img in images:
        try:
            image_id = img["id"]
            page_w, page_h = int(img["width"]), int(img["height"])
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}: malformed image entry") from exc
        elements = by_image.get(image_id, [])
        yield f"{path}#image={image_id}", page_w, page_h, elements, None


def ingest(paths, spec: DatasetSpec) -> IngestResult:
    """Parse, filter, and normalize raw annotation files.

    Records that fail a filter (dropped class labels leaving nothing, too
    many elements, bad geometry) are skipped and reported; structurally
    malformed files raise :class:`ParseError`.
    """
    report = FilterReport()
    layouts = []
    for path in _expand_paths(paths):
        if spec.format == "coco":
            raw_iter = _iter_coco_layouts(path, spec)
        else:
            raw_iter = (_generic_raw_layout(locus, record, spec)
                        for locus, record in _iter_generic_records(path))
        for locus, page_w, page_h, raw_elements, columns in raw_iter:
            kept = [(label, x, y, w, h) for label, x, y, w, h in raw_elements
                    if label not in spec.drop_labels]
            if not kept:
                report.drop(locus, "no_elements")
                continue
            if spec.max_elements is not None and len(kept) > spec.max_elements:
                report.drop(locus, f"too_many_elements:{len(kept)}")
                continue
            try:
                elements = [Element(label=label, box=BoundingBox(x, y, w, h))
                            for label, x, y, w, h in kept]
                raw = Layout(domain=spec.domain, page_w=page_w, page_h=page_h,
                             elements=tuple(elements))
                normalized = normalize_layout(raw)
            except (LayoutError, ValueError) as exc:
                report.drop(locus, f"bad_geometry:{exc}")
                continue
            if columns is None:
                columns = infer_column_count(normalized)
            layouts.append(Layout(domain=normalized.domain,
                                  page_w=normalized.page_w,
                                  page_h=normalized.page_h,
                                  elements=normalized.elements,
                                  column_count=columns))
            report.kept += 1
    return IngestResult(layouts=tuple(layouts), report=report)


MIN_SPLIT_SIZE = 10


def split(layouts: Sequence[Layout], seed: int,
          train_parts: int = 9, test_parts: int = 1) -> SplitResult:
    """Seeded shuffle split; sizes match the ratio to within one sample."""
    n = len(layouts)
    if n < MIN_SPLIT_SIZE:
        raise TooFewSamplesError(f"need at least {MIN_SPLIT_SIZE}, got {n}")
    if train_parts < 1 or test_parts < 1:
        raise ValueError("split parts must be positive")
    order = np.random.default_rng([seed]).permutation(n)
    train_n = round(n * train_parts / (train_parts + test_parts))
    train_n = min(max(train_n, 1), n - 1)
    train = tuple(layouts[int(i)] for i in order[:train_n])
    test = tuple(layouts[int(i)] for i in order[train_n:])
    return SplitResult(train=train, test=test)


def layout_to_record(layout: Layout) -> dict:
    return {
        "domain": layout.domain.value,
        "page": {"w": layout.page_w, "h": layout.page_h},
        "columns": layout.column_count,
        "elements": [
            {"label": e.label,
             "bbox": [int(e.box.x), int(e.box.y), int(e.box.w), int(e.box.h)]}
            for e in layout.elements
        ],
    }


def layout_from_record(record: dict, locus: str = "<record>") -> Layout:
    try:
        domain = Domain.from_text(record["domain"])
        page = record["page"]
        elements = tuple(
            Element(label=str(e["label"]),
                    box=BoundingBox(*(int(v) for v in e["bbox"])))
            for e in record["elements"])
        return Layout(domain=domain, page_w=int(page["w"]), page_h=int(page["h"]),
                      elements=elements, column_count=int(record.get("columns", 1)))
    except (KeyError, TypeError, ValueError, LayoutError) as exc:
        raise ParseError(f"{locus}: bad layout record ({exc})") from exc


def write_store(layouts: Iterable[Layout], path) -> int:
    """Write layouts as JSON Lines with deterministic bytes; returns count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for layout in layouts:
            fh.write(json.dumps(layout_to_record(layout), sort_keys=True,
                                separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def read_store(path) -> tuple:
    layouts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            layouts.append(layout_from_record(record, locus=f"{path}:{lineno}"))
    return tuple(layouts)
