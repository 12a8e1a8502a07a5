"""Shared builders for synthetic layouts and raw dataset fixtures."""

from __future__ import annotations

import json

import numpy as np
import pytest

from layoutgen.core import (
    DEFAULT_LABELS,
    BoundingBox,
    Domain,
    Element,
    Layout,
    StatusMask,
)


def make_element(label, x, y, w, h, mask=None):
    return Element(label=label, box=BoundingBox(x, y, w, h),
                   mask=mask or StatusMask.all_known())


def make_layout(boxes, labels=None, domain=Domain.ARTICLE,
                page=(1024, 1024), columns=1):
    labels = labels or ["text"] * len(boxes)
    elements = tuple(make_element(lab, *box) for lab, box in zip(labels, boxes))
    return Layout(domain=domain, page_w=page[0], page_h=page[1],
                  elements=elements, column_count=columns)


def random_normalized_layout(rng: np.random.Generator,
                             domain: Domain = Domain.ARTICLE,
                             n: int | None = None,
                             max_elements: int = 8) -> Layout:
    """A layout in canonical form: long side 1024, values in [0, 1023]."""
    if rng.random() < 0.5:
        page_w, page_h = 1024, int(rng.integers(512, 1025))
    else:
        page_w, page_h = int(rng.integers(512, 1025)), 1024
    n = n or int(rng.integers(1, max_elements + 1))
    labels = DEFAULT_LABELS[domain]
    elements = []
    for _ in range(n):
        w = int(rng.integers(1, page_w))
        h = int(rng.integers(1, page_h))
        x = int(rng.integers(0, page_w - w + 1))
        y = int(rng.integers(0, page_h - h + 1))
        label = labels[int(rng.integers(len(labels)))]
        elements.append(make_element(label, x, y, w, h))
    return Layout(domain=domain, page_w=page_w, page_h=page_h,
                  elements=tuple(elements))


def random_corpus(seed: int, domain: Domain, size: int,
                  min_elements: int = 2, max_elements: int = 8):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        n = int(rng.integers(min_elements, max_elements + 1))
        out.append(random_normalized_layout(rng, domain=domain, n=n))
    return tuple(out)


def write_generic_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def generic_record(page_w, page_h, elements, domain=None, columns=None):
    record = {"page": {"w": page_w, "h": page_h},
              "elements": [{"label": lab, "bbox": list(box)}
                           for lab, box in elements]}
    if domain is not None:
        record["domain"] = domain
    if columns is not None:
        record["columns"] = columns
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
