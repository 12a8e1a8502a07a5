"""Core layout data model: domains, boxes, elements, pages, and normalization.

Everything downstream (encoding, prompt construction, sampling, metrics)
works on the immutable types defined here.  Geometry is canonicalized so
that the longer page side equals ``NORMALIZED_LONG_SIDE`` pixels and all
coordinates are non-negative integers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

NORMALIZED_LONG_SIDE = 1024

# Raw annotations occasionally overhang the page by a fraction of a pixel;
# anything beyond this is treated as a bad box rather than rounding noise.
_EDGE_TOLERANCE = 0.5


class LayoutError(Exception):
    """Base class for layout model errors."""


class EmptyPageError(LayoutError):
    """Page with a non-positive side length."""


class OutOfPageError(LayoutError):
    """Box extends past the page boundary by more than rounding tolerance."""


class NegativeValueError(LayoutError):
    """Geometric value below the representable range."""


class Domain(enum.Enum):
    """Layout domain; ``value`` is the machine id, ``display`` the prompt form."""

    ARTICLE = "article"
    APP_UI = "appui"
    MAGAZINE = "magazine"
    SLIDE = "slide"

    @property
    def display(self) -> str:
        return _DOMAIN_DISPLAY[self]

    @classmethod
    def from_text(cls, text: str) -> "Domain":
        """Accept either the machine id or the display form."""
        for domain in cls:
            if text == domain.value or text == domain.display:
                return domain
        raise ValueError(f"unknown domain: {text!r}")


_DOMAIN_DISPLAY = {
    Domain.ARTICLE: "article",
    Domain.APP_UI: "App UI",
    Domain.MAGAZINE: "magazine",
    Domain.SLIDE: "slide",
}


class AttrKind(enum.Enum):
    """Identity of a geometric attribute; ``index`` orders the code intervals."""

    X = 0
    Y = 1
    W = 2
    H = 3

    @property
    def index(self) -> int:
        return self.value


GEOMETRY_KINDS = (AttrKind.X, AttrKind.Y, AttrKind.W, AttrKind.H)


class AttributeStatus(enum.Enum):
    KNOWN = "known"
    UNKNOWN = "unknown"
    NOISY = "noisy"


def _as_number(value):
    # Integral floats collapse to int so canonical layouts serialize cleanly.
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in page coordinates (top-left origin)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_number(self.x))
        object.__setattr__(self, "y", _as_number(self.y))
        object.__setattr__(self, "w", _as_number(self.w))
        object.__setattr__(self, "h", _as_number(self.h))
        if self.x < -_EDGE_TOLERANCE or self.y < -_EDGE_TOLERANCE:
            raise NegativeValueError(f"negative box origin: ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise LayoutError(f"degenerate box size: ({self.w}, {self.h})")

    @property
    def area(self) -> float:
        return self.w * self.h

    def get(self, kind: AttrKind) -> float:
        return (self.x, self.y, self.w, self.h)[kind.index]

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class StatusMask:
    """Per-attribute conditioning status for (class, x, y, w, h)."""

    c: AttributeStatus = AttributeStatus.KNOWN
    x: AttributeStatus = AttributeStatus.KNOWN
    y: AttributeStatus = AttributeStatus.KNOWN
    w: AttributeStatus = AttributeStatus.KNOWN
    h: AttributeStatus = AttributeStatus.KNOWN

    def __post_init__(self):
        if self.c is AttributeStatus.NOISY:
            raise ValueError("class labels are never noisy")

    @classmethod
    def all_known(cls) -> "StatusMask":
        return cls()

    @classmethod
    def all_unknown(cls) -> "StatusMask":
        u = AttributeStatus.UNKNOWN
        return cls(u, u, u, u, u)

    def geometry(self, kind: AttrKind) -> AttributeStatus:
        return (self.x, self.y, self.w, self.h)[kind.index]

    def geometry_statuses(self) -> tuple:
        return (self.x, self.y, self.w, self.h)

    @property
    def is_empty(self) -> bool:
        """True when no attribute is conditioned on (all unknown)."""
        statuses = (self.c,) + self.geometry_statuses()
        return all(s is AttributeStatus.UNKNOWN for s in statuses)

    def code(self) -> str:
        """Compact audit form, one of k/u/n per attribute in (c,x,y,w,h) order."""
        return "".join(s.value[0] if s is not AttributeStatus.KNOWN else "k"
                       for s in (self.c, self.x, self.y, self.w, self.h))


@dataclass(frozen=True)
class Element:
    """One layout element: a lowercase class label, a box, and its mask."""

    label: str
    box: BoundingBox
    mask: StatusMask = field(default_factory=StatusMask.all_known)

    def __post_init__(self):
        if not self.label or self.label != self.label.lower():
            raise ValueError(f"labels must be non-empty lowercase: {self.label!r}")

    def with_mask(self, mask: StatusMask) -> "Element":
        return replace(self, mask=mask)

    def with_box(self, box: BoundingBox) -> "Element":
        return replace(self, box=box)


@dataclass(frozen=True)
class Layout:
    """A page with at least one element; geometry in page coordinates."""

    domain: Domain
    page_w: int
    page_h: int
    elements: tuple
    column_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.page_w < 1 or self.page_h < 1:
            raise EmptyPageError(f"page {self.page_w}x{self.page_h}")
        if not self.elements:
            raise LayoutError("layout needs at least one element")
        if self.column_count < 1:
            raise ValueError("column_count must be >= 1")

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def labels(self) -> tuple:
        return tuple(e.label for e in self.elements)

    def with_elements(self, elements: Iterable[Element]) -> "Layout":
        return replace(self, elements=tuple(elements))

    def with_masks(self, masks: Sequence[StatusMask]) -> "Layout":
        if len(masks) != len(self.elements):
            raise ValueError("one mask per element required")
        return self.with_elements(
            e.with_mask(m) for e, m in zip(self.elements, masks))


def _check_label(label: str) -> None:
    if not label or label != label.lower():
        raise ValueError(f"labels must be non-empty lowercase: {label!r}")
    if ";" in label or "#" in label:
        raise ValueError(f"label contains a reserved separator: {label!r}")
    if any(word.isdigit() for word in label.split()):
        raise ValueError(f"label words must not be purely numeric: {label!r}")


@dataclass(frozen=True)
class CategoryRegistry:
    """Ordered per-domain class label sets plus a merged global view."""

    per_domain: Mapping[Domain, tuple]

    def __post_init__(self):
        frozen = {}
        for domain, labels in self.per_domain.items():
            labels = tuple(labels)
            if not labels:
                raise ValueError(f"{domain.value}: empty label set")
            seen = set()
            for label in labels:
                _check_label(label)
                if label in seen:
                    raise ValueError(f"{domain.value}: duplicate label {label!r}")
                seen.add(label)
            frozen[domain] = labels
        object.__setattr__(self, "per_domain", frozen)

    def labels_for(self, domain: Domain) -> tuple:
        if domain not in self.per_domain:
            raise KeyError(f"no labels registered for domain {domain.value}")
        return self.per_domain[domain]

    def contains(self, domain: Domain, label: str) -> bool:
        return domain in self.per_domain and label in self.per_domain[domain]

    @property
    def merged(self) -> tuple:
        """All labels across domains, deduplicated in first-occurrence order."""
        out, seen = [], set()
        for domain in Domain:
            for label in self.per_domain.get(domain, ()):
                if label not in seen:
                    seen.add(label)
                    out.append(label)
        return tuple(out)


# Demo label sets.  Real registries are derived from ingested data; these
# back the mock backend, fixtures, and rendering defaults.
DEFAULT_LABELS = {
    Domain.ARTICLE: ("text", "title", "list", "table", "figure"),
    Domain.APP_UI: (
        "text", "image", "icon", "text button", "list item", "input",
        "background image", "card", "web view", "radio button", "drawer",
        "checkbox", "advertisement", "modal", "pager indicator", "slider",
        "on/off switch", "button bar", "toolbar", "number stepper",
        "multi-tab", "date picker", "map view", "video", "bottom navigation"),
    Domain.MAGAZINE: (
        "text", "image", "headline", "text-over-image", "headline-over-image"),
    Domain.SLIDE: (
        "title", "subtitle", "text", "list", "image", "diagram", "table",
        "code", "caption", "header", "footer", "logo"),
}


def default_registry() -> CategoryRegistry:
    return CategoryRegistry(dict(DEFAULT_LABELS))


def quantize(value: float, axis_length: int | None = None) -> int:
    """Round half up to an integer, clamping to [0, axis_length] when given."""
    if value < -0.5:
        raise NegativeValueError(f"cannot quantize {value}")
    q = math.floor(value + 0.5)
    if q < 0:
        q = 0
    if axis_length is not None and q > axis_length:
        q = axis_length
    return q


def _fit_segment(pos: int, size: int, axis: int) -> tuple:
    # Rounding both endpoints can overshoot the axis by one pixel at most.
    if pos + size > axis:
        if pos + size > axis + 1:
            raise OutOfPageError(f"segment ({pos}, {size}) exceeds axis {axis}")
        size = axis - pos
    if size < 1:
        size = 1
        if pos + size > axis:
            pos = axis - 1
    return pos, size


def normalize_layout(raw: Layout, target_long: int = NORMALIZED_LONG_SIDE) -> Layout:
    """Rescale a layout so its longer page side equals ``target_long``.

    Coordinates are quantized with round-half-up, degenerate boxes are
    bumped to one pixel, and boxes are kept inside the page.  Element
    order, masks, and the column count are preserved.
    """
    if target_long < 1:
        raise EmptyPageError(f"target side {target_long}")
    long_side = max(raw.page_w, raw.page_h)
    scale = target_long / long_side
    page_w = target_long if raw.page_w == long_side else max(1, quantize(raw.page_w * scale))
    page_h = target_long if raw.page_h == long_side else max(1, quantize(raw.page_h * scale))

    elements = []
    for i, element in enumerate(raw.elements):
        b = element.box
        if b.x + b.w > raw.page_w + _EDGE_TOLERANCE or b.y + b.h > raw.page_h + _EDGE_TOLERANCE:
            raise OutOfPageError(f"element {i} box {b.as_tuple()} exceeds "
                                 f"page {raw.page_w}x{raw.page_h}")
        x = quantize(b.x * scale, page_w)
        y = quantize(b.y * scale, page_h)
        w = quantize(b.w * scale, page_w)
        h = quantize(b.h * scale, page_h)
        x, w = _fit_segment(x, w, page_w)
        y, h = _fit_segment(y, h, page_h)
        elements.append(element.with_box(BoundingBox(x, y, w, h)))

    return Layout(domain=raw.domain, page_w=page_w, page_h=page_h,
                  elements=tuple(elements), column_count=raw.column_count)


def _contiguous_sse(prefix: list, prefix_sq: list, i: int, j: int) -> float:
    """Sum of squared deviations of points[i:j] (prefix sums over sorted pts)."""
    n = j - i
    s = prefix[j] - prefix[i]
    sq = prefix_sq[j] - prefix_sq[i]
    return sq - s * s / n


def _best_partition_sse(points: list, k: int) -> float:
    """Minimal within-cluster SSE over contiguous k-partitions of sorted points."""
    n = len(points)
    prefix = [0.0]
    prefix_sq = [0.0]
    for p in points:
        prefix.append(prefix[-1] + p)
        prefix_sq.append(prefix_sq[-1] + p * p)
    # dp[c][j]: best SSE of first j points in c clusters
    dp = [[math.inf] * (n + 1) for _ in range(k + 1)]
    dp[0][0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            best = math.inf
            for i in range(c - 1, j):
                if dp[c - 1][i] == math.inf:
                    continue
                cand = dp[c - 1][i] + _contiguous_sse(prefix, prefix_sq, i, j)
                if cand < best:
                    best = cand
            dp[c][j] = best
    return dp[k][n]


MAX_COLUMNS = 4
_COLUMN_SPREAD_FLOOR = 0.25     # tighter spread than this is a single column
_COLUMN_ELBOW_GAIN = 0.10       # extra cluster must cut >=10% of the total SSE


def infer_column_count(layout: Layout) -> int:
    """Estimate the column count from horizontal centers of text elements.

    Non-article domains are treated as single-column.  Article pages
    cluster the x-centers of elements labeled "text" (all elements if
    none); a cluster is added only while it removes more than 10% of the
    single-cluster SSE, up to ``MAX_COLUMNS``.
    """
    if layout.domain is not Domain.ARTICLE:
        return 1
    boxes = [e.box for e in layout.elements if e.label == "text"]
    if not boxes:
        boxes = [e.box for e in layout.elements]
    centers = sorted((b.x + b.w / 2) / layout.page_w for b in boxes)
    if centers[-1] - centers[0] < _COLUMN_SPREAD_FLOOR:
        return 1
    base = _best_partition_sse(centers, 1)
    k, sse = 1, base
    while k < min(MAX_COLUMNS, len(centers)) and sse > 0:
        nxt = _best_partition_sse(centers, k + 1)
        if sse - nxt <= _COLUMN_ELBOW_GAIN * base:
            break
        k, sse = k + 1, nxt
    return k
