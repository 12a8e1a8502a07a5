"""Interval codec for geometric attributes.

Each attribute kind (x, y, w, h) owns a disjoint integer interval of
width ``max_side``; a value is encoded by adding its kind's interval
offset.  A single decoded token therefore carries both the attribute
identity and its magnitude, so serialized elements never need
placeholder tokens for unknown attributes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    NORMALIZED_LONG_SIDE,
    AttrKind,
    AttributeStatus,
    Element,
    GEOMETRY_KINDS,
)


class CodecError(Exception):
    """Base class for codec errors."""


class OutOfRangeError(CodecError):
    """Value or code word outside the representable range."""


@dataclass(frozen=True)
class IntervalConfig:
    """Interval width shared by all four attribute kinds."""

    max_side: int = NORMALIZED_LONG_SIDE

    def __post_init__(self):
        if self.max_side < 1:
            raise ValueError("max_side must be >= 1")

    @property
    def offsets(self) -> tuple:
        m = self.max_side
        return (0, m, 2 * m, 3 * m)

    def offset(self, kind: AttrKind) -> int:
        return kind.index * self.max_side


DEFAULT_CODEC = IntervalConfig()


def encode(kind: AttrKind, value: int, cfg: IntervalConfig = DEFAULT_CODEC) -> int:
    """Encode one geometric value as ``value + offset(kind)``."""
    if not 0 <= value <= cfg.max_side:
        raise OutOfRangeError(f"{kind.name}={value} outside [0, {cfg.max_side}]")
    return value + cfg.offset(kind)


def decode(encoded: int, cfg: IntervalConfig = DEFAULT_CODEC) -> tuple:
    """Invert :func:`encode`, returning ``(kind, value)``.

    Interval boundaries belong to the higher kind except the top of the
    last interval, which stays an H value.
    """
    if not 0 <= encoded <= 4 * cfg.max_side:
        raise OutOfRangeError(f"code {encoded} outside [0, {4 * cfg.max_side}]")
    index = min(encoded // cfg.max_side, 3)
    kind = AttrKind(index)
    return kind, encoded - cfg.offset(kind)


def encode_element(element: Element, cfg: IntervalConfig = DEFAULT_CODEC) -> list:
    """Serialize one element to tokens, skipping unknown attributes.

    The class label leads when known; known and noisy geometry follows in
    (x, y, w, h) order.  Values are clamped to ``max_side - 1`` so every
    code word lies strictly inside its interval.
    """
    tokens = []
    if element.mask.c is AttributeStatus.KNOWN:
        tokens.append(element.label)
    for kind in GEOMETRY_KINDS:
        if element.mask.geometry(kind) is AttributeStatus.UNKNOWN:
            continue
        value = int(element.box.get(kind))
        value = min(max(value, 0), cfg.max_side - 1)
        tokens.append(str(encode(kind, value, cfg)))
    return tokens
