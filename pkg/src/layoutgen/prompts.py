"""Serialization of layout conditions and layout responses.

A condition string carries a prefix (refine flag, domain, optional
element and column counts), optional relation constraints, and one
token group per element with only its known or noisy attributes.  A
response string is always a complete layout in the same element grammar.
Prompt and target are joined with ``#`` for training pairs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .codec import (
    DEFAULT_CODEC,
    IntervalConfig,
    OutOfRangeError,
    decode,
    encode,
    encode_element,
)
from .core import (
    AttrKind,
    AttributeStatus,
    BoundingBox,
    CategoryRegistry,
    Domain,
    Element,
    GEOMETRY_KINDS,
    Layout,
    StatusMask,
)

FIELD_SEPARATOR = ";"
PAIR_SEPARATOR = "#"
RELATION_TAG = "r"

REFINE_WORD = "refine"
UNREFINE_WORD = "unrefine"


class PromptError(Exception):
    """Base class for condition/response text errors."""


class InvalidPrefixError(PromptError):
    pass


class IncompleteLayoutError(PromptError):
    """Response construction requires every attribute to be known."""


class SeparatorCollisionError(PromptError):
    """A payload already contains the training pair separator."""


class ResponseParseError(PromptError):
    """Base class for response parsing failures."""


class UnknownLabelError(ResponseParseError):
    pass


class DuplicateAttributeError(ResponseParseError):
    pass


class MissingAttributeError(ResponseParseError):
    pass


class MalformedGroupError(ResponseParseError):
    pass


class UnknownTemplateError(PromptError):
    pass


class RelationKind(enum.Enum):
    TOP = "top"
    BOTTOM = "bottom"
    LEFT = "left"
    RIGHT = "right"
    OVERLAPPED = "overlapped"
    SMALLER = "smaller"
    LARGER = "larger"
    EQUAL = "equal"


LOCATION_RELATIONS = frozenset({
    RelationKind.TOP, RelationKind.BOTTOM, RelationKind.LEFT,
    RelationKind.RIGHT, RelationKind.OVERLAPPED,
})
SIZE_RELATIONS = frozenset({
    RelationKind.SMALLER, RelationKind.LARGER, RelationKind.EQUAL,
})


@dataclass(frozen=True)
class RelationConstraint:
    """Directed pairwise constraint between element ordinals (0-based)."""

    subject_index: int
    predicate: RelationKind
    object_index: int

    def __post_init__(self):
        if self.subject_index < 0 or self.object_index < 0:
            raise ValueError("element ordinals are 0-based and non-negative")
        if self.subject_index == self.object_index:
            raise ValueError("relation needs two distinct elements")

    def serialize(self) -> str:
        return f"{RELATION_TAG} {self.subject_index} {self.predicate.value} {self.object_index}"


@dataclass(frozen=True)
class PrefixPrompt:
    """Leading condition fields: flag, domain, optional counts.

    The element and column counts travel together: both present for
    element-conditioned tasks, both absent for unconditional ones.
    """

    refine: bool
    domain: Domain
    object_number: int | None = None
    column_number: int | None = None

    def __post_init__(self):
        if (self.object_number is None) != (self.column_number is None):
            raise InvalidPrefixError("element and column counts travel together")
        if self.object_number is not None and self.object_number < 1:
            raise InvalidPrefixError(f"object_number {self.object_number}")
        if self.column_number is not None and self.column_number < 1:
            raise InvalidPrefixError(f"column_number {self.column_number}")

    @property
    def flag_word(self) -> str:
        return REFINE_WORD if self.refine else UNREFINE_WORD

    def serialize_fields(self) -> list:
        fields = [self.flag_word, self.domain.display]
        if self.object_number is not None:
            fields.append(str(self.object_number))
            fields.append(str(self.column_number))
        return fields


@dataclass(frozen=True)
class ConditionText:
    """Serialized condition plus the structures it was built from."""

    text: str
    prefix: PrefixPrompt | None = None
    relations: tuple = ()
    elements: tuple | None = None


@dataclass(frozen=True)
class ResponseText:
    """Serialized complete layout."""

    text: str


def build_condition(prefix: PrefixPrompt,
                    relations=(),
                    elements=(),
                    cfg: IntervalConfig = DEFAULT_CODEC) -> ConditionText:
    """Serialize a condition: prefix fields, relations, element groups.

    Element groups keep their position even when fully unknown, so the
    group count always equals ``object_number`` for element-conditioned
    tasks; unconditional conditions pass no elements at all.
    """
    relations = tuple(relations)
    elements = tuple(elements)
    if prefix.object_number is not None and elements \
            and len(elements) != prefix.object_number:
        raise InvalidPrefixError(
            f"prefix says {prefix.object_number} elements, got {len(elements)}")
    limit = prefix.object_number if prefix.object_number is not None else len(elements)
    for rel in relations:
        if rel.subject_index >= limit or rel.object_index >= limit:
            raise ValueError(f"relation ordinal out of range: {rel.serialize()}")
    groups = [rel.serialize() for rel in relations]
    groups += [" ".join(encode_element(e, cfg)) for e in elements]
    text = FIELD_SEPARATOR.join(prefix.serialize_fields() + groups)
    return ConditionText(text=text, prefix=prefix, relations=relations,
                         elements=elements or None)


def build_response(layout: Layout, cfg: IntervalConfig = DEFAULT_CODEC) -> ResponseText:
    """Serialize a complete layout; every attribute must be known."""
    groups = []
    for i, element in enumerate(layout.elements):
        statuses = (element.mask.c,) + element.mask.geometry_statuses()
        if any(s is not AttributeStatus.KNOWN for s in statuses):
            raise IncompleteLayoutError(f"element {i} has non-known attributes")
        tokens = encode_element(element, cfg)
        groups.append(" ".join(tokens))
    return ResponseText(text=FIELD_SEPARATOR.join(groups))


def _is_code_token(token: str) -> bool:
    return token.isascii() and token.isdigit()


def _parse_group_tokens(tokens: list, cfg: IntervalConfig):
    """Split a group into (label or None, {kind: value}), enforcing grammar."""
    i = 0
    label_words = []
    while i < len(tokens) and not _is_code_token(tokens[i]):
        label_words.append(tokens[i])
        i += 1
    geometry = {}
    last_index = -1
    for token in tokens[i:]:
        if not _is_code_token(token):
            raise MalformedGroupError(f"stray token {token!r} after geometry")
        kind, value = decode(int(token), cfg)
        if kind.index == last_index:
            raise DuplicateAttributeError(f"duplicate {kind.name} in group")
        if kind.index < last_index:
            raise MalformedGroupError(f"{kind.name} out of order in group")
        last_index = kind.index
        geometry[kind] = value
    label = " ".join(label_words) if label_words else None
    return label, geometry


def parse_response(text: str,
                   registry: CategoryRegistry,
                   domain: Domain,
                   cfg: IntervalConfig = DEFAULT_CODEC,
                   page_w: int | None = None,
                   page_h: int | None = None,
                   column_count: int = 1) -> Layout:
    """Parse a response string back into a layout.

    Every group must carry a registry label for ``domain`` plus all four
    geometric attributes in order.  Page size defaults to the codec's
    square canvas when the caller does not supply one.
    """
    allowed = registry.labels_for(domain)
    stripped = text.strip()
    if not stripped:
        raise MalformedGroupError("empty response")
    elements = []
    for pos, group in enumerate(stripped.split(FIELD_SEPARATOR)):
        tokens = group.split()
        if not tokens:
            raise MalformedGroupError(f"group {pos} is empty")
        label, geometry = _parse_group_tokens(tokens, cfg)
        if label is None:
            raise UnknownLabelError(f"group {pos} has no class label")
        if label not in allowed:
            raise UnknownLabelError(f"group {pos}: {label!r} not in {domain.value} registry")
        absent = [k.name for k in GEOMETRY_KINDS if k not in geometry]
        if absent:
            raise MissingAttributeError(f"group {pos} missing {','.join(absent)}")
        x, y = geometry[AttrKind.X], geometry[AttrKind.Y]
        w, h = geometry[AttrKind.W], geometry[AttrKind.H]
        if w < 1 or h < 1:
            raise MalformedGroupError(f"group {pos} has zero-size box")
        elements.append(Element(label=label, box=BoundingBox(x, y, w, h),
                                mask=StatusMask.all_known()))
    return Layout(domain=domain,
                  page_w=page_w if page_w is not None else cfg.max_side,
                  page_h=page_h if page_h is not None else cfg.max_side,
                  elements=tuple(elements),
                  column_count=column_count)


def join_training_pair(condition: ConditionText, response: ResponseText) -> str:
    """Concatenate condition and response with the pair separator."""
    if PAIR_SEPARATOR in condition.text:
        raise SeparatorCollisionError("condition already contains the separator")
    if PAIR_SEPARATOR in response.text:
        raise SeparatorCollisionError("response already contains the separator")
    return condition.text + PAIR_SEPARATOR + response.text


@dataclass
class ConditionElement:
    """Element view recovered from a condition string (test/mock helper)."""

    label: str | None
    geometry: dict


@dataclass
class ParsedCondition:
    prefix: PrefixPrompt
    relations: tuple
    elements: tuple


def parse_condition(text: str,
                    registry: CategoryRegistry | None = None,
                    cfg: IntervalConfig = DEFAULT_CODEC) -> ParsedCondition:
    """Parse a structured condition string (inverse of build_condition).

    Free-form natural-language prompts do not parse; callers fall back
    to their own handling when this raises ``InvalidPrefixError``.
    """
    fields = text.split(FIELD_SEPARATOR)
    if len(fields) < 2:
        raise InvalidPrefixError("missing prefix fields")
    if fields[0] == REFINE_WORD:
        refine = True
    elif fields[0] == UNREFINE_WORD:
        refine = False
    else:
        raise InvalidPrefixError(f"bad flag {fields[0]!r}")
    try:
        domain = Domain.from_text(fields[1])
    except ValueError as exc:
        raise InvalidPrefixError(str(exc)) from exc

    if len(fields) == 2:
        prefix = PrefixPrompt(refine=refine, domain=domain)
        return ParsedCondition(prefix=prefix, relations=(), elements=())
    if len(fields) < 4 or not (_is_code_token(fields[2]) and _is_code_token(fields[3])):
        raise InvalidPrefixError("counts must be two integer fields")
    prefix = PrefixPrompt(refine=refine, domain=domain,
                          object_number=int(fields[2]),
                          column_number=int(fields[3]))

    relations = []
    elements = []
    for group in fields[4:]:
        tokens = group.split()
        if len(tokens) == 4 and tokens[0] == RELATION_TAG and elements == [] \
                and _is_code_token(tokens[1]) and _is_code_token(tokens[3]):
            try:
                predicate = RelationKind(tokens[2])
            except ValueError as exc:
                raise MalformedGroupError(f"bad relation {group!r}") from exc
            relations.append(RelationConstraint(int(tokens[1]), predicate, int(tokens[3])))
            continue
        label, geometry = _parse_group_tokens(tokens, cfg)
        if label is not None and registry is not None \
                and not registry.contains(domain, label):
            raise UnknownLabelError(f"{label!r} not in {domain.value} registry")
        elements.append(ConditionElement(label=label, geometry=geometry))
    return ParsedCondition(prefix=prefix, relations=tuple(relations),
                           elements=tuple(elements))


_STYLED_TEMPLATES = {
    Domain.ARTICLE: (
        "I need an article layout with various presentation options.",
        "Create a clean and organized article layout for a scientific journal article.",
        "Design a professional article layout for a journal.",
    ),
    Domain.APP_UI: (
        "Design a highly flexible UI interface for a multi-functional application.",
        "Design an intuitive UI interface for a broad user base.",
        "Show me a dynamic and diverse UI interface design.",
    ),
    Domain.MAGAZINE: (
        "Please create a versatile magazine layout.",
        "I need an informative magazine cover.",
        "Design a flexible layout for a magazine publisher.",
    ),
    Domain.SLIDE: (
        "I want a slide with diverse presentation options.",
        "Design an eye-catching slide for a conference presentation.",
        "Please generate a slide for content targeted at a wide audience.",
    ),
}

NL_TEMPLATE_COUNT = 6


def render_nl_prompt(template_id: int,
                     domain: Domain,
                     object_number: int | None = None,
                     column_number: int | None = None) -> str:
    """Render one of six natural-language prompts per domain.

    Templates 1-3 are fixed per-domain phrasings; 4-6 are generic forms
    that splice in the domain name and, for 5 and 6, the counts.
    """
    if template_id in (1, 2, 3):
        return _STYLED_TEMPLATES[domain][template_id - 1]
    if template_id == 4:
        return f"Generate a layout of {domain.display}."
    if template_id == 5:
        if object_number is None:
            raise ValueError("template 5 needs object_number")
        return f"Generate a layout of {domain.display}, with {object_number} elements."
    if template_id == 6:
        if object_number is None or column_number is None:
            raise ValueError("template 6 needs object_number and column_number")
        return (f"Generate a layout of {domain.display}, with {object_number} "
                f"elements and {column_number} columns.")
    raise UnknownTemplateError(f"template_id {template_id} not in 1..{NL_TEMPLATE_COUNT}")
