"""Conditioning tasks and the training mixture sampler.

A task decides, per element attribute, whether the condition exposes the
true value, a noise-perturbed value, or nothing.  The sampler draws
(domain, layout, task) triples, realizes the masks, and emits prompt and
target strings; the target is always the complete un-noised layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .codec import DEFAULT_CODEC, IntervalConfig
from .core import (
    AttrKind,
    AttributeStatus,
    BoundingBox,
    Domain,
    Element,
    GEOMETRY_KINDS,
    Layout,
    StatusMask,
    quantize,
)
from .prompts import (
    ConditionText,
    NL_TEMPLATE_COUNT,
    PrefixPrompt,
    RelationConstraint,
    RelationKind,
    ResponseText,
    build_condition,
    build_response,
    join_training_pair,
    render_nl_prompt,
)

KNOWN = AttributeStatus.KNOWN
UNKNOWN = AttributeStatus.UNKNOWN
NOISY = AttributeStatus.NOISY


class SamplerError(Exception):
    pass


class DegenerateMaskError(SamplerError):
    """A conditional task kept drawing masks with nothing conditioned on."""


class EmptyCorpusError(SamplerError):
    """A domain with positive sampling weight has no layouts."""


class Task(enum.Enum):
    COMPLETION = "completion"
    GEN_T = "gen-t"
    GEN_TS = "gen-ts"
    RELATION = "relation"
    REFINEMENT = "refinement"
    GEN_U = "gen-u"
    GEN_UP = "gen-up"
    COMPLETION_REFINEMENT = "completion-refinement"
    GEN_TPS = "gen-tps"
    GEN_PS_REFINEMENT = "gen-ps-refinement"
    GEN_ARB_REFINEMENT = "gen-arb-refinement"


REFINE_TASKS = frozenset({
    Task.REFINEMENT, Task.COMPLETION_REFINEMENT,
    Task.GEN_PS_REFINEMENT, Task.GEN_ARB_REFINEMENT,
})
UNCONDITIONAL_TASKS = frozenset({Task.GEN_U, Task.GEN_UP})

_MASK_RETRIES = 64


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian jitter applied in normalized [0, 1] coordinate space."""

    mean: float = 0.0
    std: float = 0.01

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")


DOMAIN_WEIGHTS = {
    Domain.ARTICLE: 1.0,
    Domain.APP_UI: 7.0,
    Domain.MAGAZINE: 95.0,
    Domain.SLIDE: 111.0,
}


@dataclass(frozen=True)
class MixtureSchedule:
    """Sampling weights for the five training buckets and the domains.

    The two mixed buckets draw arbitrary per-attribute masks (without and
    with noise); ``relation_rate`` is the share of mixed draws that also
    carry relation constraints.
    """

    mixed_no_refine: float = 0.45
    mixed_with_refine: float = 0.30
    refinement: float = 0.10
    unconditional: float = 0.075
    unconditional_prompted: float = 0.075
    relation_rate: float = 0.20
    domain_weights: Mapping[Domain, float] = field(
        default_factory=lambda: dict(DOMAIN_WEIGHTS))

    def __post_init__(self):
        total = (self.mixed_no_refine + self.mixed_with_refine + self.refinement
                 + self.unconditional + self.unconditional_prompted)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"bucket weights sum to {total}, expected 1.0")
        if not 0.0 <= self.relation_rate <= 1.0:
            raise ValueError("relation_rate must lie in [0, 1]")
        if not self.domain_weights:
            raise ValueError("need at least one domain weight")
        for domain, weight in self.domain_weights.items():
            if weight <= 0:
                raise ValueError(f"non-positive weight for {domain.value}")

    def bucket_tasks(self) -> tuple:
        return (Task.GEN_TPS, Task.GEN_ARB_REFINEMENT, Task.REFINEMENT,
                Task.GEN_U, Task.GEN_UP)

    def bucket_weights(self) -> tuple:
        return (self.mixed_no_refine, self.mixed_with_refine, self.refinement,
                self.unconditional, self.unconditional_prompted)


def _cumulative(weights) -> np.ndarray:
    arr = np.asarray(weights, dtype=float)
    cum = np.cumsum(arr / arr.sum())
    cum[-1] = 1.0
    return cum


def _pick(rng: np.random.Generator, cum: np.ndarray) -> int:
    return int(np.searchsorted(cum, rng.random(), side="left"))


def _subset_masks(rng, n, size, chosen_mask: StatusMask) -> list:
    chosen = set(rng.choice(n, size=size, replace=False).tolist()) if size < n \
        else set(range(n))
    return [chosen_mask if i in chosen else StatusMask.all_unknown()
            for i in range(n)]


def _bernoulli_status(rng, on: AttributeStatus, p: float = 0.5) -> AttributeStatus:
    return on if rng.random() < p else UNKNOWN


def assign_statuses(layout: Layout, task: Task, rng: np.random.Generator) -> list:
    """Draw one status mask per element realizing ``task``.

    Arbitrary-mask tasks redraw (bounded) until at least one attribute is
    conditioned on; single-element layouts condition on their only
    element for the completion family.
    """
    n = len(layout)
    if task is Task.COMPLETION or task is Task.COMPLETION_REFINEMENT:
        size = int(rng.integers(1, n)) if n > 1 else 1
        if task is Task.COMPLETION:
            chosen = StatusMask.all_known()
        else:
            chosen = StatusMask(KNOWN, NOISY, NOISY, NOISY, NOISY)
        return _subset_masks(rng, n, size, chosen)
    if task is Task.GEN_T:
        size = int(rng.integers(1, n + 1))
        return _subset_masks(rng, n, size,
                             StatusMask(KNOWN, UNKNOWN, UNKNOWN, UNKNOWN, UNKNOWN))
    if task is Task.GEN_TS:
        size = int(rng.integers(1, n + 1))
        return _subset_masks(rng, n, size,
                             StatusMask(KNOWN, UNKNOWN, UNKNOWN, KNOWN, KNOWN))
    if task is Task.RELATION:
        return [StatusMask(KNOWN, UNKNOWN, UNKNOWN, UNKNOWN, UNKNOWN)] * n
    if task is Task.REFINEMENT:
        return [StatusMask(KNOWN, NOISY, NOISY, NOISY, NOISY)] * n
    if task in UNCONDITIONAL_TASKS:
        return [StatusMask.all_unknown()] * n

    for _ in range(_MASK_RETRIES):
        masks = []
        for _ in range(n):
            if task is Task.GEN_TPS:
                masks.append(StatusMask(
                    _bernoulli_status(rng, KNOWN),
                    *(_bernoulli_status(rng, KNOWN) for _ in GEOMETRY_KINDS)))
            elif task is Task.GEN_PS_REFINEMENT:
                masks.append(StatusMask(
                    UNKNOWN,
                    *(_bernoulli_status(rng, NOISY) for _ in GEOMETRY_KINDS)))
            elif task is Task.GEN_ARB_REFINEMENT:
                geo = []
                for _ in GEOMETRY_KINDS:
                    status = _bernoulli_status(rng, KNOWN)
                    if status is KNOWN and rng.random() < 0.5:
                        status = NOISY
                    geo.append(status)
                masks.append(StatusMask(_bernoulli_status(rng, KNOWN), *geo))
            else:
                raise ValueError(f"unhandled task {task}")
        if not all(m.is_empty for m in masks):
            return masks
    raise DegenerateMaskError(f"{task.value}: empty mask after {_MASK_RETRIES} draws")


def perturb(layout: Layout,
            noise: NoiseModel,
            rng: np.random.Generator,
            cfg: IntervalConfig = DEFAULT_CODEC,
            masks: Sequence[StatusMask] | None = None) -> Layout:
    """Jitter geometry marked noisy (default: all of it, refinement-style).

    Noise is drawn per attribute in normalized space, scaled by the
    canvas side, re-quantized, and clamped so positions stay in
    ``[0, max_side - 1]`` and sizes in ``[1, max_side - 1]``.
    """
    if masks is None:
        masks = [StatusMask(KNOWN, NOISY, NOISY, NOISY, NOISY)] * len(layout)
    if len(masks) != len(layout):
        raise ValueError("one mask per element required")
    side = cfg.max_side
    elements = []
    for element, mask in zip(layout.elements, masks):
        values = {}
        for kind in GEOMETRY_KINDS:
            value = element.box.get(kind)
            if mask.geometry(kind) is NOISY:
                value = value + rng.normal(noise.mean, noise.std) * side
                floor = 1 if kind in (AttrKind.W, AttrKind.H) else 0
                value = quantize(min(max(value, floor), side - 1))
            values[kind] = value
        box = BoundingBox(values[AttrKind.X], values[AttrKind.Y],
                          values[AttrKind.W], values[AttrKind.H])
        elements.append(Element(label=element.label, box=box, mask=mask))
    return layout.with_elements(elements)


_SIZE_SHRINK = 0.9


def extract_relations(layout: Layout) -> tuple:
    """All pairwise constraints that hold in a layout, in scan order.

    Each ordered pair yields every directional predicate that holds
    (overlap when none does and the boxes intersect) plus exactly one
    size predicate; areas within the 0.9 shrink band count as equal.
    """
    out = []
    boxes = [e.box for e in layout.elements]
    for i, a in enumerate(boxes):
        for j, b in enumerate(boxes):
            if i == j:
                continue
            directional = False
            if a.y + a.h <= b.y:
                out.append(RelationConstraint(i, RelationKind.TOP, j))
                directional = True
            if b.y + b.h <= a.y:
                out.append(RelationConstraint(i, RelationKind.BOTTOM, j))
                directional = True
            if a.x + a.w <= b.x:
                out.append(RelationConstraint(i, RelationKind.LEFT, j))
                directional = True
            if b.x + b.w <= a.x:
                out.append(RelationConstraint(i, RelationKind.RIGHT, j))
                directional = True
            if not directional:
                ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
                iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
                if ix > 0 and iy > 0:
                    out.append(RelationConstraint(i, RelationKind.OVERLAPPED, j))
            if a.area < _SIZE_SHRINK * b.area:
                out.append(RelationConstraint(i, RelationKind.SMALLER, j))
            elif a.area * _SIZE_SHRINK > b.area:
                out.append(RelationConstraint(i, RelationKind.LARGER, j))
            else:
                out.append(RelationConstraint(i, RelationKind.EQUAL, j))
    return tuple(out)


RELATIONS_PER_SAMPLE = 2


def sample_relations(candidates: Sequence[RelationConstraint],
                     rng: np.random.Generator,
                     count: int = RELATIONS_PER_SAMPLE) -> tuple:
    """Draw up to ``count`` distinct constraints uniformly, order of draw."""
    if len(candidates) <= count:
        return tuple(candidates)
    idx = rng.choice(len(candidates), size=count, replace=False)
    return tuple(candidates[int(i)] for i in idx)


@dataclass(frozen=True)
class ConditionedSample:
    """One training or evaluation sample: prompt, target, and audit data."""

    task: Task
    domain: Domain
    condition: ConditionText
    response: ResponseText
    masks: tuple
    relations: tuple = ()
    source_index: int | None = None
    template_id: int | None = None

    @property
    def pair(self) -> str:
        return join_training_pair(self.condition, self.response)

    def mask_code(self) -> str:
        return "|".join(m.code() for m in self.masks)

    def training_record(self) -> dict:
        return {
            "prompt": self.condition.text,
            "completion": self.response.text,
            "task": self.task.value,
            "domain": self.domain.value,
        }


def build_sample(layout: Layout,
                 task: Task,
                 rng: np.random.Generator,
                 cfg: IntervalConfig = DEFAULT_CODEC,
                 noise: NoiseModel = NoiseModel(),
                 attach_relations: bool = False,
                 source_index: int | None = None) -> ConditionedSample:
    """Realize one task draw on a ground-truth layout.

    The response is always the complete un-noised layout; only the
    condition sees masked or perturbed values.
    """
    masks = assign_statuses(layout, task, rng)
    response = build_response(layout, cfg)
    template_id = None

    if task is Task.GEN_UP:
        template_id = int(rng.integers(1, NL_TEMPLATE_COUNT + 1))
        text = render_nl_prompt(template_id, layout.domain,
                                object_number=len(layout),
                                column_number=layout.column_count)
        condition = ConditionText(text=text, prefix=None)
        relations = ()
    elif task is Task.GEN_U:
        prefix = PrefixPrompt(refine=False, domain=layout.domain)
        condition = build_condition(prefix, (), (), cfg)
        relations = ()
    else:
        if any(m.geometry(k) is NOISY for m in masks for k in GEOMETRY_KINDS):
            conditioned = perturb(layout, noise, rng, cfg, masks)
        else:
            conditioned = layout.with_masks(masks)
        relations = ()
        if task is Task.RELATION or attach_relations:
            relations = sample_relations(extract_relations(layout), rng)
        prefix = PrefixPrompt(refine=task in REFINE_TASKS, domain=layout.domain,
                              object_number=len(layout),
                              column_number=layout.column_count)
        condition = build_condition(prefix, relations, conditioned.elements, cfg)

    return ConditionedSample(task=task, domain=layout.domain,
                             condition=condition, response=response,
                             masks=tuple(masks), relations=relations,
                             source_index=source_index, template_id=template_id)


def sample_batch(corpora: Mapping[Domain, Sequence[Layout]],
                 n: int,
                 seed: int,
                 schedule: MixtureSchedule = MixtureSchedule(),
                 cfg: IntervalConfig = DEFAULT_CODEC,
                 noise: NoiseModel = NoiseModel(),
                 only_task: Task | None = None):
    """Yield ``n`` deterministic samples for (seed, index) pairs.

    Each index seeds its own generator, so batches can be produced in
    parallel partitions without changing the stream.  Validation runs
    before the generator is returned.
    """
    if seed < 0 or n < 0:
        raise ValueError("seed and n must be non-negative")
    domains = [d for d in Domain if d in schedule.domain_weights]
    for domain in domains:
        if not corpora.get(domain):
            raise EmptyCorpusError(f"no layouts for weighted domain {domain.value}")
    domain_cum = _cumulative([schedule.domain_weights[d] for d in domains])
    return _sample_stream(corpora, n, seed, schedule, cfg, noise, only_task,
                          domains, domain_cum)


def _sample_stream(corpora, n, seed, schedule, cfg, noise, only_task,
                   domains, domain_cum):
    bucket_tasks = schedule.bucket_tasks()
    bucket_cum = _cumulative(schedule.bucket_weights())
    mixed = {Task.GEN_TPS, Task.GEN_ARB_REFINEMENT}
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        domain = domains[_pick(rng, domain_cum)]
        corpus = corpora[domain]
        layout = corpus[int(rng.integers(len(corpus)))]
        if only_task is not None:
            task, attach = only_task, False
        else:
            task = bucket_tasks[_pick(rng, bucket_cum)]
            attach = task in mixed and rng.random() < schedule.relation_rate
        yield build_sample(layout, task, rng, cfg=cfg, noise=noise,
                           attach_relations=attach, source_index=i)


def mixture_report(samples) -> dict:
    """Aggregate task/domain/relation frequencies for an emitted batch."""
    tasks = {}
    domains = {}
    mixed = {Task.GEN_TPS.value, Task.GEN_ARB_REFINEMENT.value}
    mixed_total = 0
    mixed_with_relations = 0
    total = 0
    for sample in samples:
        total += 1
        tasks[sample.task.value] = tasks.get(sample.task.value, 0) + 1
        domains[sample.domain.value] = domains.get(sample.domain.value, 0) + 1
        if sample.task.value in mixed:
            mixed_total += 1
            if sample.relations:
                mixed_with_relations += 1
    return {
        "total": total,
        "tasks": dict(sorted(tasks.items())),
        "domains": dict(sorted(domains.items())),
        "mixed_total": mixed_total,
        "mixed_with_relations": mixed_with_relations,
    }
