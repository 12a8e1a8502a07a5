"""Layout quality metrics and the cross-method ranking score.

Alignment and overlap follow the -log(1 - d) and pairwise-coverage
formulations common in layout evaluation, both scaled by 100/N.  Matched
IoU pairs generated and reference layouts label-group by label-group via
maximum-weight assignment.  Distribution distance is the Frechet
distance between Gaussian fits of feature embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CategoryRegistry, Layout

SHRINKAGE_EPS = 1e-6
_ALIGN_EPS = 1e-9


class MetricError(Exception):
    pass


class DimensionMismatchError(MetricError):
    pass


class DegenerateSetError(MetricError):
    """Too few feature vectors to fit a Gaussian."""


class InconsistentTableError(MetricError):
    pass


def _normalized_lines(layout: Layout) -> np.ndarray:
    """Per element: left, x-center, right, top, y-center, bottom in [0, 1]."""
    w, h = layout.page_w, layout.page_h
    rows = []
    for e in layout.elements:
        b = e.box
        rows.append((b.x / w, (b.x + b.w / 2) / w, (b.x + b.w) / w,
                     b.y / h, (b.y + b.h / 2) / h, (b.y + b.h) / h))
    return np.asarray(rows, dtype=float)


def alignment(layout: Layout) -> float:
    """Sum of -log(1 - d_i) over elements, scaled by 100/N.

    d_i is the smallest same-line gap between element i and any other
    element, minimized over the six alignment lines.
    """
    n = len(layout)
    if n < 2:
        return 0.0
    lines = _normalized_lines(layout)
    total = 0.0
    for i in range(n):
        diffs = np.abs(lines - lines[i])
        diffs[i, :] = np.inf
        d = min(float(diffs.min()), 1.0 - _ALIGN_EPS)
        total += -math.log(1.0 - d)
    return 100.0 / n * total


def overlap(layout: Layout) -> float:
    """Mean fraction of each element covered by the others, times 100.

    For element i, every other element j contributes
    area(b_i intersect b_j) / area(b_i).
    """
    n = len(layout)
    if n < 2:
        return 0.0
    boxes = [e.box for e in layout.elements]
    total = 0.0
    for i, a in enumerate(boxes):
        for j, b in enumerate(boxes):
            if i == j:
                continue
            ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
            iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
            if ix > 0 and iy > 0:
                total += (ix * iy) / a.area
    return 100.0 / n * total


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def _normalized_boxes(layout: Layout) -> list:
    w, h = layout.page_w, layout.page_h
    return [(e.box.x / w, e.box.y / h, e.box.w / w, e.box.h / h)
            for e in layout.elements]


def max_iou(generated: Layout, reference: Layout) -> float | None:
    """Best label-respecting matching IoU, or None when labels disagree.

    Layouts whose label multisets differ are skipped (None) rather than
    scored.  Within each label group the pairing maximizes total IoU.
    """
    if sorted(generated.labels) != sorted(reference.labels):
        return None
    gen_boxes = _normalized_boxes(generated)
    ref_boxes = _normalized_boxes(reference)
    by_label: dict = {}
    for idx, label in enumerate(generated.labels):
        by_label.setdefault(label, ([], []))[0].append(gen_boxes[idx])
    for idx, label in enumerate(reference.labels):
        by_label[label][1].append(ref_boxes[idx])
    total = 0.0
    for gen_group, ref_group in by_label.values():
        if len(gen_group) == 1:
            total += iou(gen_group[0], ref_group[0])
            continue
        matrix = np.array([[iou(g, r) for r in ref_group] for g in gen_group])
        rows, cols = linear_sum_assignment(matrix, maximize=True)
        total += float(matrix[rows, cols].sum())
    return total / len(generated)


@dataclass(frozen=True)
class GaussianStats:
    """Mean and shrinkage-regularized covariance of a feature set."""

    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_features(cls, features: np.ndarray,
                      eps: float = SHRINKAGE_EPS) -> "GaussianStats":
        features = np.atleast_2d(np.asarray(features, dtype=float))
        n, d = features.shape
        if n < 2:
            raise DegenerateSetError(f"need at least 2 vectors, got {n}")
        mean = features.mean(axis=0)
        cov = np.atleast_2d(np.cov(features, rowvar=False))
        # eps*I keeps all-identical sets (rank-deficient covariance) usable
        cov = cov + eps * np.eye(d)
        return cls(mean=mean, cov=cov)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_gaussian(a: GaussianStats, b: GaussianStats) -> float:
    """Frechet distance between two Gaussians, clamped at zero.

    The cross term uses the symmetric eigendecomposition of
    sqrt(C1) C2 sqrt(C1) with negative eigenvalues clipped, which keeps
    the result real for near-singular covariances.
    """
    if a.mean.shape != b.mean.shape:
        raise DimensionMismatchError(
            f"feature dims differ: {a.mean.shape} vs {b.mean.shape}")
    diff = a.mean - b.mean
    root = _sqrtm_psd(a.cov)
    inner = root @ b.cov @ root
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov)
                  - 2.0 * np.sqrt(vals).sum())
    return max(value, 0.0)


def fid(generated_features: np.ndarray, reference_features: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    gen = np.atleast_2d(np.asarray(generated_features, dtype=float))
    ref = np.atleast_2d(np.asarray(reference_features, dtype=float))
    if gen.shape[1] != ref.shape[1]:
        raise DimensionMismatchError(
            f"feature dims differ: {gen.shape[1]} vs {ref.shape[1]}")
    return frechet_gaussian(GaussianStats.from_features(gen),
                            GaussianStats.from_features(ref))


@dataclass(frozen=True)
class GeometricEmbedding:
    """Hand-rolled layout features: label mix plus per-label box moments.

    Vector layout: label histogram fractions (L), then per label the
    mean and population std of normalized x, y, w, h (8L), then the
    element count, for 9L + 1 dimensions.
    """

    labels: tuple

    @classmethod
    def from_registry(cls, registry: CategoryRegistry) -> "GeometricEmbedding":
        return cls(labels=registry.merged)

    @classmethod
    def from_layouts(cls, *layout_sets) -> "GeometricEmbedding":
        labels, seen = [], set()
        for layouts in layout_sets:
            for layout in layouts:
                for label in layout.labels:
                    if label not in seen:
                        seen.add(label)
                        labels.append(label)
        return cls(labels=tuple(labels))

    @property
    def dim(self) -> int:
        return 9 * len(self.labels) + 1

    def embed(self, layout: Layout) -> np.ndarray:
        index = {label: i for i, label in enumerate(self.labels)}
        n = len(layout)
        boxes = _normalized_boxes(layout)
        grouped: dict = {}
        for label, box in zip(layout.labels, boxes):
            if label not in index:
                raise DimensionMismatchError(f"label {label!r} not in embedding")
            grouped.setdefault(label, []).append(box)
        L = len(self.labels)
        vec = np.zeros(self.dim)
        for label, group in grouped.items():
            i = index[label]
            vec[i] = len(group) / n
            arr = np.asarray(group)
            vec[L + 8 * i: L + 8 * i + 4] = arr.mean(axis=0)
            vec[L + 8 * i + 4: L + 8 * i + 8] = arr.std(axis=0)
        vec[-1] = float(n)
        return vec

    def embed_all(self, layouts: Sequence[Layout]) -> np.ndarray:
        return np.stack([self.embed(layout) for layout in layouts])


# Metrics where larger values are better; everything else ranks ascending.
HIGHER_BETTER = frozenset({"max_iou"})


def _mean_ranks(entries: list, descending: bool) -> dict:
    """1-based ranks for (method, value) pairs; ties share the mean rank."""
    order = sorted(entries, key=lambda mv: -mv[1] if descending else mv[1])
    ranks = {}
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and order[end + 1][1] == order[pos][1]:
            end += 1
        shared = (pos + end) / 2 + 1
        for k in range(pos, end + 1):
            ranks[order[k][0]] = shared
        pos = end + 1
    return ranks


def ranking_score(table: Mapping[str, Mapping[str, float | None]],
                  higher_better=HIGHER_BETTER) -> dict:
    """Average per-metric rank for each method.

    A method missing a metric (value None or absent) is left out of that
    metric's ranking and that metric is left out of its average, so
    methods are judged only on what they report.
    """
    methods = list(table)
    if len(methods) < 2:
        raise InconsistentTableError("need at least two methods to rank")
    metrics = []
    for row in table.values():
        for name in row:
            if name not in metrics:
                metrics.append(name)
    per_method: dict = {m: [] for m in methods}
    for metric in metrics:
        entries = [(m, table[m][metric]) for m in methods
                   if table[m].get(metric) is not None]
        if len(entries) < 2:
            raise InconsistentTableError(
                f"metric {metric!r} reported by {len(entries)} methods")
        ranks = _mean_ranks(entries, descending=metric in higher_better)
        for method, rank in ranks.items():
            per_method[method].append(rank)
    scores = {}
    for method in methods:
        if not per_method[method]:
            raise InconsistentTableError(f"method {method!r} reports no metrics")
        scores[method] = sum(per_method[method]) / len(per_method[method])
    return scores


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metrics for one generated set against its references."""

    fid: float | None
    alignment: float
    overlap: float
    max_iou: float | None
    evaluated: int
    skipped: int
    generated_count: int
    reference_count: int

    def to_dict(self) -> dict:
        return {
            "fid": self.fid,
            "alignment": self.alignment,
            "overlap": self.overlap,
            "max_iou": self.max_iou,
            "counts": {
                "evaluated": self.evaluated,
                "skipped": self.skipped,
                "generated": self.generated_count,
                "reference": self.reference_count,
            },
        }


def evaluate_sets(generated: Sequence[Layout],
                  reference: Sequence[Layout],
                  pairs: Sequence[tuple] | None = None,
                  embedding: GeometricEmbedding | None = None) -> MetricReport:
    """Score a generated set: per-layout metrics, matched IoU, and FID.

    ``pairs`` lists (generated, reference) layouts for matched IoU; by
    default layouts are paired by position.  FID needs two vectors per
    side and reports None below that.
    """
    if not generated:
        raise ValueError("nothing to evaluate")
    if pairs is None:
        pairs = list(zip(generated, reference))
    align_mean = float(np.mean([alignment(g) for g in generated]))
    overlap_mean = float(np.mean([overlap(g) for g in generated]))
    iou_values = []
    skipped = 0
    for gen, ref in pairs:
        value = max_iou(gen, ref)
        if value is None:
            skipped += 1
        else:
            iou_values.append(value)
    iou_mean = float(np.mean(iou_values)) if iou_values else None
    if embedding is None:
        embedding = GeometricEmbedding.from_layouts(reference, generated)
    if len(generated) >= 2 and len(reference) >= 2:
        fid_value = fid(embedding.embed_all(generated),
                        embedding.embed_all(reference))
    else:
        fid_value = None
    return MetricReport(fid=fid_value, alignment=align_mean,
                        overlap=overlap_mean, max_iou=iou_mean,
                        evaluated=len(iou_values), skipped=skipped,
                        generated_count=len(generated),
                        reference_count=len(reference))
