"""Metric tests built around independent oracles.

The oracles avoid the implementation's shortcuts on purpose: overlap is
re-derived by pixel counting, matched IoU by exhaustive permutation
search, and the distribution distance against the closed form for
one-dimensional Gaussians.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from layoutgen.core import Domain
from layoutgen.metrics import (
    DegenerateSetError,
    DimensionMismatchError,
    GaussianStats,
    GeometricEmbedding,
    InconsistentTableError,
    alignment,
    evaluate_sets,
    fid,
    frechet_gaussian,
    iou,
    max_iou,
    overlap,
    ranking_score,
)

from conftest import make_layout, random_corpus


# ---------------------------------------------------------------- oracles

def oracle_overlap(layout):
    """Pixel-counting overlap: rasterize each box and count shared cells."""
    n = len(layout)
    if n < 2:
        return 0.0
    grid_w, grid_h = layout.page_w, layout.page_h
    masks = []
    for e in layout.elements:
        grid = np.zeros((grid_h, grid_w), dtype=bool)
        grid[e.box.y:e.box.y + e.box.h, e.box.x:e.box.x + e.box.w] = True
        masks.append(grid)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += np.logical_and(masks[i], masks[j]).sum() / masks[i].sum()
    return 100.0 / n * total


def oracle_max_iou(generated, reference):
    """Exhaustive per-label permutation search (groups must stay small)."""
    if sorted(generated.labels) != sorted(reference.labels):
        return None

    def norm(layout):
        return [(e.box.x / layout.page_w, e.box.y / layout.page_h,
                 e.box.w / layout.page_w, e.box.h / layout.page_h)
                for e in layout.elements]

    gen_by, ref_by = {}, {}
    for box, label in zip(norm(generated), generated.labels):
        gen_by.setdefault(label, []).append(box)
    for box, label in zip(norm(reference), reference.labels):
        ref_by.setdefault(label, []).append(box)
    total = 0.0
    for label, gen_group in gen_by.items():
        ref_group = ref_by[label]
        best = max(
            sum(iou(g, r) for g, r in zip(gen_group, perm))
            for perm in itertools.permutations(ref_group))
        total += best
    return total / len(generated)


def oracle_frechet_1d(mu1, sigma1, mu2, sigma2):
    return (mu1 - mu2) ** 2 + (sigma1 - sigma2) ** 2


# -------------------------------------------------------------- alignment

def test_alignment_of_offset_pair():
    layout = make_layout([(0, 0, 200, 200), (100, 300, 200, 200)],
                         page=(1000, 1000))
    assert alignment(layout) == pytest.approx(-100.0 * math.log(0.9), rel=1e-9)
    assert alignment(layout) == pytest.approx(10.536, abs=5e-4)


def test_alignment_zero_when_grid_aligned():
    layout = make_layout([(0, 0, 100, 100), (0, 200, 50, 50), (200, 0, 100, 80)],
                         page=(1000, 1000))
    assert alignment(layout) == 0.0


def test_alignment_translation_invariant(rng):
    base = make_layout([(10, 10, 100, 40), (130, 17, 80, 90), (10, 200, 217, 40)],
                       page=(1000, 1000))
    before = alignment(base)
    assert before > 0
    shifted = make_layout([(110, 210, 100, 40), (230, 217, 80, 90),
                           (110, 400, 217, 40)], page=(1000, 1000))
    assert alignment(shifted) == pytest.approx(before, rel=1e-12)


def test_alignment_picks_nearest_line():
    # gaps per line kind: left .1, xc .085, right .07, y-kinds >= .3
    layout = make_layout([(0, 0, 100, 50), (100, 300, 70, 60)], page=(1000, 1000))
    assert alignment(layout) == pytest.approx(-100.0 * math.log(1 - 0.07), rel=1e-9)


def test_alignment_single_element():
    assert alignment(make_layout([(5, 5, 10, 10)])) == 0.0


# ---------------------------------------------------------------- overlap

def test_overlap_half_and_quarter():
    layout = make_layout([(0, 0, 100, 100), (50, 0, 200, 100)], page=(1000, 1000))
    assert overlap(layout) == pytest.approx(37.5)


def test_overlap_identical_pair():
    layout = make_layout([(10, 10, 50, 50), (10, 10, 50, 50)], page=(1000, 1000))
    assert overlap(layout) == pytest.approx(100.0)


def test_overlap_disjoint_and_touching():
    layout = make_layout([(0, 0, 100, 100), (100, 0, 100, 100)], page=(1000, 1000))
    assert overlap(layout) == 0.0
    assert overlap(make_layout([(5, 5, 10, 10)])) == 0.0


def test_overlap_matches_pixel_oracle(rng):
    for _ in range(120):
        n = int(rng.integers(2, 6))
        boxes = []
        for _ in range(n):
            w = int(rng.integers(1, 60))
            h = int(rng.integers(1, 60))
            x = int(rng.integers(0, 128 - w))
            y = int(rng.integers(0, 128 - h))
            boxes.append((x, y, w, h))
        layout = make_layout(boxes, page=(128, 128))
        assert overlap(layout) == pytest.approx(oracle_overlap(layout), rel=1e-9)


# ---------------------------------------------------------------- max IoU

def test_iou_basic_values():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (10, 10, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)


def test_max_iou_identity():
    layout = make_layout([(10, 10, 100, 40), (130, 17, 80, 90)],
                         ["text", "title"])
    assert max_iou(layout, layout) == pytest.approx(1.0)


def test_max_iou_label_multiset_mismatch():
    a = make_layout([(10, 10, 100, 40)], ["text"])
    b = make_layout([(10, 10, 100, 40)], ["title"])
    assert max_iou(a, b) is None
    c = make_layout([(10, 10, 100, 40), (10, 60, 100, 40)], ["text", "text"])
    assert max_iou(a, c) is None


def test_max_iou_prefers_best_assignment():
    # the greedy in-order pairing scores 0; the swap scores 1
    gen = make_layout([(0, 0, 10, 10), (50, 50, 10, 10)], ["text", "text"],
                      page=(100, 100))
    ref = make_layout([(50, 50, 10, 10), (0, 0, 10, 10)], ["text", "text"],
                      page=(100, 100))
    assert max_iou(gen, ref) == pytest.approx(1.0)


def test_max_iou_matches_permutation_oracle(rng):
    labels_pool = ["text", "title", "figure"]
    for _ in range(100):
        n = int(rng.integers(2, 7))
        labels = [labels_pool[int(rng.integers(3))] for _ in range(n)]

        def draw():
            boxes = []
            for _ in range(n):
                w = int(rng.integers(10, 200))
                h = int(rng.integers(10, 200))
                x = int(rng.integers(0, 1024 - w))
                y = int(rng.integers(0, 1024 - h))
                boxes.append((x, y, w, h))
            return make_layout(boxes, labels)

        gen, ref = draw(), draw()
        assert max_iou(gen, ref) == pytest.approx(oracle_max_iou(gen, ref),
                                                  rel=1e-9)


# -------------------------------------------------------------------- fid

def test_fid_self_distance_vanishes(rng):
    feats = rng.normal(size=(64, 7))
    assert fid(feats, feats) <= 1e-6


def test_fid_symmetry(rng):
    a = rng.normal(size=(50, 5))
    b = rng.normal(loc=0.3, size=(60, 5))
    assert abs(fid(a, b) - fid(b, a)) <= 1e-8


def test_fid_matches_analytic_1d():
    stats_a = GaussianStats(mean=np.array([1.0]), cov=np.array([[4.0]]))
    stats_b = GaussianStats(mean=np.array([3.5]), cov=np.array([[9.0]]))
    expected = oracle_frechet_1d(1.0, 2.0, 3.5, 3.0)
    assert frechet_gaussian(stats_a, stats_b) == pytest.approx(expected, rel=1e-12)


def test_fid_sampled_1d_close_to_analytic():
    rng = np.random.default_rng(13)
    a = rng.normal(loc=0.0, scale=1.0, size=(100_000, 1))
    b = rng.normal(loc=2.0, scale=3.0, size=(100_000, 1))
    expected = oracle_frechet_1d(0.0, 1.0, 2.0, 3.0)
    assert fid(a, b) == pytest.approx(expected, rel=0.05)


def test_fid_diagonal_gaussians_closed_form():
    # independent dims add up: sum of per-dim squared mean and sigma gaps
    a = GaussianStats(mean=np.array([0.0, 1.0]),
                      cov=np.diag([1.0, 4.0]))
    b = GaussianStats(mean=np.array([1.0, -1.0]),
                      cov=np.diag([9.0, 1.0]))
    expected = oracle_frechet_1d(0, 1, 1, 3) + oracle_frechet_1d(1, 2, -1, 1)
    assert frechet_gaussian(a, b) == pytest.approx(expected, rel=1e-12)


def test_fid_survives_identical_vectors():
    # rank-zero covariance; the shrinkage floor keeps this finite
    a = np.tile([0.5, 0.25, 0.0], (10, 1))
    b = np.tile([0.5, 0.25, 1.0], (10, 1))
    assert fid(a, b) == pytest.approx(1.0, abs=1e-4)


def test_fid_input_validation(rng):
    with pytest.raises(DegenerateSetError):
        fid(rng.normal(size=(1, 3)), rng.normal(size=(5, 3)))
    with pytest.raises(DimensionMismatchError):
        fid(rng.normal(size=(5, 3)), rng.normal(size=(5, 4)))


# -------------------------------------------------------------- embedding

def test_embedding_dimension_and_contents():
    emb = GeometricEmbedding(labels=("text", "title"))
    assert emb.dim == 9 * 2 + 1
    layout = make_layout([(0, 0, 512, 256), (512, 256, 256, 512),
                          (0, 512, 256, 256)],
                         ["text", "text", "title"], page=(1024, 1024))
    vec = emb.embed(layout)
    assert vec[0] == pytest.approx(2 / 3)      # text fraction
    assert vec[1] == pytest.approx(1 / 3)      # title fraction
    xs = np.array([0.0, 0.5])
    assert vec[2] == pytest.approx(xs.mean())  # text mean x
    assert vec[6] == pytest.approx(xs.std())   # text std x (population)
    assert vec[-1] == 3.0


def test_embedding_rejects_unknown_label():
    emb = GeometricEmbedding(labels=("text",))
    layout = make_layout([(0, 0, 10, 10)], ["title"])
    with pytest.raises(DimensionMismatchError):
        emb.embed(layout)


def test_embedding_from_layouts_keeps_order():
    a = make_layout([(0, 0, 10, 10), (0, 20, 10, 10)], ["title", "text"])
    b = make_layout([(0, 0, 10, 10)], ["figure"])
    emb = GeometricEmbedding.from_layouts([a], [b])
    assert emb.labels == ("title", "text", "figure")
    assert emb.embed_all([a, b]).shape == (2, emb.dim)


# ---------------------------------------------------------------- ranking

def test_ranking_reproduces_published_column():
    # nine-method benchmark column; labels anonymized, values verbatim
    table = {
        "method_a": {"fid": 3.71, "align": None, "max_iou": 0.54},
        "method_b": {"fid": 117.00, "align": None, "max_iou": 0.47},
        "method_c": {"fid": 4.57, "align": 1.10, "max_iou": 0.73},
        "method_d": {"fid": 8.73, "align": 0.01, "max_iou": 0.64},
        "method_e": {"fid": 9.00, "align": None, "max_iou": 0.58},
        "method_f": {"fid": 16.42, "align": 0.36, "max_iou": 0.60},
        "method_g": {"fid": 7.32, "align": 1.18, "max_iou": 0.67},
        "method_h": {"fid": 7.54, "align": 0.10, "max_iou": 0.62},
        "method_i": {"fid": 1.03, "align": 0.12, "max_iou": 0.80},
    }
    scores = ranking_score(table)
    expected = {
        "method_a": 5.00, "method_b": 9.00, "method_c": 3.33,
        "method_d": 3.67, "method_e": 7.00, "method_f": 6.00,
        "method_g": 4.33, "method_h": 4.00, "method_i": 1.67,
    }
    assert set(scores) == set(expected)
    for method, value in expected.items():
        assert scores[method] == pytest.approx(value, abs=0.005), method


def test_ranking_ties_share_mean_rank():
    table = {
        "a": {"m": 1.0},
        "b": {"m": 1.0},
        "c": {"m": 2.0},
    }
    assert ranking_score(table) == {"a": 1.5, "b": 1.5, "c": 3.0}


def test_ranking_higher_better_flips_order():
    table = {"a": {"max_iou": 0.9}, "b": {"max_iou": 0.5}}
    assert ranking_score(table) == {"a": 1.0, "b": 2.0}


def test_ranking_missing_cells_do_not_penalize():
    table = {
        "a": {"m1": 1.0, "m2": 5.0},
        "b": {"m1": 2.0, "m2": None},
        "c": {"m1": 3.0, "m2": 1.0},
    }
    scores = ranking_score(table)
    assert scores["b"] == 2.0          # judged on m1 alone
    assert scores["a"] == pytest.approx((1 + 2) / 2)
    assert scores["c"] == pytest.approx((3 + 1) / 2)


def test_ranking_table_validation():
    with pytest.raises(InconsistentTableError):
        ranking_score({"a": {"m": 1.0}})
    with pytest.raises(InconsistentTableError):
        ranking_score({"a": {"m": 1.0, "solo": 2.0}, "b": {"m": 2.0}})
    with pytest.raises(InconsistentTableError):
        ranking_score({"a": {"m": 1.0}, "b": {"m": 2.0}, "c": {"m": None}})


# ------------------------------------------------------------- evaluation

def test_evaluate_sets_report():
    reference = list(random_corpus(seed=21, domain=Domain.ARTICLE, size=12))
    generated = [make_layout([(e.box.x, e.box.y, e.box.w, e.box.h)
                              for e in layout.elements],
                             list(layout.labels),
                             page=(layout.page_w, layout.page_h))
                 for layout in reference]
    # break one pairing's labels so it gets skipped
    generated[3] = make_layout([(0, 0, 10, 10)], ["text"])
    report = evaluate_sets(generated, reference)
    assert report.max_iou == pytest.approx(1.0)
    assert report.evaluated == 11 and report.skipped == 1
    assert report.generated_count == 12 and report.reference_count == 12
    assert report.fid is not None and report.fid >= 0
    payload = report.to_dict()
    assert payload["counts"]["skipped"] == 1


def test_evaluate_sets_small_inputs():
    a = make_layout([(0, 0, 10, 10)], ["text"])
    report = evaluate_sets([a], [a])
    assert report.fid is None
    assert report.max_iou == pytest.approx(1.0)
    with pytest.raises(ValueError):
        evaluate_sets([], [a])
