"""Caption and navigation metrics against brute-force references."""

import itertools

import numpy as np
import pytest

from wandertell.mapping import GlobalMap, GroundTruthMaps
from wandertell.metrics import (
    MetricReport, SimilarityTable, alignment_f1, assignment_iou,
    build_report, diversity, loquacity, navigation_metrics, pct_area_seen,
    soft_coverage,
)

VOCAB = ("bed", "cabinet", "chair", "couch", "lamp", "plant", "rug",
         "shelf", "table", "tv")
SYNONYMS = {"sofa": "couch", "settee": "sofa", "television": "tv"}


def brute_assignment_iou(nouns, objects, sim: SimilarityTable) -> float:
    """Exhaustive best matching over all injections of the smaller side."""
    n, o = list(nouns), list(objects)
    if not n or not o:
        return 0.0
    small, large = (n, o) if len(n) <= len(o) else (o, n)
    best = 0
    for combo in itertools.permutations(range(len(large)), len(small)):
        m = sum(1 for i, j in enumerate(combo)
                if sim.sim(small[i], large[j]) >= 0.5)
        best = max(best, m)
    return best / (len(n) + len(o) - best)


def test_similarity_follows_synonym_chains():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    assert sim.canonical("settee") == "couch"
    assert sim.sim("settee", "sofa") == 1.0
    assert sim.sim("television", "tv") == 1.0
    assert sim.sim("couch", "table") == 0.0


def test_similarity_survives_cyclic_synonyms():
    sim = SimilarityTable(("a", "b"), {"a": "b", "b": "a"})
    assert sim.sim("a", "a") == 1.0
    assert isinstance(sim.canonical("a"), str)  # terminates


def test_assignment_iou_examples():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    assert assignment_iou(["couch", "table"], ["couch", "table", "rug"], sim) \
        == pytest.approx(2 / 3)
    assert assignment_iou(["sofa"], ["couch"], sim) == 1.0
    assert assignment_iou(["couch", "couch"], ["couch"], sim) == 0.5
    assert assignment_iou([], ["couch"], sim) == 0.0
    assert assignment_iou(["couch"], [], sim) == 0.0


def test_assignment_iou_matches_brute_force():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    words = list(VOCAB) + list(SYNONYMS)
    rng = np.random.default_rng(17)
    for _ in range(300):
        n = [words[i] for i in rng.integers(0, len(words),
                                            size=rng.integers(0, 7))]
        o = [words[i] for i in rng.integers(0, len(words),
                                            size=rng.integers(0, 7))]
        assert assignment_iou(n, o, sim) \
            == pytest.approx(brute_assignment_iou(n, o, sim))


def test_soft_coverage():
    assert soft_coverage(["couch", "rug"], {"couch", "table"}) == 0.5
    assert soft_coverage(["couch", "table"], {"couch", "table"}) == 1.0
    assert soft_coverage([], {"couch"}) == 0.0
    assert soft_coverage(["couch"], set()) is None


def test_diversity():
    assert diversity(["couch", "table"], ["table", "rug"]) \
        == pytest.approx(1 / 3)
    assert diversity(["couch"], ["couch"]) == 1.0
    assert diversity(["couch", "couch"], ["couch"]) == 1.0  # sets, not bags
    assert diversity([], []) == 0.0
    assert diversity(["couch"], []) == 0.0


def test_loquacity():
    assert loquacity(5, 100) == 5.0
    assert loquacity(0, 50) == 0.0
    assert loquacity(50, 50) == 100.0
    with pytest.raises(ValueError):
        loquacity(1, 0)


def test_alignment_f1_weights_recall_by_area():
    got = alignment_f1(["couch"], [("couch", 0.3), ("rug", 0.1)])
    assert got == pytest.approx(6 / 7)  # p = 1, r = 3/4
    assert alignment_f1([], []) == 1.0
    assert alignment_f1(["couch"], []) == 0.0
    assert alignment_f1([], [("couch", 0.2)]) == 0.0
    assert alignment_f1(["couch"], [("couch", 0.0)]) == 0.0  # no visible area


def test_alignment_f1_accumulates_duplicate_categories():
    # couch area totals 0.3 of 0.4 seen
    got = alignment_f1(["couch"], [("couch", 0.1), ("couch", 0.2),
                                   ("rug", 0.1)])
    assert got == pytest.approx(6 / 7)


def empty_truth(m: int) -> GroundTruthMaps:
    z = np.zeros((m, m), np.uint8)
    return GroundTruthMaps(obstacle=z.copy(), valid=np.ones_like(z),
                           reach_free=np.ones_like(z),
                           reach_set=np.ones_like(z))


def test_navigation_metrics_nothing_explored():
    gmap = GlobalMap(grid=np.zeros((10, 10, 2), np.float32), resolution=0.05)
    assert navigation_metrics(gmap, empty_truth(10)) == (0.0, 0.0, 0.0)


def test_navigation_metrics_vacuous_obstacle_iou():
    gmap = GlobalMap(grid=np.zeros((10, 10, 2), np.float32), resolution=0.05)
    gmap.grid[0:5, :, 1] = 1.0
    truth = empty_truth(10)
    truth.reach_set[:] = 0
    truth.reach_set[0:5, :] = 1
    map_iou, map_acc, area_seen = navigation_metrics(gmap, truth)
    assert map_iou == 1.0  # no obstacles anywhere, explored == reach_set
    assert map_acc == pytest.approx(50 * 0.05 ** 2)
    assert area_seen == pytest.approx(50 * 0.05 ** 2)


def test_navigation_metrics_counts_by_hand():
    gmap = GlobalMap(grid=np.zeros((4, 4, 2), np.float32), resolution=0.05)
    gmap.grid[:, :, 1] = 1.0
    gmap.grid[0, 0, 0] = 1.0
    truth = empty_truth(4)
    truth.obstacle[0, 0] = 1
    truth.obstacle[0, 1] = 1
    map_iou, map_acc, area_seen = navigation_metrics(gmap, truth)
    assert map_iou == pytest.approx(0.5 * (1 / 2 + 1.0))
    assert map_acc == pytest.approx(15 * 0.05 ** 2)
    assert area_seen == pytest.approx(16 * 0.05 ** 2)


def test_navigation_metrics_ignores_unexplored_truth():
    gmap = GlobalMap(grid=np.zeros((4, 4, 2), np.float32), resolution=0.05)
    gmap.grid[0:2, :, 1] = 1.0
    truth = empty_truth(4)
    truth.obstacle[3, 3] = 1  # never explored, must not hurt the IoU
    map_iou, _, _ = navigation_metrics(gmap, truth)
    iou_seen = 8 / 16
    assert map_iou == pytest.approx(0.5 * (1.0 + iou_seen))


def test_pct_area_seen_clamps():
    gmap = GlobalMap(grid=np.zeros((4, 4, 2), np.float32), resolution=0.05)
    truth = empty_truth(4)
    truth.reach_free[:] = 0
    truth.reach_free[1, 1] = 1
    truth.reach_free[1, 2] = 1
    assert pct_area_seen(gmap, truth) == 0.0
    gmap.grid[1, 1, 1] = 1.0
    assert pct_area_seen(gmap, truth) == 0.5
    gmap.grid[:, :, 1] = 1.0  # superset of the reachable set
    assert pct_area_seen(gmap, truth) == 1.0
    truth.reach_free[:] = 0
    assert pct_area_seen(gmap, truth) == 0.0


def test_build_report_by_hand():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    captions = [(0, ("couch",)), (5, ("table", "rug"))]
    visibles = {0: [("couch", 0.5), ("rug", 0.05)], 5: [("table", 0.2)]}
    nav = (0.9, 1.5, 2.0)
    report = build_report(captions, visibles, n_steps=50,
                          object_categories=["couch", "table", "plant"],
                          sim=sim, nav=nav, pct_seen=0.8)
    assert report.map_iou == 0.9
    assert report.map_acc == 1.5
    assert report.area_seen == 2.0
    assert report.pct_area_seen == 0.8
    assert report.cov_mean == 1.0  # rug at t=0 is below the relevance floor
    assert report.div_mean == 0.0
    assert report.loquacity == 4.0
    align0 = alignment_f1(["couch"], visibles[0])
    align5 = alignment_f1(["table", "rug"], visibles[5])
    assert report.align_mean == pytest.approx((align0 + align5) / 2)
    iou_no = assignment_iou(["couch", "table", "rug"],
                            ["couch", "table", "plant"], sim)
    assert iou_no == 0.5
    assert report.ed_s == pytest.approx(report.align_mean * 0.5 * 0.8)
    assert report.n_captions == 2
    assert report.degenerate_flags == {}


def test_build_report_flags_degenerate_cases():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    captions = [(3, ("couch",))]
    visibles = {3: [("couch", 0.01)]}  # nothing relevant at caption time
    report = build_report(captions, visibles, n_steps=10,
                          object_categories=["couch"], sim=sim,
                          nav=(0.0, 0.0, 0.0), pct_seen=0.5,
                          extra_flags={"captioner_warnings": 2})
    assert report.degenerate_flags == {"captioner_warnings": 2,
                                       "cov_undefined": 1, "div_no_pairs": 1}
    assert report.cov_mean == 0.0
    assert report.div_mean == 0.0
    assert report.n_captions == 1


def test_build_report_zero_captions():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    report = build_report([], {}, n_steps=100, object_categories=["couch"],
                          sim=sim, nav=(0.5, 1.0, 2.0), pct_seen=0.9)
    assert report.ed_s == 0.0
    assert report.align_mean == 0.0
    assert report.loquacity == 0.0
    assert report.n_captions == 0
    assert report.degenerate_flags == {"div_no_pairs": 1}


def test_build_report_zero_steps():
    sim = SimilarityTable(VOCAB, SYNONYMS)
    report = build_report([], {}, n_steps=0, object_categories=[],
                          sim=sim, nav=(0.0, 0.0, 0.0), pct_seen=0.0)
    assert report.loquacity == 0.0


def test_metric_report_round_trips():
    report = MetricReport(map_iou=0.5, map_acc=1.25, area_seen=4.0,
                          pct_area_seen=0.75, cov_mean=0.9, div_mean=0.4,
                          loquacity=12.0, align_mean=0.8, ed_s=0.54,
                          n_captions=6, degenerate_flags={"cov_undefined": 2})
    assert MetricReport.from_dict(report.to_dict()) == report
