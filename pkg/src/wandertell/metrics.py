"""Evaluation protocol: navigation quality, caption quality, episode score.

All functions are pure and operate on plain data (noun lists, category/area
pairs, grids) so logged episodes can be re-scored without re-simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .mapping import GlobalMap, GroundTruthMaps

RELEVANT_AREA_MIN = 0.10
MATCH_SIM_MIN = 0.5

OCCUPIED_THRESHOLD = 0.5
EXPLORED_THRESHOLD = 0.5


class SimilarityTable:
    """Binary word similarity: 1 for equal or synonymous terms, else 0.

    Synonyms are alias -> canonical chains; lookups follow the chain so
    {"sofa": "couch", "settee": "sofa"} still unifies all three.
    """

    def __init__(self, vocabulary, synonyms=None):
        self.vocabulary = tuple(sorted(vocabulary))
        self._canon = dict(synonyms) if synonyms else {}

    def canonical(self, term: str) -> str:
        seen = set()
        while term in self._canon and term not in seen:
            seen.add(term)
            term = self._canon[term]
        return term

    def sim(self, a: str, b: str) -> float:
        return 1.0 if self.canonical(a) == self.canonical(b) else 0.0


def soft_coverage(caption_nouns, relevant_categories):
    """Fraction of relevant categories mentioned; None when none are relevant."""
    relevant = set(relevant_categories)
    if not relevant:
        return None
    return len(set(caption_nouns) & relevant) / len(relevant)


def diversity(nouns_a, nouns_b) -> float:
    """IoU of two captions' unique noun sets; two empty sets score 0."""
    a, b = set(nouns_a), set(nouns_b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def loquacity(n_activations: int, episode_steps: int) -> float:
    if episode_steps <= 0:
        raise ValueError("episode_steps must be positive")
    return 100.0 * n_activations / episode_steps


def alignment_f1(caption_nouns, visible) -> float:
    """F1 of caption nouns vs visible categories, recall weighted by area.

    visible is an iterable of (category, apparent_area) pairs. Both sides
    empty scores 1.0, exactly one side empty scores 0.0.
    """
    nouns = set(caption_nouns)
    area_by_cat: dict = {}
    for cat, area in visible:
        area_by_cat[cat] = area_by_cat.get(cat, 0.0) + area
    if not nouns and not area_by_cat:
        return 1.0
    if not nouns or not area_by_cat:
        return 0.0
    precision = len(nouns & set(area_by_cat)) / len(nouns)
    total_area = sum(area_by_cat.values())
    if total_area <= 0.0:
        return 0.0
    recall = sum(a for c, a in area_by_cat.items() if c in nouns) / total_area
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def alignment_score(caption, obs) -> float:
    """Default caption/view alignment oracle over an Observation."""
    return alignment_f1(caption.nouns,
                        [(v.category, v.apparent_area) for v in obs.visible])


def assignment_iou(nouns, objects, sim: SimilarityTable) -> float:
    """Optimal-assignment IoU between two term multisets.

    Solves the rectangular linear assignment over cost 1 - sim; pairs with
    similarity >= MATCH_SIM_MIN count as matches m and the score is
    m / (|N| + |O| - m). Either side empty scores 0.
    """
    n, o = list(nouns), list(objects)
    if not n or not o:
        return 0.0
    simmat = np.empty((len(n), len(o)), np.float64)
    for i, a in enumerate(n):
        for j, b in enumerate(o):
            simmat[i, j] = sim.sim(a, b)
    rows, cols = linear_sum_assignment(1.0 - simmat)
    matched = int(np.count_nonzero(simmat[rows, cols] >= MATCH_SIM_MIN))
    return matched / (len(n) + len(o) - matched)


def pct_area_seen(gmap: GlobalMap, truth: GroundTruthMaps) -> float:
    """Explored, genuinely-free area over total reachable free area."""
    reach = int(np.count_nonzero(truth.reach_free))
    if reach == 0:
        return 0.0
    explored = gmap.grid[:, :, 1] >= EXPLORED_THRESHOLD
    seen = int(np.count_nonzero(explored & truth.reach_free))
    return min(seen / reach, 1.0)


def navigation_metrics(gmap: GlobalMap, truth: GroundTruthMaps) -> tuple:
    """(map_iou, map_acc_m2, area_seen_m2) for an agent map vs ground truth.

    map_iou averages the obstacle-channel IoU restricted to explored cells
    (vacuously 1 when neither side has obstacles there) with the IoU of the
    explored region against the reachable set. A map with nothing explored
    scores (0, 0, 0).
    """
    res2 = gmap.resolution * gmap.resolution
    occ = gmap.grid[:, :, 0] >= OCCUPIED_THRESHOLD
    explored = gmap.grid[:, :, 1] >= EXPLORED_THRESHOLD
    n_explored = int(np.count_nonzero(explored))
    if n_explored == 0:
        return 0.0, 0.0, 0.0
    a = occ & explored
    b = truth.obstacle & explored
    union = int(np.count_nonzero(a | b))
    iou_obstacle = 1.0 if union == 0 else int(np.count_nonzero(a & b)) / union
    union_seen = int(np.count_nonzero(explored | truth.reach_set))
    iou_seen = int(np.count_nonzero(explored & truth.reach_set)) / union_seen
    map_iou = 0.5 * (iou_obstacle + iou_seen)
    map_acc = int(np.count_nonzero((occ == truth.obstacle) & explored)) * res2
    area_seen = n_explored * res2
    return map_iou, map_acc, area_seen


@dataclass
class MetricReport:
    map_iou: float
    map_acc: float
    area_seen: float
    pct_area_seen: float
    cov_mean: float
    div_mean: float
    loquacity: float
    align_mean: float
    ed_s: float
    n_captions: int
    degenerate_flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "map_iou": self.map_iou,
            "map_acc": self.map_acc,
            "area_seen": self.area_seen,
            "pct_area_seen": self.pct_area_seen,
            "cov_mean": self.cov_mean,
            "div_mean": self.div_mean,
            "loquacity": self.loquacity,
            "align_mean": self.align_mean,
            "ed_s": self.ed_s,
            "n_captions": self.n_captions,
            "degenerate_flags": dict(self.degenerate_flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)


def build_report(captions, visibles_by_t, n_steps: int, object_categories,
                 sim: SimilarityTable, nav: tuple, pct_seen: float,
                 extra_flags=None) -> MetricReport:
    """Assemble the full per-episode report from logged caption data.

    captions: ordered (t, nouns) pairs; visibles_by_t: t -> [(category,
    area)] for every step; nav: the navigation_metrics triple. Degenerate
    cases (no relevant objects at a caption, fewer than two captions) are
    skipped from the affected means and counted in degenerate_flags.
    """
    flags = dict(extra_flags) if extra_flags else {}
    cov_vals = []
    cov_skipped = 0
    align_vals = []
    all_nouns = []
    for t, nouns in captions:
        visible = visibles_by_t.get(t, [])
        relevant = {cat for cat, area in visible if area >= RELEVANT_AREA_MIN}
        cov = soft_coverage(nouns, relevant)
        if cov is None:
            cov_skipped += 1
        else:
            cov_vals.append(cov)
        align_vals.append(alignment_f1(nouns, visible))
        all_nouns.extend(nouns)
    if cov_skipped:
        flags["cov_undefined"] = cov_skipped
    div_vals = [diversity(captions[i][1], captions[i - 1][1])
                for i in range(1, len(captions))]
    if not div_vals:
        flags["div_no_pairs"] = 1
    align_mean = sum(align_vals) / len(align_vals) if align_vals else 0.0
    iou_no = assignment_iou(all_nouns, list(object_categories), sim)
    ed_s = align_mean * iou_no * pct_seen if captions else 0.0
    return MetricReport(
        map_iou=nav[0], map_acc=nav[1], area_seen=nav[2],
        pct_area_seen=pct_seen,
        cov_mean=sum(cov_vals) / len(cov_vals) if cov_vals else 0.0,
        div_mean=sum(div_vals) / len(div_vals) if div_vals else 0.0,
        loquacity=loquacity(len(captions), n_steps) if n_steps > 0 else 0.0,
        align_mean=align_mean,
        ed_s=ed_s,
        n_captions=len(captions),
        degenerate_flags=flags,
    )
