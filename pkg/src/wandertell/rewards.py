"""Intrinsic reward signals computed from the agent's own map and sensors.

Four reward families are always evaluated per step so logs can compare them:
prediction error against a slow feature average (curiosity), newly explored
area (coverage), map accuracy gain against the ground-truth grid
(anticipation), and feature change scaled by visit novelty (impact). Impact
has two novelty estimators, a spatial visit grid and a learned density model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mapping import GlobalMap, GroundTruthMaps, LocalMap
from .world import Pose

CURIOSITY_SCALE = 0.01
EMA_DECAY = 0.3
POOL_BINS = 16
COUNT_CELL_M = 0.5

OCCUPIED_THRESHOLD = 0.5
EXPLORED_THRESHOLD = 0.5


def encode_features(local: LocalMap, visible, vocabulary) -> np.ndarray:
    """Fixed-length feature vector: pooled local map plus category areas.

    The two map channels are average-pooled onto a POOL_BINS x POOL_BINS
    grid (bin b covers source rows floor(b*L/B) .. floor((b+1)*L/B) - 1)
    and flattened, then the summed apparent area of visible objects per
    vocabulary category is appended. Every component lies in [0, 1].
    """
    grid = local.grid.astype(np.float64)
    side = grid.shape[0]
    edges = np.floor(np.arange(POOL_BINS + 1) * side / POOL_BINS).astype(np.intp)
    sums = np.add.reduceat(np.add.reduceat(grid, edges[:-1], axis=0), edges[:-1], axis=1)
    spans = np.diff(edges).astype(np.float64)
    pooled = sums / (spans[:, None, None] * spans[None, :, None])
    cats = sorted(vocabulary)
    index = {c: i for i, c in enumerate(cats)}
    hist = np.zeros(len(cats), np.float64)
    for v in visible:
        hist[index[v.category]] += v.apparent_area
    return np.concatenate([pooled.ravel(), hist])


def feature_dim(vocabulary) -> int:
    return 2 * POOL_BINS * POOL_BINS + len(vocabulary)


class PseudoCountGrid:
    """Visit counts on a coarse spatial grid keyed by floor division."""

    def __init__(self, cell_m: float = COUNT_CELL_M):
        self.cell_m = cell_m
        self._counts: dict = {}

    def _key(self, x: float, y: float) -> tuple:
        return (math.floor(x / self.cell_m), math.floor(y / self.cell_m))

    def count(self, x: float, y: float) -> int:
        return self._counts.get(self._key(x, y), 0)

    def visit(self, x: float, y: float) -> int:
        key = self._key(x, y)
        new = self._counts.get(key, 0) + 1
        self._counts[key] = new
        return new


class DensityModel:
    """Per-dimension Bernoulli density over binarized features.

    Each dimension keeps a Laplace-smoothed heads probability
    (ones + 1) / (n + 2). An observation's pseudo-count is derived from how
    much its own probability rises after the model absorbs it:
    (1 - rho') / (exp(delta) - 1) with delta the summed log probability
    ratio. Delta is mathematically positive; if rounding drives it to zero
    or below the observation counts as degenerate and novelty is treated
    as exhausted (infinite pseudo-count).
    """

    def __init__(self, dim: int):
        self.ones = np.zeros(dim, np.float64)
        self.n = 0
        self.degenerate_updates = 0

    def update(self, features: np.ndarray) -> float:
        bits = features >= 0.5
        theta = (self.ones + 1.0) / (self.n + 2.0)
        self.ones += bits
        self.n += 1
        theta2 = (self.ones + 1.0) / (self.n + 2.0)
        p_old = np.where(bits, theta, 1.0 - theta)
        p_new = np.where(bits, theta2, 1.0 - theta2)
        delta = float(np.sum(np.log(p_new / p_old)))
        if delta <= 0.0:
            self.degenerate_updates += 1
            return math.inf
        log_rho_new = float(np.sum(np.log(p_new)))
        return -math.expm1(log_rho_new) / math.expm1(delta)


@dataclass(frozen=True)
class StepRewards:
    curiosity: float
    coverage: float
    anticipation: float
    impact: float
    n_hat: float

    def select(self, reward_kind: str) -> float:
        if reward_kind.startswith("impact"):
            return self.impact
        return getattr(self, reward_kind)


class RewardState:
    """Per-episode accumulator that turns map updates into step rewards.

    Coverage and anticipation are exact cumulative counters updated from the
    registration bounding box, so summing their step rewards over any window
    telescopes to the change of the underlying quantity. The density model
    only advances when the episode's reward kind selects it, keeping the
    logged impact stream tied to the spatial grid otherwise.
    """

    def __init__(self, reward_kind: str, dim: int, truth: GroundTruthMaps,
                 map_size: int, curiosity_scale: float = CURIOSITY_SCALE,
                 ema_decay: float = EMA_DECAY):
        self.reward_kind = reward_kind
        self.curiosity_scale = curiosity_scale
        self.ema_decay = ema_decay
        self.predictor = np.zeros(dim, np.float64)
        self.prev_features = None
        self.grid_counts = PseudoCountGrid()
        self.density = DensityModel(dim) if reward_kind == "impact-dme" else None
        self.truth = truth
        self.total_cells = 2 * map_size * map_size
        self.explored_valid = 0
        self.match_count = int(np.count_nonzero(truth.obstacle == 0)
                               + np.count_nonzero(truth.valid == 0))

    @property
    def accuracy(self) -> float:
        return self.match_count / self.total_cells

    def _absorb_patch(self, gmap: GlobalMap, bbox, old_patch: np.ndarray):
        r0, r1, c0, c1 = bbox
        new_patch = gmap.grid[r0:r1, c0:c1]
        valid = self.truth.valid[r0:r1, c0:c1]
        obstacle = self.truth.obstacle[r0:r1, c0:c1]
        old_expl = old_patch[:, :, 1] >= EXPLORED_THRESHOLD
        new_expl = new_patch[:, :, 1] >= EXPLORED_THRESHOLD
        gained = int(np.count_nonzero(new_expl & valid)) - int(np.count_nonzero(old_expl & valid))
        self.explored_valid += gained
        old_occ = old_patch[:, :, 0] >= OCCUPIED_THRESHOLD
        new_occ = new_patch[:, :, 0] >= OCCUPIED_THRESHOLD
        old_match = int(np.count_nonzero(old_occ == obstacle)) + int(np.count_nonzero(old_expl == valid))
        new_match = int(np.count_nonzero(new_occ == obstacle)) + int(np.count_nonzero(new_expl == valid))
        self.match_count += new_match - old_match
        return gained

    def update(self, features: np.ndarray, est_pose: Pose, gmap: GlobalMap,
               bbox, old_patch: np.ndarray) -> StepRewards:
        """Advance all reward streams for one step and return their values."""
        diff = self.predictor - features
        r_curiosity = 0.5 * self.curiosity_scale * float(diff @ diff)
        self.predictor = (1.0 - self.ema_decay) * self.predictor + self.ema_decay * features

        acc_before = self.accuracy
        gained = self._absorb_patch(gmap, bbox, old_patch)
        r_coverage = float(gained)
        r_anticipation = self.accuracy - acc_before

        if self.density is not None:
            n_hat = self.density.update(features)
            self.grid_counts.visit(est_pose.x, est_pose.y)
        else:
            n_hat = float(self.grid_counts.visit(est_pose.x, est_pose.y))
        if self.prev_features is None:
            r_impact = 0.0
        else:
            step = features - self.prev_features
            norm = float(np.sqrt(step @ step))
            r_impact = 0.0 if math.isinf(n_hat) else norm / math.sqrt(max(n_hat, 1.0))
        self.prev_features = features

        return StepRewards(curiosity=r_curiosity, coverage=r_coverage,
                           anticipation=r_anticipation, impact=r_impact,
                           n_hat=n_hat)
