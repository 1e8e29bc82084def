"""Egocentric local maps, global map registration, and pose estimation.

The global map lives in the episode frame: the agent's start position sits at
the center cell and the axes stay parallel to the world grid, so ground-truth
comparisons are cell-aligned. Both map types store float32 grids with
channel 0 = occupancy and channel 1 = explored, values in [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import MapBoundsError, SchemaError
from .world import FREE, OBSTACLE, GridWorld, Pose, SensorConfig

LOCAL_MAP_SIZE = 101
GLOBAL_MAP_SIZE = 961
REGISTER_BETA = 0.5

SEARCH_TRANS_WINDOW_M = 0.10
SEARCH_TRANS_STEP_M = 0.025
SEARCH_ROT_WINDOW_DEG = 5.0
SEARCH_ROT_STEP_DEG = 1.0


@dataclass
class LocalMap:
    """Egocentric occupancy/explored patch; agent at bottom-center, facing up."""

    grid: np.ndarray  # float32 (L, L, 2)
    resolution: float

    @property
    def size(self) -> int:
        return self.grid.shape[0]


@dataclass
class GlobalMap:
    grid: np.ndarray  # float32 (M, M, 2)
    resolution: float

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    @property
    def center(self) -> int:
        return self.grid.shape[0] // 2

    @classmethod
    def empty(cls, size: int = GLOBAL_MAP_SIZE, resolution: float = 0.05) -> "GlobalMap":
        if size % 2 == 0:
            raise ValueError("global map size must be odd so the start pose is centered")
        return cls(grid=np.zeros((size, size, 2), np.float32), resolution=resolution)


@dataclass
class PoseEstimate:
    """Estimated pose plus an accumulated correction-magnitude diagnostic."""

    pose: Pose
    drift_score: float = 0.0


@dataclass(frozen=True)
class OdometryNoiseModel:
    """Additive per-step noise on agent-frame pose deltas.

    sigma_* are standard deviations per step; bias_translation acts along the
    forward axis and bias_rotation on the heading increment.
    """

    sigma_translation: float = 0.0
    sigma_rotation: float = 0.0
    bias_translation: float = 0.0
    bias_rotation: float = 0.0

    def enabled(self) -> bool:
        return any((self.sigma_translation, self.sigma_rotation,
                    self.bias_translation, self.bias_rotation))

    def perturb(self, delta: tuple, rng: np.random.Generator) -> tuple:
        dx, dy, dth = delta
        noise = rng.normal(0.0, 1.0, size=3)
        dx = dx + self.bias_translation + self.sigma_translation * noise[0]
        dy = dy + self.sigma_translation * noise[1]
        dth = dth + self.bias_rotation + self.sigma_rotation * noise[2]
        return (dx, dy, dth)


def compose_pose(prev: Pose, delta: tuple) -> Pose:
    """Apply an agent-frame delta (forward, left, dtheta) to a pose.

    The translation is rotated into the world frame by prev.theta before the
    componentwise addition; theta is wrapped.
    """
    dx, dy, dth = delta
    cos_t = math.cos(prev.theta)
    sin_t = math.sin(prev.theta)
    return Pose(
        prev.x + dx * cos_t - dy * sin_t,
        prev.y + dx * sin_t + dy * cos_t,
        prev.theta + dth,
    )


def local_map_from_depth(depth: np.ndarray, cfg: SensorConfig,
                         resolution: float, size: int = LOCAL_MAP_SIZE,
                         flip_prob: float = 0.0,
                         rng: np.random.Generator | None = None) -> LocalMap:
    """Rasterize one depth sweep into an egocentric LocalMap.

    Rays with depth < max_range mark their endpoint cell occupied; traversed
    cells become explored-free. flip_prob > 0 flips the occupancy bit of
    explored cells with that probability (prediction-error surrogate).
    """
    rel = math.radians(cfg.fov_deg) * (
        np.arange(cfg.n_rays, dtype=np.float64) / (cfg.n_rays - 1) - 0.5)
    hit = (depth < cfg.max_range_m).astype(np.uint8)
    grid = _kernels.local_from_depth(
        np.ascontiguousarray(depth, np.float64), hit, rel,
        size, resolution, cfg.max_range_m)
    if flip_prob > 0.0:
        if rng is None:
            raise ValueError("flip noise requires an rng")
        explored = grid[:, :, 1] > 0.0
        flips = explored & (rng.random(explored.shape) < flip_prob)
        grid[:, :, 0] = np.where(flips, 1.0 - grid[:, :, 0], grid[:, :, 0])
    return LocalMap(grid=grid, resolution=resolution)


def footprint_bbox(local: LocalMap, est_pose: Pose, gmap: GlobalMap) -> tuple:
    """Global-map cell box (r0, r1, c0, c1) covered by the local map.

    Raises MapBoundsError when the footprint leaves the global grid.
    """
    size = local.size
    res = local.resolution
    half = (size // 2 + 0.5) * res
    a_lo, a_hi = -0.5 * res, (size - 0.5) * res
    cos_t = math.cos(est_pose.theta)
    sin_t = math.sin(est_pose.theta)
    c_g = gmap.center
    rows, cols = [], []
    for a in (a_lo, a_hi):
        for b in (-half, half):
            x = est_pose.x + a * cos_t - b * sin_t
            y = est_pose.y + a * sin_t + b * cos_t
            rows.append(int(math.floor(y / res + 0.5)) + c_g)
            cols.append(int(math.floor(x / res + 0.5)) + c_g)
    r0, r1 = min(rows) - 1, max(rows) + 1
    c0, c1 = min(cols) - 1, max(cols) + 1
    if r0 < 0 or c0 < 0 or r1 >= gmap.size or c1 >= gmap.size:
        raise MapBoundsError(
            "local map footprint leaves the global map; "
            "increase the global map size")
    return (r0, r1, c0, c1)


def register_local_map(gmap: GlobalMap, local: LocalMap, est_pose: Pose,
                       beta: float = REGISTER_BETA) -> tuple:
    """Blend a local map into the global map at the estimated pose.

    Returns the touched cell box. Occupancy is averaged with weight beta on
    explored cells; the explored channel takes the max and never decreases.
    """
    bbox = footprint_bbox(local, est_pose, gmap)
    _kernels.register_local(
        gmap.grid, local.grid,
        est_pose.x, est_pose.y, est_pose.theta,
        gmap.resolution, beta, *bbox)
    return bbox


def _lattice(center: float, window: float, step: float) -> np.ndarray:
    """Multiples of step within [center - window, center + window]."""
    eps = 1e-9
    k_lo = math.ceil((center - window - eps) / step)
    k_hi = math.floor((center + window + eps) / step)
    return np.arange(k_lo, k_hi + 1, dtype=np.float64) * step


def correct_pose(prev: LocalMap, cur: LocalMap, delta_odometry: tuple) -> tuple:
    """Scan-match refinement of an odometry delta between consecutive scans.

    Grid search over step-aligned displacements inside the search window
    around the odometry value, maximizing the overlap score of the previous
    map transformed onto the current one. Candidates sit on absolute
    multiples of the step so exact kinematic deltas are recoverable. Ties
    prefer the smallest correction, then lexicographic order. Returns the
    odometry delta unchanged when either map has no explored cells.
    """
    odx, ody, odth = delta_odometry
    cur_expl = cur.grid[:, :, 1]
    if not (cur_expl > 0).any() or not (prev.grid[:, :, 1] > 0).any():
        return delta_odometry

    pts = np.nonzero(cur_expl > 0)
    pts_i = pts[0].astype(np.int32)
    pts_j = pts[1].astype(np.int32)
    expl_c = np.ascontiguousarray(cur.grid[:, :, 1][pts], np.float32)
    occ_c = np.ascontiguousarray(cur.grid[:, :, 0][pts], np.float32)

    xs = _lattice(odx, SEARCH_TRANS_WINDOW_M, SEARCH_TRANS_STEP_M)
    ys = _lattice(ody, SEARCH_TRANS_WINDOW_M, SEARCH_TRANS_STEP_M)
    odth_deg = math.degrees(odth)
    ths_deg = _lattice(odth_deg, SEARCH_ROT_WINDOW_DEG, SEARCH_ROT_STEP_DEG)
    ths = np.radians(ths_deg)

    cand_dx, cand_dy, cand_dth = [np.ascontiguousarray(a.ravel())
                                  for a in np.meshgrid(xs, ys, ths, indexing="ij")]
    scores = _kernels.scan_scores(
        prev.grid, pts_i, pts_j, expl_c, occ_c,
        xs, ys, ths, cur.resolution)

    best = None
    best_rank = None
    for k in range(scores.shape[0]):
        dx, dy, dth = float(cand_dx[k]), float(cand_dy[k]), float(cand_dth[k])
        mag = (dx - odx) ** 2 + (dy - ody) ** 2 + (dth - odth) ** 2
        rank = (-scores[k], mag, dx, dy, dth)
        if best_rank is None or rank < best_rank:
            best_rank = rank
            best = (dx, dy, dth)
    return best


# ---------------------------------------------------------------------------
# ground truth in the episode frame

@dataclass
class GroundTruthMaps:
    """World rasterized onto the global-map lattice around the start pose.

    obstacle/valid are channel targets for map accuracy; reach_free marks
    reachable free cells; reach_set adds the obstacle cells adjacent to them
    (the surface a thorough mapper can see).
    """

    obstacle: np.ndarray   # uint8 (M, M)
    valid: np.ndarray      # uint8, 1 where the cell maps inside the world
    reach_free: np.ndarray
    reach_set: np.ndarray

    def accuracy_of_empty(self) -> int:
        m2 = self.obstacle.size
        return int(m2 - self.obstacle.sum()) + int(m2 - self.valid.sum())


def ground_truth_global(world: GridWorld, origin: Pose, size: int,
                        resolution: float) -> GroundTruthMaps:
    """Rasterize world occupancy into the episode frame centered on origin."""
    c_g = size // 2
    k = np.arange(size) - c_g
    wr = np.floor(origin.y / resolution + k).astype(np.int64)
    wc = np.floor(origin.x / resolution + k).astype(np.int64)
    row_ok = (wr >= 0) & (wr < world.height)
    col_ok = (wc >= 0) & (wc < world.width)
    valid = (row_ok[:, None] & col_ok[None, :])
    wr_c = np.clip(wr, 0, world.height - 1)
    wc_c = np.clip(wc, 0, world.width - 1)
    occ = world.occupancy[np.ix_(wr_c, wc_c)]
    obstacle = np.where(valid, occ == OBSTACLE, False)

    free = world.occupancy == FREE
    labels, _ = ndimage.label(free)
    r0, c0 = world.cell_of(origin.x, origin.y)
    spawn_label = labels[r0, c0]
    reach_world = labels == spawn_label if spawn_label > 0 else np.zeros_like(free)
    reach_free = np.where(valid, reach_world[np.ix_(wr_c, wc_c)], False)
    surface = ndimage.binary_dilation(reach_free) & obstacle
    reach_set = reach_free | surface

    return GroundTruthMaps(
        obstacle=obstacle.astype(np.uint8),
        valid=valid.astype(np.uint8),
        reach_free=reach_free.astype(np.uint8),
        reach_set=reach_set.astype(np.uint8),
    )


# ---------------------------------------------------------------------------
# map snapshots

def write_pgm(path: str, values: np.ndarray):
    """8-bit binary PGM from a float array in [0, 1]."""
    data = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise SchemaError(f"not a binary PGM: {path}")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(f.readline())
        raw = f.read(w * h)
    return np.frombuffer(raw, np.uint8).reshape(h, w).astype(np.float64) / maxval


def export_global_map(gmap: GlobalMap, prefix: str, origin_pose: Pose):
    """Write <prefix>_occupied.pgm, <prefix>_explored.pgm and a JSON sidecar."""
    write_pgm(f"{prefix}_occupied.pgm", gmap.grid[:, :, 0])
    write_pgm(f"{prefix}_explored.pgm", gmap.grid[:, :, 1])
    sidecar = {
        "size": gmap.size,
        "resolution": gmap.resolution,
        "origin_pose": origin_pose.to_dict(),
    }
    with open(f"{prefix}.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
