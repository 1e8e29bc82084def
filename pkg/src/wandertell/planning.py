"""Hierarchical navigation: global goal scoring, A* paths, local control.

All operations work on the agent's GlobalMap in the episode frame. Occupancy
is binarized at 0.5; cells with explored < 0.5 count as unexplored and are
traversable by default (optimistic planning; a config flag flips that).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NoPathError
from .mapping import GlobalMap
from .world import Action, Pose, Observation, SensorConfig, wrap_angle, TURN_STEP_DEG

GOAL_LATTICE = 240
GOAL_PERIOD_STEPS = 25
GOAL_RADIUS_M = 2.0
CURIOSITY_DECAY_M = 10.0
LOCAL_GOAL_RANGE_M = 1.25
FORWARD_CLEARANCE_M = 0.35
CENTER_RAY_HALF_ANGLE_DEG = 15.0

OCCUPIED_THRESHOLD = 0.5
EXPLORED_THRESHOLD = 0.5
COARSE_FLOOD_FACTOR = 4


@dataclass(frozen=True)
class GlobalGoal:
    cell: tuple          # (row, col) on the global map
    point: tuple         # (x, y) meters in the episode frame
    score: float
    reward_kind: str
    fallback: bool = False


@dataclass
class Plan:
    cells: np.ndarray    # int32 (K, 2) rows of (row, col), start first
    cost_m: float


@dataclass(frozen=True)
class LocalGoal:
    cell: tuple
    point: tuple
    plan_index: int


def cell_of_point(gmap: GlobalMap, x: float, y: float) -> tuple:
    c = gmap.center
    return (int(math.floor(y / gmap.resolution + 0.5)) + c,
            int(math.floor(x / gmap.resolution + 0.5)) + c)


def point_of_cell(gmap: GlobalMap, cell: tuple) -> tuple:
    c = gmap.center
    return ((cell[1] - c) * gmap.resolution, (cell[0] - c) * gmap.resolution)


def _blocked_mask(gmap: GlobalMap, unknown_blocked: bool = False) -> np.ndarray:
    blocked = gmap.grid[:, :, 0] >= OCCUPIED_THRESHOLD
    if unknown_blocked:
        blocked |= gmap.grid[:, :, 1] < EXPLORED_THRESHOLD
    return blocked.astype(np.uint8)


_CANDIDATES: dict = {}


def _candidate_cells(m: int, lattice: int, factor: int):
    """Deduplicated candidate cells of the goal lattice, row-major order.

    Cached per (map size, lattice): the arrays are immutable position data
    reused across every selection call.
    """
    key = (m, lattice, factor)
    cached = _CANDIDATES.get(key)
    if cached is None:
        coords = np.floor((np.arange(lattice, dtype=np.float64) + 0.5)
                          * m / lattice).astype(np.int64)
        rr, cc = np.meshgrid(coords, coords, indexing="ij")
        packed = (rr * m + cc).ravel()
        # duplicates keep the lowest candidate index; packed order matches it
        cells = np.unique(packed)
        cand_r = (cells // m).astype(np.int32)
        cand_c = (cells % m).astype(np.int32)
        cached = (cand_r, cand_c, cand_r // factor, cand_c // factor)
        _CANDIDATES[key] = cached
    return cached


def _disc_template(radius: int):
    dr = np.arange(-radius, radius + 1)
    return np.floor(np.sqrt(np.maximum(radius * radius - dr * dr, 0))).astype(np.int32)


def select_global_goal(gmap: GlobalMap, est_pose: Pose, reward_kind: str,
                       count_lookup=None, lattice: int = GOAL_LATTICE,
                       radius_m: float = GOAL_RADIUS_M,
                       known_blocked: np.ndarray | None = None,
                       occupancy_blocked: np.ndarray | None = None,
                       excluded=()):
    """Pick the best exploration goal on a lattice x lattice candidate grid.

    Feasibility is frontier-oriented: a candidate survives if it is not
    occupied and a coarse flood fill over the known free space (explored and
    obstacle-free cells, downsampled COARSE_FLOOD_FACTOR times, any blocked
    fine cell blocking its coarse cell) reaches it from the agent. Survivors
    are scored by unexplored-cell counts within radius_m, shaped per reward
    kind: impact divides by sqrt(pseudo-count), curiosity decays with
    geodesic distance over the occupancy-only map. Returns None when even
    the frontier fallback is empty, which callers treat as a fully explored
    map.

    known_blocked / occupancy_blocked are optional precomputed uint8 masks
    (occupied-or-unexplored and occupied-only respectively); callers that
    select every few steps keep them updated incrementally. excluded is a
    collection of (row, col) cells to skip, for reselecting after a goal
    the flood fill accepted turns out to have no path.
    """
    m = gmap.size
    res = gmap.resolution
    agent_cell = cell_of_point(gmap, est_pose.x, est_pose.y)
    if known_blocked is None:
        known_blocked = _blocked_mask(gmap, unknown_blocked=True)
    factor = COARSE_FLOOD_FACTOR
    coarse = _kernels.coarse_blocked(known_blocked, factor)
    reach = _kernels.bfs_distances(coarse, agent_cell[0] // factor,
                                   agent_cell[1] // factor)

    cand_r, cand_c, cand_rf, cand_cf = _candidate_cells(m, lattice, factor)
    idx = np.flatnonzero(reach[cand_rf, cand_cf] >= 0)
    if idx.size:
        rows_all = cand_r[idx]
        cols_all = cand_c[idx]
        keep = gmap.grid[rows_all, cols_all, 0] < OCCUPIED_THRESHOLD
        for cell in excluded:
            keep &= ~((rows_all == cell[0]) & (cols_all == cell[1]))
        rows = np.ascontiguousarray(rows_all[keep])
        cols = np.ascontiguousarray(cols_all[keep])
    else:
        rows = cols = np.empty(0, np.int32)

    if rows.size:
        radius = int(round(radius_m / res))
        half_w = _disc_template(radius)
        r_lo = max(int(rows.min()) - radius, 0)
        r_hi = min(int(rows.max()) + radius + 1, m)
        c_lo = max(int(cols.min()) - radius, 0)
        c_hi = min(int(cols.max()) + radius + 1, m)
        integral = _kernels.unknown_integral(gmap.grid, EXPLORED_THRESHOLD,
                                             r_lo, r_hi, c_lo, c_hi)
        wrows = rows - r_lo
        wcols = cols - c_lo

        if reward_kind in ("impact-grid", "impact-dme"):
            if count_lookup is None:
                raise ValueError("impact goal scoring needs a pseudo-count lookup")
            counts = _kernels.disc_counts(integral, wrows, wcols, half_w, radius)
            scale = np.empty(counts.shape[0], np.float64)
            for i in range(counts.shape[0]):
                x, y = point_of_cell(gmap, (int(rows[i]), int(cols[i])))
                scale[i] = 1.0 / math.sqrt(max(count_lookup(x, y), 1.0))
            scores = counts * scale
        elif reward_kind == "curiosity":
            counts = _kernels.disc_counts(integral, wrows, wcols, half_w, radius)
            if occupancy_blocked is None:
                occupancy_blocked = _blocked_mask(gmap)
            dist = _kernels.bfs_distances_to(occupancy_blocked,
                                             agent_cell[0], agent_cell[1],
                                             rows, cols)
            geo = dist[rows, cols].astype(np.float64) * res
            # unreachable on the occupancy map would give a bogus -1
            # distance; treat those candidates as infinitely far
            scores = np.where(geo >= 0.0,
                              counts * np.exp(-geo / CURIOSITY_DECAY_M), 0.0)
        else:  # coverage, anticipation: plain counts, first max wins
            cap = float(np.sum(2 * half_w.astype(np.int64) + 1))
            best, best_count = _kernels.disc_argmax(
                integral, wrows, wcols, half_w, radius, cap)
            if best >= 0 and best_count > 0.0:
                cell = (int(rows[best]), int(cols[best]))
                return GlobalGoal(cell=cell, point=point_of_cell(gmap, cell),
                                  score=float(best_count),
                                  reward_kind=reward_kind)
            scores = None

        if scores is not None and (scores > 0.0).any():
            best = int(np.argmax(scores))  # first occurrence wins ties
            cell = (int(rows[best]), int(cols[best]))
            return GlobalGoal(cell=cell, point=point_of_cell(gmap, cell),
                              score=float(scores[best]), reward_kind=reward_kind)

    # fallback: nearest unexplored frontier cell, where "nearest" is the
    # known-free geodesic to an adjacent explored cell plus the final step
    dist_k = _kernels.bfs_distances(known_blocked, agent_cell[0], agent_cell[1])
    big = np.iinfo(np.int32).max
    reach_d = np.where(dist_k >= 0, dist_k, big - 1)
    nd = np.full((m, m), big, np.int64)
    nd[1:, :] = np.minimum(nd[1:, :], reach_d[:-1, :])
    nd[:-1, :] = np.minimum(nd[:-1, :], reach_d[1:, :])
    nd[:, 1:] = np.minimum(nd[:, 1:], reach_d[:, :-1])
    nd[:, :-1] = np.minimum(nd[:, :-1], reach_d[:, 1:])
    obstacle = gmap.grid[:, :, 0] >= OCCUPIED_THRESHOLD
    explored = gmap.grid[:, :, 1] >= EXPLORED_THRESHOLD
    frontier = ~explored & ~obstacle & (nd < big - 1)
    for cell in excluded:
        frontier[cell[0], cell[1]] = False
    if not frontier.any():
        return None
    d = np.where(frontier, nd + 1, big)
    idx = int(np.argmin(d.ravel()))  # argmin returns the lowest row-major tie
    cell = (idx // m, idx % m)
    return GlobalGoal(cell=cell, point=point_of_cell(gmap, cell), score=0.0,
                      reward_kind=reward_kind, fallback=True)


def plan_path(gmap: GlobalMap, start: tuple, goal: tuple,
              unknown_blocked: bool = False,
              blocked: np.ndarray | None = None) -> Plan:
    """4-connected unit-cost A* from start to goal on the binarized map.

    Deterministic tie-breaking by (f, h, row-major index). The start cell is
    traversable regardless of the map (the agent stands on it), and the goal
    cell may be entered even when the mask blocks it, so unexplored frontier
    goals stay plannable under a pessimistic mask. Occupied goals raise
    NoPathError, as does an unreachable goal. blocked, when given, is a
    precomputed uint8 mask matching _blocked_mask(gmap, unknown_blocked).
    """
    m = gmap.size
    if blocked is None:
        blocked = _blocked_mask(gmap, unknown_blocked)
    if (gmap.grid[goal[0], goal[1], 0] >= OCCUPIED_THRESHOLD
            and tuple(goal) != tuple(start)):
        raise NoPathError(f"goal cell {goal} is occupied")
    found, parent = _kernels.astar_parents(
        blocked, start[0], start[1], goal[0], goal[1])
    if not found:
        raise NoPathError(f"no path from {start} to {goal}")
    path = []
    idx = goal[0] * m + goal[1]
    start_idx = start[0] * m + start[1]
    while idx != start_idx:
        path.append((idx // m, idx % m))
        idx = int(parent[idx])
    path.append(start)
    path.reverse()
    cells = np.array(path, np.int32)
    return Plan(cells=cells, cost_m=(len(path) - 1) * gmap.resolution)


def extract_local_goal(plan: Plan, est_pose: Pose, gmap: GlobalMap) -> LocalGoal:
    """Farthest plan cell within LOCAL_GOAL_RANGE_M along the path.

    Along-path distance is measured from the plan cell nearest the agent
    (euclidean, earliest index on ties).
    """
    res = gmap.resolution
    c = gmap.center
    xs = (plan.cells[:, 1] - c) * res
    ys = (plan.cells[:, 0] - c) * res
    d2 = (xs - est_pose.x) ** 2 + (ys - est_pose.y) ** 2
    i0 = int(np.argmin(d2))
    budget = int(math.floor(LOCAL_GOAL_RANGE_M / res + 1e-9))
    j = min(i0 + budget, len(plan.cells) - 1)
    cell = (int(plan.cells[j, 0]), int(plan.cells[j, 1]))
    return LocalGoal(cell=cell, point=(float(xs[j]), float(ys[j])), plan_index=j)


def local_controller(est_pose: Pose, goal_point: tuple, obs: Observation,
                     cfg: SensorConfig) -> str:
    """One reactive action toward the local goal.

    Turn while the heading error exceeds one turn step (ties keep left);
    otherwise go forward if the central rays clear FORWARD_CLEARANCE_M, else
    turn toward the side with the larger mean depth.
    """
    err = wrap_angle(math.atan2(goal_point[1] - est_pose.y,
                                goal_point[0] - est_pose.x) - est_pose.theta)
    if abs(err) > math.radians(TURN_STEP_DEG):
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    fov = math.radians(cfg.fov_deg)
    rel = fov * (np.arange(cfg.n_rays) / (cfg.n_rays - 1) - 0.5)
    center = np.abs(rel) <= math.radians(CENTER_RAY_HALF_ANGLE_DEG)
    if float(np.min(obs.depth[center])) >= FORWARD_CLEARANCE_M:
        return Action.FORWARD
    left = obs.depth[rel > 0]
    right = obs.depth[rel < 0]
    mean_left = float(np.mean(left)) if left.size else 0.0
    mean_right = float(np.mean(right)) if right.size else 0.0
    return Action.TURN_LEFT if mean_left >= mean_right else Action.TURN_RIGHT


def geodesic_distance(gmap: GlobalMap, a: tuple, b: tuple,
                      unknown_blocked: bool = False,
                      max_cells: int | None = None,
                      blocked: np.ndarray | None = None) -> float:
    """Shortest 4-connected path length a -> b in meters; inf if unreachable.

    The start cell a is traversable regardless of the map. max_cells bounds
    the BFS expansion for per-step use; None searches the whole map. blocked,
    when given, is a precomputed uint8 mask matching
    _blocked_mask(gmap, unknown_blocked).
    """
    if blocked is None:
        blocked = _blocked_mask(gmap, unknown_blocked)
    if blocked[b[0], b[1]] and tuple(b) != tuple(a):
        return math.inf
    cap = max_cells if max_cells is not None else gmap.size * gmap.size
    steps = _kernels.bfs_steps_to(blocked, a[0], a[1], b[0], b[1], cap)
    if steps < 0:
        return math.inf
    return steps * gmap.resolution
