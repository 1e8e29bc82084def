"""Grid world: geometry, procedural generation, raycast sensing, kinematics.

Coordinates: cell (row, col) covers x in [col*res, (col+1)*res) and
y in [row*res, (row+1)*res). Poses are continuous; theta = 0 faces +x and
grows counterclockwise. Occupancy is 0 (free) or 1 (obstacle).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import GenerationError, SchemaError

FREE = 0
OBSTACLE = 1

FORWARD_STEP_M = 0.25
TURN_STEP_DEG = 10.0
AGENT_RADIUS_M = 0.10

ACTIVATION_BASE = 4.0
ACTIVATION_GAIN = 4.0

WORLD_SCHEMA_VERSION = 1

DEFAULT_RESOLUTION = 0.05
WALL_THICKNESS_CELLS = 2   # thick enough that a 0.25 m step cannot tunnel
DOOR_WIDTH_M = 0.9
MIN_ROOM_M = 1.5

DEFAULT_VOCABULARY = (
    "bed", "cabinet", "chair", "couch", "desk", "lamp",
    "plant", "rug", "shelf", "sink", "table", "tv",
)


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Pose:
    """Continuous planar pose; theta is kept in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def to_dict(self) -> dict:
        return {"x": float(self.x), "y": float(self.y), "theta": float(self.theta)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["x"], d["y"], d["theta"])


class Action:
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"

    ALL = (FORWARD, TURN_LEFT, TURN_RIGHT)


@dataclass(frozen=True)
class SceneObject:
    """A labeled obstacle blob: id, category, its cells, and salience."""

    id: int
    category: str
    cells: tuple  # sorted tuple of (row, col)
    salience: float = 1.0


@dataclass(frozen=True)
class SensorConfig:
    fov_deg: float = 90.0
    n_rays: int = 128
    max_range_m: float = 5.0
    depth_noise_sigma: float = 0.0

    def validate(self):
        if not (0.0 < self.fov_deg <= 360.0):
            raise ValueError("fov_deg must be in (0, 360]")
        if self.n_rays < 2:
            raise ValueError("n_rays must be at least 2")
        if self.max_range_m <= 0.0:
            raise ValueError("max_range_m must be positive")
        if self.depth_noise_sigma < 0.0:
            raise ValueError("depth_noise_sigma must be non-negative")


class VisibleObject(NamedTuple):
    object_id: int
    category: str
    apparent_area: float
    salience: float


@dataclass
class Observation:
    """One sensor sweep: per-ray depths, visible objects, activation."""

    depth: np.ndarray
    visible: list
    activation: float

    def depth_mean(self) -> float:
        if self.depth.size == 0:
            return 0.0
        return float(np.mean(self.depth))


@dataclass
class GridWorld:
    """Static environment: occupancy bitmap, labeled objects, spawn poses."""

    name: str
    resolution: float
    occupancy: np.ndarray           # uint8 (H, W)
    objects: list = field(default_factory=list)
    spawn_poses: list = field(default_factory=list)
    vocabulary: tuple = DEFAULT_VOCABULARY
    object_id_grid: np.ndarray = None  # int32, -1 where no object

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if self.object_id_grid is None:
            grid = np.full(self.occupancy.shape, -1, np.int32)
            for obj in self.objects:
                for (r, c) in obj.cells:
                    grid[r, c] = obj.id
            self.object_id_grid = grid

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    def in_bounds(self, x: float, y: float) -> bool:
        return (0.0 <= x < self.width * self.resolution
                and 0.0 <= y < self.height * self.resolution)

    def cell_of(self, x: float, y: float) -> tuple:
        return (int(math.floor(y / self.resolution)),
                int(math.floor(x / self.resolution)))

    def validate(self):
        """Check the structural invariants; raises ValueError on violation."""
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.occupancy.ndim != 2:
            raise ValueError("occupancy must be 2-D")
        if not np.isin(self.occupancy, (FREE, OBSTACLE)).all():
            raise ValueError("occupancy cells must be 0 or 1")
        if not self.vocabulary:
            raise ValueError("vocabulary must be non-empty")
        for obj in self.objects:
            if obj.category not in self.vocabulary:
                raise ValueError(f"object {obj.id} category {obj.category!r} "
                                 "not in the vocabulary")
            if not (0.0 <= obj.salience <= 1.0):
                raise ValueError(f"object {obj.id} salience out of [0, 1]")
            for (r, c) in obj.cells:
                if not (0 <= r < self.height and 0 <= c < self.width):
                    raise ValueError(f"object {obj.id} cell out of bounds")
                if self.occupancy[r, c] != OBSTACLE:
                    raise ValueError(f"object {obj.id} cell not an obstacle")
        if not self.spawn_poses:
            raise ValueError("world needs at least one spawn pose")
        for pose in self.spawn_poses:
            if _disc_collides(self, pose.x, pose.y):
                raise ValueError("spawn pose lacks agent clearance")
        # free space must be one connected component reachable from spawn 0
        free = self.occupancy == FREE
        labels, count = ndimage.label(free)
        if count > 0:
            r0, c0 = self.cell_of(self.spawn_poses[0].x, self.spawn_poses[0].y)
            spawn_label = labels[r0, c0]
            if spawn_label == 0 or (labels[free] != spawn_label).any():
                raise ValueError("free space is not fully reachable from spawn 0")


def _disc_collides(world: GridWorld, x: float, y: float,
                   radius: float = AGENT_RADIUS_M) -> bool:
    """True if a disc at (x, y) overlaps an obstacle cell or leaves the grid."""
    res = world.resolution
    r_min = int(math.floor((y - radius) / res))
    r_max = int(math.floor((y + radius) / res))
    c_min = int(math.floor((x - radius) / res))
    c_max = int(math.floor((x + radius) / res))
    for r in range(r_min, r_max + 1):
        for c in range(c_min, c_max + 1):
            inside = 0 <= r < world.height and 0 <= c < world.width
            if inside and world.occupancy[r, c] == FREE:
                continue
            # distance from disc center to this cell's rectangle
            dx = max(c * res - x, 0.0, x - (c + 1) * res)
            dy = max(r * res - y, 0.0, y - (r + 1) * res)
            if math.hypot(dx, dy) < radius:
                return True
    return False


def ray_bearings(theta: float, cfg: SensorConfig) -> np.ndarray:
    """World-frame bearing of each ray: evenly spaced across the fov."""
    fov = math.radians(cfg.fov_deg)
    idx = np.arange(cfg.n_rays, dtype=np.float64)
    return theta + fov * (idx / (cfg.n_rays - 1) - 0.5)


def compute_activation(visible: list) -> float:
    """Salience-weighted visual drive: base + gain * sum(area * salience)."""
    total = 0.0
    for v in visible:
        total += v.apparent_area * v.salience
    return ACTIVATION_BASE + ACTIVATION_GAIN * total


def raycast_observe(world: GridWorld, pose: Pose, cfg: SensorConfig,
                    rng: np.random.Generator | None = None) -> Observation:
    """Cast cfg.n_rays rays from the pose and summarize what they hit.

    Depth per ray is the distance to the first obstacle cell boundary,
    clamped to max_range. apparent_area of an object is the fraction of rays
    whose first hit belongs to it. Optional Gaussian depth noise is applied
    after hit attribution and re-clamped to [0, max_range].
    """
    cfg.validate()
    if not world.in_bounds(pose.x, pose.y):
        raise ValueError("pose outside the world grid")
    r, c = world.cell_of(pose.x, pose.y)
    if world.occupancy[r, c] != FREE:
        raise ValueError("pose inside an obstacle cell")

    bearings = ray_bearings(pose.theta, cfg)
    depth, hit_obj, _hit = _kernels.ray_depths(
        world.occupancy, world.object_id_grid, pose.x, pose.y,
        bearings, cfg.max_range_m, world.resolution)

    visible = []
    ids = hit_obj[hit_obj >= 0]
    if ids.size:
        counts = np.bincount(ids)
        for oid in np.nonzero(counts)[0]:
            obj = world.objects[int(oid)]
            visible.append(VisibleObject(
                object_id=int(oid),
                category=obj.category,
                apparent_area=float(counts[oid]) / cfg.n_rays,
                salience=obj.salience,
            ))

    if cfg.depth_noise_sigma > 0.0:
        if rng is None:
            raise ValueError("depth noise requires an rng")
        depth = depth + rng.normal(0.0, cfg.depth_noise_sigma, size=depth.shape)
        np.clip(depth, 0.0, cfg.max_range_m, out=depth)

    return Observation(depth=depth, visible=visible,
                       activation=compute_activation(visible))


def apply_action(world: GridWorld, pose: Pose, action: str) -> tuple:
    """Execute one atomic action; returns (new_pose, collided).

    Forward moves FORWARD_STEP_M along the heading unless any cell within the
    agent radius of the target overlaps an obstacle or leaves the grid, in
    which case the pose is unchanged and collided is True. Turns always
    succeed and rotate by exactly TURN_STEP_DEG.
    """
    if action == Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.theta + math.radians(TURN_STEP_DEG)), False
    if action == Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.theta - math.radians(TURN_STEP_DEG)), False
    if action != Action.FORWARD:
        raise ValueError(f"unknown action: {action!r}")
    nx = pose.x + FORWARD_STEP_M * math.cos(pose.theta)
    ny = pose.y + FORWARD_STEP_M * math.sin(pose.theta)
    if _disc_collides(world, nx, ny):
        return pose, True
    return Pose(nx, ny, pose.theta), False


# ---------------------------------------------------------------------------
# procedural generation

MAX_WORLD_ATTEMPTS = 25
_OBJECT_MIN_M = 0.2
_OBJECT_MAX_M = 0.6


def _split_rooms(rng, lo_r, lo_c, hi_r, hi_c, n_rooms, occ, min_cells, door_cells):
    """Recursive binary partition; draws walls with one door per split.

    Leaves are (r0, c0, r1, c1) half-open free regions. Returns None when the
    requested room count cannot be met.
    """
    leaves = [(lo_r, lo_c, hi_r, hi_c)]
    wall = WALL_THICKNESS_CELLS
    while len(leaves) < n_rooms:
        # split the largest splittable leaf; ties go to the lowest index
        order = sorted(range(len(leaves)),
                       key=lambda i: (-(leaves[i][2] - leaves[i][0]) * (leaves[i][3] - leaves[i][1]), i))
        split_done = False
        for li in order:
            r0, c0, r1, c1 = leaves[li]
            h, w = r1 - r0, c1 - c0
            horizontal = h >= w  # split the longer axis with a horizontal wall
            span = h if horizontal else w
            if span < 2 * min_cells + wall:
                continue
            lo = min_cells
            hi = span - min_cells - wall
            pos = int(rng.integers(lo, hi + 1))
            if horizontal:
                wr = r0 + pos
                door = int(rng.integers(c0, c1 - door_cells + 1))
                occ[wr:wr + wall, c0:c1] = OBSTACLE
                occ[wr:wr + wall, door:door + door_cells] = FREE
                leaves[li] = (r0, c0, wr, c1)
                leaves.append((wr + wall, c0, r1, c1))
            else:
                wc = c0 + pos
                door = int(rng.integers(r0, r1 - door_cells + 1))
                occ[r0:r1, wc:wc + wall] = OBSTACLE
                occ[door:door + door_cells, wc:wc + wall] = FREE
                leaves[li] = (r0, c0, r1, wc)
                leaves.append((r0, wc + wall, r1, c1))
            split_done = True
            break
        if not split_done:
            return None
    return leaves


def _free_connected(occ) -> bool:
    free = occ == FREE
    if not free.any():
        return False
    _, count = ndimage.label(free)
    return count == 1


def _place_objects(rng, occ, rooms, n_objects, vocabulary, resolution):
    """Drop axis-aligned rectangular objects onto free cells.

    Each placement is rejected if it overlaps non-free cells or disconnects
    the free space. Returns None if an object cannot be placed.
    """
    objects = []
    min_cells = max(2, int(round(_OBJECT_MIN_M / resolution)))
    max_cells = max(min_cells, int(round(_OBJECT_MAX_M / resolution)))
    for oid in range(n_objects):
        placed = False
        for _ in range(60):
            room = rooms[int(rng.integers(0, len(rooms)))]
            r0, c0, r1, c1 = room
            oh = int(rng.integers(min_cells, max_cells + 1))
            ow = int(rng.integers(min_cells, max_cells + 1))
            if r1 - r0 <= oh + 2 or c1 - c0 <= ow + 2:
                continue
            rr = int(rng.integers(r0, r1 - oh + 1))
            cc = int(rng.integers(c0, c1 - ow + 1))
            patch = occ[rr:rr + oh, cc:cc + ow]
            if (patch != FREE).any():
                continue
            occ[rr:rr + oh, cc:cc + ow] = OBSTACLE
            if not _free_connected(occ):
                occ[rr:rr + oh, cc:cc + ow] = FREE
                continue
            category = str(vocabulary[int(rng.integers(0, len(vocabulary)))])
            cells = tuple((r, c)
                          for r in range(rr, rr + oh)
                          for c in range(cc, cc + ow))
            objects.append(SceneObject(id=oid, category=category, cells=cells))
            placed = True
            break
        if not placed:
            return None
    return objects


def _pick_spawns(rng, world_occ, resolution, k=5):
    """Cell-center spawn poses with full agent clearance, theta = 0."""
    h, w = world_occ.shape
    free = world_occ == FREE
    # clearance: erode the free mask by the agent disc footprint
    rad_cells = int(math.ceil(AGENT_RADIUS_M / resolution)) + 1
    size = 2 * rad_cells + 1
    yy, xx = np.mgrid[-rad_cells:rad_cells + 1, -rad_cells:rad_cells + 1]
    struct = (np.hypot(xx, yy) * resolution) < (AGENT_RADIUS_M + resolution)
    clear = ndimage.binary_erosion(free, structure=struct, border_value=0)
    candidates = np.flatnonzero(clear)
    if candidates.size == 0:
        return None
    take = min(k, candidates.size)
    chosen = rng.choice(candidates, size=take, replace=False)
    poses = []
    for idx in sorted(int(i) for i in chosen):
        r, c = divmod(idx, w)
        poses.append(Pose((c + 0.5) * resolution, (r + 0.5) * resolution, 0.0))
    return poses


def generate_world(seed: int, extent_m: float = 20.0, n_rooms: int = 4,
                   n_objects: int = 12, vocabulary=DEFAULT_VOCABULARY,
                   resolution: float = DEFAULT_RESOLUTION,
                   name: str | None = None) -> GridWorld:
    """Procedurally generate a multi-room world.

    Binary-partition room splits with door gaps, rectangular vocabulary
    objects, free-space connectivity enforced by construction and checked per
    placement. Identical arguments produce an identical world.
    """
    if extent_m < 5.0:
        raise GenerationError("extent_m must be at least 5")
    if n_rooms < 1:
        raise GenerationError("n_rooms must be at least 1")
    if n_objects < 0:
        raise GenerationError("n_objects must be non-negative")
    if not vocabulary:
        raise GenerationError("vocabulary must be non-empty")
    rng = np.random.default_rng(seed)
    n = int(round(extent_m / resolution))
    wall = WALL_THICKNESS_CELLS
    min_cells = int(round(MIN_ROOM_M / resolution))
    door_cells = int(round(DOOR_WIDTH_M / resolution))

    for _ in range(MAX_WORLD_ATTEMPTS):
        occ = np.zeros((n, n), np.uint8)
        occ[:wall, :] = OBSTACLE
        occ[-wall:, :] = OBSTACLE
        occ[:, :wall] = OBSTACLE
        occ[:, -wall:] = OBSTACLE
        rooms = _split_rooms(rng, wall, wall, n - wall, n - wall,
                             n_rooms, occ, min_cells, door_cells)
        if rooms is None:
            continue
        if not _free_connected(occ):
            continue
        objects = _place_objects(rng, occ, rooms, n_objects, vocabulary, resolution)
        if objects is None:
            continue
        spawns = _pick_spawns(rng, occ, resolution)
        if spawns is None:
            continue
        world = GridWorld(
            name=name or f"proc-{seed}",
            resolution=resolution,
            occupancy=occ,
            objects=objects,
            spawn_poses=spawns,
            vocabulary=tuple(vocabulary),
        )
        try:
            world.validate()
        except ValueError:
            continue
        return world
    raise GenerationError(
        f"could not generate a valid world for seed={seed} "
        f"(extent_m={extent_m}, n_rooms={n_rooms}, n_objects={n_objects})")


# ---------------------------------------------------------------------------
# serialization

def _rle_encode(flat: np.ndarray) -> list:
    """Alternating run lengths, first run counts FREE cells (may be 0)."""
    runs = []
    current = FREE
    count = 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = int(v)
            count = 1
    runs.append(count)
    return runs


def _rle_decode(runs: list, size: int) -> np.ndarray:
    flat = np.empty(size, np.uint8)
    pos = 0
    value = FREE
    for run in runs:
        flat[pos:pos + run] = value
        pos += run
        value = OBSTACLE if value == FREE else FREE
    if pos != size:
        raise SchemaError("occupancy run lengths do not cover the grid")
    return flat


def world_to_dict(world: GridWorld) -> dict:
    return {
        "version": WORLD_SCHEMA_VERSION,
        "name": world.name,
        "resolution": world.resolution,
        "width": world.width,
        "height": world.height,
        "occupancy": _rle_encode(world.occupancy.ravel()),
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "cells": [[r, c] for (r, c) in o.cells],
                "salience": o.salience,
            }
            for o in world.objects
        ],
        "spawn_poses": [p.to_dict() for p in world.spawn_poses],
        "vocabulary": list(world.vocabulary),
    }


def world_from_dict(data: dict) -> GridWorld:
    version = data.get("version")
    if version != WORLD_SCHEMA_VERSION:
        raise SchemaError(f"unsupported world schema version: {version!r}")
    h, w = int(data["height"]), int(data["width"])
    occ = _rle_decode(data["occupancy"], h * w).reshape(h, w)
    objects = [
        SceneObject(
            id=int(o["id"]),
            category=str(o["category"]),
            cells=tuple((int(r), int(c)) for r, c in o["cells"]),
            salience=float(o.get("salience", 1.0)),
        )
        for o in data["objects"]
    ]
    world = GridWorld(
        name=str(data["name"]),
        resolution=float(data["resolution"]),
        occupancy=occ,
        objects=objects,
        spawn_poses=[Pose.from_dict(p) for p in data["spawn_poses"]],
        vocabulary=tuple(str(v) for v in data["vocabulary"]),
    )
    world.validate()
    return world


def save_world(world: GridWorld, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world_to_dict(world), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_world(path: str) -> GridWorld:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return world_from_dict(data)


def world_sha256(world: GridWorld) -> str:
    blob = json.dumps(world_to_dict(world), sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
