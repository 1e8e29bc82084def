"""Episode orchestration, JSONL logging, sweeps, reports, and replay.

One episode is a single-threaded loop: observe, build the local map, correct
the odometry estimate, register into the global map, manage the navigation
goal, act, score rewards, and decide whether to speak. Every stochastic draw
descends from cfg.seed through labeled substreams, and logs are written with
round-trip float precision, so identical configs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import binary_dilation

from ._version import __version__
from .errors import ConfigError, MapBoundsError, NoPathError, SchemaError
from .mapping import (GLOBAL_MAP_SIZE, LOCAL_MAP_SIZE, GlobalMap,
                      OdometryNoiseModel, compose_pose, correct_pose,
                      export_global_map, footprint_bbox, ground_truth_global,
                      local_map_from_depth, register_local_map)
from .metrics import (MetricReport, SimilarityTable, build_report,
                      navigation_metrics, pct_area_seen)
from .planning import (EXPLORED_THRESHOLD, GOAL_LATTICE, GOAL_PERIOD_STEPS,
                       OCCUPIED_THRESHOLD, cell_of_point, extract_local_goal,
                       geodesic_distance, local_controller, plan_path,
                       select_global_goal)
from .rewards import EMA_DECAY, RewardState, encode_features, feature_dim
from .speaker import (DEFAULT_SYNONYMS, THRESHOLD_SETS, ExternalCaptioner,
                      SpeakerPolicy, caption_from_summaries, decide,
                      template_caption)
from .world import (AGENT_RADIUS_M, FORWARD_STEP_M, TURN_STEP_DEG, Action,
                    GridWorld, Pose, SensorConfig, apply_action, generate_world,
                    load_world, raycast_observe, world_sha256)

LOG_SCHEMA_VERSION = 1

STREAM_WORLD = 0
STREAM_ODOMETRY = 1
STREAM_DEPTH = 2
STREAM_MAPPER = 3
STREAM_ACTION = 4

ARRIVAL_RADIUS_M = 0.25
GOAL_RETRY_LIMIT = 8
LOCAL_DISTANCE_POP_CAP = 40_000

REWARD_KINDS = ("curiosity", "coverage", "anticipation", "impact-grid", "impact-dme")
POLICY_KINDS = ("plan", "random")


def rng_stream(seed: int, label: int) -> np.random.Generator:
    """Independent generator for one named randomness source of an episode."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(label,)))


@dataclass(frozen=True)
class EpisodeConfig:
    seed: int = 0
    steps: int = 1000
    env: str | None = None
    policy: str = "plan"
    reward_kind: str = "curiosity"
    speaker_variant: str = "always"
    speaker_threshold: float = 0.0
    captioner: str = "template"
    global_map_size: int = GLOBAL_MAP_SIZE
    goal_lattice: int = GOAL_LATTICE
    goal_period: int = GOAL_PERIOD_STEPS
    sensor: SensorConfig = field(default_factory=SensorConfig)
    odometry: OdometryNoiseModel = field(default_factory=OdometryNoiseModel)
    scan_match: bool = True
    map_flip_prob: float = 0.0
    unknown_blocked: bool = False
    ema_decay: float = EMA_DECAY
    world_extent_m: float = 20.0
    world_rooms: int = 4
    world_objects: int = 12

    def validate(self):
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.goal_period < 1:
            raise ConfigError("goal_period must be at least 1")
        if self.policy not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.reward_kind not in REWARD_KINDS:
            raise ConfigError(f"unknown reward kind {self.reward_kind!r}")
        if self.speaker_variant not in THRESHOLD_SETS:
            raise ConfigError(f"unknown speaker variant {self.speaker_variant!r}")
        if self.global_map_size % 2 == 0 or self.global_map_size < LOCAL_MAP_SIZE:
            raise ConfigError("global map size must be odd and at least the local size")
        if self.goal_lattice < 2:
            raise ConfigError("goal lattice must be at least 2")
        if not (self.captioner == "template" or self.captioner.startswith("external:")):
            raise ConfigError(f"captioner must be 'template' or 'external:<endpoint>', got {self.captioner!r}")
        if not 0.0 <= self.map_flip_prob < 1.0:
            raise ConfigError("map_flip_prob must be in [0, 1)")
        if not 0.0 < self.ema_decay <= 1.0:
            raise ConfigError("ema_decay must be in (0, 1]")
        self.sensor.validate()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "steps": self.steps,
            "env": self.env,
            "policy": self.policy,
            "reward_kind": self.reward_kind,
            "speaker_variant": self.speaker_variant,
            "speaker_threshold": self.speaker_threshold,
            "captioner": self.captioner,
            "global_map_size": self.global_map_size,
            "goal_lattice": self.goal_lattice,
            "goal_period": self.goal_period,
            "sensor": {
                "fov_deg": self.sensor.fov_deg,
                "n_rays": self.sensor.n_rays,
                "max_range_m": self.sensor.max_range_m,
                "depth_noise_sigma": self.sensor.depth_noise_sigma,
            },
            "odometry": {
                "sigma_translation": self.odometry.sigma_translation,
                "sigma_rotation": self.odometry.sigma_rotation,
                "bias_translation": self.odometry.bias_translation,
                "bias_rotation": self.odometry.bias_rotation,
            },
            "scan_match": self.scan_match,
            "map_flip_prob": self.map_flip_prob,
            "unknown_blocked": self.unknown_blocked,
            "ema_decay": self.ema_decay,
            "world_extent_m": self.world_extent_m,
            "world_rooms": self.world_rooms,
            "world_objects": self.world_objects,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        d = dict(d)
        sensor = SensorConfig(**d.pop("sensor"))
        odometry = OdometryNoiseModel(**d.pop("odometry"))
        known = {f for f in cls.__dataclass_fields__} - {"sensor", "odometry"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(sensor=sensor, odometry=odometry, **d)


def resolve_world(cfg: EpisodeConfig) -> GridWorld:
    """Load cfg.env if set, otherwise generate a world from the seed stream."""
    if cfg.env:
        return load_world(cfg.env)
    return generate_world(
        np.random.SeedSequence(cfg.seed, spawn_key=(STREAM_WORLD,)),
        extent_m=cfg.world_extent_m, n_rooms=cfg.world_rooms,
        n_objects=cfg.world_objects, name=f"gen-{cfg.seed}")


@dataclass
class EpisodeLog:
    header: dict
    steps: list
    footer: dict

    def to_bytes(self) -> bytes:
        lines = [self.header] + self.steps + [self.footer]
        return b"".join(
            json.dumps(obj, sort_keys=True, separators=(",", ":")).encode() + b"\n"
            for obj in lines)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def write_log(log: EpisodeLog, path: str):
    with open(path, "wb") as fh:
        fh.write(log.to_bytes())


def read_log(path: str) -> EpisodeLog:
    try:
        with open(path, "rb") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable log ({exc})") from exc
    if len(rows) < 2 or rows[0].get("kind") != "header" or rows[-1].get("kind") != "footer":
        raise SchemaError(f"{path}: not a complete episode log")
    if rows[0].get("schema_version") != LOG_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema version {rows[0].get('schema_version')!r}, "
            f"expected {LOG_SCHEMA_VERSION}")
    return EpisodeLog(header=rows[0], steps=rows[1:-1], footer=rows[-1])


def _pose_list(pose: Pose) -> list:
    return [pose.x, pose.y, pose.theta]


def _finite_or_none(value: float):
    return None if math.isinf(value) or math.isnan(value) else value


def _metrics_from_records(records, n_steps, object_categories, sim, nav,
                          pct_seen, extra_flags) -> MetricReport:
    """Shared by live runs and replay so both score identically."""
    captions = [(rec["t"], tuple(rec["caption"]["nouns"]))
                for rec in records if "caption" in rec]
    visibles = {rec["t"]: [(v[1], v[2]) for v in rec["obs"]["visible"]]
                for rec in records}
    return build_report(captions, visibles, n_steps, object_categories, sim,
                        nav, pct_seen, extra_flags)


def _executed_delta(action: str, collided: bool) -> tuple:
    if action == Action.FORWARD:
        return (0.0 if collided else FORWARD_STEP_M, 0.0, 0.0)
    if action == Action.TURN_LEFT:
        return (0.0, 0.0, math.radians(TURN_STEP_DEG))
    return (0.0, 0.0, -math.radians(TURN_STEP_DEG))


def run_episode(cfg: EpisodeConfig, snapshot_every: int = 0,
                snapshot_prefix: str | None = None) -> EpisodeLog:
    """Run one full episode and return its structured log.

    The loop can end early when the map offers no remaining goal (fully
    explored), the pose estimate leaves the global map, or planning fails;
    the partial log stays schema-valid and is still scored.
    """
    cfg.validate()
    world = resolve_world(cfg)
    spawn = world.spawn_poses[cfg.seed % len(world.spawn_poses)]
    res = world.resolution
    truth = ground_truth_global(world, spawn, cfg.global_map_size, res)
    gmap = GlobalMap.empty(cfg.global_map_size, res)
    vocabulary = world.vocabulary
    reward_state = RewardState(cfg.reward_kind, feature_dim(vocabulary), truth,
                               cfg.global_map_size, ema_decay=cfg.ema_decay)
    policy = SpeakerPolicy(cfg.speaker_variant, cfg.speaker_threshold)
    external = None
    if cfg.captioner.startswith("external:"):
        external = ExternalCaptioner(cfg.captioner[len("external:"):], vocabulary)

    rng_odo = rng_stream(cfg.seed, STREAM_ODOMETRY)
    rng_depth = rng_stream(cfg.seed, STREAM_DEPTH)
    rng_mapper = rng_stream(cfg.seed, STREAM_MAPPER)
    rng_action = rng_stream(cfg.seed, STREAM_ACTION)

    count_lookup = reward_state.grid_counts.count if cfg.reward_kind.startswith("impact") else None

    true_pose = spawn
    est_pose = Pose(0.0, 0.0, spawn.theta)
    prev_local = None
    pending_odo = None
    goal = None
    plan = None
    prev_d = None
    records = []
    end_reason = "completed"

    # traversability masks kept in sync with the registered map patches, so
    # planning does not rebinarize the whole grid every step; the geodesic
    # for the local reward always uses the raw occupancy-only mask, while
    # goal selection and path planning see occupancy inflated by the agent
    # radius so the controller is never steered along zero-clearance paths
    m = cfg.global_map_size
    inflate = max(1, int(round(AGENT_RADIUS_M / res)))
    inflate_kernel = np.ones((2 * inflate + 1, 2 * inflate + 1), bool)
    occ_blocked = np.zeros((m, m), np.uint8)
    occ_inflated = np.zeros((m, m), np.uint8)
    known_blocked = np.ones((m, m), np.uint8)
    plan_blocked = known_blocked if cfg.unknown_blocked else occ_inflated

    try:
        for t in range(cfg.steps):
            obs = raycast_observe(world, true_pose, cfg.sensor, rng=rng_depth)
            local = local_map_from_depth(obs.depth, cfg.sensor, res,
                                         size=LOCAL_MAP_SIZE,
                                         flip_prob=cfg.map_flip_prob,
                                         rng=rng_mapper)
            if t > 0:
                delta = pending_odo
                if cfg.scan_match:
                    delta = correct_pose(prev_local, local, delta)
                est_pose = compose_pose(est_pose, delta)

            bbox = footprint_bbox(local, est_pose, gmap)
            r0, r1, c0, c1 = bbox
            old_patch = gmap.grid[r0:r1, c0:c1].copy()
            register_local_map(gmap, local, est_pose)
            patch = gmap.grid[r0:r1, c0:c1]
            blk = patch[:, :, 0] >= OCCUPIED_THRESHOLD
            occ_blocked[r0:r1, c0:c1] = blk
            # dilated occupancy can change up to `inflate` cells beyond the
            # patch, and its value there depends on raw cells one kernel
            # radius further out, so refresh a correspondingly grown window
            ir0, ir1 = max(r0 - inflate, 0), min(r1 + inflate, m)
            ic0, ic1 = max(c0 - inflate, 0), min(c1 + inflate, m)
            er0, er1 = max(ir0 - inflate, 0), min(ir1 + inflate, m)
            ec0, ec1 = max(ic0 - inflate, 0), min(ic1 + inflate, m)
            grown = binary_dilation(occ_blocked[er0:er1, ec0:ec1],
                                    structure=inflate_kernel)
            occ_inflated[ir0:ir1, ic0:ic1] = grown[ir0 - er0:ir1 - er0,
                                                   ic0 - ec0:ic1 - ec0]
            known_blocked[ir0:ir1, ic0:ic1] = (
                occ_inflated[ir0:ir1, ic0:ic1]
                | (gmap.grid[ir0:ir1, ic0:ic1, 1] < EXPLORED_THRESHOLD))

            local_goal = None
            if cfg.policy == "plan":
                arrived = goal is not None and math.hypot(
                    est_pose.x - goal.point[0],
                    est_pose.y - goal.point[1]) <= ARRIVAL_RADIUS_M
                if goal is None or t % cfg.goal_period == 0 or arrived:
                    # the coarse feasibility flood can accept a goal the
                    # full-resolution planner cannot reach; ban it and
                    # reselect, per the planner error contract
                    goal = None
                    agent_cell = cell_of_point(gmap, est_pose.x, est_pose.y)
                    # the agent's current footprint is traversable by
                    # construction (it is standing there), so inside its own
                    # window the planner sees raw occupancy, not the inflated
                    # mask, and cannot be walled in by inflation alone
                    ar, ac = agent_cell
                    win = (slice(max(ar - inflate, 0), min(ar + inflate + 1, m)),
                           slice(max(ac - inflate, 0), min(ac + inflate + 1, m)))
                    plan_mask = plan_blocked.copy()
                    plan_mask[win] = occ_blocked[win]
                    banned = []
                    for _ in range(GOAL_RETRY_LIMIT):
                        cand = select_global_goal(
                            gmap, est_pose, cfg.reward_kind,
                            count_lookup=count_lookup,
                            lattice=cfg.goal_lattice,
                            known_blocked=known_blocked,
                            occupancy_blocked=occ_inflated, excluded=banned)
                        if cand is None:
                            break
                        try:
                            plan = plan_path(gmap, agent_cell, cand.cell,
                                             cfg.unknown_blocked,
                                             blocked=plan_mask)
                            goal = cand
                            break
                        except NoPathError:
                            banned.append(cand.cell)
                    if goal is None:
                        end_reason = "planner_failed" if banned else "fully_explored"
                        break
                local_goal = extract_local_goal(plan, est_pose, gmap)
                action = local_controller(est_pose, local_goal.point, obs,
                                          cfg.sensor)
            else:
                action = Action.ALL[int(rng_action.integers(len(Action.ALL)))]
            new_true, collided = apply_action(world, true_pose, action)
            pending_odo = cfg.odometry.perturb(_executed_delta(action, collided), rng_odo)

            features = encode_features(local, obs.visible, vocabulary)
            rs = reward_state.update(features, est_pose, gmap, bbox, old_patch)

            if local_goal is not None:
                agent_cell = cell_of_point(gmap, est_pose.x, est_pose.y)
                d_now = geodesic_distance(gmap, agent_cell, local_goal.cell,
                                          max_cells=LOCAL_DISTANCE_POP_CAP,
                                          blocked=occ_blocked)
            else:
                d_now = math.inf
            if prev_d is not None and math.isfinite(prev_d) and math.isfinite(d_now):
                r_local = prev_d - d_now
            else:
                r_local = 0.0
            prev_d = d_now

            depth_mean = obs.depth_mean()
            speak, trigger_value = decide(
                policy, depth_mean,
                [v.apparent_area for v in obs.visible], obs.activation)
            caption = None
            if speak:
                if external is not None:
                    caption = external.caption(t, obs)
                else:
                    caption = template_caption(obs, t)

            record = {
                "t": t,
                "true_pose": [true_pose.x - spawn.x, true_pose.y - spawn.y,
                              true_pose.theta],
                "est_pose": _pose_list(est_pose),
                "action": action,
                "collided": collided,
                "r_global": rs.select(cfg.reward_kind),
                "rewards": {
                    "curiosity": rs.curiosity,
                    "coverage": rs.coverage,
                    "anticipation": rs.anticipation,
                    "impact": rs.impact,
                },
                "r_local": r_local,
                "n_hat": _finite_or_none(rs.n_hat),
                "obs": {
                    "depth_mean": depth_mean,
                    "activation": obs.activation,
                    "visible": [[v.object_id, v.category, v.apparent_area]
                                for v in obs.visible],
                },
                "speaker": {"speak": speak, "value": trigger_value},
            }
            if caption is not None:
                record["caption"] = {"text": caption.text,
                                     "nouns": list(caption.nouns)}
            records.append(record)

            if snapshot_every > 0 and snapshot_prefix and (t + 1) % snapshot_every == 0:
                export_global_map(gmap, f"{snapshot_prefix}_t{t + 1:06d}", spawn)

            prev_local = local
            true_pose = new_true
    except MapBoundsError:
        end_reason = "map_bounds"
    finally:
        if external is not None:
            external.close()

    flags = {}
    if external is not None and external.warning_count:
        flags["captioner_warnings"] = external.warning_count
    if reward_state.density is not None and reward_state.density.degenerate_updates:
        flags["dme_degenerate_updates"] = reward_state.density.degenerate_updates

    sim = SimilarityTable(vocabulary, DEFAULT_SYNONYMS)
    nav = navigation_metrics(gmap, truth)
    pct = pct_area_seen(gmap, truth)
    object_categories = [obj.category for obj in world.objects]
    report = _metrics_from_records(records, len(records), object_categories,
                                   sim, nav, pct, flags)

    header = {
        "kind": "header",
        "schema_version": LOG_SCHEMA_VERSION,
        "package_version": __version__,
        "config": cfg.to_dict(),
        "world_name": world.name,
        "world_sha256": world_sha256(world),
        "origin_pose": _pose_list(spawn),
    }
    footer = {
        "kind": "footer",
        "metrics": report.to_dict(),
        "terminated_early": end_reason != "completed",
        "end_reason": end_reason,
        "steps_executed": len(records),
    }
    if snapshot_prefix:
        export_global_map(gmap, f"{snapshot_prefix}_final", spawn)
    return EpisodeLog(header=header, steps=records, footer=footer)


def evaluate_speaker_on_log(log: EpisodeLog, policy: SpeakerPolicy,
                            object_categories, sim: SimilarityTable) -> MetricReport:
    """Score a speaker policy post-hoc on a recorded observation stream.

    Navigation is speaker-independent, so the navigation fields are copied
    from the log footer while captions are re-decided from the per-step
    observation summaries using the template captioner.
    """
    records = []
    for rec in log.steps:
        visible = rec["obs"]["visible"]
        speak, _value = decide(policy, rec["obs"]["depth_mean"],
                               [v[2] for v in visible],
                               rec["obs"]["activation"])
        out = {"t": rec["t"], "obs": rec["obs"]}
        if speak:
            caption = caption_from_summaries(
                [(v[0], v[1], v[2]) for v in visible], rec["t"])
            out["caption"] = {"text": caption.text, "nouns": list(caption.nouns)}
        records.append(out)
    stored = log.footer["metrics"]
    nav = (stored["map_iou"], stored["map_acc"], stored["area_seen"])
    return _metrics_from_records(records, len(records), object_categories,
                                 sim, nav, stored["pct_area_seen"], None)


SWEEP_COLUMNS = ("seed", "policy", "threshold", "status", "loquacity",
                 "cov_mean", "div_mean", "align_mean", "ed_s", "n_captions",
                 "map_iou", "map_acc", "area_seen", "pct_area_seen")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sweep_seed(payload) -> list:
    """Worker: one navigation trace, then every (policy, threshold) cell."""
    cfg_dict, grid, out_dir = payload
    cfg = EpisodeConfig.from_dict(cfg_dict)
    rows = []
    try:
        log = run_episode(cfg)
        write_log(log, os.path.join(out_dir, f"trace_seed{cfg.seed}.jsonl"))
        world = resolve_world(cfg)
        sim = SimilarityTable(world.vocabulary, DEFAULT_SYNONYMS)
        object_categories = [obj.category for obj in world.objects]
    except Exception as exc:
        status = f"error:{type(exc).__name__}"
        return [{"seed": cfg.seed, "policy": variant, "threshold": threshold,
                 "status": status}
                for variant, threshold in grid]
    for variant, threshold in grid:
        try:
            rep = evaluate_speaker_on_log(
                log, SpeakerPolicy(variant, threshold), object_categories, sim)
            rows.append({
                "seed": cfg.seed, "policy": variant, "threshold": threshold,
                "status": "ok", "loquacity": rep.loquacity,
                "cov_mean": rep.cov_mean, "div_mean": rep.div_mean,
                "align_mean": rep.align_mean, "ed_s": rep.ed_s,
                "n_captions": rep.n_captions, "map_iou": rep.map_iou,
                "map_acc": rep.map_acc, "area_seen": rep.area_seen,
                "pct_area_seen": rep.pct_area_seen,
            })
        except Exception as exc:
            rows.append({"seed": cfg.seed, "policy": variant,
                         "threshold": threshold,
                         "status": f"error:{type(exc).__name__}"})
    return rows


def sweep(base_cfg: EpisodeConfig, policy_grid, seeds, out_dir: str,
          workers: int = 1) -> str:
    """Run one navigation trace per seed and score every speaker cell on it.

    Returns the path of the CSV report. Rows are sorted by (seed, policy,
    threshold) so the bytes do not depend on worker scheduling.
    """
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    grid = [(variant, float(threshold)) for variant, threshold in policy_grid]
    if not grid:
        raise ConfigError("sweep needs a non-empty policy grid")
    for variant, _ in grid:
        if variant not in THRESHOLD_SETS:
            raise ConfigError(f"unknown speaker variant {variant!r}")
    if base_cfg.captioner != "template":
        raise ConfigError("sweeps evaluate speakers post-hoc and need the template captioner")
    os.makedirs(out_dir, exist_ok=True)
    # the trace records an observation summary per step; captions are
    # recomputed per cell, so the trace itself runs the always policy
    payloads = [
        (replace(base_cfg, seed=int(seed), speaker_variant="always",
                 speaker_threshold=0.0).to_dict(), grid, out_dir)
        for seed in seeds
    ]
    if workers <= 1:
        row_groups = [_sweep_seed(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            row_groups = list(pool.map(_sweep_seed, payloads))
    rows = [row for group in row_groups for row in group]
    rows.sort(key=lambda r: (r["seed"], r["policy"], r["threshold"]))
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row.get(col, "")) for col in SWEEP_COLUMNS])
    return csv_path


REPORT_FIELDS = ("map_iou", "map_acc", "area_seen", "pct_area_seen",
                 "cov_mean", "div_mean", "loquacity", "align_mean", "ed_s",
                 "n_captions")


def report(log_paths, out_prefix: str) -> dict:
    """Aggregate episode logs into a CSV table and a JSON mean summary."""
    if not log_paths:
        raise ConfigError("report needs at least one log")
    rows = []
    for path in log_paths:
        log = read_log(path)
        metrics = log.footer["metrics"]
        rows.append((path, metrics))
    summary = {
        "n_episodes": len(rows),
        "mean": {f: sum(m[f] for _, m in rows) / len(rows) for f in REPORT_FIELDS},
    }
    csv_path = f"{out_prefix}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("file",) + REPORT_FIELDS)
        for path, m in rows:
            writer.writerow([path] + [_format_cell(m[f]) for f in REPORT_FIELDS])
    json_path = f"{out_prefix}.json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary


def replay(log_path: str) -> tuple:
    """Re-score a log's description metrics and diff them against its footer.

    The world is reloaded (or regenerated) from the logged config and its
    hash checked, navigation fields are reused from the footer, and captions
    are taken from the recorded steps. Returns (matches, recomputed report).
    """
    log = read_log(log_path)
    cfg = EpisodeConfig.from_dict(log.header["config"])
    world = resolve_world(cfg)
    if world_sha256(world) != log.header["world_sha256"]:
        raise SchemaError(f"{log_path}: world hash mismatch; "
                          "the environment changed since this log was written")
    sim = SimilarityTable(world.vocabulary, DEFAULT_SYNONYMS)
    object_categories = [obj.category for obj in world.objects]
    stored = log.footer["metrics"]
    nav = (stored["map_iou"], stored["map_acc"], stored["area_seen"])
    flags = {k: v for k, v in stored["degenerate_flags"].items()
             if k in ("captioner_warnings", "dme_degenerate_updates")}
    recomputed = _metrics_from_records(
        log.steps, log.footer["steps_executed"], object_categories, sim, nav,
        stored["pct_area_seen"], flags or None)
    matches = recomputed.to_dict() == stored
    return matches, recomputed
