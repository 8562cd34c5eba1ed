"""Scenario generation, meta-actions, and the 15 Hz stepping loop."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .kernels import ACCEL_LIMIT, BRAKE_LIMIT, PHYSICS_DT, SPEED_GAIN
from .world import (Lane, RoadNetwork, VehicleState, detect_collisions,
                    LATERAL_MARGIN, UnknownVehicleError)

KINDS = ("highway", "intersection", "roundabout", "merge")
CONDITION_FLAGS = ("wet", "snow", "low_visibility")
EGO_ID = 0
IDM_LOOKAHEAD = 60.0


class ScenarioError(ValueError):
    pass


class MetaAction(enum.IntEnum):
    """The five discrete ego decisions; integer values give the MPC tie-break order."""

    IDLE = 0
    FASTER = 1
    SLOWER = 2
    LANE_LEFT = 3
    LANE_RIGHT = 4


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    n_background: int = 8
    seed: int = 0
    max_sim_time: float = 60.0
    speed_cap: float = 30.0
    condition_flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.n_background < 0:
            raise ScenarioError("n_background must be >= 0")
        if self.max_sim_time <= 0 or self.speed_cap <= 0:
            raise ScenarioError("max_sim_time and speed_cap must be positive")
        flags = tuple(sorted(set(self.condition_flags)))
        for f in flags:
            if f not in CONDITION_FLAGS:
                raise ScenarioError(f"unknown condition flag {f!r}")
        object.__setattr__(self, "condition_flags", flags)

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "n_background": self.n_background,
            "seed": self.seed,
            "max_sim_time": self.max_sim_time,
            "speed_cap": self.speed_cap,
            "condition_flags": list(self.condition_flags),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        data = json.loads(text)
        return cls(
            kind=data["kind"],
            n_background=int(data.get("n_background", 8)),
            seed=int(data.get("seed", 0)),
            max_sim_time=float(data.get("max_sim_time", 60.0)),
            speed_cap=float(data.get("speed_cap", 30.0)),
            condition_flags=tuple(data.get("condition_flags", ())),
        )


_KIND_DEFAULTS = {
    "highway": dict(n_background=10, max_sim_time=60.0, speed_cap=30.0),
    "intersection": dict(n_background=8, max_sim_time=30.0, speed_cap=10.0),
    "roundabout": dict(n_background=4, max_sim_time=40.0, speed_cap=9.0),
    "merge": dict(n_background=8, max_sim_time=35.0, speed_cap=22.0),
}


def default_config(kind: str, **overrides) -> ScenarioConfig:
    if kind not in _KIND_DEFAULTS:
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    params = dict(_KIND_DEFAULTS[kind])
    params.update(overrides)
    return ScenarioConfig(kind=kind, **params)


@dataclass(frozen=True)
class ConflictZone:
    """A crossing-conflict description: where the ego's path meets other lanes."""

    ego_lane: str
    ego_entry_s: float
    cross: tuple[tuple[str, float, float], ...]  # (lane id, zone entry s, zone exit s)


@dataclass(frozen=True)
class ScenarioInfo:
    goal_x: float | None = None
    route_lane: str | None = None
    exit_s: float | None = None
    merge_end_x: float | None = None
    main_lanes: tuple[str, ...] = ()
    ramp_lane: str | None = None
    conflict: ConflictZone | None = None


@dataclass(frozen=True)
class World:
    road: RoadNetwork
    vehicles: tuple[VehicleState, ...]
    sim_time: float
    ego_target_speed: float
    ego_target_lane: str
    rng_state: dict
    config: ScenarioConfig
    info: ScenarioInfo
    last_action_noop: bool = False

    def ego(self) -> VehicleState:
        for v in self.vehicles:
            if v.kind == "ego":
                return v
        raise UnknownVehicleError("world has no ego vehicle")

    def vehicle(self, vid: int) -> VehicleState:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise UnknownVehicleError(vid)


# ---------------------------------------------------------------------------
# spawning

def _bezier(p0, p1, p2, p3, ts):
    p0, p1, p2, p3 = (np.asarray(p, dtype=float) for p in (p0, p1, p2, p3))
    out = []
    for t in ts:
        u = 1.0 - t
        out.append(u ** 3 * p0 + 3 * u ** 2 * t * p1 + 3 * u * t ** 2 * p2 + t ** 3 * p3)
    return np.array(out)


def _place_background(rng, road, lane_ranges, n, speed_fn, ego=None,
                      min_spacing=12.0, ego_clearance=20.0):
    """Randomly place n vehicles on the given lanes with bumper gaps >= 7 m."""
    lane_ids = sorted(lane_ranges)
    placed: dict[str, list[float]] = {lid: [] for lid in lane_ids}
    vehicles = []
    tries = 0
    while len(vehicles) < n:
        tries += 1
        if tries > 500 * max(n, 1):
            raise ScenarioError(
                f"could not place {n} background vehicles with 7 m bumper gaps")
        lid = lane_ids[int(rng.integers(len(lane_ids)))]
        lo, hi = lane_ranges[lid]
        s = float(rng.uniform(lo, hi))
        if any(abs(s - s2) < min_spacing for s2 in placed[lid]):
            continue
        if ego is not None and ego.lane_ref[0] == lid and abs(s - ego.lane_ref[1]) < ego_clearance:
            continue
        lane = road.lanes[lid]
        pos = lane.line.point_at(s)
        heading = lane.line.heading_at(s)
        speed = float(speed_fn(rng, lane))
        placed[lid].append(s)
        vehicles.append(VehicleState(
            id=len(vehicles) + 1, position=tuple(pos), heading=heading,
            speed=speed, lane_ref=(lid, s), kind="background"))
    return vehicles


def _spawn_highway(cfg, rng):
    lanes = [Lane(f"h{i}", [(-50.0, 4.0 * i), (1050.0, 4.0 * i)],
                  speed_limit=22.0) for i in range(4)]
    left = {"h0": "h1", "h1": "h2", "h2": "h3"}
    group = {f"h{i}": ("main", i) for i in range(4)}
    road = RoadNetwork(lanes, left=left, lane_group=group)
    ego = VehicleState(id=EGO_ID, position=(0.0, 4.0), heading=0.0, speed=20.0,
                       lane_ref=("h1", 50.0), kind="ego")
    ranges = {f"h{i}": (80.0, 550.0) for i in range(4)}
    bg = _place_background(rng, road, ranges, cfg.n_background,
                           lambda r, lane: 16.0 + r.uniform(0.0, 5.0), ego=ego)
    info = ScenarioInfo(goal_x=1000.0)
    return road, ego, bg, info, 20.0, "h1"


def _spawn_intersection(cfg, rng):
    lanes = [
        Lane("we", [(-150.0, -2.0), (150.0, -2.0)], speed_limit=10.0),
        Lane("ew", [(150.0, 2.0), (-150.0, 2.0)], speed_limit=10.0),
        Lane("sn", [(2.0, -150.0), (2.0, 150.0)], speed_limit=8.0),
        Lane("ns", [(-2.0, 150.0), (-2.0, -150.0)], speed_limit=8.0),
    ]
    group = {lid: (lid, 0) for lid in ("we", "ew", "sn", "ns")}
    road = RoadNetwork(lanes, lane_group=group)
    ego = VehicleState(id=EGO_ID, position=(-60.0, -2.0), heading=0.0, speed=6.0,
                       lane_ref=("we", 90.0), kind="ego")
    # crossing traffic only on the north-south road (parallel lanes, no
    # background-background conflicts)
    ranges = {"sn": (22.0, 132.0), "ns": (26.0, 136.0)}
    bg = _place_background(rng, road, ranges, cfg.n_background,
                           lambda r, lane: 7.0 + r.uniform(0.0, 2.0))
    conflict = ConflictZone(
        ego_lane="we", ego_entry_s=142.5,
        cross=(("sn", 142.0, 154.0), ("ns", 146.0, 158.0)))
    info = ScenarioInfo(goal_x=12.0, conflict=conflict)
    return road, ego, bg, info, 6.0, "we"


def _spawn_roundabout(cfg, rng):
    theta = np.deg2rad(np.arange(-90.0, 270.0, 5.0))
    ring_pts = np.column_stack([20.0 * np.cos(theta), 20.0 * np.sin(theta)])
    ring = Lane("ring", ring_pts, speed_limit=7.0, closed=True)

    ts_in = np.linspace(0.0, 1.0, 16, endpoint=False)
    entry = _bezier((-30.0, -40.0), (-20.0, -30.0), (-10.0, -20.0), (0.0, -20.0), ts_in)
    arc_theta = np.deg2rad(np.arange(-90.0, 90.0 + 2.5, 5.0))
    arc = np.column_stack([20.0 * np.cos(arc_theta), 20.0 * np.sin(arc_theta)])
    ts_out = np.linspace(0.0, 1.0, 12, endpoint=True)[1:]
    exit_ = _bezier((0.0, 20.0), (-10.0, 20.0), (-18.0, 26.0), (-26.0, 34.0), ts_out)
    route = Lane("route", np.vstack([entry, arc, exit_]), speed_limit=7.0)

    road = RoadNetwork([ring, route],
                       lane_group={"ring": ("ring", 0), "route": ("route", 0)})
    heading0 = route.line.heading_at(0.0)
    ego = VehicleState(id=EGO_ID, position=(-30.0, -40.0), heading=heading0,
                       speed=6.0, lane_ref=("route", 0.0), kind="ego")
    ring_total = ring.line.total
    # Cluster the circulating traffic into one platoon so that each lap
    # presents the entering vehicle with a usable gap (uniformly spread ring
    # traffic never opens an acceptable entry window).
    s = float(rng.uniform(0.0, ring_total))
    bg = []
    for i in range(cfg.n_background):
        s %= ring_total
        bg.append(VehicleState(
            id=i + 1, position=tuple(ring.line.point_at(s)),
            heading=ring.line.heading_at(s),
            speed=6.5 + float(rng.uniform(0.0, 1.0)),
            lane_ref=("ring", s), kind="background"))
        s += float(rng.uniform(12.0, 16.0))
    s_join, _ = route.line.project((0.0, -20.0))
    half_arc = math.pi * 20.0
    conflict = ConflictZone(
        ego_lane="route", ego_entry_s=s_join - 6.0,
        cross=(("ring", ring_total - 8.0, ring_total + 6.0),))
    info = ScenarioInfo(route_lane="route", exit_s=s_join + half_arc + 10.0,
                        conflict=conflict)
    return road, ego, bg, info, 6.0, "route"


def _spawn_merge(cfg, rng):
    lanes = [
        Lane("m0", [(-50.0, 0.0), (450.0, 0.0)], speed_limit=20.0),
        Lane("m1", [(-50.0, 4.0), (450.0, 4.0)], speed_limit=20.0),
        Lane("ramp", [(0.0, -28.0), (60.0, -18.0), (120.0, -10.0),
                      (170.0, -5.5), (200.0, -4.0), (300.0, -4.0)],
             speed_limit=15.0),
    ]
    left = {"m0": "m1", "ramp": "m0"}
    group = {"m0": ("main", 0), "m1": ("main", 1), "ramp": ("main", -1)}
    road = RoadNetwork(lanes, left=left, lane_group=group)
    heading0 = road.lanes["ramp"].line.heading_at(0.0)
    ego = VehicleState(id=EGO_ID, position=(0.0, -28.0), heading=heading0,
                       speed=14.0, lane_ref=("ramp", 0.0), kind="ego")
    ranges = {"m0": (10.0, 330.0), "m1": (10.0, 330.0)}
    bg = _place_background(rng, road, ranges, cfg.n_background,
                           lambda r, lane: 15.0 + r.uniform(0.0, 3.0))
    info = ScenarioInfo(goal_x=310.0, merge_end_x=300.0,
                        main_lanes=("m0", "m1"), ramp_lane="ramp")
    return road, ego, bg, info, 14.0, "ramp"


_SPAWNERS = {
    "highway": _spawn_highway,
    "intersection": _spawn_intersection,
    "roundabout": _spawn_roundabout,
    "merge": _spawn_merge,
}


def spawn_scenario(config: ScenarioConfig) -> World:
    """Build the initial world; deterministic in (config, seed)."""
    rng = np.random.default_rng(config.seed)
    road, ego, bg, info, tgt_speed, tgt_lane = _SPAWNERS[config.kind](config, rng)
    return World(
        road=road,
        vehicles=(ego, *bg),
        sim_time=0.0,
        ego_target_speed=min(tgt_speed, config.speed_cap),
        ego_target_lane=tgt_lane,
        rng_state=rng.bit_generator.state,
        config=config,
        info=info,
    )


# ---------------------------------------------------------------------------
# meta-actions and stepping

def apply_meta_action(world: World, action: MetaAction) -> World:
    """Update the ego targets for one decided meta-action."""
    action = MetaAction(action)
    ts = world.ego_target_speed
    tl = world.ego_target_lane
    noop = False
    if action is MetaAction.FASTER:
        ts = min(ts + kernels.TARGET_SPEED_STEP, world.config.speed_cap)
    elif action is MetaAction.SLOWER:
        ts = max(ts - kernels.TARGET_SPEED_STEP, 0.0)
    elif action is MetaAction.LANE_LEFT:
        nb = world.road.left_of(tl)
        if nb is None:
            noop = True
        else:
            tl = nb
    elif action is MetaAction.LANE_RIGHT:
        nb = world.road.right_of(tl)
        if nb is None:
            noop = True
        else:
            tl = nb
    return replace(world, ego_target_speed=ts, ego_target_lane=tl,
                   last_action_noop=noop)


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 1.5
    b: float = 2.0
    s0: float = 2.0
    T: float = 1.5


DEFAULT_IDM = IdmParams()


def idm_acceleration(v: float, v0: float, gap, closing: float,
                     params: IdmParams = DEFAULT_IDM) -> float:
    """IDM car-following acceleration; gap=None means no leader."""
    g = -1.0 if gap is None else float(gap)
    return float(kernels.idm_accel(v, v0, g, closing,
                                   params.a_max, params.b, params.s0, params.T))


def _leader_gap(i, v, lane, s_arr, lat_arr, vehicles):
    """Nearest vehicle ahead within the lateral band of this lane."""
    band = lane.width / 2.0 + LATERAL_MARGIN
    line = lane.line
    best_ds = math.inf
    leader = None
    for j, other in enumerate(vehicles):
        if j == i or abs(lat_arr[j]) > band:
            continue
        ds = s_arr[j] - s_arr[i]
        if line.closed:
            ds = ds % line.total
        if ds <= 0 or ds > IDM_LOOKAHEAD or ds >= best_ds:
            continue
        best_ds = ds
        leader = other
    if leader is None:
        return None, 0.0
    gap = best_ds - (v.length + leader.length) / 2.0
    return max(gap, 1e-3), v.speed - leader.speed


def _clamp(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def step(world: World, dt: float = PHYSICS_DT) -> World:
    """Advance every vehicle by one physics tick.

    The ego tracks its target speed (proportional) and target lane centerline
    (pure pursuit); background vehicles follow IDM in their own lane.
    """
    road = world.road
    cfg = world.config
    vehicles = world.vehicles
    positions = np.array([v.position for v in vehicles])
    active = {v.lane_ref[0] for v in vehicles}
    active.add(world.ego_target_lane)
    proj = {lid: road.lanes[lid].line.project_many(positions) for lid in active}

    new_vehicles = []
    for i, v in enumerate(vehicles):
        if v.kind == "ego":
            lid = world.ego_target_lane
            lane = road.lanes[lid]
            line = lane.line
            s_i = float(proj[lid][0][i])
            cmd = world.ego_target_speed
            if not line.closed and not lane.successors:
                # brake toward the end of a dead-ending lane (ramp, exit leg)
                remaining = line.total - s_i
                cmd = min(cmd, math.sqrt(4.0 * max(remaining - 3.0, 0.0)))
            accel = _clamp(SPEED_GAIN * (cmd - v.speed), -ACCEL_LIMIT, ACCEL_LIMIT)
        else:
            lid = v.lane_ref[0]
            lane = road.lanes[lid]
            line = lane.line
            s_i = float(proj[lid][0][i])
            gap, closing = _leader_gap(i, v, lane, proj[lid][0], proj[lid][1], vehicles)
            accel = _clamp(idm_acceleration(v.speed, lane.speed_limit, gap, closing),
                           -BRAKE_LIMIT, DEFAULT_IDM.a_max)
        steer = kernels.pure_pursuit_steer(
            v.position[0], v.position[1], v.heading, v.speed, v.length,
            line.pts, line.n, line.cum, line.total, line.closed, s_i)
        x, y, h, spd = kernels.kinematic_step(
            v.position[0], v.position[1], v.heading, v.speed,
            accel, steer, dt, v.length, cfg.speed_cap)
        nv = replace(v, position=(x, y), heading=h, speed=spd)

        if v.kind == "ego":
            tline = road.lanes[world.ego_target_lane].line
            s2, lat2 = tline.project(nv.position)
            if abs(lat2) < 1.0:
                nv = replace(nv, lane_ref=(world.ego_target_lane, float(s2)))
            else:
                oline = road.lanes[v.lane_ref[0]].line
                so, _ = oline.project(nv.position)
                nv = replace(nv, lane_ref=(v.lane_ref[0], float(so)))
        else:
            so, _ = line.project(nv.position)
            nv = replace(nv, lane_ref=(lid, float(so)))
        new_vehicles.append(nv)
    return replace(world, vehicles=tuple(new_vehicles), sim_time=world.sim_time + dt)


def episode_status(world: World, config: ScenarioConfig | None = None) -> EpisodeStatus:
    """Terminal classification: collision first, then goal, then timeout."""
    config = config or world.config
    ego = world.ego()
    for pair in detect_collisions(world):
        if ego.id in pair:
            return EpisodeStatus.COLLISION
    info = world.info
    kind = config.kind
    success = False
    if kind in ("highway", "intersection"):
        success = ego.position[0] >= info.goal_x
    elif kind == "roundabout":
        s, _ = world.road.lanes[info.route_lane].line.project(ego.position)
        success = s >= info.exit_s
    elif kind == "merge":
        success = (ego.lane_ref[0] in info.main_lanes
                   and ego.position[0] >= info.goal_x)
    if success:
        return EpisodeStatus.SUCCESS
    if world.sim_time >= config.max_sim_time - 1e-9:
        return EpisodeStatus.TIMEOUT
    return EpisodeStatus.RUNNING


def conflict_distances(world: World):
    """(ego distance to its conflict entry, {vehicle id: distance to the zone}).

    Returns (None, {}) when the scenario has no crossing conflict or the ego
    is already committed past its entry point. A vehicle currently inside the
    zone reports distance 0; vehicles more than 60 m out are omitted.
    """
    info = world.info
    if info.conflict is None:
        return None, {}
    cz = info.conflict
    ego = world.ego()
    eline = world.road.lanes[cz.ego_lane].line
    s_e, _ = eline.project(ego.position)
    ego_d = cz.ego_entry_s - s_e
    if ego_d <= 0:
        return None, {}
    per: dict[int, float] = {}
    for v in world.vehicles:
        if v.kind == "ego":
            continue
        for lid, entry, exit_ in cz.cross:
            if v.lane_ref[0] != lid:
                continue
            line = world.road.lanes[lid].line
            s_j = v.lane_ref[1]
            zone_len = exit_ - entry
            if line.closed:
                u = (s_j - entry) % line.total
                if u <= zone_len:
                    per[v.id] = 0.0
                elif line.total - u <= 60.0:
                    per[v.id] = line.total - u
            else:
                u = s_j - entry
                if 0.0 <= u <= zone_len:
                    per[v.id] = 0.0
                elif u < 0.0 and -u <= 60.0:
                    per[v.id] = -u
    return ego_d, per


def world_to_json(world: World) -> str:
    """Canonical JSON serialization; byte-identical for identical worlds."""
    data = {
        "config": json.loads(world.config.to_json()),
        "sim_time": repr(world.sim_time),
        "ego_target_speed": repr(world.ego_target_speed),
        "ego_target_lane": world.ego_target_lane,
        "last_action_noop": world.last_action_noop,
        "rng_state": repr(world.rng_state),
        "vehicles": [
            {
                "id": v.id,
                "x": repr(v.position[0]),
                "y": repr(v.position[1]),
                "heading": repr(v.heading),
                "speed": repr(v.speed),
                "length": repr(v.length),
                "width": repr(v.width),
                "lane": v.lane_ref[0],
                "offset": repr(v.lane_ref[1]),
                "kind": v.kind,
            }
            for v in sorted(world.vehicles, key=lambda v: v.id)
        ],
    }
    return json.dumps(data, sort_keys=True)
