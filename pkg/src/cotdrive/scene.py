"""Deterministic serialization of a world into the agent-facing scene text,
plus an optional top-down raster for vision backends."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .world import SENSING_RADIUS, UnknownVehicleError
from .scenario import World, conflict_distances

NO_VEHICLES_SENTINEL = "No other vehicles within sensing range."
MAX_NEIGHBORS = 8

# raster palette (RGB)
COLOR_BACKGROUND = (32, 32, 32)
COLOR_LANE = (96, 96, 96)
COLOR_VEHICLE = (208, 64, 64)
COLOR_EGO = (64, 208, 64)


def _q(x: float) -> float:
    """Quantize to 0.1 (the serialization resolution)."""
    return round(float(x), 1)


@dataclass(frozen=True)
class NeighborInfo:
    rel: str  # "0", "+1", "-2", ... for same-road lanes, "cross" otherwise
    dist: float  # signed along-lane distance (same road) or euclidean (cross)
    speed: float
    conflict_dist: float | None = None  # distance to the shared conflict zone


@dataclass(frozen=True)
class SceneStruct:
    road_kind: str
    flags: tuple[str, ...]
    ego_lane_index: int
    ego_speed: float
    ego_target_speed: float
    speed_cap: float
    conflict_dist: float | None
    merge_end_dist: float | None
    neighbors: tuple[NeighborInfo, ...]


@dataclass(frozen=True)
class SceneDescription:
    text: str
    structured: SceneStruct


def _render_text(sc: SceneStruct) -> str:
    lines = [f"ROAD: {sc.road_kind}"]
    lines.append("CONDITIONS: " + (", ".join(sc.flags) if sc.flags else "clear"))
    lines.append(
        f"EGO: lane_index={sc.ego_lane_index} speed={sc.ego_speed:.1f} "
        f"target_speed={sc.ego_target_speed:.1f} speed_cap={sc.speed_cap:.1f}")
    if sc.conflict_dist is not None:
        lines.append(f"CONFLICT: distance={sc.conflict_dist:.1f}")
    if sc.merge_end_dist is not None:
        lines.append(f"MERGE: distance_to_end={sc.merge_end_dist:.1f}")
    lines.append(f"VEHICLES: {len(sc.neighbors)}")
    for nb in sc.neighbors:
        extra = "" if nb.conflict_dist is None else f" conflict_distance={nb.conflict_dist:.1f}"
        lines.append(f"- rel={nb.rel} dist={nb.dist:.1f} speed={nb.speed:.1f}{extra}")
    if not sc.neighbors:
        lines.append(NO_VEHICLES_SENTINEL)
    return "\n".join(lines) + "\n"


def serialize_scene(world: World, ego_id: int) -> SceneDescription:
    """Pure, deterministic text/structured view of the world around the ego."""
    ego = world.vehicle(ego_id)
    if ego.kind != "ego":
        raise UnknownVehicleError(ego_id)
    road = world.road
    info = world.info
    ego_group, ego_idx = road.lane_group[ego.lane_ref[0]]
    ego_line = road.lanes[ego.lane_ref[0]].line
    s_ego, _ = ego_line.project(ego.position)

    ego_cd, per_vehicle_cd = conflict_distances(world)

    candidates = []
    for v in world.vehicles:
        if v.id == ego_id:
            continue
        d = math.dist(v.position, ego.position)
        if d > SENSING_RADIUS:
            continue
        candidates.append((d, v))
    candidates.sort(key=lambda t: (t[0], t[1].id))

    ego_lane = road.lanes[ego.lane_ref[0]]
    band = ego_lane.width / 2.0 + 0.5
    neighbors = []
    for d, v in candidates[:MAX_NEIGHBORS]:
        group, idx = road.lane_group[v.lane_ref[0]]
        s_v, lat_v = ego_line.project(v.position)
        along = s_v - s_ego
        if ego_line.closed:
            along = (along + ego_line.total / 2.0) % ego_line.total - ego_line.total / 2.0
        if abs(lat_v) <= band:
            # geometrically in the ego's lane, whatever lane it nominally follows
            rel = "0"
            dist = along
        elif group == ego_group:
            rel = f"{idx - ego_idx:+d}" if idx != ego_idx else "0"
            dist = along
        else:
            rel = "cross"
            dist = d
        cd = per_vehicle_cd.get(v.id)
        neighbors.append(NeighborInfo(
            rel=rel, dist=_q(dist), speed=_q(v.speed),
            conflict_dist=None if cd is None else _q(cd)))

    merge_dist = None
    if info.ramp_lane is not None and ego.lane_ref[0] == info.ramp_lane:
        merge_dist = _q(info.merge_end_x - ego.position[0])

    sc = SceneStruct(
        road_kind=world.config.kind,
        flags=world.config.condition_flags,
        ego_lane_index=ego_idx,
        ego_speed=_q(ego.speed),
        ego_target_speed=_q(world.ego_target_speed),
        speed_cap=_q(world.config.speed_cap),
        conflict_dist=None if ego_cd is None else _q(ego_cd),
        merge_end_dist=merge_dist,
        neighbors=tuple(neighbors),
    )
    return SceneDescription(text=_render_text(sc), structured=sc)


_EGO_RE = re.compile(
    r"EGO:\s*lane_index=(-?\d+)\s+speed=([\d.]+)\s+target_speed=([\d.]+)\s+speed_cap=([\d.]+)")
_NEIGHBOR_RE = re.compile(
    r"-\s*rel=([+\-]?\w+)\s+dist=(-?[\d.]+)\s+speed=([\d.]+)"
    r"(?:\s+conflict_distance=(-?[\d.]+))?")


def parse_scene_text(text: str) -> SceneStruct:
    """Recover the structured fields from scene text embedded in a prompt."""
    road_kind = None
    flags: tuple[str, ...] = ()
    ego = None
    conflict = None
    merge = None
    neighbors = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("ROAD:"):
            road_kind = line.split(":", 1)[1].strip()
        elif line.startswith("CONDITIONS:"):
            raw = line.split(":", 1)[1].strip()
            flags = () if raw == "clear" else tuple(p.strip() for p in raw.split(","))
        elif line.startswith("EGO:"):
            m = _EGO_RE.match(line)
            if m:
                ego = (int(m.group(1)), float(m.group(2)),
                       float(m.group(3)), float(m.group(4)))
        elif line.startswith("CONFLICT:"):
            conflict = float(line.split("distance=", 1)[1])
        elif line.startswith("MERGE:"):
            merge = float(line.split("distance_to_end=", 1)[1])
        elif line.startswith("- rel="):
            m = _NEIGHBOR_RE.match(line)
            if m:
                cd = m.group(4)
                neighbors.append(NeighborInfo(
                    rel=m.group(1), dist=float(m.group(2)),
                    speed=float(m.group(3)),
                    conflict_dist=None if cd is None else float(cd)))
    if road_kind is None or ego is None:
        raise ValueError("prompt does not contain a parseable scene")
    return SceneStruct(
        road_kind=road_kind, flags=flags,
        ego_lane_index=ego[0], ego_speed=ego[1],
        ego_target_speed=ego[2], speed_cap=ego[3],
        conflict_dist=conflict, merge_end_dist=merge,
        neighbors=tuple(neighbors))


def rasterize_topdown(world: World, viewport: float, size: tuple[int, int]) -> bytes:
    """Binary PPM (P6) top-down render centered on the ego (origin if none)."""
    w, h = int(size[0]), int(size[1])
    if w < 64 or h < 64:
        raise ValueError("raster size must be at least 64x64")
    if viewport <= 0:
        raise ValueError("viewport must be positive")
    try:
        center = world.ego().position
    except UnknownVehicleError:
        center = (0.0, 0.0)
    ppm = w / viewport  # pixels per meter
    xs = center[0] + (np.arange(w) + 0.5 - w / 2.0) / ppm
    ys = center[1] + (h / 2.0 - np.arange(h) - 0.5) / ppm  # +y up
    gx, gy = np.meshgrid(xs, ys)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = COLOR_BACKGROUND

    pts = np.column_stack([gx.ravel(), gy.ravel()])
    for lane in world.road.lanes.values():
        _, lat = lane.line.project_many(pts)
        mask = (np.abs(lat) <= lane.width / 2.0).reshape(h, w)
        img[mask] = COLOR_LANE

    for v in sorted(world.vehicles, key=lambda v: (v.kind == "ego", v.id)):
        c, s = math.cos(v.heading), math.sin(v.heading)
        dx = gx - v.position[0]
        dy = gy - v.position[1]
        lx = dx * c + dy * s
        ly = -dx * s + dy * c
        mask = (np.abs(lx) <= v.length / 2.0) & (np.abs(ly) <= v.width / 2.0)
        img[mask] = COLOR_EGO if v.kind == "ego" else COLOR_VEHICLE

    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + img.tobytes()
