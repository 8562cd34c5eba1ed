"""Value types and pure geometry/kinematics for the traffic world."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from . import kernels
from .geometry import Polyline

SENSING_RADIUS = 50.0
LATERAL_MARGIN = 0.5  # slack added to half lane width for "in this lane" tests


class UnknownVehicleError(KeyError):
    pass


@dataclass(frozen=True)
class VehicleState:
    """Pose, speed, footprint, and lane reference of one vehicle."""

    id: int
    position: tuple[float, float]
    heading: float
    speed: float
    length: float = 5.0
    width: float = 2.0
    lane_ref: tuple[str, float] = ("", 0.0)
    kind: str = "background"

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("length and width must be positive")
        if self.kind not in ("ego", "background"):
            raise ValueError(f"unknown vehicle kind {self.kind!r}")
        object.__setattr__(self, "heading", float(kernels.wrap_angle(self.heading)))
        object.__setattr__(self, "position",
                           (float(self.position[0]), float(self.position[1])))

    def corners(self) -> np.ndarray:
        """The four footprint corners, counterclockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.position)


class Lane:
    """A lane: centerline polyline, width, speed limit, successors."""

    def __init__(self, id: str, points, width: float = 4.0, speed_limit: float = 15.0,
                 successors: tuple[str, ...] = (), closed: bool = False):
        if width <= 0:
            raise ValueError("lane width must be positive")
        self.id = id
        self.line = Polyline(points, closed=closed)
        self.width = float(width)
        self.speed_limit = float(speed_limit)
        self.successors = tuple(successors)

    @property
    def centerline(self) -> np.ndarray:
        return self.line.pts


class RoadNetwork:
    """Lanes plus a symmetric left/right neighbor relation.

    ``lane_group`` maps lane id -> (group name, index within group); lanes in
    the same group are parallel same-direction lanes, indexed right-to-left.
    """

    def __init__(self, lanes, left=None, lane_group=None):
        self.lanes: dict[str, Lane] = {l.id: l for l in lanes}
        if len(self.lanes) != len(lanes):
            raise ValueError("duplicate lane ids")
        self.left: dict[str, str] = dict(left or {})
        self.right: dict[str, str] = {b: a for a, b in self.left.items()}
        for a, b in self.left.items():
            if a not in self.lanes or b not in self.lanes:
                raise ValueError(f"neighbor map references unknown lane {a!r}/{b!r}")
        self.lane_group: dict[str, tuple[str, int]] = dict(
            lane_group or {lid: (lid, 0) for lid in self.lanes})
        self._kernel_cache = None

    def left_of(self, lane_id: str):
        return self.left.get(lane_id)

    def right_of(self, lane_id: str):
        return self.right.get(lane_id)

    def kernel_arrays(self):
        """Padded per-lane arrays for the numba kernels (cached)."""
        if self._kernel_cache is None:
            ids = sorted(self.lanes)
            index = {lid: i for i, lid in enumerate(ids)}
            pmax = max(lane.line.n for lane in self.lanes.values())
            L = len(ids)
            pts = np.zeros((L, pmax, 2))
            cum = np.zeros((L, pmax))
            npts = np.zeros(L, dtype=np.int64)
            total = np.zeros(L)
            closed = np.zeros(L, dtype=np.int64)
            for lid, i in index.items():
                line = self.lanes[lid].line
                npts[i] = line.n
                pts[i, :line.n] = line.pts
                cum[i, :line.n] = line.cum
                total[i] = line.total
                closed[i] = 1 if line.closed else 0
            left_idx = np.full(L, -1, dtype=np.int64)
            right_idx = np.full(L, -1, dtype=np.int64)
            for a, b in self.left.items():
                left_idx[index[a]] = index[b]
                right_idx[index[b]] = index[a]
            self._kernel_cache = (index, pts, npts, cum, total, closed,
                                  left_idx, right_idx)
        return self._kernel_cache


def kinematic_update(state: VehicleState, accel: float, steer: float,
                     dt: float, speed_cap: float = 1e9) -> VehicleState:
    """Semi-implicit bicycle-model integration of one vehicle state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, h, v = kernels.kinematic_step(
        state.position[0], state.position[1], state.heading, state.speed,
        accel, steer, dt, state.length, speed_cap)
    return replace(state, position=(x, y), heading=h, speed=v)


def obb_overlap(a: VehicleState, b: VehicleState) -> bool:
    """True iff the two oriented footprint rectangles intersect."""
    return bool(kernels.obb_overlap_xyhlw(
        a.position[0], a.position[1], a.heading, a.length, a.width,
        b.position[0], b.position[1], b.heading, b.length, b.width))


def detect_collisions(world) -> set[frozenset[int]]:
    """All unordered id pairs of overlapping vehicles."""
    out = set()
    for a, b in combinations(world.vehicles, 2):
        if obb_overlap(a, b):
            out.add(frozenset((a.id, b.id)))
    return out


def lead_gap_and_ttc(world, ego_id: int):
    """Bumper gap and time-to-collision to the nearest leader in the ego's lane.

    Returns (gap, ttc); (None, inf) when no leader within the sensing radius.
    "Same lane" means within half a lane width (plus margin) of the ego lane's
    centerline, so vehicles mid-merge are seen too.
    """
    ego = world.vehicle(ego_id)
    lane = world.road.lanes[ego.lane_ref[0]]
    line = lane.line
    s_ego, _ = line.project(ego.position)
    band = lane.width / 2.0 + LATERAL_MARGIN
    leader = None
    best_ds = math.inf
    for v in world.vehicles:
        if v.id == ego_id:
            continue
        s, lat = line.project(v.position)
        if abs(lat) > band:
            continue
        ds = s - s_ego
        if line.closed:
            ds = ds % line.total
        if ds <= 0 or ds > SENSING_RADIUS:
            continue
        if ds < best_ds:
            best_ds = ds
            leader = v
    if leader is None:
        return None, math.inf
    gap = max(best_ds - (ego.length + leader.length) / 2.0, 0.0)
    closing = ego.speed - leader.speed
    ttc = gap / closing if closing > 1e-9 else math.inf
    return gap, max(ttc, 0.0)
