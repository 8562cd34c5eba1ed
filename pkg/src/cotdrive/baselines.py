"""Comparison agents: receding-horizon MPC over meta-action sequences and a
time-greedy policy that reproduces the rushing-RL failure mode."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scenario import MetaAction, World
from .world import lead_gap_and_ttc

# fixed tie-break order (lexicographic over sequences)
ACTION_TIE_ORDER = (MetaAction.IDLE, MetaAction.FASTER, MetaAction.SLOWER,
                    MetaAction.LANE_LEFT, MetaAction.LANE_RIGHT)

GREEDY_TTC_BRAKE = 1.5


@dataclass(frozen=True)
class MpcParams:
    horizon: int = 3
    decision_period: float = 1.0
    w_collision: float = 1e6
    w_speed: float = 1.0
    w_lane_change: float = 5.0
    w_offroad: float = 1e6
    reference_speed: float | None = None  # None: use the scenario speed cap

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for w in (self.w_collision, self.w_speed, self.w_lane_change, self.w_offroad):
            if w < 0:
                raise ValueError("weights must be >= 0")

    @classmethod
    def from_scenario_json(cls, text: str) -> "MpcParams":
        """Read the optional "mpc" key of a scenario JSON document."""
        data = json.loads(text).get("mpc", {})
        return cls(**{k: data[k] for k in data})


def rollout_cost(world: World, actions, params: MpcParams) -> float:
    """Cost of one action sequence: ego runs its controllers, background
    vehicles are propagated at constant velocity."""
    road = world.road
    index, pts, npts, cum, total, closed, left_idx, right_idx = road.kernel_arrays()
    ego = world.ego()
    bg = [v for v in world.vehicles if v.kind != "ego"]
    bx = np.array([v.position[0] for v in bg])
    by = np.array([v.position[1] for v in bg])
    bh = np.array([v.heading for v in bg])
    bv = np.array([v.speed for v in bg])
    blen = np.array([v.length for v in bg])
    bwid = np.array([v.width for v in bg])
    acts = np.array([int(MetaAction(a)) for a in actions], dtype=np.int64)
    v_ref = params.reference_speed
    if v_ref is None:
        v_ref = world.config.speed_cap
    n_sub = int(round(params.decision_period / kernels.PHYSICS_DT))
    return float(kernels.mpc_rollout_cost(
        ego.position[0], ego.position[1], ego.heading, ego.speed,
        ego.length, ego.width, world.config.speed_cap,
        world.ego_target_speed, index[world.ego_target_lane],
        acts,
        pts, npts, cum, total, closed, left_idx, right_idx,
        bx, by, bh, bv, blen, bwid,
        n_sub, kernels.PHYSICS_DT, v_ref,
        params.w_collision, params.w_speed, params.w_lane_change, params.w_offroad,
    ))


def mpc_plan(world: World, params: MpcParams | None = None) -> MetaAction:
    """Enumerate all 5^horizon sequences; return the first action of the
    cheapest one (ties: lexicographic in ACTION_TIE_ORDER)."""
    params = params or MpcParams()
    best_cost = math.inf
    best_first = ACTION_TIE_ORDER[0]
    for seq in itertools.product(ACTION_TIE_ORDER, repeat=params.horizon):
        c = rollout_cost(world, seq, params)
        if c < best_cost:
            best_cost = c
            best_first = seq[0]
    return best_first


def greedy_time_policy(world: World) -> MetaAction:
    """Always hurry: FASTER unless the lead time-to-collision is critical."""
    _, ttc = lead_gap_and_ttc(world, world.ego().id)
    return MetaAction.SLOWER if ttc < GREEDY_TTC_BRAKE else MetaAction.FASTER
