"""Seeded episode runner, ineffective-action counting, metric aggregation,
and report emission (CSV / Markdown / JSONL)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .cot import BackendError
from .llmclient import LlmError
from .scenario import (EGO_ID, EpisodeStatus, MetaAction, ScenarioConfig,
                       apply_meta_action, episode_status, spawn_scenario, step)
from .scene import serialize_scene
from .world import lead_gap_and_ttc

DECISION_PERIOD_STEPS = 15  # one agent decision per 15 physics steps (1 Hz)
INEFFECTIVE_TTC_EXEMPT = 3.0

SCENARIO_ORDER = ("intersection", "roundabout", "highway", "merge")
METHOD_ORDER = ("greedy", "mpc", "cot-scripted", "cot-scripted-nocot",
                "cot-llm", "cot-llm-nocot")


class AgentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Decision:
    sim_time: float
    action: MetaAction
    fallback_used: bool
    min_ttc: float  # minimum TTC observed since the previous decision


@dataclass(frozen=True)
class EpisodeResult:
    scenario: str
    seed: int
    outcome: str  # success | collision | timeout | agent_error
    decisions: tuple[Decision, ...]
    sim_time_elapsed: float


@dataclass(frozen=True)
class MetricsSummary:
    fail_pct: float
    inefficiency_pct: float
    avg_time_s: float
    episodes: int
    outcome_counts: tuple[tuple[str, int], ...]


def run_episode(config: ScenarioConfig, agent, seed: int) -> EpisodeResult:
    """One closed-loop episode: serialize scene, decide at 1 Hz, step at 15 Hz.

    Elapsed time is simulation time only, so agent latency never counts.
    """
    cfg = replace(config, seed=seed)
    world = spawn_scenario(cfg)
    decisions: list[Decision] = []
    min_ttc = math.inf
    outcome = None
    while outcome is None:
        scene = serialize_scene(world, EGO_ID)
        try:
            action, fallback = agent.decide(scene, world)
        except (BackendError, LlmError):
            outcome = "agent_error"
            break
        world = apply_meta_action(world, action)
        decisions.append(Decision(world.sim_time, MetaAction(action),
                                  bool(fallback), min_ttc))
        min_ttc = math.inf
        for _ in range(DECISION_PERIOD_STEPS):
            world = step(world)
            _, ttc = lead_gap_and_ttc(world, EGO_ID)
            min_ttc = min(min_ttc, ttc)
            status = episode_status(world, cfg)
            if status is not EpisodeStatus.RUNNING:
                outcome = status.value
                break
    return EpisodeResult(scenario=cfg.kind, seed=seed, outcome=outcome,
                         decisions=tuple(decisions),
                         sim_time_elapsed=world.sim_time)


def run_suite(config: ScenarioConfig, agent, base_seed: int,
              episodes: int) -> list[EpisodeResult]:
    """Seeded sweep: seeds base_seed .. base_seed+episodes-1, in order."""
    return [run_episode(config, agent, base_seed + i) for i in range(episodes)]


def count_ineffective(decisions) -> int:
    """Causeless reversals: FASTER/SLOWER undone by its opposite within 2
    decisions while the interval min-TTC stayed >= 3 s, or a lane change
    reverted by the opposite change within 3 decisions. Pairs count once."""
    decisions = list(decisions)
    used = [False] * len(decisions)
    count = 0
    for i, d in enumerate(decisions):
        if used[i]:
            continue
        if d.action in (MetaAction.FASTER, MetaAction.SLOWER):
            opp = (MetaAction.SLOWER if d.action is MetaAction.FASTER
                   else MetaAction.FASTER)
            window = 2
        elif d.action in (MetaAction.LANE_LEFT, MetaAction.LANE_RIGHT):
            opp = (MetaAction.LANE_RIGHT if d.action is MetaAction.LANE_LEFT
                   else MetaAction.LANE_LEFT)
            window = 3
        else:
            continue
        for j in range(i + 1, min(i + window, len(decisions) - 1) + 1):
            if used[j] or decisions[j].action is not opp:
                continue
            if opp in (MetaAction.FASTER, MetaAction.SLOWER):
                interval_ttc = min(x.min_ttc for x in decisions[i + 1:j + 1])
                if interval_ttc < INEFFECTIVE_TTC_EXEMPT:
                    break  # a reaction, not churn
            used[i] = used[j] = True
            count += 1
            break
    return count


def aggregate(results) -> MetricsSummary:
    results = list(results)
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    n = len(results)
    counts: dict[str, int] = {}
    for r in results:
        counts[r.outcome] = counts.get(r.outcome, 0) + 1
    fails = sum(counts.get(k, 0) for k in ("collision", "timeout", "agent_error"))
    total_dec = sum(len(r.decisions) for r in results)
    total_ineff = sum(count_ineffective(r.decisions) for r in results)
    success_times = [r.sim_time_elapsed for r in results if r.outcome == "success"]
    return MetricsSummary(
        fail_pct=100.0 * fails / n,
        inefficiency_pct=(100.0 * total_ineff / total_dec) if total_dec else 0.0,
        avg_time_s=(sum(success_times) / len(success_times)
                    if success_times else math.nan),
        episodes=n,
        outcome_counts=tuple(sorted(counts.items())),
    )


def _row_key(key):
    scenario, method = key
    si = SCENARIO_ORDER.index(scenario) if scenario in SCENARIO_ORDER else 99
    mi = METHOD_ORDER.index(method) if method in METHOD_ORDER else 99
    return (si, scenario, mi, method)


def emit_report(summaries: dict[tuple[str, str], MetricsSummary]) -> tuple[str, str]:
    """(CSV text, Markdown text) in scenario-major, fixed-method order."""
    keys = sorted(summaries, key=_row_key)
    csv_lines = ["scenario,method,fail_pct,inefficiency_pct,avg_time_s"]
    md_lines = ["| Scenario | Method | Fail | Inefficiency | Average Time |",
                "| --- | --- | --- | --- | --- |"]
    prev_scenario = None
    for key in keys:
        scenario, method = key
        s = summaries[key]
        csv_lines.append(f"{scenario},{method},{s.fail_pct:.1f},"
                         f"{s.inefficiency_pct:.1f},{s.avg_time_s:.1f}")
        label = scenario if scenario != prev_scenario else ""
        md_lines.append(f"| {label} | {method} | {s.fail_pct:.1f}% | "
                        f"{s.inefficiency_pct:.1f}% | {s.avg_time_s:.1f} s |")
        prev_scenario = scenario
    return "\n".join(csv_lines) + "\n", "\n".join(md_lines) + "\n"


def results_to_jsonl(results) -> str:
    """Audit dump: one JSON object per episode, stable formatting."""
    lines = []
    for r in results:
        lines.append(json.dumps({
            "scenario": r.scenario,
            "seed": r.seed,
            "outcome": r.outcome,
            "sim_time_elapsed": repr(r.sim_time_elapsed),
            "decisions": [
                [repr(d.sim_time), d.action.name, d.fallback_used, repr(d.min_ttc)]
                for d in r.decisions
            ],
        }, sort_keys=True))
    return "".join(line + "\n" for line in lines)
