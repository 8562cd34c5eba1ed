"""Closed-loop meta-action driving framework: simulator, chain-of-thought
agent, MPC/greedy baselines, evaluation harness, and VQA dataset tooling."""

from .scenario import (EpisodeStatus, MetaAction, ScenarioConfig, World,
                       apply_meta_action, default_config, episode_status,
                       idm_acceleration, spawn_scenario, step)
from .world import (Lane, RoadNetwork, VehicleState, detect_collisions,
                    kinematic_update, lead_gap_and_ttc, obb_overlap)
from .scene import SceneDescription, rasterize_topdown, serialize_scene
from .cot import (CoTExchange, DecodeError, PromptTemplateSet, ScriptedBackend,
                  decode_action, run_cot)
from .baselines import MpcParams, greedy_time_policy, mpc_plan
from .harness import (EpisodeResult, MetricsSummary, aggregate,
                      count_ineffective, emit_report, run_episode, run_suite)
from .vqa import VqaRecord, build_vqa_records, export_jsonl, parse_jsonl
from .llmclient import CompletionRequest, LlmClient, ReplayCache

__version__ = "0.1.0"

__all__ = [
    "EpisodeStatus", "MetaAction", "ScenarioConfig", "World",
    "apply_meta_action", "default_config", "episode_status",
    "idm_acceleration", "spawn_scenario", "step",
    "Lane", "RoadNetwork", "VehicleState", "detect_collisions",
    "kinematic_update", "lead_gap_and_ttc", "obb_overlap",
    "SceneDescription", "rasterize_topdown", "serialize_scene",
    "CoTExchange", "DecodeError", "PromptTemplateSet", "ScriptedBackend",
    "decode_action", "run_cot",
    "MpcParams", "greedy_time_policy", "mpc_plan",
    "EpisodeResult", "MetricsSummary", "aggregate", "count_ineffective",
    "emit_report", "run_episode", "run_suite",
    "VqaRecord", "build_vqa_records", "export_jsonl", "parse_jsonl",
    "CompletionRequest", "LlmClient", "ReplayCache",
]
