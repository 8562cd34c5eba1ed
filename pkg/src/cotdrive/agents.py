"""Decision agents wired for the episode runner.

Every agent exposes ``decide(scene, world) -> (MetaAction, fallback_used)``;
the CoT agents look only at the scene text, the planners use the world state.
"""

from __future__ import annotations

from .baselines import MpcParams, greedy_time_policy, mpc_plan
from .cot import PromptTemplateSet, ScriptedBackend, run_cot
from .llmclient import CompletionRequest, LlmClient, ReplayCache
from .scenario import MetaAction

AGENT_IDS = ("cot-scripted", "cot-llm", "cot-llm-nocot", "mpc", "greedy")


class CoTAgent:
    """Chain-of-thought agent over any completion backend."""

    def __init__(self, backend, name: str = "cot-scripted", use_cot: bool = True,
                 templates: PromptTemplateSet | None = None):
        self.name = name
        self.backend = backend
        self.use_cot = use_cot
        self.templates = templates or PromptTemplateSet.default()
        self.exchanges: list = []

    def decide(self, scene, world):
        exchange = run_cot(scene, self.backend, self.templates, use_cot=self.use_cot)
        self.exchanges.append(exchange)
        return exchange.action, exchange.fallback_used


class MpcAgent:
    name = "mpc"

    def __init__(self, params: MpcParams | None = None):
        self.params = params or MpcParams()

    def decide(self, scene, world):
        return mpc_plan(world, self.params), False


class GreedyAgent:
    name = "greedy"

    def decide(self, scene, world):
        return greedy_time_policy(world), False


class LlmBackend:
    """Adapts the HTTP client (optionally wrapped in a replay cache) to the
    CoT backend-callable interface."""

    def __init__(self, completer, model: str):
        self.completer = completer
        self.model = model

    def __call__(self, messages):
        request = CompletionRequest(model=self.model, messages=tuple(messages))
        return self.completer(request)


def make_agent(agent_id: str, mpc_params: MpcParams | None = None,
               replay_dir=None, replay_mode: str | None = None,
               client: LlmClient | None = None):
    """Build an agent from its CLI id."""
    if agent_id == "cot-scripted":
        return CoTAgent(ScriptedBackend(), name=agent_id)
    if agent_id == "cot-scripted-nocot":
        return CoTAgent(ScriptedBackend(), name=agent_id, use_cot=False)
    if agent_id in ("cot-llm", "cot-llm-nocot"):
        if replay_mode == "replay":
            completer = ReplayCache(None, replay_dir, "replay")
            model = client.model if client is not None else "default"
        else:
            client = client or LlmClient()
            completer = client.complete
            if replay_mode == "record":
                completer = ReplayCache(completer, replay_dir, "record")
            model = client.model
        return CoTAgent(LlmBackend(completer, model), name=agent_id,
                        use_cot=(agent_id == "cot-llm"))
    if agent_id == "mpc":
        return MpcAgent(mpc_params)
    if agent_id == "greedy":
        return GreedyAgent()
    raise ValueError(
        f"unknown agent id {agent_id!r}; valid ids: {', '.join(AGENT_IDS)}")
