"""Three-stage chain-of-thought pipeline, action decoder, and the scripted
rule-policy backend that stands in for a fine-tuned multimodal model."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

from .scenario import MetaAction
from .scene import SceneDescription, SceneStruct, parse_scene_text

STAGES = ("scene_understanding", "prediction", "decision")

FORMAT_INSTRUCTION = (
    "Finish your reply with a final line of exactly the form:\n"
    "ACTION: <TOKEN>\n"
    "where <TOKEN> is one of LANE_LEFT, LANE_RIGHT, FASTER, SLOWER, IDLE."
)

SYSTEM_PROMPT = "You are the driving decision module of an autonomous vehicle."

FALLBACK_ACTION = MetaAction.SLOWER

Message = tuple[str, str]


class DecodeError(ValueError):
    """Stage-3 answer did not contain a valid action line."""

    def __init__(self, message: str, line: str | None = None):
        super().__init__(message)
        self.line = line


class BackendError(RuntimeError):
    """The completion backend failed (transport or unusable prompt)."""


@dataclass(frozen=True)
class CoTExchange:
    stages: tuple[tuple[str, str], tuple[str, str], tuple[str, str]]
    action: MetaAction
    fallback_used: bool

    def __post_init__(self):
        if len(self.stages) != 3:
            raise ValueError("a CoT exchange has exactly three stages")


@dataclass(frozen=True)
class PromptTemplateSet:
    stage1: str
    stage2: str
    stage3: str

    def __post_init__(self):
        if FORMAT_INSTRUCTION not in self.stage3:
            raise ValueError("stage-3 template must contain the action format instruction")

    @classmethod
    def default(cls) -> "PromptTemplateSet":
        base = resources.files("cotdrive") / "templates"
        return cls(*((base / f"stage{i}.txt").read_text(encoding="utf-8")
                     for i in (1, 2, 3)))

    @classmethod
    def load_dir(cls, path) -> "PromptTemplateSet":
        from pathlib import Path
        p = Path(path)
        return cls(*((p / f"stage{i}.txt").read_text(encoding="utf-8")
                     for i in (1, 2, 3)))


_ACTION_LINE_RE = re.compile(r"^\s*action\s*:\s*(\S+)\s*$", re.IGNORECASE)
_TOKENS = {a.name: a for a in MetaAction}


def decode_action(text: str) -> MetaAction:
    """Decode the last `ACTION: <TOKEN>` line of an answer."""
    for line in reversed(text.splitlines()):
        if not line.strip():
            continue
        m = _ACTION_LINE_RE.match(line)
        if m is None:
            continue
        token = m.group(1).upper()
        if token not in _TOKENS:
            raise DecodeError(f"unknown action token {token!r}", line=line)
        return _TOKENS[token]
    raise DecodeError("no ACTION line found in answer")


def render_action(action: MetaAction) -> str:
    return f"ACTION: {MetaAction(action).name}"


def _call(backend, messages: list[Message]) -> str:
    try:
        return backend(messages)
    except (DecodeError,):
        raise
    except BackendError:
        raise
    except Exception as exc:  # transport adapters may raise their own types
        raise BackendError(str(exc)) from exc


def run_cot(scene: SceneDescription, backend, templates: PromptTemplateSet | None = None,
            use_cot: bool = True) -> CoTExchange:
    """Run the scene-understanding -> prediction -> decision pipeline.

    With ``use_cot=False`` only the decision stage runs (the with/without-CoT
    ablation); the first two stages are recorded as skipped.
    """
    templates = templates or PromptTemplateSet.default()
    if use_cot:
        q1 = templates.stage1.format(scene=scene.text, answer_1="", answer_2="")
        a1 = _call(backend, [("system", SYSTEM_PROMPT), ("user", q1)])
        q2 = templates.stage2.format(scene=scene.text, answer_1=a1, answer_2="")
        a2 = _call(backend, [("system", SYSTEM_PROMPT), ("user", q2)])
    else:
        q1 = a1 = q2 = a2 = "(skipped)"
    q3 = templates.stage3.format(scene=scene.text, answer_1=a1, answer_2=a2)
    a3 = _call(backend, [("system", SYSTEM_PROMPT), ("user", q3)])
    fallback = False
    try:
        action = decode_action(a3)
    except DecodeError:
        reminder = ("Your previous reply did not end with a valid action line.\n"
                    + FORMAT_INSTRUCTION)
        a3 = _call(backend, [("system", SYSTEM_PROMPT), ("user", q3),
                             ("assistant", a3), ("user", reminder)])
        try:
            action = decode_action(a3)
        except DecodeError:
            action = FALLBACK_ACTION
            fallback = True
    return CoTExchange(stages=((q1, a1), (q2, a2), (q3, a3)),
                       action=action, fallback_used=fallback)


# ---------------------------------------------------------------------------
# scripted backend (deterministic rule policy rendered as staged prose)

LEAD_TTC_THREAT = 3.0
CLOSE_GAP = 6.0     # bumper gap below which we always back off
CLEAR_GAP = 10.0    # gap needed before accelerating behind a lead
CLEAR_TTC = 8.0
GO_MARGIN_AHEAD = 3.0    # s of headway needed before the next crossing arrival
GO_MARGIN_BEHIND = 2.5   # s a crossing vehicle needs to clear the zone
GO_HYSTERESIS = 1.5      # extra headway demanded before re-accelerating
# At a roundabout the join is tangential (we fall in behind the passing
# vehicle, it never T-bones us), so far smaller margins suffice:
RING_MARGIN_AHEAD = 2.0
RING_MARGIN_BEHIND = 3.0  # a passer occupies the merge region about this long
RING_HYSTERESIS = 0.5
CREEP_SPEED = 2.0        # assumed go-speed when judging a standing start
CONFLICT_HORIZON = 10.0  # crossing arrivals beyond this are ignored
APPROACH_SPEED = 4.0     # held while the zone ahead still has traffic inbound
ADJACENT_CLEAR = 15.0
SIDE_TTC_CLEAR = 3.5  # s to the target lane's front vehicle after a change
WEATHER_CAP_FACTOR = 0.6

_LANE_COUNT = {"highway": 4, "merge": 2}


def _lead_info(sc: SceneStruct):
    leads = [n for n in sc.neighbors if n.rel == "0" and n.dist > 0]
    if not leads:
        return None
    lead = min(leads, key=lambda n: n.dist)
    gap = lead.dist - 5.0
    closing = sc.ego_speed - lead.speed
    if gap <= 0:
        ttc = 0.0
    elif closing > 1e-6:
        ttc = gap / closing
    else:
        ttc = math.inf
    return lead, gap, ttc


def _conflict_info(sc: SceneStruct, hysteresis: bool = False):
    """Gap acceptance at the conflict zone ahead: the crossing vehicle whose
    zone occupancy would overlap ours if we proceeded now. None when the zone
    is clear for our window, or when there is no zone left to yield to."""
    if sc.conflict_dist is None:
        return None  # no zone ahead (or already inside it: committed)
    if sc.road_kind == "roundabout":
        behind, ahead, hyst = RING_MARGIN_BEHIND, RING_MARGIN_AHEAD, RING_HYSTERESIS
    else:
        behind, ahead, hyst = GO_MARGIN_BEHIND, GO_MARGIN_AHEAD, GO_HYSTERESIS
    if hysteresis:
        ahead += hyst
    t_ego = sc.conflict_dist / max(sc.ego_speed, CREEP_SPEED)
    worst = None
    for n in sc.neighbors:
        if n.conflict_dist is None:
            continue
        t_j = n.conflict_dist / max(n.speed, 0.1)
        if t_j < CONFLICT_HORIZON and t_ego - behind < t_j < t_ego + ahead:
            if worst is None or t_j < worst[1]:
                worst = (n, t_j)
    return worst


def _zone_busy(sc: SceneStruct) -> bool:
    """Whether to keep holding the approach speed short of the zone ahead.

    At an intersection the crossing streams terminate, so it pays to hold
    until every inbound vehicle has passed. Ring traffic never terminates;
    there we hold only while the acceptance window itself is occupied."""
    if sc.road_kind != "roundabout":
        for n in sc.neighbors:
            if n.conflict_dist is None:
                continue
            if n.conflict_dist / max(n.speed, 0.1) < CONFLICT_HORIZON:
                return True
    return _conflict_info(sc, hysteresis=True) is not None


def _lane_exists(sc: SceneStruct, side: int) -> bool:
    count = _LANE_COUNT.get(sc.road_kind, 1)
    target = sc.ego_lane_index + side
    return 0 <= target < count


def _front_gap(sc: SceneStruct, side: int) -> float:
    rel = f"{side:+d}"
    gaps = [n.dist for n in sc.neighbors if n.rel == rel and n.dist > 0]
    return min(min(gaps), 50.0) if gaps else 50.0


def _side_occupied(sc: SceneStruct, side: int) -> bool:
    rel = f"{side:+d}"
    for n in sc.neighbors:
        if n.rel != rel:
            continue
        if abs(n.dist) <= ADJACENT_CLEAR:
            return True
        if n.dist > 0:  # would we run into it right after the change?
            closing = sc.ego_speed - n.speed
            if closing > 1e-6 and (n.dist - 5.0) / closing < SIDE_TTC_CLEAR:
                return True
    return False


def decide_from_scene(sc: SceneStruct) -> MetaAction:
    """The scripted decision rule table."""
    lead = _lead_info(sc)
    conflict = _conflict_info(sc)

    if ({"wet", "snow"} & set(sc.flags)
            and sc.ego_target_speed > WEATHER_CAP_FACTOR * sc.speed_cap + 1e-9):
        return MetaAction.SLOWER
    if lead is not None and (lead[2] < LEAD_TTC_THREAT or lead[1] < CLOSE_GAP):
        return MetaAction.SLOWER
    if conflict is not None:
        if sc.ego_target_speed > 0.05:
            return MetaAction.SLOWER
        return MetaAction.IDLE  # already holding at the yield line
    if sc.merge_end_dist is not None and sc.merge_end_dist <= 120.0:
        if not _side_occupied(sc, +1):
            return MetaAction.LANE_LEFT
        if sc.merge_end_dist < 40.0:
            return MetaAction.SLOWER
        return MetaAction.IDLE
    if lead is not None and lead[0].speed < sc.ego_target_speed - 0.5:
        candidates = [side for side in (+1, -1)
                      if _lane_exists(sc, side) and not _side_occupied(sc, side)]
        if len(candidates) == 1:
            side = candidates[0]
            return MetaAction.LANE_LEFT if side > 0 else MetaAction.LANE_RIGHT
        if len(candidates) == 2:
            g_left, g_right = _front_gap(sc, +1), _front_gap(sc, -1)
            if g_left > g_right:
                return MetaAction.LANE_LEFT
            if g_right > g_left:
                return MetaAction.LANE_RIGHT
            # tie: stay and fall through
    if sc.conflict_dist is not None and _zone_busy(sc):
        # Inbound crossing traffic: approach at a steady low speed and only
        # accelerate once the zone is genuinely clear (prevents speed churn
        # as the acceptance window flickers while both parties move).
        if sc.ego_target_speed > APPROACH_SPEED + 0.05:
            return MetaAction.SLOWER
        return MetaAction.IDLE
    clear_ahead = lead is None or (lead[1] > CLEAR_GAP and lead[2] > CLEAR_TTC)
    catching_up = (lead is not None and lead[1] > CLEAR_GAP
                   and sc.ego_target_speed < lead[0].speed - 0.5)
    if (clear_ahead or catching_up) and sc.ego_target_speed < sc.speed_cap - 0.05:
        return MetaAction.FASTER
    return MetaAction.IDLE


def _describe_neighbor(n) -> str:
    if n.rel == "0":
        where = "in my lane"
    elif n.rel == "cross":
        where = "on a crossing path"
    else:
        where = f"in lane {n.rel}"
    extra = ""
    if n.conflict_dist is not None:
        extra = f", {n.conflict_dist:.1f} m from the conflict point"
    return f"one {where} at {n.dist:.1f} m going {n.speed:.1f} m/s{extra}"


def _stage1_answer(sc: SceneStruct) -> str:
    conditions = ", ".join(sc.flags) if sc.flags else "clear"
    parts = [f"This is a {sc.road_kind} scene with {conditions} conditions.",
             f"I am in lane {sc.ego_lane_index} at {sc.ego_speed:.1f} m/s "
             f"(target {sc.ego_target_speed:.1f} m/s, cap {sc.speed_cap:.1f} m/s)."]
    if sc.neighbors:
        parts.append("Nearby vehicles: "
                     + "; ".join(_describe_neighbor(n) for n in sc.neighbors) + ".")
    else:
        parts.append("No other vehicles are within sensing range.")
    return " ".join(parts)


def _stage2_answer(sc: SceneStruct) -> str:
    parts = []
    lead = _lead_info(sc)
    if lead is not None and math.isfinite(lead[2]):
        parts.append(f"The vehicle ahead is {lead[1]:.1f} m away; "
                     f"time-to-collision is about {lead[2]:.1f} s.")
        if lead[2] < LEAD_TTC_THREAT:
            parts.append("That is an imminent threat; closing too fast.")
    conflict = _conflict_info(sc)
    if conflict is not None:
        parts.append(f"A crossing vehicle reaches the conflict point in "
                     f"{conflict[1]:.1f} s, about when we would; the paths clash.")
    elif sc.conflict_dist is not None:
        parts.append("The conflict point ahead looks clear for our arrival window.")
    if not parts:
        parts.append("No immediate threats; traffic should keep flowing.")
    return " ".join(parts)


_REASONS = {
    MetaAction.SLOWER: "Reducing speed is the safe choice here.",
    MetaAction.FASTER: "The road ahead is clear, so I can speed up.",
    MetaAction.IDLE: "Holding the current state is appropriate.",
    MetaAction.LANE_LEFT: "The left lane offers a better gap, so I move left.",
    MetaAction.LANE_RIGHT: "The right lane offers a better gap, so I move right.",
}


def _stage3_answer(sc: SceneStruct) -> str:
    action = decide_from_scene(sc)
    return f"{_REASONS[action]}\n{render_action(action)}"


class ScriptedBackend:
    """Deterministic rule policy that answers each stage from the scene text
    embedded in the prompt. Pure function of the prompt contents."""

    def __call__(self, messages: list[Message]) -> str:
        prompt = "\n".join(content for role, content in messages if role == "user")
        try:
            sc = parse_scene_text(prompt)
        except ValueError as exc:
            raise BackendError(str(exc)) from exc
        if "ACTION: <TOKEN>" in prompt:
            return _stage3_answer(sc)
        if "Predict how the situation" in prompt:
            return _stage2_answer(sc)
        return _stage1_answer(sc)
