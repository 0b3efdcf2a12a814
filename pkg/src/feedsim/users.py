"""Simulated user behavior: per-item decisions, mindset updates, instructions.

Two interchangeable simulators implement the same protocol:

  * ScriptedSimulator - a closed, deterministic rule table used as the test
    oracle and for fast desk-scale runs.
  * LLMSimulator (see llm.py) - a model-backed simulator speaking the same
    decision schema.

The per-item loop is: decide_action (pure, no state mutation), then
update_mindset (returns a new UserState). When a decision is Leave, the
caller asks reflect_and_instruct for an explicit instruction; None means the
session must terminate.

Scripted rule table (all thresholds configurable via ScriptedConfig):

  * Leave when satisfaction < leave_satisfaction or any fatigue count >=
    fatigue_threshold, regardless of the item shown.
  * affinity >= watch_affinity and satisfaction >= share_satisfaction:
    Share (a delighted user spreads the item to their network).
  * affinity >= watch_affinity: Watch min(duration, round(20 + 10*affinity))
    seconds for timed content, Like for untimed content.
  * affinity >= click_affinity: Click.
  * otherwise: Skip.

State update rules:

  * fatigue[category] += 1 on Skip, and on any action when the previous
    item had the same category (repetition tires even an engaged user);
    positive engagement (watch/like/comment/share) after a category change
    decays it by 1. Fatigue counts near-repeat exposures, not just skips.
  * satisfaction += 0.1 * affinity on watch/like/comment/share, -= 0.05 on
    skip, clamped to [0, 1]; starts at 0.5.
  * items_seen_this_session increments by exactly 1 per decision.
  * the running summary absorbs the interaction so later recommendation
    requests see current engagement.

Issuing an explicit instruction clears fatigue: the complaint has been
voiced and the recommender gets a clean chance to address it (see
relieve_after_instruction).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Protocol

from .catalog import (
    DEFAULT_RECENT_CAP,
    ActionKind,
    HistorySummary,
    Item,
    ItemMetadata,
)
from .errors import ConfigError, PromptBudgetError
from .util import clamp

if TYPE_CHECKING:
    from .session import Turn


class TimeOfDay(str, Enum):
    MORNING = "morning"
    AFTERNOON = "afternoon"
    EVENING = "evening"
    NIGHT = "night"


class DayOfWeek(str, Enum):
    MONDAY = "monday"
    TUESDAY = "tuesday"
    WEDNESDAY = "wednesday"
    THURSDAY = "thursday"
    FRIDAY = "friday"
    SATURDAY = "saturday"
    SUNDAY = "sunday"


class InstructionSource(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class Context:
    time_of_day: TimeOfDay = TimeOfDay.EVENING
    day_of_week: DayOfWeek = DayOfWeek.SATURDAY
    device: str = "phone"


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    age: int = 30
    gender: str = ""
    location: str = ""
    interests: tuple[tuple[str, float], ...] = ()
    social_groups: tuple[str, ...] = ()
    context: Context = field(default_factory=Context)

    def __post_init__(self):
        for cat, aff in self.interests:
            if not 0.0 <= aff <= 1.0:
                raise ValueError(f"affinity for {cat!r} out of [0,1]: {aff}")

    def affinity_for(self, category: str) -> float:
        for cat, aff in self.interests:
            if cat == category:
                return aff
        return 0.0


@dataclass
class UserState:
    """The user's evolving session state: the thing the recommender acts on."""

    mindset: str = ""
    fatigue: dict[str, int] = field(default_factory=dict)
    satisfaction: float = 0.5
    items_seen_this_session: int = 0
    summary: HistorySummary = field(default_factory=HistorySummary)
    last_category: str | None = None  # bookkeeping for near-repeat fatigue

    def __post_init__(self):
        if not 0.0 <= self.satisfaction <= 1.0:
            raise ValueError(f"satisfaction out of [0,1]: {self.satisfaction}")
        for cat, n in self.fatigue.items():
            if n < 0:
                raise ValueError(f"negative fatigue for {cat!r}")

    def max_fatigue(self) -> int:
        return max(self.fatigue.values(), default=0)


@dataclass(frozen=True)
class ActionDecision:
    action: ActionKind
    reasoning: str
    mindset_update: str = ""
    watch_s: int | None = None

    def __post_init__(self):
        if not self.reasoning:
            raise ValueError("reasoning must be non-empty")
        if (self.action == ActionKind.WATCH) != (self.watch_s is not None):
            raise ValueError("watch_s must be present iff action is watch")

    def validate_for(self, item: Item) -> None:
        if self.watch_s is not None and not 1 <= self.watch_s <= item.duration_s:
            raise ValueError(
                f"watch_s {self.watch_s} outside [1, {item.duration_s}] for {item.item_id}")


@dataclass(frozen=True)
class Instruction:
    text: str
    source: InstructionSource = InstructionSource.EXPLICIT
    issued_after_item: str = ""

    def __post_init__(self):
        if self.source == InstructionSource.EXPLICIT and not self.text:
            raise ValueError("explicit instructions must carry text")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str


@dataclass(frozen=True)
class ScriptedConfig:
    watch_affinity: float = 0.7
    click_affinity: float = 0.4
    leave_satisfaction: float = 0.3
    fatigue_threshold: int = 3
    instruction_floor: float = 0.3
    share_satisfaction: float = 0.9
    watch_base_s: int = 20
    watch_bonus_s: int = 10


@dataclass(frozen=True)
class MindsetConfig:
    satisfaction_gain: float = 0.1
    satisfaction_loss: float = 0.05
    mindset_max_chars: int = 2000
    recent_cap: int = DEFAULT_RECENT_CAP


DEFAULT_MINDSET = MindsetConfig()

POSITIVE_ACTIONS = frozenset({
    ActionKind.WATCH, ActionKind.LIKE, ActionKind.COMMENT, ActionKind.SHARE,
})

GENERIC_INSTRUCTION = "Show me more interesting content"
FATIGUE_INSTRUCTION = (
    "There are too many recommendations about {category}; "
    "I wanna see something different but related"
)


class UserSimulator(Protocol):
    def decide_action(
        self, profile: UserProfile, state: UserState, item: Item, metadata: ItemMetadata,
    ) -> ActionDecision: ...

    def reflect_and_instruct(
        self, profile: UserProfile, state: UserState, trajectory_so_far: list["Turn"],
    ) -> Instruction | None: ...


class ScriptedSimulator:
    """Deterministic persona: a pure function of (profile, state, item, seed)."""

    def __init__(self, config: ScriptedConfig | None = None, seed: int = 0):
        self.config = config or ScriptedConfig()
        self.seed = seed  # kept for interface parity; the rule table uses no randomness

    def decide_action(
        self, profile: UserProfile, state: UserState, item: Item, metadata: ItemMetadata,
    ) -> ActionDecision:
        if not profile.interests:
            raise ConfigError(
                f"scripted persona {profile.user_id!r} has no interests", field="interests")
        cfg = self.config
        affinity = profile.affinity_for(item.category)

        if state.satisfaction < cfg.leave_satisfaction or state.max_fatigue() >= cfg.fatigue_threshold:
            why = ("satisfaction has dropped too low"
                   if state.satisfaction < cfg.leave_satisfaction
                   else "seen too much of the same thing")
            return ActionDecision(
                action=ActionKind.LEAVE,
                reasoning=f"Losing interest; {why}. Ending the session here.",
                mindset_update="Ready to stop browsing.",
            )

        if affinity >= cfg.watch_affinity and state.satisfaction >= cfg.share_satisfaction:
            return ActionDecision(
                action=ActionKind.SHARE,
                reasoning=f"Loving this {item.category} content; sharing with friends.",
                mindset_update=f"Spreading the word about {item.category}.",
            )
        if affinity >= cfg.watch_affinity:
            if item.duration_s > 0:
                watch_s = min(item.duration_s, int(round(cfg.watch_base_s + cfg.watch_bonus_s * affinity)))
                return ActionDecision(
                    action=ActionKind.WATCH,
                    watch_s=watch_s,
                    reasoning=f"'{item.title or item.item_id}' matches my interest in {item.category}.",
                    mindset_update=f"Enjoying {item.category} content.",
                )
            return ActionDecision(
                action=ActionKind.LIKE,
                reasoning=f"Strongly into {item.category}; liking this post.",
                mindset_update=f"Enjoying {item.category} content.",
            )
        if affinity >= cfg.click_affinity:
            return ActionDecision(
                action=ActionKind.CLICK,
                reasoning=f"Somewhat curious about {item.category}; opening to preview.",
                mindset_update=f"Mildly curious about {item.category}.",
            )
        if state.fatigue.get(item.category, 0) >= 1:
            reasoning = (f"Not interested in {item.category}, and there are too many "
                         "similar recommendations in a row.")
        else:
            reasoning = f"Not interested in {item.category}."
        return ActionDecision(
            action=ActionKind.SKIP,
            reasoning=reasoning,
            mindset_update=f"Tiring of {item.category} suggestions.",
        )

    def reflect_and_instruct(
        self, profile: UserProfile, state: UserState, trajectory_so_far: list["Turn"],
    ) -> Instruction | None:
        if state.satisfaction < self.config.instruction_floor:
            return None
        last_item = _last_item_id(trajectory_so_far)
        if not state.fatigue or state.max_fatigue() == 0:
            return Instruction(text=GENERIC_INSTRUCTION, issued_after_item=last_item)
        # Most-fatigued category; ties broken by name for determinism.
        worst = min(state.fatigue.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        return Instruction(
            text=FATIGUE_INSTRUCTION.format(category=worst),
            issued_after_item=last_item,
        )


def _last_item_id(turns: list["Turn"]) -> str:
    for turn in reversed(turns):
        if turn.decisions:
            return turn.decisions[-1][0]
    return ""


def update_mindset(
    profile: UserProfile,
    state: UserState,
    item: Item,
    decision: ActionDecision,
    config: MindsetConfig = DEFAULT_MINDSET,
) -> UserState:
    """Fold one decision into the user state; the input state is not mutated."""
    cat = item.category
    fatigue = dict(state.fatigue)
    repeat = state.last_category == cat
    if decision.action == ActionKind.SKIP or (repeat and decision.action != ActionKind.LEAVE):
        fatigue[cat] = fatigue.get(cat, 0) + 1
    elif decision.action in POSITIVE_ACTIONS:
        fatigue[cat] = max(0, fatigue.get(cat, 0) - 1)

    satisfaction = state.satisfaction
    if decision.action in POSITIVE_ACTIONS:
        satisfaction += config.satisfaction_gain * profile.affinity_for(cat)
    elif decision.action == ActionKind.SKIP:
        satisfaction -= config.satisfaction_loss
    satisfaction = clamp(satisfaction)

    mindset = state.mindset
    if decision.mindset_update:
        mindset = f"{mindset} {decision.mindset_update}".strip()
        if len(mindset) > config.mindset_max_chars:
            mindset = mindset[-config.mindset_max_chars:]

    summary = _fold_into_summary(state.summary, item, decision.action, config.recent_cap)
    return UserState(
        mindset=mindset,
        fatigue=fatigue,
        satisfaction=satisfaction,
        items_seen_this_session=state.items_seen_this_session + 1,
        summary=summary,
        last_category=cat if decision.action != ActionKind.LEAVE else state.last_category,
    )


def _fold_into_summary(
    summary: HistorySummary, item: Item, action: ActionKind, cap: int,
) -> HistorySummary:
    per_cat = dict(summary.per_category_counts)
    per_cat[item.category] = per_cat.get(item.category, 0) + 1
    per_act = dict(summary.per_action_counts)
    per_act[action] = per_act.get(action, 0) + 1
    recent = [(item.item_id, action)] + list(summary.recent_items)
    return HistorySummary(
        window_days=summary.window_days,
        per_category_counts=per_cat,
        per_action_counts=per_act,
        recent_items=recent[:cap],
    )


def relieve_after_instruction(state: UserState) -> UserState:
    """Clear fatigue once an explicit instruction has been voiced."""
    return replace(state, fatigue={})


@dataclass(frozen=True)
class ImplicitSignalConfig:
    long_watch_count: int = 3
    long_form_duration_s: int = 300
    skip_streak: int = 5


LONG_FORM_SIGNAL = "receptive to long-form content"
DISENGAGED_SIGNAL = "previous recommendations failed to engage"


def infer_implicit_signal(
    decisions: list[ActionDecision],
    items: list[Item],
    config: ImplicitSignalConfig = ImplicitSignalConfig(),
) -> Instruction | None:
    """Rule-based inference of implicit preference signals from recent behavior.

    Completing several long videos signals long-form receptiveness; a long
    trailing all-skip streak signals disengagement; an uninterrupted session
    with no skips yields no signal (satisfaction assumed).
    """
    if not decisions:
        raise ValueError("need at least one decision")
    if len(decisions) != len(items):
        raise ValueError("decisions and items must be parallel lists")

    completed_long = sum(
        1 for d, it in zip(decisions, items)
        if d.action == ActionKind.WATCH
        and it.duration_s > config.long_form_duration_s
        and d.watch_s == it.duration_s
    )
    if completed_long >= config.long_watch_count:
        return Instruction(
            text=LONG_FORM_SIGNAL,
            source=InstructionSource.IMPLICIT,
            issued_after_item=items[-1].item_id,
        )

    streak = 0
    for d in reversed(decisions):
        if d.action != ActionKind.SKIP:
            break
        streak += 1
    if streak >= config.skip_streak:
        return Instruction(
            text=DISENGAGED_SIGNAL,
            source=InstructionSource.IMPLICIT,
            issued_after_item=items[-1].item_id,
        )
    return None


NO_HISTORY_MARKER = "no prior interactions"
DEFAULT_PROMPT_BUDGET = 6000

DECISION_FORMAT = (
    "For the item below, answer in exactly this format:\n"
    "REASONING: <why you will respond this way>\n"
    "ACTION: <one of Click, Comment, Share, Like, Watch, Skip, Leave>\n"
    "WATCH_SECONDS: <integer, only when ACTION is Watch>\n"
    "MINDSET: <how this changes your current thinking>"
)


def build_prompt(
    profile: UserProfile,
    state: UserState,
    item: Item,
    metadata: ItemMetadata,
    budget_chars: int = DEFAULT_PROMPT_BUDGET,
) -> PromptBundle:
    """Deterministic text-mode serialization of the simulation context.

    Demographics live in the system text; history, mindset, and the item
    under consideration live in the user text. If the bundle exceeds the
    character budget, recent_items are truncated first (newest kept); if it
    still does not fit, raise.
    """
    interests = ", ".join(f"{cat} (affinity {aff:.2f})" for cat, aff in profile.interests)
    system = (
        f"You are simulating a {profile.age}-year-old {profile.gender or 'person'} "
        f"from {profile.location or 'an unspecified location'} browsing a content feed.\n"
        f"Interests: {interests or 'none listed'}.\n"
        f"Social groups: {', '.join(profile.social_groups) or 'none'}.\n"
        f"Context: {profile.context.time_of_day.value}, {profile.context.day_of_week.value}, "
        f"on {profile.context.device}.\n"
        f"React to each item the way this person would.\n{DECISION_FORMAT}"
    )

    def user_text(recent_kept: int) -> str:
        s = state.summary
        if s.is_empty():
            history = NO_HISTORY_MARKER
        else:
            cats = ", ".join(f"{c}: {n}" for c, n in sorted(s.per_category_counts.items()))
            acts = ", ".join(f"{a.value}: {n}" for a, n in sorted(
                s.per_action_counts.items(), key=lambda kv: kv[0].value))
            recent = "; ".join(f"{iid} ({act.value})" for iid, act in s.recent_items[:recent_kept])
            history = (
                f"Last {s.window_days} days, {s.total()} interactions. "
                f"By category: {cats}. By action: {acts}."
            )
            if recent:
                history += f" Most recent first: {recent}."
        mindset = state.mindset or "(fresh session)"
        return (
            f"Engagement history: {history}\n"
            f"Current mindset: {mindset}\n"
            f"Satisfaction: {state.satisfaction:.2f}; items seen this session: "
            f"{state.items_seen_this_session}\n"
            f"Item: {item.title or item.item_id}\n"
            f"Description: {item.description}\n"
            f"Category: {item.category}; type: {item.content_type.value}; "
            f"duration: {item.duration_s}s\n"
            f"Stats: {metadata.likes} likes, {metadata.shares} shares, "
            f"{metadata.comments} comments; tags: {', '.join(metadata.tags) or 'none'}"
        )

    kept = len(state.summary.recent_items)
    while True:
        user = user_text(kept)
        if len(system) + len(user) <= budget_chars:
            return PromptBundle(system=system, user=user)
        if kept == 0:
            raise PromptBudgetError(
                f"prompt needs {len(system) + len(user)} chars, budget is {budget_chars}")
        kept = max(0, kept // 2)
