"""Trajectory-level reward extraction, rubric judging, quadrant classification.

Reward counts are always recomputed from the stored trajectory, never cached
separately, so they cannot drift from the record. The composite is a
weighted sum over named metrics; unknown weights are rejected, missing ones
default to zero contribution.

Default composite weights (config-overridable, echoed into reports):
watch second 1, click 5, like 10, share 20, comment 15, extra turn 30.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .catalog import ActionKind
from .errors import FeedsimError, LLMError
from .session import Trajectory, trajectory_to_json_line

DEFAULT_WEIGHTS: dict[str, float] = {
    "total_watch_s": 1.0,
    "clicks": 5.0,
    "likes": 10.0,
    "shares": 20.0,
    "comments": 15.0,
    "extra_turns": 30.0,
}

COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


@dataclass(frozen=True)
class RewardSignal:
    total_watch_s: int
    clicks: int
    likes: int
    shares: int
    comments: int
    items_consumed: int
    turns: int
    session_span_s: int
    composite: float

    def metric(self, name: str) -> float:
        if name == "extra_turns":
            return max(self.turns - 1, 0)
        if name in METRIC_NAMES:
            return getattr(self, name)
        raise FeedsimError(f"unknown reward metric: {name!r}")

    def to_dict(self) -> dict:
        return {
            "total_watch_s": self.total_watch_s,
            "clicks": self.clicks,
            "likes": self.likes,
            "shares": self.shares,
            "comments": self.comments,
            "items_consumed": self.items_consumed,
            "turns": self.turns,
            "session_span_s": self.session_span_s,
            "composite": self.composite,
        }


METRIC_NAMES = (
    "total_watch_s", "clicks", "likes", "shares", "comments",
    "items_consumed", "turns", "session_span_s", "composite",
)
WEIGHTABLE_METRICS = METRIC_NAMES[:-1] + ("extra_turns",)


def compute_trajectory_reward(
    trajectory: Trajectory, weights: dict[str, float] | None = None,
) -> RewardSignal:
    """Fold a finished trajectory into its reward signal."""
    if trajectory.ended_by is None:
        raise FeedsimError(f"trajectory {trajectory.session_id} is not finished")
    if weights is None:
        weights = DEFAULT_WEIGHTS
    unknown = set(weights) - set(WEIGHTABLE_METRICS)
    if unknown:
        raise FeedsimError(f"unknown weight metric(s): {sorted(unknown)}")

    watch = clicks = likes = shares = comments = consumed = 0
    for turn in trajectory.turns:
        for _, d in turn.decisions:
            if d.action == ActionKind.WATCH:
                watch += d.watch_s or 0
            elif d.action == ActionKind.CLICK:
                clicks += 1
            elif d.action == ActionKind.LIKE:
                likes += 1
            elif d.action == ActionKind.SHARE:
                shares += 1
            elif d.action == ActionKind.COMMENT:
                comments += 1
            if d.action != ActionKind.LEAVE:
                consumed += 1
    turns = len(trajectory.turns)
    values = {
        "total_watch_s": watch,
        "clicks": clicks,
        "likes": likes,
        "shares": shares,
        "comments": comments,
        "items_consumed": consumed,
        "turns": turns,
        "session_span_s": trajectory.ended_ts - trajectory.started_ts,
        "extra_turns": max(turns - 1, 0),
    }
    composite = sum(w * values[m] for m, w in sorted(weights.items()))
    return RewardSignal(
        total_watch_s=watch,
        clicks=clicks,
        likes=likes,
        shares=shares,
        comments=comments,
        items_consumed=consumed,
        turns=turns,
        session_span_s=values["session_span_s"],
        composite=composite,
    )


def retention_proxy(reward: RewardSignal, k: int, max_turns: int) -> float:
    """Session-scale stand-in for retention: share of the item budget consumed."""
    budget = k * max_turns
    return min(1.0, reward.items_consumed / budget) if budget else 0.0


# ── rubric judging ───────────────────────────────────────────────────


@dataclass(frozen=True)
class MetricCriterion:
    metric: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise FeedsimError(f"criterion metric must be a reward field, got {self.metric!r}")
        if self.op not in COMPARATORS:
            raise FeedsimError(f"unknown comparator: {self.op!r}")

    def describe(self) -> str:
        return f"{self.metric} {self.op} {self.threshold:g}"


@dataclass(frozen=True)
class Rubric:
    rubric_id: str
    criteria: tuple[MetricCriterion, ...] = ()
    llm_criteria: tuple[str, ...] = ()


@dataclass
class JudgeVerdict:
    passed: bool
    per_criterion: list[tuple[str, bool, str]]

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "per_criterion": [
                {"criterion": c, "pass": p, "note": n} for c, p, n in self.per_criterion],
        }


class JudgeBackend:
    """Free-text judging surface; the LLM judge in llm.py implements this."""

    def assess(self, criterion: str, trajectory_json: str) -> tuple[bool, str]:
        raise NotImplementedError


def judge_trajectory(
    trajectory: Trajectory,
    reward: RewardSignal,
    rubric: Rubric,
    judge_backend: JudgeBackend | None = None,
) -> JudgeVerdict:
    """Evaluate one trajectory against a rubric.

    Mechanical criteria run locally; free-text criteria go to the judge
    backend with the serialized trajectory. Backend failures propagate so
    the caller can mark the trajectory unjudged rather than failed.
    """
    per: list[tuple[str, bool, str]] = []
    for crit in rubric.criteria:
        value = reward.metric(crit.metric)
        ok = COMPARATORS[crit.op](value, crit.threshold)
        per.append((crit.describe(), ok, f"observed {value:g}"))
    if rubric.llm_criteria:
        if judge_backend is None:
            raise FeedsimError(
                f"rubric {rubric.rubric_id} has free-text criteria but no judge backend")
        serialized = trajectory_to_json_line(trajectory)
        for text in rubric.llm_criteria:
            ok, note = judge_backend.assess(text, serialized)
            per.append((text, ok, note))
    return JudgeVerdict(passed=all(p for _, p, _ in per), per_criterion=per)


@dataclass
class FilterResult:
    retained: list[Trajectory]
    rejected: list[Trajectory]
    unjudged: list[tuple[Trajectory, str]]

    def counts(self) -> dict[str, int]:
        return {"retained": len(self.retained), "rejected": len(self.rejected),
                "unjudged": len(self.unjudged)}


def filter_trajectories(
    trajectories: Sequence[Trajectory],
    rubric: Rubric,
    judge_backend: JudgeBackend | None = None,
    weights: dict[str, float] | None = None,
) -> FilterResult:
    """Partition trajectories by rubric verdict, preserving input order.

    Trajectories that cannot be judged (unfinished, backend failure) land in
    `unjudged` with the reason; retained + rejected + unjudged covers the
    input exactly once.
    """
    result = FilterResult(retained=[], rejected=[], unjudged=[])
    for traj in trajectories:
        try:
            reward = compute_trajectory_reward(traj, weights)
            verdict = judge_trajectory(traj, reward, rubric, judge_backend)
        except (LLMError, FeedsimError) as e:
            result.unjudged.append((traj, str(e)))
            continue
        (result.retained if verdict.passed else result.rejected).append(traj)
    return result


# ── NDCG-vs-retention quadrants ──────────────────────────────────────


class Quadrant(str, Enum):
    STRONG_EXPLOITATION = "strong_exploitation"
    SUBOPTIMAL_REPETITIVE = "suboptimal_repetitive"
    EFFECTIVE_EXPLORATION = "effective_exploration"
    POOR = "poor"


@dataclass(frozen=True)
class QuadrantThresholds:
    ndcg: float = 0.5
    retention: float = 0.5

    def __post_init__(self):
        for name in ("ndcg", "retention"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise FeedsimError(f"quadrant threshold {name} must lie in (0,1), got {v}")


def quadrant_classify(
    ndcg: float, retention: float, thresholds: QuadrantThresholds = QuadrantThresholds(),
) -> Quadrant:
    """Classify an (ndcg, retention) pair; value equal to a threshold counts high."""
    if not 0.0 <= ndcg <= 1.0:
        raise FeedsimError(f"ndcg outside [0,1]: {ndcg}")
    if not 0.0 <= retention <= 1.0:
        raise FeedsimError(f"retention outside [0,1]: {retention}")
    high_ndcg = ndcg >= thresholds.ndcg
    high_ret = retention >= thresholds.retention
    if high_ndcg and high_ret:
        return Quadrant.STRONG_EXPLOITATION
    if high_ndcg:
        return Quadrant.SUBOPTIMAL_REPETITIVE
    if high_ret:
        return Quadrant.EFFECTIVE_EXPLORATION
    return Quadrant.POOR


def load_rubric(data: dict) -> Rubric:
    """Build a rubric from parsed config data (see configs/rubric.yaml)."""
    crits = tuple(
        MetricCriterion(metric=c["metric"], op=c["op"], threshold=float(c["threshold"]))
        for c in data.get("criteria", []))
    return Rubric(
        rubric_id=str(data.get("rubric_id", "rubric")),
        criteria=crits,
        llm_criteria=tuple(data.get("llm_criteria", [])),
    )
