"""Multi-agent population simulation over a social graph.

Each tick, every active user runs one bounded session against a snapshot of
the previous tick's state: the per-user update consumes the user's inbox
(shared or injected items get an additive candidate-score boost of
influence_strength x edge weight), and Share decisions emit messages to the
user's out-neighbors. Messages are delivered exactly one tick after they
are sent. After all user updates, the environment folds the tick's
engagement events into per-item counters (watch/click -> views, like ->
likes, share -> shares, comment -> comments), which never decrease.

Per-user randomness is derived from (master seed, user, tick) only, so the
result is independent of the order users are processed within a tick, and
user updates may run in parallel against the snapshot.

One tick stands for 6 hours of simulated time; the stock checkpoint
schedule {1, 2, 4, 8, 28} therefore lands at 6h, 12h, 24h, 2d, and 1w
after exposure.
"""

from __future__ import annotations

import csv
import random
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

from .catalog import ActionKind, Catalog
from .errors import ConfigError, DataFormatError, FeedsimError
from .session import SessionConfig, Trajectory, run_session
from .users import UserProfile, UserState
from .util import stable_seed

TICK_HOURS = 6
DEFAULT_SCHEDULE = (1, 2, 4, 8, 28)  # 6h, 12h, 24h, 2d, 1w


class MessageKind(str, Enum):
    SHARE = "share"
    EXPOSURE = "exposure"


@dataclass(frozen=True)
class Message:
    to_user: str
    item_id: str
    kind: MessageKind
    tick: int
    weight: float = 1.0          # edge weight captured at send time
    from_user: str | None = None  # None for system/creator exposures


class SocialGraph:
    """Directed weighted graph; no self-loops, weights in [0,1]."""

    def __init__(self, edges: dict[tuple[str, str], float] | None = None,
                 nodes: Sequence[str] = ()):
        self._out: dict[str, list[tuple[str, float]]] = {n: [] for n in nodes}
        self._edges: dict[tuple[str, str], float] = {}
        for (src, dst), w in (edges or {}).items():
            self.add_edge(src, dst, w)

    def add_edge(self, src: str, dst: str, weight: float) -> None:
        if src == dst:
            raise FeedsimError(f"self-loop on {src!r}")
        if not 0.0 <= weight <= 1.0:
            raise FeedsimError(f"edge weight outside [0,1]: {weight}")
        existed = (src, dst) in self._edges
        self._edges[(src, dst)] = weight
        self._out.setdefault(src, [])
        self._out.setdefault(dst, [])
        if existed:  # re-adding updates the weight, never duplicates the edge
            self._out[src] = [(d, w) for d, w in self._out[src] if d != dst]
        self._out[src].append((dst, weight))

    @property
    def nodes(self) -> list[str]:
        return sorted(self._out)

    def out_edges(self, user_id: str) -> list[tuple[str, float]]:
        return sorted(self._out.get(user_id, []))

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self._edges

    def edge_count(self) -> int:
        return len(self._edges)

    @classmethod
    def from_edge_csv(cls, path: str | Path) -> "SocialGraph":
        """Load `from,to,weight` rows; weight defaults to 1.0 when blank."""
        graph = cls()
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):
                src, dst = row.get("from"), row.get("to")
                if not src or not dst:
                    raise DataFormatError("missing endpoint", row=i, field="from/to")
                raw_w = row.get("weight")
                try:
                    w = 1.0 if raw_w in (None, "") else float(raw_w)
                except ValueError:
                    raise DataFormatError(
                        f"bad weight {raw_w!r}", row=i, field="weight") from None
                graph.add_edge(src, dst, w)
        return graph


@dataclass
class ItemCounters:
    views: int = 0
    likes: int = 0
    shares: int = 0
    comments: int = 0

    def to_dict(self) -> dict:
        return {"views": self.views, "likes": self.likes,
                "shares": self.shares, "comments": self.comments}


@dataclass
class EnvironmentState:
    tick: int = 0
    per_item_counters: dict[str, ItemCounters] = field(default_factory=dict)
    influence_strength: float = 0.0

    def __post_init__(self):
        if self.influence_strength < 0:
            raise FeedsimError("influence_strength must be >= 0")

    def totals(self) -> dict[str, int]:
        out = {"views": 0, "likes": 0, "shares": 0, "comments": 0}
        for c in self.per_item_counters.values():
            out["views"] += c.views
            out["likes"] += c.likes
            out["shares"] += c.shares
            out["comments"] += c.comments
        return out


@dataclass
class PopulationState:
    tick: int
    users: dict[str, UserState]
    inboxes: dict[str, list[Message]]


@dataclass(frozen=True)
class CheckpointSchedule:
    offsets: tuple[int, ...] = DEFAULT_SCHEDULE

    def __post_init__(self):
        if any(o <= 0 for o in self.offsets):
            raise ConfigError("schedule offsets must be positive", field="schedule")
        if list(self.offsets) != sorted(set(self.offsets)):
            raise ConfigError("schedule offsets must be strictly increasing", field="schedule")


@dataclass(frozen=True)
class PopulationConfig:
    session: SessionConfig = field(default_factory=lambda: SessionConfig(max_turns=2))
    influence_strength: float = 0.5
    activity_prob: float = 0.5


@dataclass(frozen=True)
class EngagementEvent:
    user_id: str
    item_id: str
    action: ActionKind


@dataclass
class UserUpdateResult:
    state: UserState
    emitted: list[Message]
    events: list[EngagementEvent]
    trajectory: Trajectory


def tick_seed(master_seed: int, user_id: str, tick: int) -> int:
    """Per-(user, tick) session seed; the basis of order-independence."""
    return stable_seed(master_seed, "tick", user_id, tick)


def is_active(master_seed: int, user_id: str, tick: int, activity_prob: float) -> bool:
    if activity_prob >= 1.0:
        return True
    return random.Random(f"{master_seed}:act:{user_id}:{tick}").random() < activity_prob


def user_update(
    user_state: UserState,
    inbox: list[Message],
    env: EnvironmentState,
    profile: UserProfile,
    catalog: Catalog,
    config: PopulationConfig,
    seed: int,
    out_edges: list[tuple[str, float]] = (),
    llm_client=None,
) -> UserUpdateResult:
    """One user's tick: a bounded session with inbox-boosted candidates.

    With an empty inbox and zero influence this reduces exactly to a
    standalone run_session with the same seed.
    """
    boosts: dict[str, float] = {}
    for msg in inbox:
        if msg.item_id in catalog:
            boost = env.influence_strength * msg.weight
            boosts[msg.item_id] = boosts.get(msg.item_id, 0.0) + boost
    trajectory = run_session(
        profile, catalog, config.session, seed,
        initial_state=user_state, boosts=boosts or None, llm_client=llm_client)

    emitted: list[Message] = []
    events: list[EngagementEvent] = []
    for turn in trajectory.turns:
        for item_id, decision in turn.decisions:
            if decision.action == ActionKind.LEAVE:
                continue
            events.append(EngagementEvent(
                user_id=profile.user_id, item_id=item_id, action=decision.action))
            if decision.action == ActionKind.SHARE:
                for neighbor, weight in out_edges:
                    emitted.append(Message(
                        to_user=neighbor, item_id=item_id, kind=MessageKind.SHARE,
                        tick=env.tick + 1, weight=weight, from_user=profile.user_id))
    return UserUpdateResult(
        state=trajectory.final_state, emitted=emitted, events=events,
        trajectory=trajectory)


def env_update(env: EnvironmentState, events: Sequence[EngagementEvent]) -> EnvironmentState:
    """Fold one tick's engagement events into the counters; tick advances by 1."""
    counters = {iid: replace(c) for iid, c in env.per_item_counters.items()}
    for ev in events:
        c = counters.setdefault(ev.item_id, ItemCounters())
        if ev.action in (ActionKind.WATCH, ActionKind.CLICK):
            c.views += 1
        elif ev.action == ActionKind.LIKE:
            c.likes += 1
        elif ev.action == ActionKind.SHARE:
            c.shares += 1
        elif ev.action == ActionKind.COMMENT:
            c.comments += 1
    return EnvironmentState(
        tick=env.tick + 1,
        per_item_counters=counters,
        influence_strength=env.influence_strength,
    )


@dataclass
class Checkpoint:
    tick: int
    totals: dict[str, int]
    per_item: dict[str, dict]


@dataclass
class PopulationReport:
    ticks: int
    checkpoints: list[Checkpoint]
    messages_emitted: int
    messages_delivered: int
    failure_tick: int | None = None
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "ticks": self.ticks,
            "checkpoints": [
                {"tick": c.tick, "totals": c.totals,
                 "per_item": {k: c.per_item[k] for k in sorted(c.per_item)}}
                for c in self.checkpoints],
            "messages_emitted": self.messages_emitted,
            "messages_delivered": self.messages_delivered,
            "failure_tick": self.failure_tick,
            "failure": self.failure,
        }


@dataclass
class PopulationRun:
    report: PopulationReport
    state: PopulationState
    env: EnvironmentState


def run_population(
    graph: SocialGraph,
    profiles: Sequence[UserProfile],
    catalog: Catalog,
    injected_items: Sequence[str] = (),
    ticks: int = 28,
    schedule: CheckpointSchedule | None = None,
    config: PopulationConfig | None = None,
    seed: int = 0,
    llm_client=None,
) -> PopulationRun:
    """Synchronous population loop.

    All tick-t user updates read the tick-(t-1) snapshot; messages emitted
    at tick t land in inboxes before tick t+1; injected items are seeded as
    exposure messages consumed by the first active tick. On a failing user
    session the report is returned partially with the failure recorded.
    """
    schedule = schedule or CheckpointSchedule()
    config = config or PopulationConfig()
    if any(o > ticks for o in schedule.offsets):
        raise ConfigError("schedule offsets must be <= ticks", field="schedule")
    for iid in injected_items:
        if iid not in catalog:
            raise FeedsimError(f"injected item {iid!r} not in catalog")
    by_id = {p.user_id: p for p in profiles}
    if len(by_id) != len(profiles):
        raise ConfigError("duplicate user_id in profiles", field="profiles")
    missing = [n for n in graph.nodes if n not in by_id]
    if missing:
        raise ConfigError(f"graph nodes without profiles: {missing}", field="graph")

    states: dict[str, UserState] = {uid: UserState() for uid in by_id}
    inboxes: dict[str, list[Message]] = {
        uid: [Message(to_user=uid, item_id=iid, kind=MessageKind.EXPOSURE, tick=0)
              for iid in injected_items]
        for uid in by_id
    }
    env = EnvironmentState(influence_strength=config.influence_strength)
    checkpoints: list[Checkpoint] = []
    emitted_total = 0
    delivered_total = 0
    failure_tick: int | None = None
    failure: str | None = None

    for t in range(1, ticks + 1):
        snapshot = states
        new_states = dict(snapshot)
        outbox: list[Message] = []
        events: list[EngagementEvent] = []
        try:
            for uid in by_id:
                if not is_active(seed, uid, t, config.activity_prob):
                    continue
                result = user_update(
                    snapshot[uid], inboxes[uid], env, by_id[uid], catalog,
                    config, tick_seed(seed, uid, t), out_edges=graph.out_edges(uid),
                    llm_client=llm_client)
                new_states[uid] = result.state
                inboxes[uid] = []
                outbox.extend(result.emitted)
                events.extend(result.events)
        except FeedsimError as e:
            failure_tick, failure = t, str(e)
            break
        states = new_states
        env = env_update(env, events)
        emitted_total += len(outbox)
        # Deterministic delivery order regardless of processing order.
        for msg in sorted(outbox, key=lambda m: (m.to_user, m.from_user or "", m.item_id)):
            if msg.to_user in inboxes:
                inboxes[msg.to_user].append(msg)
                delivered_total += 1
        if t in schedule.offsets:
            checkpoints.append(Checkpoint(
                tick=t,
                totals=env.totals(),
                per_item={iid: c.to_dict() for iid, c in env.per_item_counters.items()},
            ))

    report = PopulationReport(
        ticks=ticks,
        checkpoints=checkpoints,
        messages_emitted=emitted_total,
        messages_delivered=delivered_total,
        failure_tick=failure_tick,
        failure=failure,
    )
    state = PopulationState(tick=env.tick, users=states, inboxes=inboxes)
    return PopulationRun(report=report, state=state, env=env)


@dataclass
class VarianceReport:
    repetitions: int
    seeds: list[int]
    per_checkpoint: dict[int, dict[str, dict[str, float]]]

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "seeds": self.seeds,
            "per_checkpoint": {
                str(tick): metrics for tick, metrics in sorted(self.per_checkpoint.items())},
        }


def rerun_variance(
    graph: SocialGraph,
    profiles: Sequence[UserProfile],
    catalog: Catalog,
    injected_items: Sequence[str] = (),
    ticks: int = 28,
    schedule: CheckpointSchedule | None = None,
    config: PopulationConfig | None = None,
    seed_list: Sequence[int] = (),
    llm_client=None,
) -> VarianceReport:
    """Reset-and-rerun statistics: mean/stddev/min/max per checkpoint metric.

    Population stddev over the repetitions; identical seeds are allowed and
    give stddev 0 under scripted simulators.
    """
    if len(seed_list) < 2:
        raise ConfigError("rerun_variance needs >= 2 repetitions", field="seed_list")
    runs = [
        run_population(graph, profiles, catalog, injected_items, ticks,
                       schedule, config, seed, llm_client=llm_client)
        for seed in seed_list
    ]
    failed = [r for r in runs if r.report.failure is not None]
    if failed:
        raise FeedsimError(
            f"{len(failed)} of {len(runs)} repetitions failed; first: "
            f"{failed[0].report.failure}")
    per_checkpoint: dict[int, dict[str, dict[str, float]]] = {}
    offsets = (schedule or CheckpointSchedule()).offsets
    for idx, tick in enumerate(offsets):
        metrics: dict[str, dict[str, float]] = {}
        for metric in ("views", "likes", "shares", "comments"):
            samples = [float(r.report.checkpoints[idx].totals[metric]) for r in runs]
            metrics[metric] = {
                "mean": statistics.mean(samples),
                "stddev": statistics.pstdev(samples),
                "min": min(samples),
                "max": max(samples),
            }
        per_checkpoint[tick] = metrics
    return VarianceReport(
        repetitions=len(seed_list), seeds=list(seed_list), per_checkpoint=per_checkpoint)
