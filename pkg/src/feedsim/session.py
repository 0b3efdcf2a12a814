"""Gym-style session loop: one user, one recommender, multi-turn interaction.

The SessionEngine is a state machine driven either by a UserSimulator
(step / run_session) or decision-by-decision over HTTP for human annotators;
both paths exercise identical transition logic. A session:

  * serves lists of k items, excluding everything shown earlier in the
    session,
  * walks the list item by item (decide -> update mindset),
  * on Leave asks for an instruction; an instruction triggers a refreshed
    list (instruction-aware in agentic/annotator modes, instruction-blind in
    traditional mode), no instruction ends the session,
  * on exhausting a list without leaving, serves a fresh list until the
    turn budget runs out,
  * in eval-only mode always ends after a single turn.

Termination is recorded exactly once in Trajectory.ended_by:
"leave_no_instruction", "max_turns", "eval_only", or "exhausted" (candidate
pool empty, only reachable on small catalogs).

Timestamps use a simulated clock (start_ts plus a fixed per-item cost plus
watch seconds) so trajectories serialize byte-identically across runs and
session spans stay comparable between simulated and annotator sessions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .catalog import ActionKind, Catalog, HistorySummary
from .errors import ConfigError, FeedsimError, SessionError, SimulatorOutputError
from .recommender import (
    RecommendationList,
    RecommendationRequest,
    Recommender,
    build_recommender,
)
from .users import (
    ActionDecision,
    Instruction,
    InstructionSource,
    MindsetConfig,
    ScriptedConfig,
    ScriptedSimulator,
    UserProfile,
    UserSimulator,
    UserState,
    relieve_after_instruction,
    update_mindset,
)
from .util import canonical_json, stable_seed


class SessionMode(str, Enum):
    AGENTIC = "agentic"
    TRADITIONAL = "traditional"
    EVAL_ONLY = "eval_only"
    HUMAN_ANNOTATOR = "human_annotator"


# Modes whose recommender may see instructions.
INSTRUCTION_AWARE_MODES = frozenset({SessionMode.AGENTIC, SessionMode.HUMAN_ANNOTATOR})

ENDED_BY_LEAVE = "leave_no_instruction"
ENDED_BY_MAX_TURNS = "max_turns"
ENDED_BY_EVAL_ONLY = "eval_only"
ENDED_BY_EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class SimulatorSpec:
    kind: str = "scripted"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RecommenderSpec:
    kind: str = "instruct"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SessionConfig:
    mode: SessionMode = SessionMode.AGENTIC
    k: int = 5
    max_turns: int = 10
    start_ts: int = 0
    item_base_cost_s: int = 2
    simulator: SimulatorSpec = field(default_factory=SimulatorSpec)
    recommender: RecommenderSpec = field(default_factory=RecommenderSpec)
    mindset: MindsetConfig = field(default_factory=MindsetConfig)


def validate_config(config: SessionConfig) -> None:
    if config.k < 1:
        raise ConfigError("k must be >= 1", field="k")
    if config.max_turns < 1:
        raise ConfigError("max_turns must be >= 1", field="max_turns")
    if config.mode == SessionMode.EVAL_ONLY and config.max_turns != 1:
        raise ConfigError("eval_only sessions must have max_turns = 1", field="max_turns")
    if config.item_base_cost_s < 0:
        raise ConfigError("item_base_cost_s must be >= 0", field="item_base_cost_s")


def build_simulator(spec: SimulatorSpec, seed: int, llm_client=None) -> UserSimulator:
    if spec.kind == "scripted":
        return ScriptedSimulator(ScriptedConfig(**spec.params), seed=seed)
    if spec.kind == "llm":
        from .llm import LLMSimulator
        if llm_client is None:
            raise ConfigError("simulator kind 'llm' requires LLM settings", field="simulator")
        return LLMSimulator(llm_client, seed=seed, **spec.params)
    raise ConfigError(f"unknown simulator kind: {spec.kind!r}", field="simulator")


@dataclass
class Turn:
    turn_index: int
    shown: RecommendationList
    decisions: list[tuple[str, ActionDecision]] = field(default_factory=list)
    instruction_out: Instruction | None = None


@dataclass
class Trajectory:
    session_id: str
    user_id: str
    mode: SessionMode
    seed: int
    started_ts: int
    ended_ts: int
    ended_by: str | None
    turns: list[Turn]
    final_state: UserState


@dataclass
class TurnOutcome:
    turn: Turn
    done: bool
    next_list: RecommendationList | None


class SessionEngine:
    """One session's state machine; strictly sequential, one user."""

    def __init__(
        self,
        profile: UserProfile,
        catalog: Catalog,
        config: SessionConfig,
        seed: int,
        recommender: Recommender | None = None,
        initial_state: UserState | None = None,
        boosts: dict[str, float] | None = None,
        llm_client=None,
        session_id: str | None = None,
    ):
        validate_config(config)
        self.profile = profile
        self.catalog = catalog
        self.config = config
        self.seed = seed
        self.session_id = session_id or f"{profile.user_id}-{seed:08x}"
        self.boosts = dict(boosts or {})
        self.recommender = recommender or build_recommender(
            config.recommender.kind, config.recommender.params, llm_client=llm_client)

        if initial_state is None:
            state = UserState()
        else:
            state = replace(initial_state, items_seen_this_session=0)
        self.state = state

        self.turns: list[Turn] = []
        self.excluded: set[str] = set()
        self.clock = config.start_ts
        self.done = False
        self.ended_by: str | None = None
        self._awaiting_instruction = False
        self._current: RecommendationList | None = None
        self._position = 0
        self._pending: list[tuple[str, ActionDecision]] = []

        first = self._serve(None)
        if first is None:
            raise FeedsimError("catalog has no candidates for an initial list")

    # ── driving surface ──────────────────────────────────────────────

    @property
    def awaiting(self) -> str | None:
        """What the session needs next: "action", "instruction", or None when done."""
        if self.done:
            return None
        return "instruction" if self._awaiting_instruction else "action"

    @property
    def current_list(self) -> RecommendationList | None:
        return self._current

    @property
    def position(self) -> int:
        return self._position

    def current_item(self):
        if self.done or self._awaiting_instruction or self._current is None:
            return None
        return self.catalog.get(self._current.items[self._position])

    def submit_decision(self, decision: ActionDecision) -> None:
        if self.done:
            raise SessionError("session is finished")
        if self._awaiting_instruction:
            raise SessionError("session awaits an instruction, not an action")
        item = self.current_item()
        decision.validate_for(item)
        self._pending.append((item.item_id, decision))
        self.clock += self.config.item_base_cost_s + (decision.watch_s or 0)
        self.state = update_mindset(self.profile, self.state, item, decision, self.config.mindset)

        if decision.action == ActionKind.LEAVE:
            if self.config.mode == SessionMode.EVAL_ONLY:
                self._close_turn(None)
                self._finish(ENDED_BY_EVAL_ONLY)
            else:
                self._awaiting_instruction = True
            return

        self._position += 1
        if self._position >= len(self._current.items):
            self._close_turn(None)
            if self.config.mode == SessionMode.EVAL_ONLY:
                self._finish(ENDED_BY_EVAL_ONLY)
            elif len(self.turns) >= self.config.max_turns:
                self._finish(ENDED_BY_MAX_TURNS)
            elif self._serve(None) is None:
                self._finish(ENDED_BY_EXHAUSTED)

    def submit_instruction(self, instruction: Instruction | None) -> None:
        if self.done:
            raise SessionError("session is finished")
        if not self._awaiting_instruction:
            raise SessionError("session is not awaiting an instruction")
        self._awaiting_instruction = False
        self._close_turn(instruction)
        if instruction is None:
            self._finish(ENDED_BY_LEAVE)
            return
        self.state = relieve_after_instruction(self.state)
        if len(self.turns) >= self.config.max_turns:
            self._finish(ENDED_BY_MAX_TURNS)
        elif self._serve(instruction) is None:
            self._finish(ENDED_BY_EXHAUSTED)

    def turns_view(self) -> list[Turn]:
        """Closed turns plus the in-progress one, for reflection prompts."""
        out = list(self.turns)
        if self._current is not None and self._pending:
            out.append(Turn(
                turn_index=len(self.turns),
                shown=self._current,
                decisions=list(self._pending),
            ))
        return out

    def to_trajectory(self) -> Trajectory:
        return Trajectory(
            session_id=self.session_id,
            user_id=self.profile.user_id,
            mode=self.config.mode,
            seed=self.seed,
            started_ts=self.config.start_ts,
            ended_ts=self.clock,
            ended_by=self.ended_by,
            turns=self.turns_view(),
            final_state=self.state,
        )

    # ── internals ────────────────────────────────────────────────────

    def _close_turn(self, instruction_out: Instruction | None) -> None:
        self.turns.append(Turn(
            turn_index=len(self.turns),
            shown=self._current,
            decisions=self._pending,
            instruction_out=instruction_out,
        ))
        self._current = None
        self._pending = []
        self._position = 0

    def _finish(self, reason: str) -> None:
        self.done = True
        self.ended_by = reason

    def _serve(self, instruction: Instruction | None) -> RecommendationList | None:
        turn_index = len(self.turns)
        pass_instruction = (
            instruction is not None
            and turn_index > 0
            and self.config.mode in INSTRUCTION_AWARE_MODES
        )
        request = RecommendationRequest(
            profile=self.profile,
            summary=self.state.summary,
            turn_index=turn_index,
            instruction=instruction if pass_instruction else None,
            excluded=frozenset(self.excluded),
        )
        lst = self.recommender.recommend(request, self.catalog, self.config.k, self.boosts or None)
        if not lst.items:
            return None
        ids = list(lst.items)
        if len(set(ids)) != len(ids) or any(i in self.excluded for i in ids):
            raise FeedsimError("recommender returned duplicate or excluded items")
        self.excluded.update(ids)
        self._current = lst
        self._position = 0
        self._pending = []
        return lst


def reset(
    profile: UserProfile,
    catalog: Catalog,
    config: SessionConfig,
    seed: int,
    recommender: Recommender | None = None,
    initial_state: UserState | None = None,
    boosts: dict[str, float] | None = None,
    llm_client=None,
) -> tuple[SessionEngine, RecommendationList]:
    """Start a session: fresh state, first recommendation list."""
    engine = SessionEngine(
        profile, catalog, config, seed,
        recommender=recommender, initial_state=initial_state, boosts=boosts,
        llm_client=llm_client,
    )
    return engine, engine.current_list


def step(engine: SessionEngine, simulator: UserSimulator) -> TurnOutcome:
    """Run one full turn of a simulator-driven session."""
    if engine.done:
        raise SessionError("session is finished")
    turn_before = len(engine.turns)
    try:
        while engine.awaiting == "action" and len(engine.turns) == turn_before:
            item = engine.current_item()
            metadata = engine.catalog.metadata_for(item.item_id)
            decision = simulator.decide_action(engine.profile, engine.state, item, metadata)
            engine.submit_decision(decision)
        if engine.awaiting == "instruction":
            instruction = simulator.reflect_and_instruct(
                engine.profile, engine.state, engine.turns_view())
            if instruction is not None and instruction.source != InstructionSource.EXPLICIT:
                raise FeedsimError("reflection must yield explicit instructions")
            engine.submit_instruction(instruction)
    except SimulatorOutputError as e:
        raise SimulatorOutputError(
            f"user={engine.profile.user_id} seed={engine.seed} "
            f"turn={turn_before}: {e.args[0]}", e.raw) from e
    turn = engine.turns[turn_before]
    return TurnOutcome(turn=turn, done=engine.done, next_list=engine.current_list)


def run_session(
    profile: UserProfile,
    catalog: Catalog,
    config: SessionConfig,
    seed: int,
    recommender: Recommender | None = None,
    simulator: UserSimulator | None = None,
    initial_state: UserState | None = None,
    boosts: dict[str, float] | None = None,
    llm_client=None,
) -> Trajectory:
    """Run a full session to termination and return its trajectory.

    The master seed is split deterministically into simulator and
    recommender streams.
    """
    engine, _ = reset(
        profile, catalog, config, seed,
        recommender=recommender, initial_state=initial_state, boosts=boosts,
        llm_client=llm_client,
    )
    if simulator is None:
        simulator = build_simulator(config.simulator, stable_seed(seed, "sim"), llm_client)
    while not engine.done:
        step(engine, simulator)
    return engine.to_trajectory()


@dataclass
class BatchFailure:
    user_id: str
    seed: int
    error: str


@dataclass
class BatchResult:
    trajectories: list[Trajectory]
    failures: list[BatchFailure]


def run_batch(
    profiles: Sequence[UserProfile],
    catalog: Catalog,
    config: SessionConfig,
    seeds: Sequence[int],
    n_per_user: int | None = None,
    workers: int = 1,
    llm_client=None,
) -> BatchResult:
    """n_per_user trajectories per profile, ordered by (user_id, seed).

    Failed sessions are reported in the batch result; the rest continue.
    Worker threads only help for LLM-backed simulators; ordering is
    independent of completion order.
    """
    n_per_user = len(seeds) if n_per_user is None else n_per_user
    if n_per_user < 1:
        raise ConfigError("n_per_user must be >= 1", field="n_per_user")
    if len(seeds) < n_per_user:
        raise ConfigError(
            f"need {n_per_user} seeds, got {len(seeds)}", field="seeds")
    jobs = [(p, s) for p in profiles for s in list(seeds)[:n_per_user]]

    def one(job):
        profile, seed = job
        try:
            return run_session(profile, catalog, config, seed, llm_client=llm_client), None
        except FeedsimError as e:
            return None, BatchFailure(user_id=profile.user_id, seed=seed, error=str(e))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    trajectories = [t for t, _ in results if t is not None]
    failures = [f for _, f in results if f is not None]
    trajectories.sort(key=lambda t: (t.user_id, t.seed))
    failures.sort(key=lambda f: (f.user_id, f.seed))
    return BatchResult(trajectories=trajectories, failures=failures)


# ── serialization ────────────────────────────────────────────────────
# Field order is fixed so identical runs serialize byte-identically.


def _state_to_dict(state: UserState) -> dict:
    return {
        "mindset": state.mindset,
        "fatigue": {k: state.fatigue[k] for k in sorted(state.fatigue)},
        "satisfaction": state.satisfaction,
        "items_seen_this_session": state.items_seen_this_session,
        "summary": {
            "window_days": state.summary.window_days,
            "per_category_counts": {
                k: state.summary.per_category_counts[k]
                for k in sorted(state.summary.per_category_counts)},
            "per_action_counts": {
                k.value: v for k, v in sorted(
                    state.summary.per_action_counts.items(), key=lambda kv: kv[0].value)},
            "recent_items": [[iid, act.value] for iid, act in state.summary.recent_items],
        },
        "last_category": state.last_category,
    }


def _state_from_dict(d: dict) -> UserState:
    s = d.get("summary", {})
    return UserState(
        mindset=d.get("mindset", ""),
        fatigue=dict(d.get("fatigue", {})),
        satisfaction=d.get("satisfaction", 0.5),
        items_seen_this_session=d.get("items_seen_this_session", 0),
        summary=HistorySummary(
            window_days=s.get("window_days", 7),
            per_category_counts=dict(s.get("per_category_counts", {})),
            per_action_counts={
                ActionKind(k): v for k, v in s.get("per_action_counts", {}).items()},
            recent_items=[(iid, ActionKind(a)) for iid, a in s.get("recent_items", [])],
        ),
        last_category=d.get("last_category"),
    )


def _decision_to_dict(item_id: str, d: ActionDecision) -> dict:
    out = {"item_id": item_id, "action": d.action.value}
    if d.watch_s is not None:
        out["watch_s"] = d.watch_s
    out["reasoning"] = d.reasoning
    out["mindset_update"] = d.mindset_update
    return out


def _instruction_to_dict(ins: Instruction | None) -> dict | None:
    if ins is None:
        return None
    return {"text": ins.text, "source": ins.source.value,
            "issued_after_item": ins.issued_after_item}


def _instruction_from_dict(d: dict | None) -> Instruction | None:
    if d is None:
        return None
    return Instruction(
        text=d["text"], source=InstructionSource(d["source"]),
        issued_after_item=d.get("issued_after_item", ""))


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "session_id": traj.session_id,
        "user_id": traj.user_id,
        "mode": traj.mode.value,
        "seed": traj.seed,
        "started_ts": traj.started_ts,
        "ended_ts": traj.ended_ts,
        "ended_by": traj.ended_by,
        "turns": [
            {
                "turn_index": t.turn_index,
                "shown": {"items": list(t.shown.items), "strategy_note": t.shown.strategy_note},
                "decisions": [_decision_to_dict(iid, d) for iid, d in t.decisions],
                "instruction_out": _instruction_to_dict(t.instruction_out),
            }
            for t in traj.turns
        ],
        "final_state": _state_to_dict(traj.final_state),
    }


def trajectory_from_dict(d: dict) -> Trajectory:
    turns = []
    for td in d["turns"]:
        decisions = []
        for dd in td["decisions"]:
            decisions.append((dd["item_id"], ActionDecision(
                action=ActionKind(dd["action"]),
                watch_s=dd.get("watch_s"),
                reasoning=dd["reasoning"],
                mindset_update=dd.get("mindset_update", ""),
            )))
        turns.append(Turn(
            turn_index=td["turn_index"],
            shown=RecommendationList(
                items=tuple(td["shown"]["items"]),
                strategy_note=td["shown"].get("strategy_note", "")),
            decisions=decisions,
            instruction_out=_instruction_from_dict(td.get("instruction_out")),
        ))
    return Trajectory(
        session_id=d["session_id"],
        user_id=d["user_id"],
        mode=SessionMode(d["mode"]),
        seed=d["seed"],
        started_ts=d["started_ts"],
        ended_ts=d["ended_ts"],
        ended_by=d.get("ended_by"),
        turns=turns,
        final_state=_state_from_dict(d["final_state"]),
    )


def trajectory_to_json_line(traj: Trajectory) -> str:
    return canonical_json(trajectory_to_dict(traj))


# ── invariant checking ───────────────────────────────────────────────

VALID_ENDINGS = (ENDED_BY_LEAVE, ENDED_BY_MAX_TURNS, ENDED_BY_EVAL_ONLY, ENDED_BY_EXHAUSTED)


def trajectory_violations(
    traj: Trajectory,
    catalog: Catalog | None = None,
    config: SessionConfig | None = None,
) -> list[str]:
    """Check a stored trajectory against the session invariants.

    Returns human-readable violation strings; an empty list means the
    trajectory is clean. Catalog enables watch-duration checks; config
    enables k/max_turns checks.
    """
    bad: list[str] = []
    seen_across: set[str] = set()
    for t in traj.turns:
        if t.shown is None or not t.shown.items:
            bad.append(f"turn {t.turn_index}: empty shown list")
            continue
        ids = list(t.shown.items)
        if len(set(ids)) != len(ids):
            bad.append(f"turn {t.turn_index}: duplicate items in list")
        overlap = seen_across.intersection(ids)
        if overlap:
            bad.append(f"turn {t.turn_index}: items repeat across turns: {sorted(overlap)}")
        seen_across.update(ids)
        if config is not None and len(ids) > config.k:
            bad.append(f"turn {t.turn_index}: list longer than k={config.k}")

        for pos, (iid, d) in enumerate(t.decisions):
            if not isinstance(d.action, ActionKind):
                bad.append(f"turn {t.turn_index}: unknown action {d.action!r}")
            if pos < len(ids) and iid != ids[pos]:
                bad.append(f"turn {t.turn_index}: decision {pos} not aligned with list order")
            if (d.action == ActionKind.WATCH) != (d.watch_s is not None):
                bad.append(f"turn {t.turn_index}: watch_s presence mismatch on {iid}")
            if not d.reasoning:
                bad.append(f"turn {t.turn_index}: empty reasoning on {iid}")
            if catalog is not None and d.watch_s is not None:
                duration = catalog.get(iid).duration_s
                if not 1 <= d.watch_s <= duration:
                    bad.append(
                        f"turn {t.turn_index}: watch_s {d.watch_s} outside "
                        f"[1, {duration}] on {iid}")
            if d.action == ActionKind.LEAVE and pos != len(t.decisions) - 1:
                bad.append(f"turn {t.turn_index}: decisions continue after leave")
        left = bool(t.decisions) and t.decisions[-1][1].action == ActionKind.LEAVE
        if t.instruction_out is not None and not left:
            bad.append(f"turn {t.turn_index}: instruction without a leave")

    if traj.ended_by not in VALID_ENDINGS:
        bad.append(f"ended_by not a single recorded termination: {traj.ended_by!r}")
    else:
        last = traj.turns[-1] if traj.turns else None
        last_left = last is not None and bool(last.decisions) \
            and last.decisions[-1][1].action == ActionKind.LEAVE
        if traj.ended_by == ENDED_BY_LEAVE:
            if not last_left or last.instruction_out is not None:
                bad.append("ended_by=leave_no_instruction but last turn disagrees")
        if traj.ended_by == ENDED_BY_EVAL_ONLY:
            if traj.mode != SessionMode.EVAL_ONLY:
                bad.append("ended_by=eval_only outside eval_only mode")
        if traj.mode == SessionMode.EVAL_ONLY:
            if len(traj.turns) != 1:
                bad.append(f"eval_only session has {len(traj.turns)} turns")
            if traj.ended_by != ENDED_BY_EVAL_ONLY:
                bad.append(f"eval_only session ended by {traj.ended_by}")
        if config is not None:
            if traj.ended_by == ENDED_BY_MAX_TURNS and len(traj.turns) != config.max_turns:
                bad.append("ended_by=max_turns but turn count disagrees")
            if len(traj.turns) > config.max_turns:
                bad.append(f"turn count {len(traj.turns)} exceeds max_turns")
    return bad
