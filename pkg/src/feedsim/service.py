"""JSON-over-HTTP session service, versioned under /v1.

Annotator sessions drive the same SessionEngine as simulated runs; the only
difference is that decisions and instructions arrive over HTTP instead of
from a simulator. Endpoints:

    POST /v1/sessions                   create session, returns initial list
    GET  /v1/sessions/{sid}             session status
    GET  /v1/sessions/{sid}/list        current list with item payloads
    POST /v1/sessions/{sid}/actions     submit one per-item action
    POST /v1/sessions/{sid}/instruction submit instruction (null text = exit)
    GET  /v1/sessions/{sid}/trajectory  trajectory so far (or final)
    GET  /v1/sessions/{sid}/comparison  annotator vs paired simulated stats

Errors: 404 unknown session, 409 action on a finished session or wrong
phase, 422 invalid payloads (detail names the field). POST bodies accept an
idempotency `token`; resubmitting a token returns the recorded response
without re-applying the action.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .catalog import ActionKind, Catalog, Item
from .config import RunConfig, profile_from_dict
from .errors import ConfigError, SessionError
from .recommender import RecommendationList
from .rewards import RewardSignal, compute_trajectory_reward
from .session import (
    SessionConfig,
    SessionEngine,
    SessionMode,
    run_session,
    trajectory_to_dict,
)
from .store import TrajectoryStore
from .users import ActionDecision, Instruction
from .util import stable_seed


class CreateSessionBody(BaseModel):
    profile: dict
    k: int | None = None
    max_turns: int | None = None


class ActionBody(BaseModel):
    item_id: str
    action: str
    watch_s: int | None = None
    reasoning: str | None = None
    token: str | None = None


class InstructionBody(BaseModel):
    text: str | None = None
    token: str | None = None


@dataclass
class SessionRuntime:
    engine: SessionEngine
    seed: int
    lock: threading.Lock = field(default_factory=threading.Lock)
    token_responses: dict[str, dict] = field(default_factory=dict)
    stored: bool = False


@dataclass
class SessionComparison:
    """Annotator-vs-simulated sanity check; both sides share the reward fold."""

    annotator_stats: RewardSignal
    simulated_stats: RewardSignal

    def per_metric_delta(self) -> dict:
        a, s = self.annotator_stats.to_dict(), self.simulated_stats.to_dict()
        return {key: a[key] - s[key] for key in a}

    def to_dict(self) -> dict:
        return {
            "annotator_stats": self.annotator_stats.to_dict(),
            "simulated_stats": self.simulated_stats.to_dict(),
            "per_metric_delta": self.per_metric_delta(),
        }


def _item_payload(item: Item) -> dict:
    return {
        "item_id": item.item_id,
        "title": item.title,
        "description": item.description,
        "category": item.category,
        "content_type": item.content_type.value,
        "duration_s": item.duration_s,
    }


def _list_payload(catalog: Catalog, lst: RecommendationList | None) -> dict | None:
    if lst is None:
        return None
    return {
        "items": [_item_payload(catalog.get(iid)) for iid in lst.items],
        "strategy_note": lst.strategy_note,
    }


def _unprocessable(field_name: str, message: str):
    return HTTPException(
        status_code=422, detail=[{"field": field_name, "message": message}])


def create_app(
    catalog: Catalog, config: RunConfig, store: TrajectoryStore, llm_client=None,
) -> FastAPI:
    app = FastAPI(title="feedsim session service", version="1.0")
    sessions: dict[str, SessionRuntime] = {}
    registry_lock = threading.Lock()

    def get_runtime(sid: str) -> SessionRuntime:
        rt = sessions.get(sid)
        if rt is None:
            raise HTTPException(status_code=404, detail=f"unknown session_id: {sid}")
        return rt

    def status_payload(sid: str, rt: SessionRuntime) -> dict:
        engine = rt.engine
        return {
            "session_id": sid,
            "done": engine.done,
            "awaiting": engine.awaiting,
            "turn_index": len(engine.turns),
            "position": engine.position,
            "ended_by": engine.ended_by,
            "list": _list_payload(catalog, engine.current_list),
        }

    def persist_if_done(rt: SessionRuntime) -> None:
        if rt.engine.done and not rt.stored:
            trajectory = rt.engine.to_trajectory()
            reward = compute_trajectory_reward(trajectory, config.reward_weights)
            store.append(trajectory, reward=reward)
            rt.stored = True

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionBody):
        try:
            profile = profile_from_dict(body.profile)
        except ConfigError as e:
            raise _unprocessable(e.field or "profile", str(e))
        sid = uuid.uuid4().hex[:16]
        seed = stable_seed("annotator", sid)
        session_cfg = SessionConfig(
            mode=SessionMode.HUMAN_ANNOTATOR,
            k=body.k or config.session.k,
            max_turns=body.max_turns or config.session.max_turns,
            recommender=config.session.recommender,
            simulator=config.session.simulator,
        )
        try:
            engine = SessionEngine(
                profile, catalog, session_cfg, seed, session_id=sid,
                llm_client=llm_client)
        except ConfigError as e:
            raise _unprocessable(e.field or "config", str(e))
        rt = SessionRuntime(engine=engine, seed=seed)
        with registry_lock:
            sessions[sid] = rt
        return {"session_id": sid, "status": status_payload(sid, rt)}

    @app.get("/v1/sessions/{sid}")
    def get_status(sid: str):
        rt = get_runtime(sid)
        with rt.lock:
            return status_payload(sid, rt)

    @app.get("/v1/sessions/{sid}/list")
    def get_list(sid: str):
        rt = get_runtime(sid)
        with rt.lock:
            payload = _list_payload(catalog, rt.engine.current_list)
            if payload is None:
                raise HTTPException(status_code=409, detail="session has no active list")
            return payload

    @app.post("/v1/sessions/{sid}/actions")
    def submit_action(sid: str, body: ActionBody):
        rt = get_runtime(sid)
        with rt.lock:
            if body.token and body.token in rt.token_responses:
                return rt.token_responses[body.token]
            engine = rt.engine
            if engine.done:
                raise HTTPException(status_code=409, detail="session is finished")
            if engine.awaiting != "action":
                raise HTTPException(
                    status_code=409, detail="session awaits an instruction, not an action")
            current = engine.current_item()
            if body.item_id != current.item_id:
                raise _unprocessable(
                    "item_id",
                    f"expected current item {current.item_id!r}, got {body.item_id!r}")
            try:
                action = ActionKind(body.action)
            except ValueError:
                raise _unprocessable("action", f"unknown action: {body.action!r}")
            try:
                decision = ActionDecision(
                    action=action,
                    watch_s=body.watch_s,
                    reasoning=body.reasoning or "annotator action",
                )
                engine.submit_decision(decision)
            except ValueError as e:
                raise _unprocessable("watch_s", str(e))
            except SessionError as e:
                raise HTTPException(status_code=409, detail=str(e))
            persist_if_done(rt)
            response = {"recorded": True, "status": status_payload(sid, rt)}
            if body.token:
                rt.token_responses[body.token] = response
            return response

    @app.post("/v1/sessions/{sid}/instruction")
    def submit_instruction(sid: str, body: InstructionBody):
        rt = get_runtime(sid)
        with rt.lock:
            if body.token and body.token in rt.token_responses:
                return rt.token_responses[body.token]
            engine = rt.engine
            if engine.done:
                raise HTTPException(status_code=409, detail="session is finished")
            if engine.awaiting != "instruction":
                raise HTTPException(
                    status_code=409, detail="session is not awaiting an instruction")
            text = (body.text or "").strip()
            instruction = None
            if text:
                last_item = engine.turns_view()[-1].decisions[-1][0]
                instruction = Instruction(text=text, issued_after_item=last_item)
            try:
                engine.submit_instruction(instruction)
            except SessionError as e:
                raise HTTPException(status_code=409, detail=str(e))
            persist_if_done(rt)
            response = {"status": status_payload(sid, rt)}
            if body.token:
                rt.token_responses[body.token] = response
            return response

    @app.get("/v1/sessions/{sid}/trajectory")
    def get_trajectory(sid: str):
        rt = get_runtime(sid)
        with rt.lock:
            return trajectory_to_dict(rt.engine.to_trajectory())

    @app.get("/v1/sessions/{sid}/comparison")
    def get_comparison(sid: str):
        rt = get_runtime(sid)
        with rt.lock:
            if not rt.engine.done:
                raise HTTPException(
                    status_code=409, detail="session must finish before comparison")
            annotator_traj = rt.engine.to_trajectory()
            paired_cfg = SessionConfig(
                mode=SessionMode.AGENTIC,
                k=rt.engine.config.k,
                max_turns=rt.engine.config.max_turns,
                recommender=rt.engine.config.recommender,
                simulator=config.session.simulator,
            )
        # Paired run reuses the stored seed: same profile, same initial list.
        simulated_traj = run_session(
            rt.engine.profile, catalog, paired_cfg, rt.seed, llm_client=llm_client)
        comparison = SessionComparison(
            annotator_stats=compute_trajectory_reward(annotator_traj, config.reward_weights),
            simulated_stats=compute_trajectory_reward(simulated_traj, config.reward_weights),
        )
        return {"session_id": sid, **comparison.to_dict()}

    @app.get("/v1/healthz")
    def healthz():
        return {"ok": True, "catalog_items": len(catalog)}

    return app
