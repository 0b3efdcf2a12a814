"""Run configuration: YAML file, environment overrides for endpoint secrets.

Example config (see configs/example.yaml in the repo):

    mode: agentic
    k: 5
    max_turns: 10
    simulator: {kind: scripted, params: {fatigue_threshold: 3}}
    recommender: {kind: instruct, params: {}}
    reward_weights: {total_watch_s: 1, clicks: 5}
    rubric: rubrics/engagement.yaml
    seeds: [1, 2, 3]
    catalog: data/items.csv
    profiles: data/profiles.yaml
    llm:
      base_url: http://localhost:8080/v1
      model: gpt-4.1
      api_key_env: OPENAI_API_KEY

FEEDSIM_LLM_BASE_URL and FEEDSIM_LLM_MODEL override the llm block; the API
key itself is never stored in the file, only the env var name holding it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .llm import LLMSettings
from .rewards import Rubric, load_rubric
from .session import RecommenderSpec, SessionConfig, SessionMode, SimulatorSpec, validate_config
from .users import Context, DayOfWeek, TimeOfDay, UserProfile


@dataclass
class RunConfig:
    session: SessionConfig
    reward_weights: dict[str, float] | None = None
    rubric: Rubric | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    catalog_path: str | None = None
    catalog_format: str = "csv"
    profiles_path: str | None = None
    llm: LLMSettings = field(default_factory=LLMSettings)
    workers: int = 1
    store_path: str = "trajectories.jsonl"


def _require_exists(path: str | None, field_name: str, base: Path) -> str | None:
    if path is None:
        return None
    resolved = (base / path) if not Path(path).is_absolute() else Path(path)
    if not resolved.exists():
        raise ConfigError(f"referenced file does not exist: {resolved}", field=field_name)
    return str(resolved)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    base = path.parent
    try:
        mode = SessionMode(data.get("mode", "agentic"))
    except ValueError:
        raise ConfigError(f"unknown mode: {data.get('mode')!r}", field="mode") from None

    def intfield(name: str, default: int) -> int:
        try:
            return int(data.get(name, default))
        except (TypeError, ValueError):
            raise ConfigError(f"not an integer: {data.get(name)!r}", field=name) from None

    sim_raw = data.get("simulator", {}) or {}
    rec_raw = data.get("recommender", {}) or {}
    session = SessionConfig(
        mode=mode,
        k=intfield("k", 5),
        max_turns=intfield("max_turns", 10),
        start_ts=intfield("start_ts", 0),
        simulator=SimulatorSpec(
            kind=sim_raw.get("kind", "scripted"), params=dict(sim_raw.get("params", {}))),
        recommender=RecommenderSpec(
            kind=rec_raw.get("kind", "instruct"), params=dict(rec_raw.get("params", {}))),
    )
    validate_config(session)

    llm_raw = dict(data.get("llm", {}) or {})
    if os.environ.get("FEEDSIM_LLM_BASE_URL"):
        llm_raw["base_url"] = os.environ["FEEDSIM_LLM_BASE_URL"]
    if os.environ.get("FEEDSIM_LLM_MODEL"):
        llm_raw["model"] = os.environ["FEEDSIM_LLM_MODEL"]
    try:
        llm = LLMSettings(**llm_raw)
    except TypeError as e:
        raise ConfigError(f"bad llm settings: {e}", field="llm") from None

    rubric = None
    rubric_path = _require_exists(data.get("rubric"), "rubric", base)
    if rubric_path:
        with open(rubric_path, encoding="utf-8") as fh:
            rubric = load_rubric(yaml.safe_load(fh) or {})

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a list of integers", field="seeds")

    weights = data.get("reward_weights")
    if weights is not None:
        weights = {str(k): float(v) for k, v in weights.items()}

    return RunConfig(
        session=session,
        reward_weights=weights,
        rubric=rubric,
        seeds=seeds,
        catalog_path=_require_exists(data.get("catalog"), "catalog", base),
        catalog_format=str(data.get("catalog_format", "csv")),
        profiles_path=_require_exists(data.get("profiles"), "profiles", base),
        llm=llm,
        workers=intfield("workers", 1),
        store_path=str(data.get("store", "trajectories.jsonl")),
    )


def profile_from_dict(raw: dict) -> UserProfile:
    """Build a profile from config/API data; interests may be a map or pairs."""
    interests_raw = raw.get("interests", {})
    if isinstance(interests_raw, dict):
        interests = tuple((str(c), float(a)) for c, a in interests_raw.items())
    else:
        interests = tuple((str(c), float(a)) for c, a in interests_raw)
    ctx_raw = raw.get("context", {}) or {}
    try:
        context = Context(
            time_of_day=TimeOfDay(ctx_raw.get("time_of_day", "evening")),
            day_of_week=DayOfWeek(ctx_raw.get("day_of_week", "saturday")),
            device=str(ctx_raw.get("device", "phone")),
        )
    except ValueError as e:
        raise ConfigError(f"bad context value: {e}", field="context") from None
    if not raw.get("user_id"):
        raise ConfigError("profile needs a user_id", field="user_id")
    try:
        return UserProfile(
            user_id=str(raw["user_id"]),
            age=int(raw.get("age", 30)),
            gender=str(raw.get("gender", "")),
            location=str(raw.get("location", "")),
            interests=interests,
            social_groups=tuple(raw.get("social_groups", [])),
            context=context,
        )
    except ValueError as e:
        raise ConfigError(str(e), field="interests") from None


def load_profiles(path: str | Path) -> list[UserProfile]:
    with Path(path).open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or []
    if not isinstance(data, list):
        raise ConfigError("profiles file must be a YAML list", field="profiles")
    return [profile_from_dict(p) for p in data]
