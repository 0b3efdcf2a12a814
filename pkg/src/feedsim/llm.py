"""Chat-completions client plus the model-backed simulator, judge, and parser.

The client speaks the OpenAI-compatible chat-completions JSON format against
any base URL; the API key is read from an environment variable named in the
settings. In-flight requests are capped by a semaphore and transient
failures (timeouts, 429, 5xx) retry with exponential backoff.

The simulator expects completions in a strict labeled-field layout:

    REASONING: <text>
    ACTION: <one of the seven actions>
    WATCH_SECONDS: <int, only for Watch>
    MINDSET: <text>

Parsing is total: a completion either yields a valid decision or, after the
configured retries, raises SimulatorOutputError carrying the raw text.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass

import httpx

from .catalog import ActionKind, Item, ItemMetadata
from .errors import LLMError, SimulatorOutputError
from .recommender import Directives
from .rewards import JudgeBackend
from .users import (
    ActionDecision,
    Instruction,
    PromptBundle,
    UserProfile,
    UserState,
    build_prompt,
)

@dataclass
class LLMSettings:
    base_url: str = "http://localhost:8080/v1"
    model: str = "gpt-4.1"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.7
    reproducible: bool = False  # forces temperature 0.0
    max_tokens: int = 512
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_concurrency: int = 4


class ChatClient:
    """Minimal chat-completions client with bounded concurrency and retries."""

    def __init__(self, settings: LLMSettings, transport: httpx.BaseTransport | None = None):
        self.settings = settings
        self._semaphore = threading.BoundedSemaphore(settings.max_concurrency)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(settings.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(
            base_url=settings.base_url.rstrip("/"),
            headers=headers,
            timeout=settings.timeout_s,
            transport=transport,
        )

    def complete(self, system: str, user: str, temperature: float | None = None) -> str:
        if temperature is None:
            temperature = 0.0 if self.settings.reproducible else self.settings.temperature
        payload = {
            "model": self.settings.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
            "max_tokens": self.settings.max_tokens,
        }
        last_error = "no attempts made"
        for attempt in range(self.settings.max_retries + 1):
            if attempt:
                time.sleep(self.settings.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    resp = self._http.post("/chat/completions", json=payload)
            except httpx.HTTPError as e:
                last_error = f"transport error: {e}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise LLMError(f"chat completion failed: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as e:
                raise LLMError(f"malformed completion response: {e}") from e
        raise LLMError(f"chat completion failed after retries: {last_error}")

    def close(self) -> None:
        self._http.close()


_FIELD_RE = re.compile(
    r"^\s*(REASONING|ACTION|WATCH_SECONDS|MINDSET)\s*:\s*(.*)$", re.IGNORECASE)

_ACTION_LOOKUP = {a.value: a for a in ActionKind}


def parse_decision_text(raw: str, item: Item) -> ActionDecision:
    """Parse a labeled-field completion into a decision, or raise."""
    fields: dict[str, str] = {}
    current: str | None = None
    for line in raw.splitlines():
        m = _FIELD_RE.match(line)
        if m:
            current = m.group(1).upper()
            fields[current] = m.group(2).strip()
        elif current and line.strip():
            fields[current] += " " + line.strip()  # continuation lines
    action_raw = fields.get("ACTION", "").strip().strip(".").lower()
    action = _ACTION_LOOKUP.get(action_raw)
    if action is None:
        raise SimulatorOutputError(f"unrecognized ACTION {action_raw!r}", raw)
    reasoning = fields.get("REASONING", "").strip()
    if not reasoning:
        raise SimulatorOutputError("missing REASONING", raw)
    watch_s: int | None = None
    if action == ActionKind.WATCH:
        ws_raw = fields.get("WATCH_SECONDS", "").strip()
        try:
            watch_s = int(ws_raw)
        except ValueError:
            raise SimulatorOutputError(f"bad WATCH_SECONDS {ws_raw!r}", raw) from None
        if not 1 <= watch_s <= item.duration_s:
            raise SimulatorOutputError(
                f"WATCH_SECONDS {watch_s} outside [1, {item.duration_s}]", raw)
    try:
        return ActionDecision(
            action=action,
            watch_s=watch_s,
            reasoning=reasoning,
            mindset_update=fields.get("MINDSET", "").strip(),
        )
    except ValueError as e:
        raise SimulatorOutputError(str(e), raw) from None


_REFLECT_RE = re.compile(r"^\s*(INSTRUCTION|EXIT)\s*:?\s*(.*)$", re.IGNORECASE)

REFLECT_FORMAT = (
    "You just decided to leave the session. Reflect on why, then answer in "
    "exactly one of these forms:\n"
    "INSTRUCTION: <one short sentence telling the recommender what to change>\n"
    "EXIT (if you would rather leave without feedback)"
)


def parse_reflection_text(raw: str) -> str | None:
    """Return the instruction text, None for an exit, or raise."""
    for line in raw.splitlines():
        m = _REFLECT_RE.match(line)
        if not m:
            continue
        if m.group(1).upper() == "EXIT":
            return None
        text = m.group(2).strip()
        if text:
            return text
        raise SimulatorOutputError("empty INSTRUCTION", raw)
    raise SimulatorOutputError("neither INSTRUCTION nor EXIT found", raw)


@dataclass
class LLMSimulator:
    """Model-backed user simulator; same surface as the scripted one."""

    client: ChatClient
    seed: int = 0
    parse_retries: int = 2
    prompt_budget: int = 6000

    def decide_action(
        self, profile: UserProfile, state: UserState, item: Item, metadata: ItemMetadata,
    ) -> ActionDecision:
        bundle = build_prompt(profile, state, item, metadata, self.prompt_budget)
        return self._with_parse_retries(
            bundle, lambda raw: parse_decision_text(raw, item))

    def reflect_and_instruct(
        self, profile: UserProfile, state: UserState, trajectory_so_far,
    ) -> Instruction | None:
        lines = []
        for turn in trajectory_so_far:
            for item_id, d in turn.decisions:
                lines.append(f"- {item_id}: {d.action.value}"
                             + (f" ({d.watch_s}s)" if d.watch_s is not None else ""))
        bundle = PromptBundle(
            system=REFLECT_FORMAT,
            user=("Session so far:\n" + "\n".join(lines) + "\n"
                  f"Current mindset: {state.mindset or '(none)'}\n"
                  f"Satisfaction: {state.satisfaction:.2f}"),
        )
        text = self._with_parse_retries(bundle, parse_reflection_text)
        if text is None:
            return None
        last_item = ""
        for turn in reversed(trajectory_so_far):
            if turn.decisions:
                last_item = turn.decisions[-1][0]
                break
        return Instruction(text=text, issued_after_item=last_item)

    def _with_parse_retries(self, bundle: PromptBundle, parse):
        last: SimulatorOutputError | None = None
        for _ in range(self.parse_retries + 1):
            raw = self.client.complete(bundle.system, bundle.user)
            try:
                return parse(raw)
            except SimulatorOutputError as e:
                last = e
        raise last


JUDGE_SYSTEM = (
    "You judge recorded recommendation sessions against a criterion.\n"
    "Answer in exactly this format:\n"
    "VERDICT: PASS or FAIL\n"
    "NOTE: <one line of justification>"
)

_VERDICT_RE = re.compile(r"^\s*VERDICT\s*:\s*(PASS|FAIL)\s*$", re.IGNORECASE | re.MULTILINE)
_NOTE_RE = re.compile(r"^\s*NOTE\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE)


@dataclass
class LLMJudge(JudgeBackend):
    client: ChatClient
    parse_retries: int = 2

    def assess(self, criterion: str, trajectory_json: str) -> tuple[bool, str]:
        user = f"Criterion: {criterion}\nTrajectory:\n{trajectory_json}"
        last_raw = ""
        for _ in range(self.parse_retries + 1):
            raw = self.client.complete(JUDGE_SYSTEM, user, temperature=0.0)
            last_raw = raw
            m = _VERDICT_RE.search(raw)
            if m:
                note = _NOTE_RE.search(raw)
                return m.group(1).upper() == "PASS", (note.group(1).strip() if note else "")
        raise LLMError(f"judge output unparseable after retries: {last_raw[:200]!r}")


PARSER_SYSTEM = (
    "Extract recommendation directives from a user instruction.\n"
    "Reply with one JSON object, no prose: "
    '{"more": [<category>...], "less": [<category>...], '
    '"novel": <bool>, "related": <bool>}.\n'
    "Categories must be picked from the provided list; use [] when none apply."
)


@dataclass
class LLMDirectiveParser:
    """Instruction parser backed by the model; emits the same directive grammar."""

    client: ChatClient
    parse_retries: int = 2

    def __call__(self, text: str, categories: list[str]) -> Directives:
        user = f"Known categories: {', '.join(categories)}\nInstruction: {text}"
        last_raw = ""
        for _ in range(self.parse_retries + 1):
            raw = self.client.complete(PARSER_SYSTEM, user, temperature=0.0)
            last_raw = raw
            try:
                data = json.loads(raw.strip())
                known = set(categories)
                return Directives(
                    more=tuple(c for c in data.get("more", []) if c in known),
                    less=tuple(c for c in data.get("less", []) if c in known),
                    novel=bool(data.get("novel", False)),
                    related=bool(data.get("related", False)),
                )
            except (json.JSONDecodeError, AttributeError, TypeError):
                continue
        raise LLMError(f"directive parser output unparseable: {last_raw[:200]!r}")
