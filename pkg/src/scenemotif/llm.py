"""Prompt templates, chat sessions, and pluggable LLM backends.

Two backends ship by default: a live HTTP chat-completions client and a
replay backend that returns recorded replies keyed by a digest of the
conversation so far.  All tests run against replay fixtures; live mode is
opt-in via configuration.
"""

from __future__ import annotations

import ast
import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol

import requests
import yaml

logger = logging.getLogger(__name__)

PLACEHOLDER_RE = re.compile(r"<([A-Z][A-Z0-9_]*)>")


class TransportError(RuntimeError):
    """The backend could not produce a reply after retries."""


class BudgetExceededError(RuntimeError):
    pass


class MissingFixtureError(RuntimeError):
    def __init__(self, digest: str):
        super().__init__(f"no recorded reply for conversation digest {digest}")
        self.digest = digest


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def placeholders(self) -> list[str]:
        return PLACEHOLDER_RE.findall(self.body)

    def render(self, **values: str) -> str:
        """Substitute ``<PLACEHOLDER>`` slots; no other mutation is applied."""
        text = self.body
        for key, value in values.items():
            slot = f"<{key.upper()}>"
            if slot not in text:
                raise KeyError(f"template {self.name!r} has no placeholder {slot}")
            text = text.replace(slot, str(value))
        remaining = PLACEHOLDER_RE.findall(text)
        if remaining:
            raise KeyError(f"template {self.name!r} left placeholders unfilled: {remaining}")
        return text


class PromptCatalog:
    """The bundled prompt-template catalog."""

    def __init__(self, templates: dict[str, str]):
        self._templates = {name: PromptTemplate(name, body) for name, body in templates.items()}

    @staticmethod
    def load_default() -> "PromptCatalog":
        text = resources.files("scenemotif").joinpath("prompts.yaml").read_text()
        return PromptCatalog(yaml.safe_load(text))

    @staticmethod
    def load(path: str | Path) -> "PromptCatalog":
        return PromptCatalog(yaml.safe_load(Path(path).read_text()))

    def __getitem__(self, name: str) -> PromptTemplate:
        return self._templates[name]

    def __contains__(self, name: str) -> bool:
        return name in self._templates

    @property
    def system(self) -> str:
        return self._templates["system"].body

    def names(self) -> list[str]:
        return list(self._templates)


@dataclass
class Budget:
    """Monotone cost accounting for one chat session."""

    calls: int = 0
    prompt_chars: int = 0
    reply_chars: int = 0
    model: Optional[str] = None
    max_calls: Optional[int] = None

    def charge(self, prompt: str, reply: str) -> None:
        self.calls += 1
        self.prompt_chars += len(prompt)
        self.reply_chars += len(reply)

    def check(self) -> None:
        if self.max_calls is not None and self.calls >= self.max_calls:
            raise BudgetExceededError(f"session exceeded {self.max_calls} backend calls")


@dataclass
class ChatSession:
    """An append-only multi-turn conversation with a fixed system message."""

    system_message: str
    turns: list[dict] = field(default_factory=list)
    budget: Budget = field(default_factory=Budget)
    name: str = "session"

    def append(self, role: str, content: str) -> None:
        self.turns.append({"role": role, "content": content})

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system_message}, *self.turns]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "name": self.name,
                    "system": self.system_message,
                    "turns": self.turns,
                    "budget": {
                        "calls": self.budget.calls,
                        "prompt_chars": self.budget.prompt_chars,
                        "reply_chars": self.budget.reply_chars,
                        "model": self.budget.model,
                    },
                },
                indent=2,
            )
            + "\n"
        )


def conversation_digest(system: str, turns: list[dict], prompt: str) -> str:
    payload = json.dumps(
        {"system": system, "turns": [[t["role"], t["content"]] for t in turns], "prompt": prompt},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class LlmBackend(Protocol):
    def complete(self, system: str, turns: list[dict], prompt: str) -> str: ...

    @property
    def model_name(self) -> str: ...


class LiveBackend:
    """HTTP chat-completions client.

    The request body follows the common ``messages`` chat schema; sampling
    is pinned to the backend's most deterministic setting (temperature 0)
    and recorded in transcripts via the budget's model field.
    """

    def __init__(self, endpoint: str, model: str, api_key: str = "", timeout_s: float = 120.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s

    @property
    def model_name(self) -> str:
        return self.model

    def complete(self, system: str, turns: list[dict], prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                *turns,
                {"role": "user", "content": prompt},
            ],
        }
        response = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout_s)
        response.raise_for_status()
        data = response.json()
        return data["choices"][0]["message"]["content"]


class ReplayBackend:
    """Deterministic stand-in returning recorded replies from a fixture dir."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    @property
    def model_name(self) -> str:
        return "replay"

    def complete(self, system: str, turns: list[dict], prompt: str) -> str:
        digest = conversation_digest(system, turns, prompt)
        path = self.fixture_dir / f"{digest}.json"
        if not path.exists():
            raise MissingFixtureError(digest)
        return json.loads(path.read_text())["reply"]


class RecordingBackend:
    """Wrap another backend, writing each reply as a replay fixture."""

    def __init__(self, inner: LlmBackend, fixture_dir: str | Path):
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    @property
    def model_name(self) -> str:
        return self.inner.model_name

    def complete(self, system: str, turns: list[dict], prompt: str) -> str:
        reply = self.inner.complete(system, turns, prompt)
        digest = conversation_digest(system, turns, prompt)
        path = self.fixture_dir / f"{digest}.json"
        path.write_text(json.dumps({"reply": reply}, indent=2) + "\n")
        return reply


def complete(
    backend: LlmBackend,
    session: ChatSession,
    prompt: str,
    retries: int = 3,
    backoff_s: float = 1.0,
) -> str:
    """Send ``prompt`` in ``session``; append both turns and account cost.

    Transient transport failures are retried with exponential backoff;
    fixture misses are not retried (they are deterministic).
    """
    session.budget.check()
    last_error: Optional[Exception] = None
    for attempt in range(retries):
        try:
            reply = backend.complete(session.system_message, session.turns, prompt)
            break
        except MissingFixtureError:
            raise
        except Exception as exc:  # transport layer
            last_error = exc
            logger.warning("backend call failed (attempt %d/%d): %s", attempt + 1, retries, exc)
            if attempt + 1 < retries:
                time.sleep(backoff_s * (2**attempt))
    else:
        raise TransportError(f"backend failed after {retries} attempts: {last_error}")
    session.append("user", prompt)
    session.append("assistant", reply)
    session.budget.model = backend.model_name
    session.budget.charge(prompt, reply)
    return reply


# ---------------------------------------------------------------------------
# Reply parsing helpers
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\n(.*?)```", re.DOTALL)


def strip_code_fences(reply: str) -> str:
    """Return the code inside the last fenced block, or the raw reply."""
    blocks = _FENCE_RE.findall(reply)
    if blocks:
        return blocks[-1].strip("\n")
    return reply.strip()


def _balanced_json_spans(text: str) -> list[str]:
    spans = []
    depth = 0
    start = None
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start is not None:
                spans.append(text[start : i + 1])
                start = None
    return spans


def extract_json_block(reply: str) -> dict:
    """Parse the last well-formed JSON-like object in a reply.

    Replies often wrap the structure in code fences and append prose;
    single-quoted dicts are tolerated via a literal-eval fallback.
    """
    candidates = []
    for fenced in _FENCE_RE.findall(reply):
        candidates.extend(_balanced_json_spans(fenced))
    candidates.extend(_balanced_json_spans(reply))
    for span in reversed(candidates):
        for parser in (json.loads, ast.literal_eval):
            try:
                value = parser(span)
            except (ValueError, SyntaxError):
                continue
            if isinstance(value, dict):
                return value
    raise ValueError(f"no parseable JSON object found in reply: {reply[:200]!r}")
