"""Model providers.

Every generation request in the pipeline goes through :class:`Provider`.
Offline runs use :class:`ScriptedProvider`, which answers from a scenario
directory keyed by a digest of the whole conversation, so replays are
position independent and byte-for-byte deterministic.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Callable, Protocol

from .errors import MissingScenario, ProviderError


class TurnKind(enum.Enum):
    Completion = "completion"
    ToolCall = "tool_call"
    FinalMessage = "final"


@dataclass
class ProviderTurn:
    kind: TurnKind
    text: str = ""
    name: str | None = None
    args: Any = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind.value, "text": self.text}
        if self.kind is TurnKind.ToolCall:
            d["name"] = self.name
            d["args"] = self.args
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderTurn":
        return cls(kind=TurnKind(d["kind"]), text=d.get("text", ""), name=d.get("name"), args=d.get("args"))

    @classmethod
    def tool(cls, tool_name: str, /, **args) -> "ProviderTurn":
        return cls(TurnKind.ToolCall, name=tool_name, args=args)

    @classmethod
    def final(cls, text: str = "") -> "ProviderTurn":
        return cls(TurnKind.FinalMessage, text=text)


class Provider(Protocol):
    def complete(self, prompt: str) -> str: ...

    def agent_step(self, conversation: list[dict], tool_manifest: list[dict]) -> ProviderTurn: ...


def completion_conversation(prompt: str) -> list[dict]:
    return [{"role": "user", "content": prompt}]


def request_key(conversation: list[dict]) -> str:
    blob = json.dumps(conversation, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ScriptedScenario:
    entries: dict[str, ProviderTurn] = field(default_factory=dict)

    @classmethod
    def load(cls, directory: Path) -> "ScriptedScenario":
        directory = Path(directory)
        entries = {}
        for p in sorted(directory.glob("*.json")):
            entries[p.stem] = ProviderTurn.from_dict(json.loads(p.read_text()))
        return cls(entries)

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for key, turn in sorted(self.entries.items()):
            (directory / f"{key}.json").write_text(json.dumps(turn.to_dict(), sort_keys=True, indent=1) + "\n")


class ScriptedProvider:
    def __init__(self, scenario: ScriptedScenario | Path | str):
        if not isinstance(scenario, ScriptedScenario):
            scenario = ScriptedScenario.load(Path(scenario))
        self.scenario = scenario

    def _lookup(self, conversation: list[dict]) -> ProviderTurn:
        key = request_key(conversation)
        try:
            return self.scenario.entries[key]
        except KeyError:
            last = conversation[-1]["content"][:120] if conversation else ""
            raise MissingScenario(f"no scripted turn for request {key[:16]} (last message: {last!r})") from None

    def complete(self, prompt: str) -> str:
        return self._lookup(completion_conversation(prompt)).text

    def agent_step(self, conversation: list[dict], tool_manifest: list[dict]) -> ProviderTurn:
        return self._lookup(conversation)


class CallbackProvider:
    """Answers from Python callables; used to author scenarios."""

    def __init__(
        self,
        complete: Callable[[str], str] | None = None,
        agent: Callable[[list[dict]], ProviderTurn] | None = None,
    ):
        self._complete = complete
        self._agent = agent

    def complete(self, prompt: str) -> str:
        if self._complete is None:
            raise MissingScenario("no completion callback configured")
        return self._complete(prompt)

    def agent_step(self, conversation: list[dict], tool_manifest: list[dict]) -> ProviderTurn:
        if self._agent is None:
            raise MissingScenario("no agent callback configured")
        return self._agent(conversation)


class RecordingProvider:
    """Wraps a provider and records every answer into a scenario."""

    def __init__(self, inner: Provider, scenario: ScriptedScenario | None = None):
        self.inner = inner
        self.scenario = scenario or ScriptedScenario()

    def complete(self, prompt: str) -> str:
        text = self.inner.complete(prompt)
        self.scenario.entries[request_key(completion_conversation(prompt))] = ProviderTurn(TurnKind.Completion, text)
        return text

    def agent_step(self, conversation: list[dict], tool_manifest: list[dict]) -> ProviderTurn:
        turn = self.inner.agent_step(conversation, tool_manifest)
        self.scenario.entries[request_key(conversation)] = turn
        return turn


@dataclass
class LiveConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    timeout: float = 120.0
    api_key_env: str = "MIGRATE_API_KEY"

    @property
    def temperature(self) -> float:
        return 0.0


class LiveProvider:
    """OpenAI-compatible chat-completions client, temperature pinned at 0."""

    def __init__(self, config: LiveConfig | None = None, client=None):
        import httpx

        self.config = config or LiveConfig()
        self.client = client or httpx.Client(timeout=self.config.timeout)

    def _post(self, payload: dict) -> dict:
        import httpx

        headers = {}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = dict(payload, model=self.config.model, temperature=self.config.temperature)
        try:
            resp = self.client.post(self.config.endpoint, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise ProviderError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider rejected request: HTTP {resp.status_code}: {resp.text[:300]}")
        return resp.json()

    def complete(self, prompt: str) -> str:
        data = self._post({"messages": completion_conversation(prompt)})
        return data["choices"][0]["message"].get("content") or ""

    def agent_step(self, conversation: list[dict], tool_manifest: list[dict]) -> ProviderTurn:
        tools = [
            {"type": "function", "function": {"name": t["name"], "description": t["description"], "parameters": t["parameters"]}}
            for t in tool_manifest
        ]
        data = self._post({"messages": to_openai_messages(conversation), "tools": tools})
        msg = data["choices"][0]["message"]
        calls = msg.get("tool_calls") or []
        if calls:
            fn = calls[0]["function"]
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError:
                args = fn.get("arguments")
            return ProviderTurn(TurnKind.ToolCall, name=fn.get("name"), args=args)
        return ProviderTurn.final(msg.get("content") or "")


def to_openai_messages(conversation: list[dict]) -> list[dict]:
    out = []
    call_no = 0
    for m in conversation:
        if m["role"] == "assistant" and m.get("tool_call"):
            call_no += 1
            tc = m["tool_call"]
            out.append(
                {
                    "role": "assistant",
                    "content": None,
                    "tool_calls": [
                        {
                            "id": f"call_{call_no}",
                            "type": "function",
                            "function": {"name": tc["name"], "arguments": json.dumps(tc["args"], sort_keys=True)},
                        }
                    ],
                }
            )
        elif m["role"] == "tool":
            out.append({"role": "tool", "tool_call_id": f"call_{call_no}", "content": m["content"]})
        else:
            out.append({"role": m["role"], "content": m["content"]})
    return out


def load_template(name: str) -> str:
    return resources.files("safemigrate").joinpath("templates", name).read_text()


def render_template(template: str, /, **values: str) -> str:
    return Template(load_template(template)).substitute(**values)


def make_provider(spec: str) -> Provider:
    """``scripted:<dir>`` or ``live[:<model>]``."""
    kind, _, arg = spec.partition(":")
    if kind == "scripted":
        if not arg:
            raise ValueError("scripted provider needs a scenario directory")
        return ScriptedProvider(Path(arg))
    if kind == "live":
        cfg = LiveConfig()
        if arg:
            cfg.model = arg
        if os.environ.get("MIGRATE_ENDPOINT"):
            cfg.endpoint = os.environ["MIGRATE_ENDPOINT"]
        return LiveProvider(cfg)
    raise ValueError(f"unknown provider spec {spec!r}")
