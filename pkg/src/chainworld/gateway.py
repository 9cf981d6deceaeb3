"""Uniform access to text-generation backends.

Two backend kinds share one calling surface: a remote chat-completions HTTP
endpoint (hosted model or a locally served fine-tuned one), and a scripted
backend that replays canned responses keyed by request fingerprint, which
makes every pipeline a pure function of its inputs.  Responses are cached on
disk (or in memory) by fingerprint, so reruns are free and resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "CHAINWORLD_API_KEY"


class GatewayError(Exception):
    """Base class for gateway failures."""


class MissingSlot(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"no binding for template slot ${name}")
        self.name = name


class BackendUnreachable(GatewayError):
    """The remote endpoint could not be reached after retries."""


class ScriptMiss(GatewayError):
    """The scripted backend has no entry for this request fingerprint."""


class MalformedResponse(GatewayError):
    """The endpoint answered but not in the chat-completions shape."""


class EmptyList(GatewayError):
    """An enumerated-list response contained no items."""


def _template_slots(body: str) -> set[str]:
    slots: set[str] = set()
    for match in string.Template.pattern.finditer(body):
        name = match.group("named") or match.group("braced")
        if name:
            slots.add(name)
    return slots


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt body with ``$slot`` placeholders.

    The declared required_slots must match the slots appearing in the body
    exactly; mismatches are construction errors, not call-time surprises.
    """

    name: str
    body: str
    required_slots: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_slots", tuple(self.required_slots))
        declared = set(self.required_slots)
        found = _template_slots(self.body)
        if declared != found:
            raise ValueError(
                f"template {self.name!r}: declared slots {sorted(declared)} "
                f"!= slots in body {sorted(found)}"
            )


def render_template(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every slot; raises MissingSlot before touching the body."""
    for slot in template.required_slots:
        if slot not in bindings:
            raise MissingSlot(slot)
    return string.Template(template.body).substitute(bindings)


@dataclass(frozen=True)
class Prompt:
    """A rendered prompt that remembers where it came from.

    The fingerprint is a stable hash of (template name, bindings, model name,
    temperature), so scripted runs and the cache survive re-wording of code
    that merely re-renders the same request.
    """

    text: str
    template_name: str
    bindings: tuple[tuple[str, str], ...]

    @classmethod
    def raw(cls, text: str) -> "Prompt":
        return cls(text=text, template_name="raw", bindings=(("text", text),))


def build_prompt(template: PromptTemplate, bindings: Mapping[str, str]) -> Prompt:
    text = render_template(template, bindings)
    return Prompt(
        text=text,
        template_name=template.name,
        bindings=tuple(sorted((str(k), str(v)) for k, v in bindings.items())),
    )


def fingerprint(prompt: Prompt, model_name: str, temperature: float) -> str:
    payload = json.dumps(
        {
            "template": prompt.template_name,
            "bindings": list(prompt.bindings),
            "model": model_name,
            "temperature": round(float(temperature), 6),
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendConfig:
    """Backend selection plus transport knobs.

    kind "remote" talks chat-completions HTTP (base_url + model_name
    required); kind "scripted" replays a fingerprint->text map loaded from
    script_path or given inline as script.
    """

    kind: str = "scripted"
    base_url: str = ""
    model_name: str = "scripted"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 30.0
    cache_dir: str | None = None
    script_path: str | None = None
    script: Mapping[str, str] | None = None
    max_in_flight: int = 4
    retry_backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.kind == "remote" and (not self.base_url or not self.model_name):
            raise ValueError("remote backend requires base_url and model_name")


@dataclass(frozen=True)
class Completion:
    request_fingerprint: str
    text: str
    backend_kind: str
    cached: bool


class _Cache:
    """Fingerprint-keyed response cache; writers are serialized per key."""

    def __init__(self, cache_dir: str | None):
        self._dir = Path(cache_dir) if cache_dir else None
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, str] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def get(self, key: str) -> str | None:
        if key in self._memory:
            return self._memory[key]
        if self._dir:
            path = self._dir / f"{key}.json"
            if path.exists():
                text = json.loads(path.read_text(encoding="utf-8"))["text"]
                self._memory[key] = text
                return text
        return None

    def put(self, key: str, text: str) -> None:
        self._memory[key] = text
        if self._dir:
            path = self._dir / f"{key}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"text": text}, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)

    def snapshot(self) -> dict[str, str]:
        return dict(self._memory)


class Backend:
    """One configured backend with its cache and in-flight limit.

    A responder callable may stand in for missing scripted entries; fixture
    builders use it to record complete scripts by running real pipelines.
    """

    def __init__(self, config: BackendConfig, responder=None):
        self.config = config
        self.responder = responder
        self._cache = _Cache(config.cache_dir)
        self._in_flight = threading.Semaphore(max(1, config.max_in_flight))
        self._script: dict[str, str] = {}
        if config.kind == "scripted":
            if config.script is not None:
                self._script.update(config.script)
            if config.script_path:
                self._script.update(
                    json.loads(Path(config.script_path).read_text(encoding="utf-8"))
                )

    def complete(self, prompt: Prompt | str, temperature: float | None = None) -> Completion:
        """Resolve a prompt to text; cache hits never touch the backend."""
        if isinstance(prompt, str):
            prompt = Prompt.raw(prompt)
        temp = self.config.temperature if temperature is None else float(temperature)
        key = fingerprint(prompt, self.config.model_name, temp)
        with self._cache.lock_for(key):
            cached = self._cache.get(key)
            if cached is not None:
                return Completion(key, cached, self.config.kind, cached=True)
            if self.config.kind == "scripted":
                if key in self._script:
                    text = self._script[key]
                elif self.responder is not None:
                    text = self.responder(prompt)
                else:
                    raise ScriptMiss(
                        f"no scripted response for fingerprint {key} "
                        f"(template {prompt.template_name!r})"
                    )
            else:
                with self._in_flight:
                    text = self._post_chat(prompt.text, temp)
            self._cache.put(key, text)
            return Completion(key, text, self.config.kind, cached=False)

    def cache_snapshot(self) -> dict[str, str]:
        """Copy of every fingerprint -> text this backend has resolved."""
        return self._cache.snapshot()

    def _post_chat(self, prompt_text: str, temperature: float) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": temperature,
        }
        last_error = "no attempt made"
        for attempt in range(max(1, self.config.max_retries)):
            if attempt:
                time.sleep(self.config.retry_backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    url, json=body, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.config.max_retries, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning(
                    "attempt %d/%d got %s", attempt + 1, self.config.max_retries, last_error
                )
                continue
            if resp.status_code != 200:
                raise BackendUnreachable(f"endpoint {url} answered HTTP {resp.status_code}")
            return _extract_choice_text(resp)
        raise BackendUnreachable(
            f"endpoint {url} unreachable after {self.config.max_retries} attempts ({last_error})"
        )


def _extract_choice_text(resp: requests.Response) -> str:
    try:
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"cannot read chat completion payload: {exc}") from exc
    if not isinstance(text, str):
        raise MalformedResponse(f"message content is {type(text).__name__}, not text")
    return text


def complete(
    config: BackendConfig, prompt: Prompt | str, temperature: float | None = None
) -> Completion:
    """One-shot completion for callers that do not keep a Backend around."""
    return Backend(config).complete(prompt, temperature=temperature)


# Same marker shape core.normalize_proposition strips; whitespace (or end of
# line) is required after the marker so decimals like "2.5 cups" survive.
_ITEM_PREFIX = re.compile(r"^\s*(?:(?:\d+[.)]|[-*•])(?:\s+|$))?")


def strip_item_marker(line: str) -> str:
    """Drop one leading numbering/bullet marker and surrounding whitespace."""
    return _ITEM_PREFIX.sub("", line).strip()


def parse_item_list(raw: str) -> list[str]:
    """Split an enumerated response into clean items.

    Strips numbering ("1.", "2)") and bullets ("-", "*"), drops blank lines,
    preserves order.  Raises EmptyList when nothing survives.
    """
    items = [text for text in (strip_item_marker(line) for line in raw.splitlines()) if text]
    if not items:
        raise EmptyList("no items in response")
    return items


def parse_optional_item_list(raw: str) -> list[str]:
    """Like parse_item_list, but an empty or "none" response is an empty list."""
    try:
        items = parse_item_list(raw)
    except EmptyList:
        return []
    if len(items) == 1 and items[0].strip().lower() in ("none", "n/a", "nothing"):
        return []
    return items


def numbered(items: list[str] | tuple[str, ...]) -> str:
    """Render items one per line with 1-based numeric prefixes."""
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))
