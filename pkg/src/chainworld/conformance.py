"""Wire-protocol conformance checks for chat-completions servers.

Any endpoint the gateway is pointed at (hosted model, local fine-tuned
server) must pass these: they assert exactly the schema the gateway reads.
"""

from __future__ import annotations

from dataclasses import dataclass

import requests

from .gateway import Backend, BackendConfig

PROBE_TEXT = "Reply with any short text."


@dataclass(frozen=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConformanceReport:
    checks: tuple[ConformanceCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple[ConformanceCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def summary(self) -> str:
        lines = [
            f"[{'ok' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else "")
            for c in self.checks
        ]
        return "\n".join(lines)


def _post_probe(base_url: str, model_name: str, content: str, timeout: float):
    return requests.post(
        base_url.rstrip("/") + "/chat/completions",
        json={
            "model": model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0.0,
        },
        timeout=timeout,
    )


def run_conformance_checks(
    base_url: str,
    model_name: str = "conformance-probe",
    probe_text: str = PROBE_TEXT,
    timeout: float = 15.0,
) -> ConformanceReport:
    checks: list[ConformanceCheck] = []

    def record(name: str, passed: bool, detail: str = "") -> None:
        checks.append(ConformanceCheck(name, passed, detail))

    first_text = None
    try:
        resp = _post_probe(base_url, model_name, probe_text, timeout)
        record("responds-200", resp.status_code == 200, f"status {resp.status_code}")
        try:
            data = resp.json()
            choice = data["choices"][0]
            message = choice["message"]
            first_text = message["content"]
            record(
                "choices-shape",
                isinstance(first_text, bool) is False and isinstance(first_text, str),
                "choices[0].message.content must be a string",
            )
            record(
                "assistant-role",
                message.get("role") == "assistant",
                f"role is {message.get('role')!r}",
            )
            record(
                "content-nonempty",
                isinstance(first_text, str) and bool(first_text.strip()),
                "empty completion text",
            )
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            record("choices-shape", False, f"payload unreadable: {exc}")
    except requests.RequestException as exc:
        record("responds-200", False, str(exc))

    try:
        resp = _post_probe(base_url, model_name, probe_text, timeout)
        repeat_ok = (
            resp.status_code == 200
            and isinstance(resp.json()["choices"][0]["message"]["content"], str)
        )
        record("repeat-ok", repeat_ok, "second identical request must also succeed")
    except Exception as exc:
        record("repeat-ok", False, str(exc))

    try:
        backend = Backend(
            BackendConfig(
                kind="remote",
                base_url=base_url,
                model_name=model_name,
                max_retries=2,
                timeout=timeout,
            )
        )
        completion = backend.complete(probe_text)
        record("gateway-roundtrip", bool(completion.text), "gateway read an empty completion")
    except Exception as exc:
        record("gateway-roundtrip", False, str(exc))

    return ConformanceReport(checks=tuple(checks))
