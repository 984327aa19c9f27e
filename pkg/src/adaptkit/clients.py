"""Pluggable text-completion clients.

Every agent call goes through ``complete(prompt) -> str`` so the whole
planning stack runs offline against mocks, and a remote model is a drop-in.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .errors import ScriptExhaustedError, TransportError


@runtime_checkable
class ModelClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class ScriptedClient:
    """Canned replies consumed in order; running out is an error (a scripted
    run must cover every call it triggers, never invent text)."""

    def __init__(self, replies: Sequence[str]):
        self._replies = list(replies)
        self._cursor = 0
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if self._cursor >= len(self._replies):
            raise ScriptExhaustedError(
                f"script exhausted after {len(self._replies)} replies"
            )
        reply = self._replies[self._cursor]
        self._cursor += 1
        return reply


_CANDIDATES_RE = re.compile(r"^CANDIDATES:\s*(\[.*\])\s*$", re.MULTILINE)
_REQUIRED_RE = re.compile(r"^REQUIRED:\s*(\[.*\])\s*$", re.MULTILINE)
_FORBIDDEN_RE = re.compile(r"^FORBIDDEN:\s*(\[.*\])\s*$", re.MULTILINE)
_RANGES_RE = re.compile(r"^DECLARED_RANGES:\s*(\{.*\})\s*$", re.MULTILINE)


def _json_line(pattern: re.Pattern, prompt: str, default):
    match = pattern.search(prompt)
    if not match:
        return default
    try:
        return json.loads(match.group(1))
    except json.JSONDecodeError:
        return default


class RuleClient:
    """Deterministic offline stand-in: picks the first admissible candidate
    (required ones first, forbidden ones skipped) and echoes declared
    parameter ranges. Reads the machine-readable blocks planner prompts carry.
    """

    def complete(self, prompt: str) -> str:
        ranges = _json_line(_RANGES_RE, prompt, None)
        candidates = _json_line(_CANDIDATES_RE, prompt, None)
        if candidates is not None:
            required = _json_line(_REQUIRED_RE, prompt, [])
            forbidden = set(_json_line(_FORBIDDEN_RE, prompt, []))
            pick = None
            for cand in candidates:
                if cand in required:
                    pick = cand
                    break
            if pick is None:
                pick = next((c for c in candidates if c not in forbidden), candidates[0])
            return f"Selecting the leading admissible candidate.\nnext_nodes=['{pick}']"
        if ranges is not None:
            return "Keeping the declared ranges.\n" + json.dumps(ranges)
        return "No blocking concerns from this review."


@dataclass
class RemoteClient:
    """Minimal HTTP JSON contract: POST {"prompt": ...} -> {"completion": ...}."""

    endpoint: str
    auth_token: str | None = None
    timeout: float = 30.0

    def complete(self, prompt: str) -> str:
        payload = json.dumps({"prompt": prompt}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        request = urllib.request.Request(self.endpoint, data=payload, headers=headers)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = response.read().decode("utf-8")
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise TransportError(f"remote client failed: {exc}") from exc
        try:
            obj = json.loads(body)
            completion = obj["completion"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed remote reply: {body[:200]!r}") from exc
        if not isinstance(completion, str):
            raise TransportError("remote completion is not text")
        return completion
