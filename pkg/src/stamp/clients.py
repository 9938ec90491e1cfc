"""JSON-over-HTTP chat clients for the external services.

Every service (generator, planner, worker, critic, judge, agent) speaks the
same chat-style protocol: POST ``{"messages": [...]}`` and read back either
an OpenAI-style ``choices`` list or a bare ``{"content": ...}`` object.
"""

from __future__ import annotations

import json
import os
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any, Optional, Protocol


class TransportError(RuntimeError):
    """The service could not be reached or answered with a transport-level failure."""


class UnparseableResponse(ValueError):
    """The service answered, but not with anything we can interpret."""


class ChatClient(Protocol):
    def complete(self, messages: list[dict[str, Any]]) -> str: ...


def text_message(role: str, text: str) -> dict[str, Any]:
    return {"role": role, "content": text}


class HttpChatClient:
    def __init__(self, url: str, key: Optional[str] = None, *, model: Optional[str] = None,
                 timeout: float = 60.0, audit_dir: Optional[str | os.PathLike] = None):
        self.url = url
        self.key = key
        self.model = model
        self.timeout = timeout
        self.audit_dir = Path(audit_dir) if audit_dir else None
        self._cancelled = threading.Event()
        self._counter = 0
        self._lock = threading.Lock()

    @classmethod
    def from_env(cls, url_var: str, key_var: Optional[str] = None, **kwargs) -> "HttpChatClient":
        url = os.environ.get(url_var)
        if not url:
            raise TransportError(f"{url_var} is not set")
        key = os.environ.get(key_var) if key_var else None
        return cls(url, key, **kwargs)

    def cancel(self) -> None:
        """Refuse further requests; an in-flight request ends at its timeout."""
        self._cancelled.set()

    def _audit(self, kind: str, body: Any) -> None:
        if self.audit_dir is None:
            return
        self.audit_dir.mkdir(parents=True, exist_ok=True)
        with self._lock:
            self._counter += 1
            n = self._counter
        name = f"{time.strftime('%Y%m%dT%H%M%S')}-{os.getpid()}-{n:05d}-{kind}.json"
        (self.audit_dir / name).write_text(json.dumps(body, ensure_ascii=False, indent=2), encoding="utf-8")

    def complete(self, messages: list[dict[str, Any]]) -> str:
        if self._cancelled.is_set():
            raise TransportError("client cancelled")
        payload: dict[str, Any] = {"messages": messages}
        if self.model:
            payload["model"] = self.model
        self._audit("request", payload)
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        req = urllib.request.Request(self.url, data=json.dumps(payload).encode("utf-8"), headers=headers,
                                     method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise UnparseableResponse(f"non-JSON response body: {raw[:200]!r}") from exc
        self._audit("response", body)
        return extract_content(body)


def extract_content(body: Any) -> str:
    if isinstance(body, dict):
        if "choices" in body and body["choices"]:
            msg = body["choices"][0].get("message", {})
            if isinstance(msg.get("content"), str):
                return msg["content"]
        if isinstance(body.get("content"), str):
            return body["content"]
    raise UnparseableResponse("response carries no message content")


def parse_json_document(text: str) -> Any:
    """Parse a JSON document, tolerating a surrounding markdown code fence."""
    stripped = text.strip()
    if stripped.startswith("```"):
        stripped = stripped.split("\n", 1)[1] if "\n" in stripped else ""
        if stripped.rstrip().endswith("```"):
            stripped = stripped.rstrip()[:-3]
    try:
        return json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise UnparseableResponse(f"response is not valid JSON: {exc}") from exc
