"""Chat clients for teacher and judge models.

Two implementations share one duck-typed interface, ``complete(prompt,
temperature=..., seed=...) -> str``:

- ``OpenAIChatClient`` talks to any OpenAI-style chat-completions
  endpoint (the teacher and judge in production);
- ``ScriptedChatClient`` replays canned completions keyed by prompt
  digest, which makes synthesis and evaluation fully deterministic in
  tests and demos.

``CachedChatClient`` wraps either with an append-only JSONL cache keyed
by (prompt, temperature, seed) digest so interrupted synthesis runs
resume without repeating paid calls.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests


class ChatError(RuntimeError):
    """A completion could not be obtained."""


class ChatClient(Protocol):
    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        ...


def prompt_digest(prompt: str) -> str:
    """Stable key for scripting and caching: sha256 of the prompt text."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class OpenAIChatClient:
    """Minimal chat-completions client with retries.

    ``endpoint`` is the full URL of the chat-completions route.  Network
    and schema failures raise ChatError after ``max_retries`` attempts
    with exponential backoff.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self._session = session or requests.Session()

    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        if temperature is not None:
            payload["temperature"] = temperature
        if seed is not None:
            payload["seed"] = seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = self._session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(0.5 * 2**attempt)
        raise ChatError(f"chat request failed after {self.max_retries} attempts: {last_error}")


class ScriptedChatClient:
    """Replays canned completions keyed by prompt digest.

    A value may be a single string or a sequence of strings; sequences
    are stepped through per call and the last entry repeats once
    exhausted.  Unknown prompts fall back to ``default`` or raise.
    """

    def __init__(
        self,
        script: Mapping[str, str | Sequence[str]] | None = None,
        default: str | None = None,
    ) -> None:
        self._script = dict(script or {})
        self._default = default
        self._calls: dict[str, int] = {}
        self.call_count = 0

    def add(self, prompt: str, completion: str | Sequence[str]) -> None:
        """Register a completion for the exact prompt text."""
        self._script[prompt_digest(prompt)] = completion

    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        self.call_count += 1
        digest = prompt_digest(prompt)
        entry = self._script.get(digest)
        if entry is None:
            if self._default is not None:
                return self._default
            raise ChatError(f"no scripted completion for prompt digest {digest[:12]}")
        if isinstance(entry, str):
            return entry
        idx = self._calls.get(digest, 0)
        self._calls[digest] = idx + 1
        return entry[min(idx, len(entry) - 1)]


class CachedChatClient:
    """Write-through JSONL cache around another client.

    Keys are digests of (prompt, temperature, seed), so replaying the
    same synthesis run hits the cache instead of the network.
    """

    def __init__(self, inner: ChatClient, cache_path: str | Path) -> None:
        self._inner = inner
        self._path = Path(cache_path)
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()
        if self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self._cache[entry["key"]] = entry["completion"]
                except (ValueError, KeyError, TypeError):
                    continue  # torn tail line from an interrupted append

    @staticmethod
    def _key(prompt: str, temperature: float | None, seed: int | None) -> str:
        raw = json.dumps(
            {"prompt": prompt, "temperature": temperature, "seed": seed},
            sort_keys=True,
        )
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        key = self._key(prompt, temperature, seed)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        completion = self._inner.complete(prompt, temperature=temperature, seed=seed)
        with self._lock:
            self._cache[key] = completion
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps({"key": key, "completion": completion}, ensure_ascii=False)
                    + "\n"
                )
                fh.flush()
        return completion
