"""Minimal reward-service client.

Wraps ``POST /v1/score`` so a training loop can turn a rollout group
into (reward, advantage) pairs without importing the scoring stack.
All reward math happens server side; the client only builds requests,
retries transport hiccups, and refuses responses whose schema version
it does not understand.

Concurrency contract: create one :class:`RewardClient` per worker
process. Instances hold a ``requests.Session`` and are not safe to
share across threads.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import requests

# wire schema this client was written against; responses carrying any
# other version are a hard error, never silently coerced
EXPECTED_SCHEMA_VERSION = "1"

_RETRY_BACKOFF_S = 0.05


class AdapterError(Exception):
    """Base class for everything this client raises on purpose."""


class TransportError(AdapterError):
    """The service could not be reached, even after retries."""


class SchemaVersionError(AdapterError):
    """The service speaks a different wire schema version."""


class ServiceError(AdapterError):
    """The service rejected the request (4xx) with a reason."""

    def __init__(self, status_code: int, reason: str) -> None:
        super().__init__(f"{status_code}: {reason}")
        self.status_code = status_code
        self.reason = reason


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    timeout: float = 10.0
    retries: int = 2

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("base_url must be set")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


@dataclass(frozen=True)
class ScoreResult:
    """Decoded score response, field-for-field as the service sent it."""

    stage: str
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    breakdowns: tuple[dict, ...]
    outcomes: tuple[dict, ...]
    defects: tuple[list, ...]
    schema_version: str
    service_version: str
    raw: dict = field(repr=False)

    @property
    def pairs(self) -> list[tuple[float, float]]:
        """(reward, advantage) in completion order."""
        return list(zip(self.rewards, self.advantages))


class RewardClient:
    """One reward-service connection. See the module docstring for the
    one-client-per-process contract."""

    def __init__(self, config: ClientConfig) -> None:
        self.config = config
        self._session = requests.Session()

    def close(self) -> None:
        self._session.close()

    def __enter__(self) -> "RewardClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- endpoints ---------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def score_group(
        self,
        context: Mapping,
        task: Mapping,
        completions: Sequence[str],
        *,
        stage: int | str = 1,
        lambda_weight: float | None = None,
        expected_k: int | None = None,
        size_metric: str | None = None,
        diversity: str | None = None,
    ) -> list[tuple[float, float]]:
        """Score one rollout group; (reward, advantage) per completion."""
        result = self.score_group_full(
            context,
            task,
            completions,
            stage=stage,
            lambda_weight=lambda_weight,
            expected_k=expected_k,
            size_metric=size_metric,
            diversity=diversity,
        )
        return result.pairs

    def score_group_full(
        self,
        context: Mapping,
        task: Mapping,
        completions: Sequence[str],
        *,
        stage: int | str = 1,
        lambda_weight: float | None = None,
        expected_k: int | None = None,
        size_metric: str | None = None,
        diversity: str | None = None,
    ) -> ScoreResult:
        """Like :meth:`score_group` but keeps the whole breakdown."""
        config: dict = {}
        if lambda_weight is not None:
            config["lambda"] = lambda_weight
        if expected_k is not None:
            config["expected_k"] = expected_k
        if size_metric is not None:
            config["size_metric"] = size_metric
        if diversity is not None:
            config["diversity"] = diversity
        body = {
            "context": dict(context),
            "task": dict(task),
            "completions": list(completions),
            "stage": stage,
            "config": config,
            "schema_version": EXPECTED_SCHEMA_VERSION,
        }
        payload = self._request("POST", "/v1/score", body)
        return ScoreResult(
            stage=payload["stage"],
            rewards=tuple(payload["rewards"]),
            advantages=tuple(payload["advantages"]),
            breakdowns=tuple(payload["breakdowns"]),
            outcomes=tuple(payload["outcomes"]),
            defects=tuple(payload["defects"]),
            schema_version=payload["schema_version"],
            service_version=payload["service_version"],
            raw=payload,
        )

    # -- transport ---------------------------------------------------

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.config.base_url.rstrip("/") + path
        last_exc: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(_RETRY_BACKOFF_S * attempt)
            try:
                resp = self._session.request(
                    method, url, json=body, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                # the service is stateless, so replaying is safe
                last_exc = ServiceError(resp.status_code, resp.text[:200])
                continue
            return self._decode(resp)
        raise TransportError(f"{method} {url} failed after "
                             f"{self.config.retries + 1} attempts: {last_exc}")

    def _decode(self, resp: requests.Response) -> dict:
        try:
            payload = resp.json()
        except ValueError:
            raise ServiceError(resp.status_code, f"non-JSON body: {resp.text[:200]}")
        if resp.status_code >= 400:
            reason = payload.get("error", resp.text[:200]) if isinstance(payload, dict) else resp.text[:200]
            raise ServiceError(resp.status_code, reason)
        version = payload.get("schema_version")
        if version != EXPECTED_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"service speaks schema {version!r}, "
                f"client expects {EXPECTED_SCHEMA_VERSION!r}"
            )
        return payload
