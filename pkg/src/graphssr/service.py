"""HTTP reward service exposing the scoring pipeline.

Routes (all JSON, canonical encoding on every response body):

- ``GET  /v1/health``  liveness, versions, uptime;
- ``POST /v1/verify``  parse + verify one completion, no rewards;
- ``POST /v1/score``   score a completion group: per-completion parse
  defects, verify outcomes, staged reward breakdowns, and group
  advantages.

Contract: malformed request schema is 400; a score request whose task
lacks a gold label is 422 (rewards are undefined without one);
malformed *completions* are data, not errors, and come back scored with
defects.  Response bodies are deterministic functions of the request,
so replaying a request yields byte-identical bytes; timing lives in the
``x-elapsed-ms`` header, never the body.
"""

from __future__ import annotations

import time
from typing import Literal

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .graphs import GraphFormatError, Subgraph, TaskInstance, require_well_formed
from .rewards import RewardConfig, SizeMetric, Stage, score_group
from .serialize import (
    SCHEMA_VERSION,
    breakdown_to_dict,
    canonical_json,
    defects_to_list,
    outcome_to_dict,
    trace_to_dict,
)
from .traces import parse_trace
from .verifier import JaccardDistanceProvider, verify


class SubgraphModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    central: list[int]
    neighbors: list[int] = Field(default_factory=list)
    edges: list[tuple[int, int]] = Field(default_factory=list)
    texts: dict[int, str] | None = None

    def to_subgraph(self) -> Subgraph:
        return require_well_formed(
            Subgraph.make(self.central, self.neighbors, self.edges), "context"
        )


class TaskModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["node_classification", "link_classification"]
    central: list[int]
    options: list[str] = Field(min_length=1)
    description: str = ""
    gold_label: str | None = None

    def to_task(self) -> TaskInstance:
        return TaskInstance(
            kind=self.kind,
            central=tuple(self.central),
            options=tuple(self.options),
            description=self.description,
            gold_label=self.gold_label,
        )


class ScoreConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lambda_weight: float = Field(default=0.1, alias="lambda", ge=0.0)
    size_metric: Literal["node_count", "node_plus_edge_count"] = "node_count"
    expected_k: int = Field(default=5, ge=1)
    diversity: Literal["jaccard", "none"] = "jaccard"


class ScoreRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    context: SubgraphModel
    task: TaskModel
    completions: list[str] = Field(min_length=1)
    stage: int | str = Stage.STAGE1_AUTHENTICITY.value
    config: ScoreConfigModel = Field(default_factory=ScoreConfigModel)
    schema_version: str = SCHEMA_VERSION


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    context: SubgraphModel
    completion: str
    task: TaskModel | None = None
    expected_k: int = Field(default=5, ge=1)
    schema_version: str = SCHEMA_VERSION


def _json_response(payload: dict, status_code: int = 200, elapsed_ms: float | None = None) -> Response:
    headers = {}
    if elapsed_ms is not None:
        headers["x-elapsed-ms"] = f"{elapsed_ms:.3f}"
    return Response(
        content=canonical_json(payload),
        status_code=status_code,
        media_type="application/json",
        headers=headers,
    )


def _error(status_code: int, message: str) -> Response:
    return _json_response({"error": message, "schema_version": SCHEMA_VERSION}, status_code)


def create_app(threads: int | None = None) -> FastAPI:
    """Build the service app.  ``threads`` caps the worker thread pool
    used for sync endpoints (one process, no shared mutable state).
    """
    app = FastAPI(title="graphssr reward service", version=__version__)
    started = time.monotonic()

    if threads is not None:
        @app.on_event("startup")
        async def _limit_threads() -> None:  # pragma: no cover - config glue
            import anyio

            anyio.to_thread.current_default_thread_limiter().total_tokens = threads

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request: Request, exc: RequestValidationError) -> Response:
        # The wire schema is versioned and closed; a request that does
        # not match it is the caller's bug, reported as 400.
        return _error(400, f"schema violation: {exc.errors()[:3]}")

    @app.exception_handler(GraphFormatError)
    async def _on_graph_error(request: Request, exc: GraphFormatError) -> Response:
        return _error(400, str(exc))

    @app.get("/v1/health")
    def health() -> Response:
        return _json_response(
            {
                "status": "ok",
                "version": __version__,
                "schema_version": SCHEMA_VERSION,
                "uptime_s": round(time.monotonic() - started, 3),
            }
        )

    @app.post("/v1/verify")
    def verify_route(req: VerifyRequest) -> Response:
        t0 = time.perf_counter()
        if req.schema_version != SCHEMA_VERSION:
            return _error(400, f"unsupported schema_version {req.schema_version!r}")
        try:
            context = req.context.to_subgraph()
            task = None if req.task is None else req.task.to_task()
        except GraphFormatError as exc:
            return _error(400, str(exc))
        report = parse_trace(req.completion, expected_k=req.expected_k)
        outcome = verify(
            context,
            report.trace,
            task,
            expected_k=req.expected_k,
            distance=JaccardDistanceProvider(),
        )
        payload = {
            "schema_version": SCHEMA_VERSION,
            "service_version": __version__,
            "trace": trace_to_dict(report.trace),
            "defects": defects_to_list(report),
            "outcome": outcome_to_dict(outcome),
        }
        return _json_response(payload, elapsed_ms=(time.perf_counter() - t0) * 1e3)

    @app.post("/v1/score")
    def score_route(req: ScoreRequest) -> Response:
        t0 = time.perf_counter()
        if req.schema_version != SCHEMA_VERSION:
            return _error(400, f"unsupported schema_version {req.schema_version!r}")
        try:
            context = req.context.to_subgraph()
            task = req.task.to_task()
            stage = Stage.coerce(req.stage)
        except (GraphFormatError, ValueError) as exc:
            return _error(400, str(exc))
        if task.gold_label is None:
            return _error(422, "task.gold_label required for scoring")
        config = RewardConfig(
            stage=stage,
            lambda_weight=req.config.lambda_weight,
            size_metric=SizeMetric(req.config.size_metric),
        )
        distance = (
            JaccardDistanceProvider() if req.config.diversity == "jaccard" else None
        )
        scored, group = score_group(
            context,
            task,
            req.completions,
            config,
            expected_k=req.config.expected_k,
            distance=distance,
        )
        payload = {
            "schema_version": SCHEMA_VERSION,
            "service_version": __version__,
            "stage": stage.value,
            "breakdowns": [breakdown_to_dict(s.breakdown) for s in scored],
            "outcomes": [outcome_to_dict(s.outcome) for s in scored],
            "defects": [defects_to_list(s.report) for s in scored],
            "rewards": list(group.rewards),
            "advantages": list(group.advantages),
        }
        return _json_response(payload, elapsed_ms=(time.perf_counter() - t0) * 1e3)

    return app


def run_server(host: str = "127.0.0.1", port: int = 8000, threads: int = 8) -> None:
    """Blocking single-process server used by the CLI ``serve`` command."""
    import uvicorn

    uvicorn.run(create_app(threads=threads), host=host, port=port, log_level="warning")
