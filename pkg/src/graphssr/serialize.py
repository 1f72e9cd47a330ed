"""Canonical JSON and dict codecs for the wire and file formats.

Everything that crosses a process boundary (service responses, JSONL
records, subgraph files) goes through ``canonical_json``: sorted keys,
no insignificant whitespace, shortest round-trip float form.  Library
and service must agree byte-for-byte, so this is the only JSON encoder
used for those payloads.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Mapping

from .graphs import GraphFormatError, Subgraph, TaskInstance
from .rewards import RewardBreakdown
from .traces import Defect, ParseReport, SsrTrace
from .verifier import VerifyOutcome

SCHEMA_VERSION = "1"


def canonical_json(payload) -> str:
    """Deterministic JSON: sorted keys, compact separators, UTF-8 kept raw."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def subgraph_to_dict(g: Subgraph, texts: Mapping[int, str] | None = None) -> dict:
    out: dict = {
        "central": list(g.central),
        "neighbors": sorted(g.neighbors),
        "edges": [list(e) for e in sorted(g.edges)],
    }
    if texts is not None:
        out["texts"] = {str(nid): texts[nid] for nid in sorted(texts)}
    return out


def _int_list(value, what: str) -> list[int]:
    if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
        raise GraphFormatError(f"{what} must be an array of integers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, int):
            raise GraphFormatError(f"{what} entry {v!r} is not an integer")
        out.append(v)
    return out


def subgraph_from_dict(raw: Mapping) -> tuple[Subgraph, dict[int, str] | None]:
    """Decode a subgraph object, returning attached texts when present."""
    try:
        central = _int_list(raw["central"], "central")
    except KeyError:
        raise GraphFormatError("bad subgraph object: missing 'central'") from None
    neighbors = _int_list(raw.get("neighbors", ()), "neighbors")
    edges = []
    raw_edges = raw.get("edges", ())
    if isinstance(raw_edges, (str, bytes)) or not hasattr(raw_edges, "__iter__"):
        raise GraphFormatError("edges must be an array of id pairs")
    for i, pair in enumerate(raw_edges):
        endpoints = _int_list(pair, f"edge #{i}")
        if len(endpoints) != 2:
            raise GraphFormatError(f"edge #{i} must have exactly two endpoints")
        edges.append(tuple(endpoints))
    g = Subgraph.make(central=central, neighbors=neighbors, edges=edges)
    texts = None
    if raw.get("texts") is not None:
        try:
            texts = {int(k): str(v) for k, v in raw["texts"].items()}
        except (AttributeError, TypeError, ValueError) as exc:
            raise GraphFormatError(f"bad texts mapping: {exc}") from None
    return g, texts


def load_subgraph_file(path: str | Path) -> tuple[Subgraph, dict[int, str] | None]:
    return subgraph_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_subgraph_file(
    path_or_fh: str | Path | IO, g: Subgraph, texts: Mapping[int, str] | None = None
) -> None:
    text = canonical_json(subgraph_to_dict(g, texts))
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text + "\n")
    else:
        Path(path_or_fh).write_text(text + "\n", encoding="utf-8")


def trace_to_dict(trace: SsrTrace) -> dict:
    return {
        "candidates": [subgraph_to_dict(c) for c in trace.candidates],
        "chosen_index": trace.chosen_index,
        "chosen_reason": trace.chosen_reason,
        "repeated_subgraph": (
            None
            if trace.repeated_subgraph is None
            else subgraph_to_dict(trace.repeated_subgraph)
        ),
        "answer": trace.answer,
        "brief_reasoning": trace.brief_reasoning,
    }


def trace_from_dict(raw: Mapping) -> SsrTrace:
    repeated = raw.get("repeated_subgraph")
    return SsrTrace(
        candidates=tuple(subgraph_from_dict(c)[0] for c in raw.get("candidates", [])),
        chosen_index=raw.get("chosen_index"),
        chosen_reason=raw.get("chosen_reason"),
        repeated_subgraph=None if repeated is None else subgraph_from_dict(repeated)[0],
        answer=raw.get("answer"),
        brief_reasoning=raw.get("brief_reasoning"),
    )


def defect_to_dict(defect: Defect) -> dict:
    return {"kind": defect.kind, "span": list(defect.span), "message": defect.message}


def defects_to_list(report: ParseReport) -> list[dict]:
    return [defect_to_dict(d) for d in report.defects]


def outcome_to_dict(outcome: VerifyOutcome) -> dict:
    return {
        "status_real": outcome.status_real,
        "status_consist": outcome.status_consist,
        "status_ans": outcome.status_ans,
        "energy": outcome.energy,
        "mean_distance": outcome.mean_distance,
        "structural_flags": list(outcome.structural_flags),
    }


def breakdown_to_dict(breakdown: RewardBreakdown) -> dict:
    return {
        "r1": breakdown.r1,
        "r2": breakdown.r2,
        "stage": breakdown.stage.value,
        "r_s": breakdown.r_s,
        "rho": breakdown.rho,
        "chosen_size": breakdown.chosen_size,
    }


def task_to_dict(task: TaskInstance) -> dict:
    return task.to_dict()


def task_from_dict(raw: Mapping) -> TaskInstance:
    return TaskInstance.from_dict(raw)
