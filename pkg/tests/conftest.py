"""Shared fixtures: a citation-graph verification context and friends.

The context is a two-hop ego subgraph around node11 of a small citation
graph (22 nodes, 25 edges) with paper-abstract texts on the five nodes
the completion fixtures reason about.  The completion fixtures cover the
main behavioral archetypes: a denoised correct pick, a greedy largest
pick, a central-only pick, and a bare answer with no sampling blocks.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from graphssr.graphs import Subgraph, TaskInstance
from graphssr.serialize import subgraph_from_dict

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def citation_context() -> Subgraph:
    sub, _ = subgraph_from_dict(json.loads(load_fixture_text("context_citation.json")))
    return sub


@pytest.fixture(scope="session")
def citation_texts() -> dict[int, str]:
    raw = json.loads(load_fixture_text("context_citation.json"))
    return {int(k): v for k, v in raw["texts"].items()}


@pytest.fixture(scope="session")
def citation_task() -> TaskInstance:
    return TaskInstance.from_dict(json.loads(load_fixture_text("task_citation.json")))


@pytest.fixture(scope="session")
def citation_star(citation_context, citation_texts) -> Subgraph:
    """The first-hop star around node11 restricted to nodes with texts,
    small enough to render prompts for.
    """
    nodes = set(citation_texts)
    edges = {
        e for e in citation_context.edges if e[0] in nodes and e[1] in nodes
    }
    return Subgraph.make((11,), nodes - {11}, edges)


@pytest.fixture(scope="session")
def completion_denoised() -> str:
    return load_fixture_text("completion_denoised.txt")


@pytest.fixture(scope="session")
def completion_largest() -> str:
    return load_fixture_text("completion_largest.txt")


@pytest.fixture(scope="session")
def completion_minimal() -> str:
    return load_fixture_text("completion_minimal.txt")


@pytest.fixture(scope="session")
def completion_answer_only() -> str:
    return load_fixture_text("completion_answer_only.txt")
