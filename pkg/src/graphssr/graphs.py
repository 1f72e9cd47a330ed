"""Text-attributed graphs, task instances, and subgraph extraction.

Graphs are undirected, unweighted, with a free-text attribute per node.
Node identifiers are non-negative integers externally written as
``node<k>``; edges are unordered pairs with no self-loops and no
duplicates.  Documents are exchanged as TAG-JSON::

    {"nodes": [{"id": 0, "text": "..."}, ...],
     "edges": [[0, 8], ...],
     "tasks": [{"kind": ..., "central": ..., "options": ...,
                "description": ..., "gold_label": ...}, ...]}

Directed exports that list both orientations of an edge collapse to a
single undirected edge on load.
"""

from __future__ import annotations

import io
import json
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

_NODE_NAME_RE = re.compile(r"^node(0|[1-9][0-9]*)$")

TASK_KINDS = ("node_classification", "link_classification")


class GraphFormatError(ValueError):
    """A document or graph component violates the TAG-JSON contract."""


def node_name(node_id: int) -> str:
    """Render an integer id in the canonical ``node<k>`` form."""
    if not isinstance(node_id, int) or isinstance(node_id, bool) or node_id < 0:
        raise GraphFormatError(f"node id must be a non-negative integer, got {node_id!r}")
    return f"node{node_id}"


def parse_node_name(name: str) -> int:
    """Inverse of :func:`node_name`.  Rejects non-canonical spellings."""
    m = _NODE_NAME_RE.match(name)
    if m is None:
        raise GraphFormatError(f"not a canonical node name: {name!r}")
    return int(m.group(1))


def normalize_label(label: str) -> str:
    """Strip surrounding whitespace and angle brackets, then case-fold.

    This is the single normalization applied to both gold labels and
    predicted answers before comparison.
    """
    return label.strip().strip("<>").strip().casefold()


def _normalize_edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class TextGraph:
    """Immutable text-attributed graph.

    ``nodes`` maps id to text; ``edges`` holds unordered pairs stored as
    (min, max) tuples.  Build instances through :meth:`from_parts` so the
    invariants (no self-loops, endpoints exist, ids non-negative) hold.
    """

    nodes: Mapping[int, str]
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_parts(
        cls,
        nodes: Mapping[int, str],
        edges: Iterable[Sequence[int]],
    ) -> "TextGraph":
        clean_nodes: dict[int, str] = {}
        for nid, text in nodes.items():
            if not isinstance(nid, int) or isinstance(nid, bool) or nid < 0:
                raise GraphFormatError(f"bad node id {nid!r}")
            if not isinstance(text, str):
                raise GraphFormatError(f"node {nid}: text must be a string")
            clean_nodes[nid] = text
        clean_edges: set[tuple[int, int]] = set()
        for i, pair in enumerate(edges):
            if len(pair) != 2:
                raise GraphFormatError(f"edge #{i}: expected a pair, got {pair!r}")
            a, b = pair
            if a == b:
                raise GraphFormatError(f"edge #{i}: self-loop on node {a}")
            for endpoint in (a, b):
                if endpoint not in clean_nodes:
                    raise GraphFormatError(f"edge #{i}: unknown node {endpoint}")
            clean_edges.add(_normalize_edge(a, b))
        return cls(nodes=dict(clean_nodes), edges=frozenset(clean_edges))

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.nodes

    def has_edge(self, a: int, b: int) -> bool:
        return _normalize_edge(a, b) in self.edges

    def adjacency(self) -> dict[int, list[int]]:
        """Neighbor lists sorted by id.  Rebuilt per call; graphs are small."""
        adj: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for lst in adj.values():
            lst.sort()
        return adj


@dataclass(frozen=True)
class TaskInstance:
    """One reasoning task over a graph.

    ``central`` is one node for node classification and exactly two for
    link classification.  ``options`` are the candidate labels shown to
    the model; ``gold_label`` is optional (evaluation-only streams omit
    it) but when present must match an option after normalization.
    """

    kind: str
    central: tuple[int, ...]
    options: tuple[str, ...]
    description: str = ""
    gold_label: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise GraphFormatError(f"unknown task kind {self.kind!r}")
        want = 1 if self.kind == "node_classification" else 2
        if len(self.central) != want:
            raise GraphFormatError(
                f"{self.kind} requires {want} central node(s), got {len(self.central)}"
            )
        if not self.options:
            raise GraphFormatError("task needs at least one option")
        seen = set()
        for opt in self.options:
            if "<" in opt or ">" in opt:
                raise GraphFormatError(f"option {opt!r} may not contain angle brackets")
            key = normalize_label(opt)
            if key in seen:
                raise GraphFormatError(f"duplicate option {opt!r} after normalization")
            seen.add(key)
        if self.gold_label is not None and normalize_label(self.gold_label) not in seen:
            raise GraphFormatError(
                f"gold label {self.gold_label!r} is not among the options"
            )

    @classmethod
    def from_dict(cls, raw: Mapping) -> "TaskInstance":
        try:
            kind = raw["kind"]
            central = raw["central"]
            options = raw["options"]
        except KeyError as exc:
            raise GraphFormatError(f"task missing field {exc.args[0]!r}") from None
        if isinstance(central, int):
            central = [central]
        return cls(
            kind=kind,
            central=tuple(central),
            options=tuple(options),
            description=raw.get("description", "") or "",
            gold_label=raw.get("gold_label"),
        )

    def to_dict(self) -> dict:
        out: dict = {
            "kind": self.kind,
            "central": list(self.central),
            "options": list(self.options),
            "description": self.description,
        }
        if self.gold_label is not None:
            out["gold_label"] = self.gold_label
        return out


@dataclass(frozen=True)
class Subgraph:
    """A subgraph anchored on central node(s).

    ``central`` is kept sorted and duplicate-free, ``neighbors`` excludes
    central ids only in well-formed instances (the trace parser may build
    ill-formed ones; see :meth:`well_formed`).  Equality is set equality
    on all three fields.
    """

    central: tuple[int, ...]
    neighbors: frozenset[int] = field(default_factory=frozenset)
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    @classmethod
    def make(
        cls,
        central: Iterable[int],
        neighbors: Iterable[int] = (),
        edges: Iterable[Sequence[int]] = (),
    ) -> "Subgraph":
        """Normalize inputs (sort central, orient edges) without validating."""
        return cls(
            central=tuple(sorted(set(central))),
            neighbors=frozenset(neighbors),
            edges=frozenset(_normalize_edge(a, b) for a, b in edges),
        )

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.central) | self.neighbors

    def node_count(self) -> int:
        return len(self.nodes)

    def well_formed(self) -> bool:
        """True when the instance is internally coherent.

        Requires at least one central node, disjoint central/neighbor
        sets, no self-loops, and every edge endpoint drawn from the
        subgraph's own nodes.
        """
        if not self.central:
            return False
        if set(self.central) & self.neighbors:
            return False
        nodes = self.nodes
        for a, b in self.edges:
            if a == b or a not in nodes or b not in nodes:
                return False
        return True


def require_well_formed(g: Subgraph, label: str = "subgraph") -> Subgraph:
    """Raise :class:`GraphFormatError` naming the first structural problem.

    Context graphs arriving over the wire or from files go through this;
    candidate subgraphs parsed out of completions intentionally do not,
    because ill-formed candidates must survive serialization so the
    verifier can score them.
    """
    if not g.central:
        raise GraphFormatError(f"{label} has no central node")
    overlap = set(g.central) & g.neighbors
    if overlap:
        raise GraphFormatError(
            f"{label} lists central nodes as neighbors: {sorted(overlap)}"
        )
    nodes = g.nodes
    for a, b in sorted(g.edges):
        if a == b:
            raise GraphFormatError(f"{label} edge ({a}, {b}) is a self-loop")
        if a not in nodes or b not in nodes:
            raise GraphFormatError(f"{label} edge ({a}, {b}) leaves the node set")
    return g


def is_subgraph_of(candidate: Subgraph, context: Subgraph) -> bool:
    """Containment check: every node and edge of ``candidate`` exists in ``context``."""
    return candidate.nodes <= context.nodes and candidate.edges <= context.edges


@dataclass(frozen=True)
class TagDocument:
    """A parsed TAG-JSON document: one graph plus its task instances."""

    graph: TextGraph
    tasks: tuple[TaskInstance, ...]


def _read_source(source: str | bytes | Path | IO) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        # Treat as a path when it points at an existing file, else as raw JSON.
        if "\n" not in source and "{" not in source and Path(source).exists():
            return Path(source).read_text(encoding="utf-8")
        return source
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    raise GraphFormatError(f"cannot read graph from {type(source).__name__}")


def load_document(source: str | bytes | Path | IO) -> TagDocument:
    """Parse and validate a TAG-JSON document from a path, string, or stream."""
    text = _read_source(source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise GraphFormatError("document root must be an object")
    for key in ("nodes", "edges"):
        if key not in raw:
            raise GraphFormatError(f"document missing {key!r} array")
    nodes: dict[int, str] = {}
    for i, entry in enumerate(raw["nodes"]):
        if not isinstance(entry, dict) or "id" not in entry or "text" not in entry:
            raise GraphFormatError(f"nodes[{i}]: expected an object with id and text")
        nid = entry["id"]
        if nid in nodes:
            raise GraphFormatError(f"nodes[{i}]: duplicate id {nid}")
        nodes[nid] = entry["text"]
    graph = TextGraph.from_parts(nodes, raw["edges"])
    tasks = []
    for i, entry in enumerate(raw.get("tasks", [])):
        task = TaskInstance.from_dict(entry)
        for c in task.central:
            if c not in graph:
                raise GraphFormatError(f"tasks[{i}]: central node {c} not in graph")
        tasks.append(task)
    return TagDocument(graph=graph, tasks=tuple(tasks))


def dump_document(doc: TagDocument) -> str:
    """Serialize back to TAG-JSON with sorted nodes and edges."""
    payload = {
        "nodes": [
            {"id": nid, "text": doc.graph.nodes[nid]} for nid in sorted(doc.graph.nodes)
        ],
        "edges": [list(e) for e in sorted(doc.graph.edges)],
        "tasks": [t.to_dict() for t in doc.tasks],
    }
    return json.dumps(payload, indent=2, ensure_ascii=False)


def ego_subgraph(
    graph: TextGraph,
    central: Sequence[int],
    hops: int = 2,
    max_nodes: int | None = None,
) -> Subgraph:
    """BFS ego extraction around ``central`` up to ``hops`` hops.

    When ``max_nodes`` is given, retained nodes are the first
    ``max_nodes`` in (distance, id) order, so truncation is deterministic
    and central nodes are never dropped.  Edges are the ones induced on
    the retained node set.
    """
    centers = tuple(sorted(set(central)))
    if not centers:
        raise GraphFormatError("need at least one central node")
    for c in centers:
        if c not in graph:
            raise GraphFormatError(f"central node {c} not in graph")
    if hops < 0:
        raise GraphFormatError("hops must be non-negative")
    if max_nodes is not None and max_nodes < len(centers):
        raise GraphFormatError("max_nodes smaller than the central set")

    adj = graph.adjacency()
    dist = {c: 0 for c in centers}
    order = list(centers)
    queue = deque(centers)
    while queue:
        cur = queue.popleft()
        if dist[cur] == hops:
            continue
        for nxt in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                order.append(nxt)
                queue.append(nxt)
    # BFS pops in level order but within a level insertion follows the
    # parents' order; re-sort to the documented (distance, id) key.
    order.sort(key=lambda n: (dist[n], n))
    retained = order if max_nodes is None else order[:max_nodes]
    node_set = set(retained)
    edges = {e for e in graph.edges if e[0] in node_set and e[1] in node_set}
    return Subgraph(
        central=centers,
        neighbors=frozenset(node_set - set(centers)),
        edges=frozenset(edges),
    )
