"""Total parser for structured sample-select-reason (SSR) completions.

A well-formed completion lists ``expected_k`` candidate blocks::

    Subgraph_0
    Central_node_ID: node11
    Neighboring_node_ID: node13,node17
    Connection_relationship: <node11, node13>,<node11, node17>

followed by one reasoning block::

    Chosen_subgraph_reasoning
    Chosen_subgraph: 2
    Chosen_subgraph_reason: ...
    Central_node_ID: ...          (restates the chosen candidate)
    Neighboring_node_ID: ...
    Connection_relationship: ...
    Answer: Neural Networks
    Brief_reasoning: ...

``parse_trace`` is total: any string yields a trace plus a defect list,
never an exception.  Deviations from the grammar are reported as typed
defects with byte spans; absent parts surface as ``None``/empty fields
so downstream checks (authenticity, consistency, answer) can score the
completion as-is.

Documented tolerances (anything beyond these is a defect):

- markdown bold/heading markers around headings and labels;
- trailing punctuation after headings and label names;
- case-insensitive labels; ``Subgraph 3`` for ``Subgraph_3``;
- node ids written ``node11`` or bare ``11``;
- free-text preamble before the first recognized block line;
- ``Chosen_subgraph: Subgraph_2`` for ``Chosen_subgraph: 2``;
- multi-line values for the two free-text fields (reason, reasoning).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .graphs import Subgraph, node_name

DEFECT_KINDS = (
    "missing_candidates",   # no candidate blocks at all
    "candidate_count",      # fewer blocks than expected_k
    "surplus_candidates",   # more blocks than expected_k; extras ignored
    "candidate_labels",     # block labels not 0..n-1 in order
    "missing_field",        # a required field absent from a block
    "duplicate_field",      # field repeated within a block; first wins
    "duplicate_node_id",    # repeated id inside one id list
    "duplicate_edge",       # repeated pair inside one connection list
    "bad_node_id",          # unparseable id token; token skipped
    "bad_edge",             # malformed connection item; item skipped
    "unexpected_line",      # unparseable line inside a block; ignored
    "duplicate_block",      # reasoning block opened twice
    "missing_choice",       # no Chosen_subgraph line
    "bad_choice",           # Chosen_subgraph value not an integer
    "missing_repeat",       # chosen subgraph not restated
    "missing_answer",       # no Answer line
    "missing_reason",       # no Chosen_subgraph_reason
    "missing_reasoning",    # no Brief_reasoning
)

_CANDIDATE_HEADING_RE = re.compile(r"^[\W_]*subgraph[ _](\d+)[\W_]*$", re.IGNORECASE)
_REASONING_HEADING_RE = re.compile(
    r"^[\W_]*chosen[ _]subgraph[ _]reasoning[\W_]*$", re.IGNORECASE
)
_FIELD_RE = re.compile(r"^[\s>#*_-]*([A-Za-z][A-Za-z_ ]*?)[\s*_]*:\s*(.*?)\s*$")
_ID_TOKEN_RE = re.compile(r"^(?:node[\s_]*)?(\d+)$", re.IGNORECASE)
_EDGE_ITEM_RE = re.compile(r"<\s*([^<>,]+?)\s*,\s*([^<>,]+?)\s*>")
_CHOICE_RE = re.compile(r"^(?:subgraph[ _]?)?([+-]?\d+)$", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")

_STRUCTURE_LABELS = {
    "central_node_id": "central",
    "neighboring_node_id": "neighbors",
    "neighboring_node_ids": "neighbors",
    "connection_relationship": "edges",
    "connection_relationships": "edges",
}
_REASONING_LABELS = {
    "chosen_subgraph": "chosen",
    "chosen_subgraph_reason": "reason",
    "answer": "answer",
    "brief_reasoning": "reasoning",
}
_MULTILINE_KEYS = {"reason", "reasoning"}


@dataclass(frozen=True)
class Defect:
    """One grammar deviation: kind (from DEFECT_KINDS), byte span, message."""

    kind: str
    span: tuple[int, int]
    message: str


@dataclass(frozen=True)
class SsrTrace:
    """Structured view of a completion; absent parts are None/empty."""

    candidates: tuple[Subgraph, ...] = ()
    chosen_index: int | None = None
    chosen_reason: str | None = None
    repeated_subgraph: Subgraph | None = None
    answer: str | None = None
    brief_reasoning: str | None = None


@dataclass(frozen=True)
class ParseReport:
    trace: SsrTrace
    defects: tuple[Defect, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.defects


def _strip_bold(value: str) -> str:
    v = value.strip()
    while len(v) >= 4 and v.startswith("**") and v.endswith("**"):
        v = v[2:-2].strip()
    return v


def _clean_answer(value: str) -> str:
    """Peel bold markers and one sentence-final period, in either order."""
    v = value.strip()
    while True:
        stripped = _strip_bold(v)
        if stripped != v:
            v = stripped
            continue
        if len(v) > 1 and v.endswith(".") and not v.endswith(".."):
            v = v[:-1].rstrip()
            continue
        return v


def _normalize_label(raw: str) -> str:
    return re.sub(r"\s+", "_", raw.strip().lower())


class _Block:
    """Mutable accumulation for one candidate or reasoning block."""

    def __init__(self, span: tuple[int, int]) -> None:
        self.span = span
        self.fields: dict[str, tuple[str, tuple[int, int]]] = {}

    def add(self, key: str, value: str, span: tuple[int, int], defects: list[Defect]) -> None:
        if key in self.fields:
            defects.append(
                Defect("duplicate_field", span, f"field {key!r} repeated; first value kept")
            )
            return
        self.fields[key] = (value, span)

    def append_to(self, key: str, line: str) -> None:
        value, span = self.fields[key]
        self.fields[key] = (value + "\n" + line, span)


def _parse_id_list(
    value: str, span: tuple[int, int], defects: list[Defect]
) -> list[int]:
    ids: list[int] = []
    seen: set[int] = set()
    if not value.strip():
        return ids
    for token in value.split(","):
        token = _strip_bold(token).strip(".")
        if not token:
            continue
        m = _ID_TOKEN_RE.match(token)
        if m is None:
            defects.append(Defect("bad_node_id", span, f"unparseable id token {token!r}"))
            continue
        nid = int(m.group(1))
        if nid in seen:
            defects.append(Defect("duplicate_node_id", span, f"id {nid} repeated"))
            continue
        seen.add(nid)
        ids.append(nid)
    return ids


def _parse_edge_list(
    value: str, span: tuple[int, int], defects: list[Defect]
) -> list[tuple[int, int]]:
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    value = _strip_bold(value)
    if not value or value in ("[]", "None", "none"):
        return edges
    matched_len = 0
    for m in _EDGE_ITEM_RE.finditer(value):
        matched_len += len(m.group(0))
        pair = []
        for token in (m.group(1), m.group(2)):
            tok_m = _ID_TOKEN_RE.match(token)
            if tok_m is None:
                defects.append(
                    Defect("bad_edge", span, f"bad endpoint {token!r} in {m.group(0)!r}")
                )
                break
            pair.append(int(tok_m.group(1)))
        if len(pair) != 2:
            continue
        a, b = min(pair), max(pair)
        if (a, b) in seen:
            defects.append(
                Defect("duplicate_edge", span, f"edge <{node_name(a)}, {node_name(b)}> repeated")
            )
            continue
        seen.add((a, b))
        edges.append((a, b))
    residue = _EDGE_ITEM_RE.sub("", value)
    residue = residue.strip(" ,.[]")
    if residue:
        defects.append(Defect("bad_edge", span, f"unparsed connection text {residue!r}"))
    return edges


def _build_subgraph(
    block: _Block, defects: list[Defect], require_all: bool
) -> Subgraph:
    for key, label in (("central", "Central_node_ID"),
                       ("neighbors", "Neighboring_node_ID"),
                       ("edges", "Connection_relationship")):
        if require_all and key not in block.fields:
            defects.append(Defect("missing_field", block.span, f"{label} absent"))
    central_v, central_span = block.fields.get("central", ("", block.span))
    neigh_v, neigh_span = block.fields.get("neighbors", ("", block.span))
    edges_v, edges_span = block.fields.get("edges", ("", block.span))
    return Subgraph.make(
        central=_parse_id_list(central_v, central_span, defects),
        neighbors=_parse_id_list(neigh_v, neigh_span, defects),
        edges=_parse_edge_list(edges_v, edges_span, defects),
    )


def parse_trace(completion: str, expected_k: int = 5) -> ParseReport:
    """Parse a completion into a trace and a defect list.  Never raises
    on completion content; ``expected_k`` must be a positive integer.
    """
    if expected_k < 1:
        raise ValueError("expected_k must be at least 1")
    defects: list[Defect] = []

    # Line table with byte spans over the UTF-8 encoding.
    lines: list[tuple[str, tuple[int, int]]] = []
    offset = 0
    for raw in completion.splitlines(keepends=True):
        stripped = raw.rstrip("\r\n")
        size = len(raw.encode("utf-8"))
        lines.append((stripped, (offset, offset + len(stripped.encode("utf-8")))))
        offset += size
    end_span = (offset, offset)

    candidate_blocks: list[tuple[int, _Block]] = []
    reasoning_block: _Block | None = None
    current: _Block | None = None          # candidate being filled
    in_reasoning = False
    open_multiline: str | None = None

    def enter_reasoning(span: tuple[int, int]) -> _Block:
        nonlocal reasoning_block, current, in_reasoning
        if reasoning_block is None:
            reasoning_block = _Block(span)
        current = None
        in_reasoning = True
        return reasoning_block

    for text, span in lines:
        if not text.strip():
            if open_multiline and in_reasoning and reasoning_block is not None:
                reasoning_block.append_to(open_multiline, "")
            continue
        m = _CANDIDATE_HEADING_RE.match(text)
        if m:
            block = _Block(span)
            candidate_blocks.append((int(m.group(1)), block))
            current = block
            in_reasoning = False
            open_multiline = None
            continue
        if _REASONING_HEADING_RE.match(text):
            if reasoning_block is not None:
                defects.append(Defect("duplicate_block", span, "reasoning block reopened"))
            enter_reasoning(span)
            open_multiline = None
            continue
        fm = _FIELD_RE.match(text)
        if fm:
            label = _normalize_label(fm.group(1))
            value = fm.group(2)
            if label in _REASONING_LABELS:
                block = enter_reasoning(span)
                key = _REASONING_LABELS[label]
                block.add(key, value, span, defects)
                open_multiline = key if key in _MULTILINE_KEYS else None
                continue
            if label in _STRUCTURE_LABELS:
                key = _STRUCTURE_LABELS[label]
                if in_reasoning and reasoning_block is not None:
                    reasoning_block.add(key, value, span, defects)
                    open_multiline = None
                    continue
                if current is not None:
                    current.add(key, value, span, defects)
                    open_multiline = None
                    continue
                # Structure field before any heading: prompt echo, ignore.
                continue
        # Unmatched content: preamble is fine, multi-line fields absorb,
        # anything else inside a block is a defect.
        if in_reasoning and open_multiline and reasoning_block is not None:
            reasoning_block.append_to(open_multiline, text)
            continue
        if current is not None or in_reasoning:
            defects.append(Defect("unexpected_line", span, f"ignored line {text.strip()[:60]!r}"))

    # Candidate list assembly.
    labels = [lbl for lbl, _ in candidate_blocks]
    if labels and labels != list(range(len(labels))):
        defects.append(
            Defect(
                "candidate_labels",
                candidate_blocks[0][1].span,
                f"block labels {labels} are not 0..{len(labels) - 1}",
            )
        )
    if len(candidate_blocks) > expected_k:
        for lbl, block in candidate_blocks[expected_k:]:
            defects.append(
                Defect("surplus_candidates", block.span, f"Subgraph_{lbl} beyond expected {expected_k}")
            )
        candidate_blocks = candidate_blocks[:expected_k]
    elif not candidate_blocks:
        defects.append(Defect("missing_candidates", end_span, "no candidate blocks found"))
    elif len(candidate_blocks) < expected_k:
        defects.append(
            Defect(
                "candidate_count",
                end_span,
                f"expected {expected_k} candidates, found {len(candidate_blocks)}",
            )
        )
    candidates = tuple(
        _build_subgraph(block, defects, require_all=True) for _, block in candidate_blocks
    )

    # Reasoning block assembly.
    chosen_index: int | None = None
    chosen_reason: str | None = None
    repeated: Subgraph | None = None
    answer: str | None = None
    brief: str | None = None
    if reasoning_block is None:
        for kind, label in (("missing_choice", "Chosen_subgraph"),
                            ("missing_reason", "Chosen_subgraph_reason"),
                            ("missing_repeat", "chosen subgraph restatement"),
                            ("missing_answer", "Answer"),
                            ("missing_reasoning", "Brief_reasoning")):
            defects.append(Defect(kind, end_span, f"{label} absent"))
    else:
        fields = reasoning_block.fields
        if "chosen" in fields:
            value, span = fields["chosen"]
            cm = _CHOICE_RE.match(_strip_bold(value).strip("<>.").strip())
            if cm is None:
                defects.append(Defect("bad_choice", span, f"not an index: {value!r}"))
            else:
                chosen_index = int(cm.group(1))
        else:
            defects.append(Defect("missing_choice", reasoning_block.span, "Chosen_subgraph absent"))
        for key, kind, label in (("reason", "missing_reason", "Chosen_subgraph_reason"),
                                 ("reasoning", "missing_reasoning", "Brief_reasoning")):
            if key in fields:
                value = fields[key][0].strip()
                if value:
                    if key == "reason":
                        chosen_reason = value
                    else:
                        brief = value
                    continue
            defects.append(Defect(kind, reasoning_block.span, f"{label} absent"))
        if "answer" in fields:
            value, span = fields["answer"]
            answer = _clean_answer(value) or None
        if answer is None:
            defects.append(Defect("missing_answer", reasoning_block.span, "Answer absent"))
        if any(k in fields for k in ("central", "neighbors", "edges")):
            repeated = _build_subgraph(reasoning_block, defects, require_all=False)
        else:
            defects.append(
                Defect("missing_repeat", reasoning_block.span, "chosen subgraph not restated")
            )

    trace = SsrTrace(
        candidates=candidates,
        chosen_index=chosen_index,
        chosen_reason=chosen_reason,
        repeated_subgraph=repeated,
        answer=answer,
        brief_reasoning=brief,
    )
    return ParseReport(trace=trace, defects=tuple(defects))


def _format_subgraph_fields(g: Subgraph) -> list[str]:
    return [
        "Central_node_ID: " + ",".join(node_name(i) for i in g.central),
        "Neighboring_node_ID: " + ",".join(node_name(i) for i in sorted(g.neighbors)),
        "Connection_relationship: "
        + ",".join(f"<{node_name(a)}, {node_name(b)}>" for a, b in sorted(g.edges)),
    ]


def format_trace(trace: SsrTrace) -> str:
    """Serialize a trace back to the canonical completion format.

    Absent fields are omitted.  ``parse_trace(format_trace(t), k)`` with
    ``k = max(1, len(t.candidates))`` reproduces ``t`` provided free-text
    fields contain no lines that look like labels or headings.
    """
    out: list[str] = []
    for i, cand in enumerate(trace.candidates):
        out.append(f"Subgraph_{i}")
        out.extend(_format_subgraph_fields(cand))
        out.append("")
    has_reasoning = any(
        x is not None
        for x in (
            trace.chosen_index,
            trace.chosen_reason,
            trace.repeated_subgraph,
            trace.answer,
            trace.brief_reasoning,
        )
    )
    if has_reasoning:
        out.append("Chosen_subgraph_reasoning")
        if trace.chosen_index is not None:
            out.append(f"Chosen_subgraph: {trace.chosen_index}")
        if trace.chosen_reason is not None:
            out.append(f"Chosen_subgraph_reason: {trace.chosen_reason}")
        if trace.repeated_subgraph is not None:
            out.extend(_format_subgraph_fields(trace.repeated_subgraph))
        if trace.answer is not None:
            out.append(f"Answer: {trace.answer}")
        if trace.brief_reasoning is not None:
            out.append(f"Brief_reasoning: {trace.brief_reasoning}")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


def parse_distance_score(completion: str) -> tuple[float, bool]:
    """Extract the judge's distance score from free-form text.

    Takes the last number in the completion, clamps it to [0, 1], and
    reports whether clamping (or total absence, mapped to 0.0) occurred
    via the second element.
    """
    matches = _NUMBER_RE.findall(completion)
    if not matches:
        return 0.0, True
    value = float(matches[-1])
    clamped = min(1.0, max(0.0, value))
    return clamped, clamped != value


def iter_defect_kinds(report: ParseReport) -> Iterable[str]:
    """Distinct defect kinds present in a report, in first-seen order."""
    seen = []
    for d in report.defects:
        if d.kind not in seen:
            seen.append(d.kind)
    return tuple(seen)
