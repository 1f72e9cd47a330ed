"""Deterministic prompt rendering from subgraphs and task instances.

Templates live under ``graphssr/templates`` as plain text split into
named sections by ``@@section <name>`` marker lines, with
``{{placeholder}}`` slots for instance data.  Rendering is pure string
work: same inputs, same bytes.  Each rendered prompt carries a manifest
mapping section names to byte spans that tile the full text, so callers
can audit exactly where instance data landed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .graphs import Subgraph, TaskInstance, node_name, parse_node_name

_SECTION_RE = re.compile(r"^@@section ([a-z0-9_]+)\s*$")
_PLACEHOLDER_RE = re.compile(r"\{\{([a-z0-9_]+)\}\}")

TASK_SECTIONS = (
    "task_description",
    "complete_subgraph",
    "sampling",
    "selection",
    "reasoning",
    "options",
)
DIVERSITY_SECTIONS = (
    "task_description",
    "graph_structure_1",
    "graph_structure_2",
    "instructions",
)


class PromptError(ValueError):
    """Raised when a prompt cannot be rendered from the given inputs."""


@dataclass(frozen=True)
class PromptConfig:
    """Rendering knobs.

    ``sample_count`` is the number of subgraphs the model is told to
    sample (at least 2; the group needs contrast to be meaningful).
    ``template_dir`` overrides the packaged templates; the override must
    provide the same sections in the same order.
    """

    sample_count: int = 5
    template_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.sample_count < 2:
            raise PromptError("sample_count must be at least 2")


@dataclass(frozen=True)
class RenderedPrompt:
    """Final prompt text plus a byte-span manifest of its sections.

    Spans are half-open ``(start, end)`` offsets into the UTF-8 encoding
    of ``text`` and tile it exactly, in order, with no gaps.
    """

    text: str
    manifest: tuple[tuple[str, tuple[int, int]], ...] = field(default_factory=tuple)

    def section(self, name: str) -> str:
        """Return the decoded text of one section."""
        data = self.text.encode("utf-8")
        for sec, (start, end) in self.manifest:
            if sec == name:
                return data[start:end].decode("utf-8")
        raise KeyError(name)


def _load_template(name: str, template_dir: Path | None) -> list[tuple[str, str]]:
    """Read a template file into an ordered list of (section, body) pairs."""
    if template_dir is not None:
        path = Path(template_dir) / f"{name}.txt"
        if not path.exists():
            raise PromptError(f"template {name!r} not found in {template_dir}")
        raw = path.read_text(encoding="utf-8")
    else:
        ref = resources.files("graphssr").joinpath("templates", f"{name}.txt")
        raw = ref.read_text(encoding="utf-8")
    sections: list[tuple[str, list[str]]] = []
    for line in raw.splitlines():
        m = _SECTION_RE.match(line)
        if m:
            sections.append((m.group(1), []))
        elif sections:
            sections[-1][1].append(line)
        elif line.strip():
            raise PromptError(f"template {name!r}: text before first section marker")
    if not sections:
        raise PromptError(f"template {name!r}: no sections found")
    return [(sec, "\n".join(lines).strip("\n")) for sec, lines in sections]


def _check_sections(name: str, sections: list[tuple[str, str]], expected: Sequence[str]) -> None:
    got = tuple(sec for sec, _ in sections)
    if got != tuple(expected):
        raise PromptError(
            f"template {name!r} must define sections {list(expected)}, got {list(got)}"
        )


def _substitute(body: str, values: Mapping[str, str]) -> str:
    def repl(m: re.Match) -> str:
        key = m.group(1)
        if key not in values:
            raise PromptError(f"template uses unknown placeholder {{{{{key}}}}}")
        return values[key]

    out = _PLACEHOLDER_RE.sub(repl, body)
    # A placeholder that resolved to nothing leaves a dangling blank line.
    return re.sub(r"\n+$", "", out) if out.endswith("\n") else out


def _assemble(sections: list[tuple[str, str]]) -> RenderedPrompt:
    pieces: list[tuple[str, str]] = []
    for i, (sec, body) in enumerate(sections):
        tail = "\n" if i == len(sections) - 1 else "\n\n"
        pieces.append((sec, body + tail))
    manifest = []
    offset = 0
    for sec, piece in pieces:
        size = len(piece.encode("utf-8"))
        manifest.append((sec, (offset, offset + size)))
        offset += size
    return RenderedPrompt(
        text="".join(piece for _, piece in pieces),
        manifest=tuple(manifest),
    )


def format_id_list(ids: Sequence[int]) -> str:
    return ", ".join(node_name(i) for i in sorted(ids))


def format_edge(a: int, b: int) -> str:
    lo, hi = (a, b) if a <= b else (b, a)
    return f"<{node_name(lo)}, {node_name(hi)}>"


def format_edge_list(edges) -> str:
    items = sorted((min(a, b), max(a, b)) for a, b in edges)
    if not items:
        return "[]"
    return "[" + ", ".join(format_edge(a, b) for a, b in items) + "]"


def _format_node_texts(subgraph: Subgraph, texts: Mapping[int, str]) -> str:
    lines = []
    for nid in sorted(subgraph.nodes):
        if nid not in texts or texts[nid] is None:
            raise PromptError(f"missing text for node {nid}")
        # Node text is taken verbatim except embedded newlines, which would
        # break the one-entry-per-line layout the parser relies on.
        clean = " ".join(texts[nid].splitlines())
        lines.append(f"{node_name(nid)}: {clean}")
    return "[\n" + "\n".join(lines) + "\n]"


def render_task_prompt(
    context: Subgraph,
    texts: Mapping[int, str],
    task: TaskInstance,
    config: PromptConfig | None = None,
) -> RenderedPrompt:
    """Render the full sampling/selection/reasoning prompt for one task.

    ``context`` is the complete extracted subgraph shown to the model;
    ``texts`` must cover every node in it.  Task options are presented in
    their stored order, each wrapped in angle brackets.
    """
    config = config or PromptConfig()
    if tuple(task.central) != tuple(context.central):
        raise PromptError(
            f"task central nodes {list(task.central)} do not match context "
            f"{list(context.central)}"
        )
    sections = _load_template(task.kind, config.template_dir)
    _check_sections(task.kind, sections, TASK_SECTIONS)
    values = {
        "task_description": task.description,
        "central_ids": format_id_list(context.central),
        "node_texts": _format_node_texts(context, texts),
        "connections": format_edge_list(context.edges),
        "sample_count": str(config.sample_count),
        "options": ", ".join(f"<{opt}>" for opt in task.options),
    }
    rendered = [(sec, _substitute(body, values)) for sec, body in sections]
    return _assemble(rendered)


def render_diversity_prompt(
    first: Subgraph,
    second: Subgraph,
    template_dir: Path | None = None,
) -> RenderedPrompt:
    """Render the pairwise structural-distance prompt for an LLM judge.

    Only structure is shown (ids and connections); the judge scores how
    different the two subgraphs are on a 0-to-1 scale.
    """
    sections = _load_template("diversity_judge", template_dir)
    _check_sections("diversity_judge", sections, DIVERSITY_SECTIONS)

    def block(g: Subgraph, tag: str) -> dict[str, str]:
        neighbors = format_id_list(sorted(g.neighbors)) if g.neighbors else "[]"
        return {
            f"central_ids_{tag}": format_id_list(g.central) if g.central else "[]",
            f"neighbor_ids_{tag}": neighbors,
            f"connections_{tag}": format_edge_list(g.edges),
        }

    values = {**block(first, "1"), **block(second, "2")}
    rendered = [(sec, _substitute(body, values)) for sec, body in sections]
    return _assemble(rendered)


# --- prompt re-parsing -----------------------------------------------------
#
# Scripted policies and round-trip tests need to recover the structured
# inputs from a rendered prompt.  This is intentionally strict: it reads
# the exact layout produced above, not arbitrary model output.

_NODE_TEXT_LINE_RE = re.compile(r"^(node\d+): (.*)$")
_EDGE_ITEM_RE = re.compile(r"<(node\d+), (node\d+)>")
_OPTION_RE = re.compile(r"<([^<>]+)>")


def parse_prompt_context(
    prompt_text: str,
) -> tuple[Subgraph, dict[int, str], list[str]]:
    """Recover (context subgraph, node texts, options) from a rendered prompt."""
    lines = prompt_text.splitlines()
    central: list[int] = []
    texts: dict[int, str] = {}
    edges: list[tuple[int, int]] = []
    options: list[str] = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("- Central node ID(s): "):
            ids = line.removeprefix("- Central node ID(s): ")
            central = [parse_node_name(tok.strip()) for tok in ids.split(",")]
        elif line.startswith("- Node texts"):
            if not line.rstrip().endswith("["):
                raise PromptError("node text block must open with '['")
            i += 1
            while i < len(lines) and lines[i].strip() != "]":
                m = _NODE_TEXT_LINE_RE.match(lines[i])
                if not m:
                    raise PromptError(f"bad node text line: {lines[i]!r}")
                texts[parse_node_name(m.group(1))] = m.group(2)
                i += 1
        elif line.startswith("- Connection relationships: "):
            for a, b in _EDGE_ITEM_RE.findall(line):
                edges.append((parse_node_name(a), parse_node_name(b)))
        elif "Options**: " in line:
            options = _OPTION_RE.findall(line.split("Options**: ", 1)[1])
        i += 1
    if not central or not texts:
        raise PromptError("prompt does not contain a complete-subgraph block")
    context = Subgraph.make(
        central=central,
        neighbors=set(texts) - set(central),
        edges=edges,
    )
    return context, texts, options
