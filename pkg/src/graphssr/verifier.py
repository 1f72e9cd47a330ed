"""Verification of parsed traces against the source subgraph.

Three independent checks feed the staged rewards:

- authenticity: every candidate is internally coherent and actually
  contained in the context subgraph (no fabricated nodes or edges);
- consistency: the chosen index is in range and the restated subgraph,
  when present, equals the chosen candidate by set equality;
- answer: the answer matches the gold label after normalization.

Group diversity is quantified by an energy over pairwise distances:
for a candidate group S, ``energy = -(1/(|S|(|S|-1))) * sum_{i != j}
1 / max(D(g_i, g_j), epsilon)``, i.e. the negated mean inverse distance
over ordered pairs, with a small epsilon guarding identical pairs.
Lower energy means candidates crowd together; the companion
``mean_distance`` over unordered pairs is the quantity filtered against
a threshold during synthesis.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .graphs import Subgraph, TaskInstance, is_subgraph_of, normalize_label
from .prompts import render_diversity_prompt
from .traces import SsrTrace, parse_distance_score

DISTANCE_EPSILON = 1e-3

STRUCTURAL_FLAGS = (
    "wrong_candidate_count",
    "missing_central_only_candidate",
    "duplicate_candidates",
)


class DistanceError(RuntimeError):
    """The distance provider could not produce a score for a pair."""


@dataclass(frozen=True)
class VerifyOutcome:
    """Result of verifying one trace.

    ``status_ans`` is None when no gold label was available.  The
    synthesis cascade also emits partial outcomes where checks after a
    failed filter are None because they were never evaluated; outcomes
    produced by :func:`verify` always carry concrete real/consist values.
    ``energy``/``mean_distance`` are None when no distance provider ran.
    """

    status_real: bool
    status_consist: bool | None
    status_ans: bool | None
    energy: float | None = None
    mean_distance: float | None = None
    structural_flags: tuple[str, ...] = ()


def check_authenticity(context: Subgraph, trace: SsrTrace) -> bool:
    """All candidates well-formed, centered correctly, and contained.

    Every candidate must restate the context's central node set: a
    sample "around" some other node is a fabrication even if its nodes
    happen to exist. False when there are no candidates at all, since
    an empty sample set asserts nothing.
    """
    if not trace.candidates:
        return False
    return all(
        cand.central == context.central
        and cand.well_formed()
        and is_subgraph_of(cand, context)
        for cand in trace.candidates
    )


def check_consistency(trace: SsrTrace) -> bool:
    """Chosen index valid and the restatement (if any) matches it."""
    idx = trace.chosen_index
    if idx is None or not 0 <= idx < len(trace.candidates):
        return False
    if trace.repeated_subgraph is None:
        return True
    return trace.repeated_subgraph == trace.candidates[idx]


def check_answer(answer: str | None, task: TaskInstance) -> bool:
    """Normalized string equality against the gold label."""
    if task.gold_label is None:
        raise ValueError("task has no gold label")
    if answer is None:
        return False
    return normalize_label(answer) == normalize_label(task.gold_label)


def _subgraph_items(g: Subgraph) -> frozenset:
    nodes = frozenset(("n", i) for i in g.nodes)
    edges = frozenset(("e", a, b) for a, b in g.edges)
    return nodes | edges


def jaccard_distance(first: Subgraph, second: Subgraph) -> float:
    """1 - Jaccard similarity over the union of tagged node and edge items."""
    a, b = _subgraph_items(first), _subgraph_items(second)
    union = a | b
    if not union:
        return 0.0
    return 1.0 - len(a & b) / len(union)


class DistanceProvider(Protocol):
    """Symmetric pairwise distance in [0, 1] between subgraphs."""

    kind: str

    def distance(self, first: Subgraph, second: Subgraph) -> float:
        ...


class JaccardDistanceProvider:
    """Pure structural distance; cheap, deterministic, no model calls."""

    kind = "jaccard_structural"

    def distance(self, first: Subgraph, second: Subgraph) -> float:
        return jaccard_distance(first, second)


def _subgraph_key(g: Subgraph) -> str:
    return json.dumps(
        [list(g.central), sorted(g.neighbors), sorted(list(e) for e in g.edges)],
        separators=(",", ":"),
    )


def pair_digest(first: Subgraph, second: Subgraph) -> str:
    """Order-independent digest of a subgraph pair, used as cache key."""
    ka, kb = sorted((_subgraph_key(first), _subgraph_key(second)))
    return hashlib.sha256(f"{ka}\n{kb}".encode("utf-8")).hexdigest()


class LlmJudgeDistanceProvider:
    """Distance from an LLM judge prompted with the two structures.

    Scores are cached by pair digest; the cache file is append-only
    JSONL so interrupted runs resume without re-querying the judge.
    The judge sees the pair in a canonical order, which together with
    the digest makes the provider symmetric.
    """

    kind = "llm_judge"

    def __init__(self, client, cache_path: str | Path | None = None, template_dir=None):
        self._client = client
        self._template_dir = template_dir
        self._cache_path = Path(cache_path) if cache_path is not None else None
        self._cache: dict[str, float] = {}
        self._lock = threading.Lock()
        if self._cache_path is not None and self._cache_path.exists():
            for line in self._cache_path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self._cache[entry["digest"]] = float(entry["distance"])
                except (ValueError, KeyError, TypeError):
                    continue  # torn tail line from an interrupted append

    def distance(self, first: Subgraph, second: Subgraph) -> float:
        digest = pair_digest(first, second)
        with self._lock:
            if digest in self._cache:
                return self._cache[digest]
        if _subgraph_key(second) < _subgraph_key(first):
            first, second = second, first
        prompt = render_diversity_prompt(first, second, template_dir=self._template_dir)
        try:
            completion = self._client.complete(prompt.text)
        except Exception as exc:
            raise DistanceError(f"judge call failed and pair not cached: {exc}") from exc
        score, _clamped = parse_distance_score(completion)
        with self._lock:
            self._cache[digest] = score
            if self._cache_path is not None:
                record = {
                    "digest": digest,
                    "distance": score,
                    "kind": self.kind,
                    "ts": time.time(),
                }
                with self._cache_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, separators=(",", ":")) + "\n")
                    fh.flush()
        return score


def group_energy(
    candidates: Sequence[Subgraph],
    distance: DistanceProvider,
    epsilon: float = DISTANCE_EPSILON,
) -> tuple[float, float]:
    """Diversity energy and mean pairwise distance for a candidate group.

    Needs at least two candidates.  Each unordered pair is scored once;
    the ordered-pair sum in the energy follows from symmetry.
    """
    n = len(candidates)
    if n < 2:
        raise ValueError("group energy needs at least two candidates")
    pair_distances = [
        distance.distance(candidates[i], candidates[j])
        for i in range(n)
        for j in range(i + 1, n)
    ]
    mean_distance = sum(pair_distances) / len(pair_distances)
    inverse_sum = 2.0 * sum(1.0 / max(d, epsilon) for d in pair_distances)
    energy = -inverse_sum / (n * (n - 1))
    return energy, mean_distance


def structural_flags(
    context: Subgraph, trace: SsrTrace, expected_k: int
) -> tuple[str, ...]:
    """Soft diagnostics that do not affect the reward statuses."""
    flags = []
    cands = trace.candidates
    if len(cands) != expected_k:
        flags.append("wrong_candidate_count")
    central_nodes = frozenset(context.central)
    if not any(c.nodes == central_nodes for c in cands):
        flags.append("missing_central_only_candidate")
    if any(cands[i] == cands[j] for i in range(len(cands)) for j in range(i + 1, len(cands))):
        flags.append("duplicate_candidates")
    return tuple(flags)


def verify(
    context: Subgraph,
    trace: SsrTrace,
    task: TaskInstance | None = None,
    *,
    expected_k: int = 5,
    distance: DistanceProvider | None = None,
) -> VerifyOutcome:
    """Run all checks on one trace and collect the outcome.

    The answer check runs only when a task with a gold label is given;
    diversity energy only when a distance provider is given and the
    trace has at least two candidates.
    """
    status_real = check_authenticity(context, trace)
    status_consist = check_consistency(trace)
    status_ans: bool | None = None
    if task is not None and task.gold_label is not None:
        status_ans = check_answer(trace.answer, task)
    energy = mean = None
    if distance is not None and len(trace.candidates) >= 2:
        energy, mean = group_energy(trace.candidates, distance)
    return VerifyOutcome(
        status_real=status_real,
        status_consist=status_consist,
        status_ans=status_ans,
        energy=energy,
        mean_distance=mean,
        structural_flags=structural_flags(context, trace, expected_k),
    )
