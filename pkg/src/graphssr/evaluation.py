"""Evaluation harness: scripted policies, planted-noise suites, sweeps.

Scripted policies stand in for a model: they read a rendered prompt,
reconstruct the context, build nested candidate subgraphs (central-only
up to the full context, adding neighbors in ascending id order), choose
one by a fixed rule, and answer by counting option keywords in the
chosen candidate's node texts.  They emit canonical trace text, so the
whole parse/verify/reward pipeline runs exactly as it would on model
output.

The planted-noise suite makes denoising measurable: each task is a star
whose two lowest-id neighbors carry the gold keyword once each and the
other two carry a decoy keyword twice each.  Reasoning over the full
context is dominated by the decoy; the correct answer requires settling
on the small clean candidate.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .chat import ChatError
from .graphs import Subgraph, TaskInstance
from .prompts import PromptConfig, parse_prompt_context, render_task_prompt
from .rewards import (
    RewardConfig,
    SizeMetric,
    Stage,
    score_completions,
    subgraph_size,
)
from .synth import GraphTask
from .traces import SsrTrace, format_trace
from .verifier import DistanceProvider

POLICY_BEHAVIORS = (
    "oracle_denoiser",
    "greedy_largest",
    "central_only",
    "random_choice",
)

_TOPICS = ("Astronomy", "Botany", "Chemistry", "Geology", "Linguistics", "Economics")


def _keyword_counts(
    nodes: Iterable[int], texts: dict[int, str], options: Sequence[str]
) -> list[int]:
    counts = []
    for opt in options:
        needle = opt.casefold()
        counts.append(sum(texts[n].casefold().count(needle) for n in nodes))
    return counts


def _histogram_answer(
    cand: Subgraph, texts: dict[int, str], options: Sequence[str]
) -> str:
    counts = _keyword_counts(cand.nodes, texts, options)
    best = max(counts)
    if best == 0:
        return options[0]
    return options[counts.index(best)]


def _nested_candidates(context: Subgraph, k: int) -> list[Subgraph]:
    """Central-only plus growing prefixes of the sorted neighbor list."""
    neighbors = sorted(context.neighbors)
    out = []
    for take in range(0, min(k - 1, len(neighbors)) + 1):
        nodes = set(context.central) | set(neighbors[:take])
        edges = {e for e in context.edges if e[0] in nodes and e[1] in nodes}
        out.append(
            Subgraph.make(context.central, set(neighbors[:take]), edges)
        )
    return out


class ScriptedPolicy:
    """Deterministic prompt-to-completion policy with a named behavior.

    ``oracle_denoiser`` picks the candidate whose texts agree most
    cleanly on one option (highest purity, then smallest, then first);
    ``greedy_largest`` always takes the biggest candidate;
    ``central_only`` always takes the bare central node;
    ``random_choice`` picks uniformly with a seeded generator.
    """

    def __init__(self, behavior: str, seed: int = 0, sample_count: int = 5) -> None:
        if behavior not in POLICY_BEHAVIORS:
            raise ValueError(f"unknown behavior {behavior!r}; pick from {POLICY_BEHAVIORS}")
        self.behavior = behavior
        self.seed = seed
        self.sample_count = sample_count
        self._rng = random.Random(seed)

    def _choose(
        self,
        candidates: Sequence[Subgraph],
        texts: dict[int, str],
        options: Sequence[str],
        rng: random.Random,
    ) -> int:
        if self.behavior == "central_only":
            return 0
        if self.behavior == "greedy_largest":
            sizes = [c.node_count() for c in candidates]
            return sizes.index(max(sizes))
        if self.behavior == "random_choice":
            return rng.randrange(len(candidates))
        # oracle_denoiser: purity = (modal - rest) / size, preferring
        # smaller candidates and then earlier ones on ties.
        best_idx = 0
        best_key: tuple[float, int, int] | None = None
        for i, cand in enumerate(candidates):
            counts = _keyword_counts(cand.nodes, texts, options)
            modal = max(counts)
            rest = sum(counts) - modal
            purity = (modal - rest) / cand.node_count()
            key = (-purity, cand.node_count(), i)
            if best_key is None or key < best_key:
                best_key = key
                best_idx = i
        return best_idx

    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        context, texts, options = parse_prompt_context(prompt)
        if not options:
            raise ChatError("prompt carries no options; cannot answer")
        rng = self._rng if seed is None else random.Random(f"{self.seed}:{seed}")
        candidates = _nested_candidates(context, self.sample_count)
        idx = self._choose(candidates, texts, options, rng)
        chosen = candidates[idx]
        trace = SsrTrace(
            candidates=tuple(candidates),
            chosen_index=idx,
            chosen_reason=f"Selected by the {self.behavior} rule.",
            repeated_subgraph=chosen,
            answer=_histogram_answer(chosen, texts, options),
            brief_reasoning="Answer follows the dominant option keyword in the chosen subgraph.",
        )
        return format_trace(trace)


class SizeSensitivePolicy:
    """Picks by the utility ``log(size) - lambda * size``.

    With ``lambda = 0`` it behaves like greedy_largest; raising lambda
    walks the choice monotonically down the size ladder.  Everything
    else (candidate construction, answering) matches ScriptedPolicy.
    """

    def __init__(self, lambda_weight: float, sample_count: int = 5) -> None:
        if lambda_weight < 0:
            raise ValueError("lambda_weight must be non-negative")
        self.lambda_weight = lambda_weight
        self.sample_count = sample_count

    def complete(
        self, prompt: str, *, temperature: float | None = None, seed: int | None = None
    ) -> str:
        context, texts, options = parse_prompt_context(prompt)
        candidates = _nested_candidates(context, self.sample_count)
        best_idx = 0
        best_utility = -math.inf
        for i, cand in enumerate(candidates):
            size = cand.node_count()
            utility = math.log(size) - self.lambda_weight * size
            if utility > best_utility:
                best_utility = utility
                best_idx = i
        chosen = candidates[best_idx]
        trace = SsrTrace(
            candidates=tuple(candidates),
            chosen_index=best_idx,
            chosen_reason=(
                f"Selected by size utility with lambda={self.lambda_weight}."
            ),
            repeated_subgraph=chosen,
            answer=_histogram_answer(chosen, texts, options),
            brief_reasoning="Answer follows the dominant option keyword in the chosen subgraph.",
        )
        return format_trace(trace)


def make_planted_noise_suite(n_tasks: int, seed: int = 0) -> list[GraphTask]:
    """Build a deterministic star-graph suite with planted label noise.

    Each task has four neighbors: the two lowest ids support the gold
    label (one keyword each) and the two highest push a decoy label
    (two keywords each), so the full context votes for the decoy 4-2
    while the clean two-neighbor candidate votes gold 2-0.
    """
    if n_tasks < 1:
        raise ValueError("n_tasks must be positive")
    rng = random.Random(seed)
    tasks: list[GraphTask] = []
    for i in range(n_tasks):
        picked = rng.sample(_TOPICS, 4)
        gold = rng.choice(picked)
        decoy = rng.choice([t for t in picked if t != gold])
        base = 100 * i
        clean_ids = (base, base + 1)
        noisy_ids = (base + 2, base + 3)
        central = base + 4
        texts = {
            central: "Working notes on survey design and general methodology.",
        }
        for nid in clean_ids:
            texts[nid] = f"Careful study of {gold.lower()} with new field measurements."
        for nid in noisy_ids:
            texts[nid] = (
                f"Popular overview of {decoy.lower()} trends and {decoy.lower()} curricula."
            )
        edges = [(central, nid) for nid in clean_ids + noisy_ids]
        context = Subgraph.make((central,), clean_ids + noisy_ids, edges)
        options = list(picked)
        rng.shuffle(options)
        task = TaskInstance(
            kind="node_classification",
            central=(central,),
            options=tuple(options),
            description="",
            gold_label=gold,
        )
        clean = Subgraph.make(
            (central,), clean_ids, [(central, nid) for nid in clean_ids]
        )
        tasks.append(
            GraphTask(
                instance_id=f"planted-{seed}-{i:04d}",
                task=task,
                context=context,
                texts=texts,
                clean_subgraph=clean,
            )
        )
    return tasks


@dataclass(frozen=True)
class EvalReport:
    """Aggregate evaluation results over one task suite.

    ``accuracy`` is the answer check alone; ``full_success`` demands the
    whole pipeline held (r1 = 1.0).  ``avg_selected_size`` averages over
    tasks with a valid choice; ``policy_failures`` counts transport
    errors, which score as wrong but are reported separately.
    """

    n: int
    accuracy: float
    full_success: float
    mean_r1: float
    mean_r2: float
    avg_selected_size: float
    avg_context_size: float
    rate_real: float
    rate_consist: float
    policy_failures: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "full_success": self.full_success,
            "mean_r1": self.mean_r1,
            "mean_r2": self.mean_r2,
            "avg_selected_size": self.avg_selected_size,
            "avg_context_size": self.avg_context_size,
            "rate_real": self.rate_real,
            "rate_consist": self.rate_consist,
            "policy_failures": self.policy_failures,
        }


def evaluate(
    tasks: Sequence[GraphTask],
    policy,
    config: RewardConfig | None = None,
    *,
    expected_k: int = 5,
    distance: DistanceProvider | None = None,
    template_dir: Path | None = None,
) -> EvalReport:
    """Run a policy over a suite and aggregate pipeline statistics.

    Tasks must carry gold labels.  The policy is any object with the
    chat ``complete`` signature, scripted or remote.
    """
    if not tasks:
        raise ValueError("empty task suite")
    config = config or RewardConfig()
    correct = full = real = consist = failures = 0
    r1_sum = r2_sum = 0.0
    selected_sizes: list[int] = []
    context_sizes: list[int] = []
    for gt in tasks:
        context_sizes.append(subgraph_size(gt.context, config.size_metric))
        prompt = render_task_prompt(
            gt.context,
            gt.texts,
            gt.task,
            PromptConfig(sample_count=expected_k, template_dir=template_dir),
        ).text
        try:
            completion = policy.complete(prompt)
        except ChatError:
            failures += 1
            continue
        scored = score_completions(
            gt.context, gt.task, [completion], config,
            expected_k=expected_k, distance=distance,
        )[0]
        outcome, breakdown = scored.outcome, scored.breakdown
        correct += 1 if outcome.status_ans else 0
        full += 1 if breakdown.r1 == 1.0 else 0
        real += 1 if outcome.status_real else 0
        consist += 1 if outcome.status_consist else 0
        r1_sum += breakdown.r1
        r2_sum += breakdown.r2
        if breakdown.chosen_size is not None:
            selected_sizes.append(breakdown.chosen_size)
    n = len(tasks)
    return EvalReport(
        n=n,
        accuracy=correct / n,
        full_success=full / n,
        mean_r1=r1_sum / n,
        mean_r2=r2_sum / n,
        avg_selected_size=(
            sum(selected_sizes) / len(selected_sizes) if selected_sizes else float("nan")
        ),
        avg_context_size=sum(context_sizes) / len(context_sizes),
        rate_real=real / n,
        rate_consist=consist / n,
        policy_failures=failures,
    )


@dataclass(frozen=True)
class SweepRow:
    lambda_weight: float
    accuracy: float
    avg_selected_size: float
    n: int


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]

    def to_csv(self) -> str:
        lines = ["lambda,accuracy,avg_selected_size,n"]
        for row in self.rows:
            lines.append(
                f"{row.lambda_weight},{row.accuracy},{row.avg_selected_size},{row.n}"
            )
        return "\n".join(lines) + "\n"


def lambda_sweep(
    tasks: Sequence[GraphTask],
    lambdas: Sequence[float],
    *,
    expected_k: int = 5,
    policy_factory: Callable[[float], object] | None = None,
    size_metric: SizeMetric = SizeMetric.NODE_COUNT,
) -> SweepTable:
    """Evaluate a size-sensitive policy family across bonus weights.

    Each lambda gets a fresh policy (default: SizeSensitivePolicy) and a
    stage-2 reward config with the same weight, so the sweep shows how
    denoising pressure trades selected-subgraph size against accuracy.
    """
    if not lambdas:
        raise ValueError("need at least one lambda")
    factory = policy_factory or (
        lambda lam: SizeSensitivePolicy(lam, sample_count=expected_k)
    )
    rows = []
    for lam in lambdas:
        config = RewardConfig(
            stage=Stage.STAGE2_DENOISING, lambda_weight=lam, size_metric=size_metric
        )
        report = evaluate(tasks, factory(lam), config, expected_k=expected_k)
        rows.append(
            SweepRow(
                lambda_weight=lam,
                accuracy=report.accuracy,
                avg_selected_size=report.avg_selected_size,
                n=report.n,
            )
        )
    return SweepTable(rows=tuple(rows))
