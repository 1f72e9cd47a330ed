"""Dataset synthesis: SFT filtering cascade and RL pool construction.

SFT records come from a teacher model and pass through four filters in
a fixed order, each gating the next:

1. authenticity  - every sampled candidate exists in the context;
2. diversity     - mean pairwise candidate distance meets a threshold
                   (judged only when authenticity held, so the judge is
                   never paid for fabricated groups);
3. consistency   - chosen index valid and restatement matches;
4. answer        - final answer equals the gold label.

Every teacher completion produces a record, retained or not, including
teacher transport failures; nothing is dropped silently.  Checks past a
failed filter are left unevaluated (None) in the record.

RL instances are grouped into difficulty tiers by how often a policy
solves them (easy: >= 4/5 trials fully correct, hard: <= 1/5, medium
otherwise) and sampled into a fixed easy:medium:hard ratio, with
shortfalls in an undersupplied tier redistributed proportionally to the
remaining tiers.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .chat import ChatClient, ChatError
from .graphs import Subgraph, TaskInstance
from .prompts import PromptConfig, render_task_prompt
from .rewards import Stage, reward_r1
from .serialize import (
    canonical_json,
    defects_to_list,
    outcome_to_dict,
    subgraph_from_dict,
    subgraph_to_dict,
    trace_to_dict,
)
from .traces import ParseReport, parse_trace
from .verifier import (
    DistanceProvider,
    VerifyOutcome,
    check_answer,
    check_authenticity,
    check_consistency,
    group_energy,
    structural_flags,
    verify,
)


class Tier(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


TIER_ORDER = (Tier.EASY, Tier.MEDIUM, Tier.HARD)


class RejectionReason(str, Enum):
    AUTHENTICITY = "authenticity"
    DIVERSITY = "diversity"
    CONSISTENCY = "consistency"
    ANSWER_CHECK = "answer_check"
    TEACHER_ERROR = "teacher_error"


@dataclass(frozen=True)
class GraphTask:
    """One task plus the context it is asked over.

    ``texts`` must cover every node of ``context``.  ``clean_subgraph``
    optionally records a known-good denoised subgraph for oracle
    policies and diagnostics; the pipeline itself never requires it.
    """

    instance_id: str
    task: TaskInstance
    context: Subgraph
    texts: Mapping[int, str]
    clean_subgraph: Subgraph | None = None


@dataclass(frozen=True)
class FilterConfig:
    """Synthesis knobs: group size, diversity bar, teacher temperature."""

    expected_k: int = 5
    diversity_threshold: float = 0.3
    temperature: float = 0.6
    concurrency: int = 1
    template_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.expected_k < 2:
            raise ValueError("expected_k must be at least 2")
        if not 0.0 <= self.diversity_threshold <= 1.0:
            raise ValueError("diversity_threshold must lie in [0, 1]")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")


@dataclass(frozen=True)
class SynthRecord:
    """One teacher completion with its filter verdict."""

    instance_id: str
    prompt: str
    completion: str
    report: ParseReport
    outcome: VerifyOutcome | None
    retained: bool
    rejection_reason: RejectionReason | None

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "prompt": self.prompt,
            "completion": self.completion,
            "trace": trace_to_dict(self.report.trace),
            "defects": defects_to_list(self.report),
            "verify": None if self.outcome is None else outcome_to_dict(self.outcome),
            "retained": self.retained,
            "rejection_reason": (
                None if self.rejection_reason is None else self.rejection_reason.value
            ),
        }


def graph_task_to_dict(gt: GraphTask) -> dict:
    out = {
        "instance_id": gt.instance_id,
        "task": gt.task.to_dict(),
        "context": subgraph_to_dict(gt.context, dict(gt.texts)),
    }
    if gt.clean_subgraph is not None:
        out["clean_subgraph"] = subgraph_to_dict(gt.clean_subgraph)
    return out


def graph_task_from_dict(raw: Mapping) -> GraphTask:
    context, texts = subgraph_from_dict(raw["context"])
    if texts is None:
        raise ValueError(f"instance {raw.get('instance_id')!r}: context lacks texts")
    clean = raw.get("clean_subgraph")
    return GraphTask(
        instance_id=str(raw["instance_id"]),
        task=TaskInstance.from_dict(raw["task"]),
        context=context,
        texts=texts,
        clean_subgraph=None if clean is None else subgraph_from_dict(clean)[0],
    )


def _run_cascade(
    gt: GraphTask,
    report: ParseReport,
    judge: DistanceProvider,
    config: FilterConfig,
) -> tuple[VerifyOutcome, bool, RejectionReason | None]:
    trace = report.trace
    flags = structural_flags(gt.context, trace, config.expected_k)
    real = check_authenticity(gt.context, trace)
    if not real:
        outcome = VerifyOutcome(real, None, None, None, None, flags)
        return outcome, False, RejectionReason.AUTHENTICITY
    energy = mean = None
    if len(trace.candidates) >= 2:
        energy, mean = group_energy(trace.candidates, judge)
    if mean is None or mean < config.diversity_threshold:
        outcome = VerifyOutcome(real, None, None, energy, mean, flags)
        return outcome, False, RejectionReason.DIVERSITY
    consist = check_consistency(trace)
    if not consist:
        outcome = VerifyOutcome(real, consist, None, energy, mean, flags)
        return outcome, False, RejectionReason.CONSISTENCY
    ans = check_answer(trace.answer, gt.task)
    outcome = VerifyOutcome(real, consist, ans, energy, mean, flags)
    if not ans:
        return outcome, False, RejectionReason.ANSWER_CHECK
    return outcome, True, None


def _synthesize_one(
    gt: GraphTask,
    teacher: ChatClient,
    judge: DistanceProvider,
    config: FilterConfig,
) -> SynthRecord:
    prompt = render_task_prompt(
        gt.context,
        gt.texts,
        gt.task,
        PromptConfig(sample_count=config.expected_k, template_dir=config.template_dir),
    ).text
    try:
        completion = teacher.complete(prompt, temperature=config.temperature)
    except ChatError:
        return SynthRecord(
            instance_id=gt.instance_id,
            prompt=prompt,
            completion="",
            report=parse_trace("", expected_k=config.expected_k),
            outcome=None,
            retained=False,
            rejection_reason=RejectionReason.TEACHER_ERROR,
        )
    report = parse_trace(completion, expected_k=config.expected_k)
    outcome, retained, reason = _run_cascade(gt, report, judge, config)
    return SynthRecord(
        instance_id=gt.instance_id,
        prompt=prompt,
        completion=completion,
        report=report,
        outcome=outcome,
        retained=retained,
        rejection_reason=reason,
    )


def synthesize_sft(
    tasks: Iterable[GraphTask],
    teacher: ChatClient,
    judge: DistanceProvider,
    config: FilterConfig | None = None,
) -> Iterator[SynthRecord]:
    """Run the teacher and the filter cascade over a task stream.

    Records come out in task order regardless of concurrency, so two
    runs over the same scripted teacher produce identical corpora.
    Tasks must carry gold labels; the answer filter is not optional.
    """
    config = config or FilterConfig()
    task_list = list(tasks)
    for gt in task_list:
        if gt.task.gold_label is None:
            raise ValueError(f"instance {gt.instance_id!r} has no gold label")
    if config.concurrency == 1:
        for gt in task_list:
            yield _synthesize_one(gt, teacher, judge, config)
        return
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        yield from pool.map(
            lambda gt: _synthesize_one(gt, teacher, judge, config), task_list
        )


def write_records(records: Iterable[SynthRecord], fh: IO[str]) -> int:
    """Stream records to JSONL in canonical form; returns the count."""
    n = 0
    for record in records:
        fh.write(canonical_json(record.to_dict()) + "\n")
        n += 1
    return n


def sft_export(records: Iterable[SynthRecord]) -> Iterator[dict]:
    """Retained records as bare {"prompt", "completion"} training pairs."""
    for record in records:
        if record.retained:
            yield {"prompt": record.prompt, "completion": record.completion}


# --- difficulty tiers and RL pool ------------------------------------------


@dataclass(frozen=True)
class DifficultyAssessment:
    instance_id: str
    tier: Tier
    correct_count: int
    trials: int


def tier_for_count(correct_count: int, trials: int = 5) -> Tier:
    """Tier from the fraction of fully correct trials.

    Thresholds rescale with ``trials``: at least 4/5 correct is easy, at
    most 1/5 is hard, in between is medium.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= correct_count <= trials:
        raise ValueError("correct_count out of range")
    fraction = correct_count / trials
    if fraction >= 4 / 5:
        return Tier.EASY
    if fraction <= 1 / 5:
        return Tier.HARD
    return Tier.MEDIUM


def assess_difficulty(
    gt: GraphTask,
    policy: ChatClient,
    *,
    trials: int = 5,
    expected_k: int = 5,
    temperature: float = 1.0,
    template_dir: Path | None = None,
) -> DifficultyAssessment:
    """Try a task ``trials`` times and count fully correct completions.

    Fully correct means r1 = 1.0: authentic, consistent, and right.
    Policy transport errors count as incorrect trials.
    """
    if gt.task.gold_label is None:
        raise ValueError(f"instance {gt.instance_id!r} has no gold label")
    prompt = render_task_prompt(
        gt.context,
        gt.texts,
        gt.task,
        PromptConfig(sample_count=expected_k, template_dir=template_dir),
    ).text
    correct = 0
    for trial in range(trials):
        try:
            completion = policy.complete(prompt, temperature=temperature, seed=trial)
        except ChatError:
            continue
        report = parse_trace(completion, expected_k=expected_k)
        outcome = verify(gt.context, report.trace, gt.task, expected_k=expected_k)
        if reward_r1(outcome) == 1.0:
            correct += 1
    return DifficultyAssessment(
        instance_id=gt.instance_id,
        tier=tier_for_count(correct, trials),
        correct_count=correct,
        trials=trials,
    )


@dataclass(frozen=True)
class RlDataset:
    """Sampled RL pool with the bookkeeping behind its tier mix.

    ``instances`` pairs each task with its tier, ordered easy, medium,
    hard.  ``quotas`` is the ideal split before supply caps;
    ``selected`` the final counts; ``redistributed`` how many samples a
    tier absorbed from undersupplied ones.
    """

    instances: tuple[tuple[GraphTask, Tier], ...]
    quotas: dict[Tier, int]
    selected: dict[Tier, int]
    redistributed: dict[Tier, int]


def _apportion(total: int, weights: Sequence[float]) -> list[int]:
    """Split ``total`` proportionally to ``weights`` into integers.

    Round-half-to-even on each share, then fix the residue by largest
    fractional remainder (ties go to the earlier index).
    """
    weight_sum = sum(weights)
    if total < 0 or weight_sum <= 0:
        raise ValueError("need a non-negative total and positive weights")
    raw = [total * w / weight_sum for w in weights]
    base = [round(r) for r in raw]
    diff = total - sum(base)
    if diff > 0:
        order = sorted(range(len(raw)), key=lambda i: (base[i] - raw[i], i))
        for i in order[:diff]:
            base[i] += 1
    elif diff < 0:
        order = sorted(
            range(len(raw)), key=lambda i: (raw[i] - base[i], i)
        )
        removed = 0
        for i in order:
            if removed == -diff:
                break
            if base[i] > 0:
                base[i] -= 1
                removed += 1
    return base


def build_rl_dataset(
    pool: Iterable[tuple[GraphTask, Tier]],
    target: int,
    ratio: tuple[float, float, float] = (2, 2, 1),
    seed: int = 0,
) -> RlDataset:
    """Sample a tiered RL dataset of ``target`` instances from a pool.

    ``ratio`` is (easy, medium, hard).  Sampling is without replacement
    per tier with a seeded generator, so the same pool, target, and seed
    reproduce the same dataset.  A tier short on supply contributes all
    it has and the gap moves to the other tiers in ratio proportion.
    """
    if target < 1:
        raise ValueError("target must be positive")
    if len(ratio) != 3 or any(w < 0 for w in ratio) or sum(ratio) <= 0:
        raise ValueError("ratio must be three non-negative weights, not all zero")
    groups: dict[Tier, list[GraphTask]] = {t: [] for t in TIER_ORDER}
    for gt, tier in pool:
        groups[Tier(tier)].append(gt)
    supply = {t: len(groups[t]) for t in TIER_ORDER}
    if sum(supply.values()) < target:
        raise ValueError(
            f"pool has {sum(supply.values())} instances, target is {target}"
        )
    weights = dict(zip(TIER_ORDER, ratio))
    quotas = dict(zip(TIER_ORDER, _apportion(target, ratio)))
    selected = {t: min(quotas[t], supply[t]) for t in TIER_ORDER}
    shortfall = target - sum(selected.values())
    while shortfall > 0:
        spare = [t for t in TIER_ORDER if supply[t] > selected[t]]
        extra = _apportion(shortfall, [weights[t] for t in spare])
        for t, e in zip(spare, extra):
            take = min(e, supply[t] - selected[t])
            selected[t] += take
            shortfall -= take
    redistributed = {
        t: selected[t] - min(quotas[t], supply[t]) for t in TIER_ORDER
    }
    rng = random.Random(seed)
    chosen: list[tuple[GraphTask, Tier]] = []
    for t in TIER_ORDER:
        for gt in rng.sample(groups[t], selected[t]):
            chosen.append((gt, t))
    return RlDataset(
        instances=tuple(chosen),
        quotas=quotas,
        selected=selected,
        redistributed=redistributed,
    )


def write_rl_dataset(
    dataset: RlDataset, fh: IO[str], *, expected_k: int = 5
) -> int:
    """Stream RL instances to JSONL with rendered prompts; returns count."""
    n = 0
    for gt, tier in dataset.instances:
        prompt = render_task_prompt(
            gt.context, gt.texts, gt.task, PromptConfig(sample_count=expected_k)
        ).text
        record = dict(graph_task_to_dict(gt), tier=tier.value, prompt=prompt)
        fh.write(canonical_json(record) + "\n")
        n += 1
    return n


def stage_for_index(index: int, total: int, denoising_tail: int = 2048) -> Stage:
    """Training-schedule helper: the final ``denoising_tail`` instances
    of a run switch from the stage-1 reward to the stage-2 denoising
    reward.  Callers that manage their own curriculum can ignore this.
    """
    if not 0 <= index < total:
        raise ValueError("index out of range")
    if index >= total - min(denoising_tail, total):
        return Stage.STAGE2_DENOISING
    return Stage.STAGE1_AUTHENTICITY
