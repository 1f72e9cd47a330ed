"""Staged verifiable rewards and group-relative advantages.

Stage 1 scores format discipline and correctness::

    r1 = 1.0   if real and consistent and answer correct
         0.1   if real and consistent but answer wrong
         0.05  if real but inconsistent
         0.0   if not real

Stage 2 adds a denoising bonus on top of fully correct completions:
``r2 = 1 + lambda * r_s`` where ``r_s = rho / (|S| - 1)`` and ``rho``
counts candidates strictly larger than the chosen one.  Picking the
smallest of 5 candidates earns ``r_s = 1``; picking the largest earns
``r_s = 0``; ties share a rank.  Anything short of r1 = 1.0 passes
through unchanged, so the bonus never rescues a broken completion.

Group advantages follow the group-relative scheme: rewards are centered
by the group mean and scaled by the population standard deviation, with
an all-zero fallback for constant groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .graphs import Subgraph, TaskInstance
from .traces import ParseReport, parse_trace
from .verifier import DistanceProvider, VerifyOutcome, verify


class Stage(str, Enum):
    STAGE1_AUTHENTICITY = "stage1_authenticity"
    STAGE2_DENOISING = "stage2_denoising"

    @classmethod
    def coerce(cls, value) -> "Stage":
        """Accept enum values, their strings, or the integers 1/2."""
        if isinstance(value, cls):
            return value
        if value in (1, "1"):
            return cls.STAGE1_AUTHENTICITY
        if value in (2, "2"):
            return cls.STAGE2_DENOISING
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown stage {value!r}") from None


class SizeMetric(str, Enum):
    NODE_COUNT = "node_count"
    NODE_PLUS_EDGE_COUNT = "node_plus_edge_count"


R1_VALUES = (0.0, 0.05, 0.1, 1.0)


@dataclass(frozen=True)
class RewardConfig:
    """Scoring knobs: stage, bonus weight, and size metric."""

    stage: Stage = Stage.STAGE1_AUTHENTICITY
    lambda_weight: float = 0.1
    size_metric: SizeMetric = SizeMetric.NODE_COUNT

    def __post_init__(self) -> None:
        if self.lambda_weight < 0:
            raise ValueError("lambda_weight must be non-negative")


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-completion reward decomposition.

    ``r_s``/``rho`` are present only when the stage-2 bonus applied,
    which requires r1 = 1.0 and at least two candidates to rank.
    """

    r1: float
    r2: float
    stage: Stage
    r_s: float | None = None
    rho: int | None = None
    chosen_size: int | None = None


def subgraph_size(g: Subgraph, metric: SizeMetric = SizeMetric.NODE_COUNT) -> int:
    """Candidate size under the configured metric."""
    base = len(g.central) + len(g.neighbors)
    if metric == SizeMetric.NODE_PLUS_EDGE_COUNT:
        return base + len(g.edges)
    return base


def reward_r1(outcome: VerifyOutcome) -> float:
    """Stage-1 reward from the three checks.

    Requires the answer check to have run: outcomes without it (no gold
    label, or a cascade that stopped early) cannot be scored.
    """
    if not outcome.status_real:
        return 0.0
    if not outcome.status_consist:
        return 0.05
    if outcome.status_ans is None:
        raise ValueError("cannot score r1: answer status absent (no gold label?)")
    return 1.0 if outcome.status_ans else 0.1


def size_rank(
    candidates: Sequence[Subgraph],
    chosen_index: int,
    metric: SizeMetric = SizeMetric.NODE_COUNT,
) -> tuple[int, float]:
    """Rank of the chosen candidate by size, as (rho, r_s).

    ``rho`` is the number of candidates strictly larger than the chosen
    one, so equal sizes share a rank.  ``r_s = rho / (|S| - 1)`` lands in
    [0, 1] with 1 for a unique smallest choice.
    """
    n = len(candidates)
    if n < 2:
        raise ValueError("size rank needs at least two candidates")
    if not 0 <= chosen_index < n:
        raise IndexError(f"chosen index {chosen_index} out of range for {n} candidates")
    sizes = [subgraph_size(c, metric) for c in candidates]
    chosen = sizes[chosen_index]
    rho = sum(1 for s in sizes if s > chosen)
    return rho, rho / (n - 1)


def reward_r2(
    outcome: VerifyOutcome,
    candidates: Sequence[Subgraph],
    chosen_index: int | None,
    config: RewardConfig,
) -> RewardBreakdown:
    """Full staged reward for one completion.

    In stage 1, or whenever r1 < 1.0, this is just r1.  The stage-2
    bonus needs a rankable group: with fewer than two candidates there
    is no size contrast and no bonus is granted.
    """
    r1 = reward_r1(outcome)
    chosen_size = None
    if chosen_index is not None and 0 <= chosen_index < len(candidates):
        chosen_size = subgraph_size(candidates[chosen_index], config.size_metric)
    if (
        config.stage == Stage.STAGE2_DENOISING
        and r1 == 1.0
        and len(candidates) >= 2
    ):
        rho, r_s = size_rank(candidates, chosen_index, config.size_metric)
        return RewardBreakdown(
            r1=r1,
            r2=1.0 + config.lambda_weight * r_s,
            stage=config.stage,
            r_s=r_s,
            rho=rho,
            chosen_size=chosen_size,
        )
    return RewardBreakdown(
        r1=r1, r2=r1, stage=config.stage, chosen_size=chosen_size
    )


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Group-relative advantages: center by mean, scale by population stdev.

    A constant group carries no learning signal and maps to all zeros.
    Otherwise the output has mean 0 and population stdev 1 up to float
    rounding.
    """
    if not rewards:
        raise ValueError("empty reward group")
    n = len(rewards)
    # variance == 0 is unreliable here: summing equal floats can leave a
    # residue that normalization would blow up to full-scale advantages
    if min(rewards) == max(rewards):
        return [0.0] * n
    mean = math.fsum(rewards) / n
    stdev = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)
    return [(r - mean) / stdev for r in rewards]


@dataclass(frozen=True)
class GroupScores:
    """Rewards and advantages for one completion group, index-aligned."""

    rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    @classmethod
    def from_rewards(cls, rewards: Sequence[float]) -> "GroupScores":
        return cls(
            rewards=tuple(rewards),
            advantages=tuple(group_advantages(rewards)),
        )


def grpo_objective(
    ratios: Sequence[float],
    advantages: Sequence[float],
    kl: Sequence[float],
    epsilon: float = 0.2,
    beta: float = 0.01,
) -> float:
    """Clipped surrogate loss over one group.

    ``loss = -(1/G) * sum_i [min(ratio_i * A_i,
    clip(ratio_i, 1 - eps, 1 + eps) * A_i) - beta * kl_i]``.  Inputs are
    index-aligned; this is the quantity a trainer would minimize.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not (len(ratios) == len(advantages) == len(kl)):
        raise ValueError("ratios, advantages, and kl must be index-aligned")
    if not ratios:
        raise ValueError("empty group")
    total = 0.0
    for ratio, adv, k in zip(ratios, advantages, kl):
        clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
        total += min(ratio * adv, clipped * adv) - beta * k
    return -total / len(ratios)


class ScoredCompletion(NamedTuple):
    """Parse, verify, and reward results for one completion."""

    report: ParseReport
    outcome: VerifyOutcome
    breakdown: RewardBreakdown


def score_completions(
    context: Subgraph,
    task: TaskInstance,
    completions: Sequence[str],
    config: RewardConfig | None = None,
    *,
    expected_k: int = 5,
    distance: DistanceProvider | None = None,
) -> list[ScoredCompletion]:
    """Run the parse/verify/reward pipeline over raw completions.

    Requires a gold label on the task; rewards are undefined without
    one.  Malformed completions come back with zeroed rewards and their
    defect lists, never an exception.
    """
    if task.gold_label is None:
        raise ValueError("scoring requires a task with a gold label")
    config = config or RewardConfig()
    scored = []
    for completion in completions:
        report = parse_trace(completion, expected_k=expected_k)
        outcome = verify(
            context, report.trace, task, expected_k=expected_k, distance=distance
        )
        breakdown = reward_r2(
            outcome, report.trace.candidates, report.trace.chosen_index, config
        )
        scored.append(ScoredCompletion(report, outcome, breakdown))
    return scored


def score_group(
    context: Subgraph,
    task: TaskInstance,
    completions: Sequence[str],
    config: RewardConfig | None = None,
    *,
    expected_k: int = 5,
    distance: DistanceProvider | None = None,
) -> tuple[list[ScoredCompletion], GroupScores]:
    """Score a completion group and derive its relative advantages."""
    scored = score_completions(
        context, task, completions, config, expected_k=expected_k, distance=distance
    )
    return scored, GroupScores.from_rewards([s.breakdown.r2 for s in scored])


__all__ = [
    "GroupScores",
    "R1_VALUES",
    "RewardBreakdown",
    "RewardConfig",
    "ScoredCompletion",
    "SizeMetric",
    "Stage",
    "group_advantages",
    "grpo_objective",
    "reward_r1",
    "reward_r2",
    "score_completions",
    "score_group",
    "size_rank",
    "subgraph_size",
]
