"""Sample-select-reason (SSR) tooling for graph reasoning with language models.

The package covers the deterministic half of an SSR training pipeline:
rendering subgraph prompts, parsing structured sampling traces, verifying
them against the source graph, computing staged verifiable rewards and
group-relative advantages, synthesizing filtered SFT/RL datasets, and
serving rewards over HTTP.
"""

__version__ = "0.1.0"

from .graphs import (
    GraphFormatError,
    Subgraph,
    TagDocument,
    TaskInstance,
    TextGraph,
    ego_subgraph,
    is_subgraph_of,
    load_document,
    node_name,
    parse_node_name,
)
from .traces import ParseReport, SsrTrace, parse_trace, format_trace
from .verifier import (
    VerifyOutcome,
    check_answer,
    check_authenticity,
    check_consistency,
    group_energy,
    jaccard_distance,
    normalize_label,
    verify,
)
from .rewards import (
    GroupScores,
    RewardBreakdown,
    RewardConfig,
    SizeMetric,
    Stage,
    group_advantages,
    grpo_objective,
    reward_r1,
    reward_r2,
    size_rank,
)

__all__ = [
    "GraphFormatError",
    "GroupScores",
    "ParseReport",
    "RewardBreakdown",
    "RewardConfig",
    "SizeMetric",
    "SsrTrace",
    "Stage",
    "Subgraph",
    "TagDocument",
    "TaskInstance",
    "TextGraph",
    "VerifyOutcome",
    "check_answer",
    "check_authenticity",
    "check_consistency",
    "ego_subgraph",
    "format_trace",
    "group_advantages",
    "group_energy",
    "grpo_objective",
    "is_subgraph_of",
    "jaccard_distance",
    "load_document",
    "node_name",
    "normalize_label",
    "parse_node_name",
    "parse_trace",
    "reward_r1",
    "reward_r2",
    "size_rank",
    "verify",
]
