"""
Scoring one model completion, end to end
========================================

Load a text-attributed graph, build the task prompt, then parse and
score a completion the way the reward service would.
"""

from pathlib import Path

from graphssr import (
    RewardConfig,
    Stage,
    ego_subgraph,
    load_document,
    parse_trace,
    reward_r2,
    verify,
)
from graphssr.prompts import PromptConfig, render_task_prompt

HERE = Path(__file__).parent

# A document bundles the graph (node texts plus undirected edges) with
# its reasoning tasks. This one is a 12-paper citation snippet.
doc = load_document(HERE / "sample_graph.json")
task = doc.tasks[0]
print(f"graph: {len(doc.graph.nodes)} nodes, {len(doc.graph.edges)} edges")
print(f"task: classify node {task.central[0]} among {list(task.options)}")

# The prompt context is the 1-hop ego subgraph around the central node:
# the paper itself, everything it cites, and the links among them.
context = ego_subgraph(doc.graph, task.central, hops=1)
print(f"context: nodes {sorted(context.nodes)}")

prompt = render_task_prompt(
    context, doc.graph.nodes, task, PromptConfig(sample_count=3)
)
print(f"prompt: {len(prompt.text)} chars, sections {[s for s, _ in prompt.manifest]}")

# A completion in the expected shape: three sampled candidate subgraphs,
# a selection with the chosen candidate restated, and a final answer.
completion = """\
Subgraph_0
Central_node_ID: node3
Neighboring_node_ID:
Connection_relationship:

Subgraph_1
Central_node_ID: node3
Neighboring_node_ID: node1,node5
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>

Subgraph_2
Central_node_ID: node3
Neighboring_node_ID: node1,node5,node7,node9
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>,<node3, node7>,<node3, node9>

Chosen_subgraph_reasoning
Chosen_subgraph: 1
Chosen_subgraph_reason: node1 and node5 both study value learning, which pins down the topic without dragging in the planning survey.
Central_node_ID: node3
Neighboring_node_ID: node1,node5
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>
Answer: Reinforcement Learning
Brief_reasoning: The central paper trains control policies by gradient ascent on expected reward; its neighborhood is temporal difference and Q-learning work.
"""

# Parsing never raises on model output. Trouble shows up as defect
# records; a clean parse has none.
report = parse_trace(completion, expected_k=3)
print(f"parsed: ok={report.ok}, candidates={len(report.trace.candidates)}")

# Verification checks three things: every candidate really is a subgraph
# of the context (real), the restated choice matches the sampled one
# (consist), and the answer equals the gold label (ans).
outcome = verify(context, report.trace, task, expected_k=3)
print(f"statuses: real={outcome.status_real}, "
      f"consist={outcome.status_consist}, ans={outcome.status_ans}")

# Stage-two scoring adds the parsimony bonus on full success: the chosen
# 3-node candidate is out-sized by one of three alternatives, so
# r_s = 1/2 and the reward is 1 + 0.1 * 0.5.
breakdown = reward_r2(
    outcome,
    report.trace.candidates,
    report.trace.chosen_index,
    RewardConfig(stage=Stage.STAGE2_DENOISING),
)
print(f"r1={breakdown.r1}  rho={breakdown.rho}  r_s={breakdown.r_s}  r2={breakdown.r2}")
