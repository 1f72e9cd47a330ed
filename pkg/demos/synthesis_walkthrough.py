"""
Distilling SFT data through the filter cascade
==============================================

Teacher completions only become training rows after clearing four gates
in order: authenticity, diversity, consistency, answer check. This
walkthrough scripts a teacher so each verdict is reproducible, then
exports the survivors as prompt/completion pairs.
"""

import io
import json
from pathlib import Path

from graphssr import ego_subgraph, load_document
from graphssr.chat import ScriptedChatClient
from graphssr.prompts import PromptConfig, render_task_prompt
from graphssr.synth import FilterConfig, GraphTask, sft_export, synthesize_sft, write_records
from graphssr.verifier import JaccardDistanceProvider

HERE = Path(__file__).parent

doc = load_document(HERE / "sample_graph.json")
task = doc.tasks[0]

# Three copies of the same task so the three teacher behaviors can be
# compared on an identical context.
tasks = []
for i in range(3):
    context = ego_subgraph(doc.graph, task.central, hops=1)
    texts = {n: doc.graph.nodes[n] for n in context.nodes}
    # tag one text per instance so each rendered prompt is distinct and
    # the scripted teacher can bind a different completion to each
    texts[task.central[0]] = f"{texts[task.central[0]]} (instance {i})"
    tasks.append(
        GraphTask(instance_id=f"walkthrough-{i}", task=task, context=context, texts=texts)
    )

GOOD = """\
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
Chosen_subgraph_reason: The value-learning pair identifies the field; the planning survey is noise.
Central_node_ID: node3
Neighboring_node_ID: node1,node5
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>
Answer: Reinforcement Learning
Brief_reasoning: Actor critic training plus temporal difference neighbors.
"""

# Same shape, but the candidates cite node2, which is outside the ego
# context. The authenticity gate must catch it before anything else runs.
FABRICATED = GOOD.replace("node1", "node2")

# Candidates are fine here, but the restated subgraph after selection is
# the central-only one while the header picks candidate 1.
INCONSISTENT = GOOD.replace(
    """Central_node_ID: node3
Neighboring_node_ID: node1,node5
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>
Answer:""",
    """Central_node_ID: node3
Neighboring_node_ID:
Connection_relationship:
Answer:""",
)

teacher = ScriptedChatClient()
config = FilterConfig(expected_k=3)
for gt, completion in zip(tasks, (GOOD, FABRICATED, INCONSISTENT)):
    prompt = render_task_prompt(
        gt.context, gt.texts, gt.task, PromptConfig(sample_count=config.expected_k)
    ).text
    teacher.add(prompt, completion)

# The judge scores candidate-group diversity; structural Jaccard needs no
# model calls and keeps the walkthrough deterministic.
records = list(
    synthesize_sft(tasks, teacher, JaccardDistanceProvider(), config)
)

for rec in records:
    verdict = "retained" if rec.retained else f"rejected ({rec.rejection_reason})"
    print(f"{rec.instance_id}: {verdict}")

# Records serialize one JSON object per line, with the parse report and
# verification statuses kept alongside the raw completion for audit.
buf = io.StringIO()
write_records(records, buf)
first = json.loads(buf.getvalue().splitlines()[0])
print(f"record fields: {sorted(first)}")

# Training only wants the survivors, reduced to prompt/completion.
pairs = list(sft_export(records))
print(f"sft pairs: {len(pairs)} of {len(records)} records")
print(f"pair fields: {sorted(pairs[0])}")
