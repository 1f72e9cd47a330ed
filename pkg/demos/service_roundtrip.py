"""
Talking to the reward service
=============================

The scorer ships as a stateless HTTP service so training loops in any
language can post rollout groups and get rewards back. Here the app is
spun up in process; `graphssr serve` runs the same app under uvicorn.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from graphssr import ego_subgraph, load_document
from graphssr.serialize import subgraph_to_dict, task_to_dict
from graphssr.service import create_app

HERE = Path(__file__).parent

doc = load_document(HERE / "sample_graph.json")
task = doc.tasks[0]
context = ego_subgraph(doc.graph, task.central, hops=1)
texts = {n: doc.graph.nodes[n] for n in context.nodes}

client = TestClient(create_app())
print("health:", client.get("/v1/health").json())

good = """\
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
Chosen_subgraph_reason: The value-learning pair is enough.
Central_node_ID: node3
Neighboring_node_ID: node1,node5
Connection_relationship: <node1, node3>,<node1, node5>,<node3, node5>
Answer: Reinforcement Learning
Brief_reasoning: Policy gradients amid temporal difference neighbors.
"""

# One rollout group: a full success, a lazy guess, and line noise. The
# group is scored together because advantages are normalized within it.
body = {
    "context": subgraph_to_dict(context, texts=texts),
    "task": task_to_dict(task),
    "completions": [good, "Answer: Theory", "zzzzz"],
    "stage": "stage2_denoising",
    "config": {"expected_k": 3},
}
resp = client.post("/v1/score", json=body)
print("status:", resp.status_code, " elapsed:", resp.headers["x-elapsed-ms"], "ms")

payload = resp.json()
print("rewards:   ", payload["rewards"])
print("advantages:", [round(a, 4) for a in payload["advantages"]])
print("statuses:  ", [(o["status_real"], o["status_consist"], o["status_ans"])
                      for o in payload["outcomes"]])
print("defects:   ", [len(d) for d in payload["defects"]])

# Responses are canonical JSON: keys sorted, no whitespace, so the same
# request always yields byte-identical bytes. Replays are diffable.
again = client.post("/v1/score", json=body)
print("replay byte-identical:", again.content == resp.content)

# Schema violations are a 400 with a reason, never a stack trace.
bad = dict(body, completions=[])
resp = client.post("/v1/score", json=bad)
print("empty group:", resp.status_code, json.dumps(resp.json())[:80])
