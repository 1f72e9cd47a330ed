"""Command-line interface.

Data goes to stdout, diagnostics to stderr.  Exit codes: 0 success,
1 runtime failure, 2 usage error.  Settings resolve flag > environment
> config file > default; the environment variables are
``SSR_TEACHER_ENDPOINT``, ``SSR_TEACHER_KEY``, ``SSR_JUDGE_ENDPOINT``,
and ``SSR_CACHE_DIR``, and ``--config`` names a TOML file with the same
keys in snake_case.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - version shim
    import tomli as tomllib

from . import __version__
from .chat import (
    CachedChatClient,
    ChatError,
    OpenAIChatClient,
    ScriptedChatClient,
    prompt_digest,
)
from .evaluation import (
    POLICY_BEHAVIORS,
    ScriptedPolicy,
    SizeSensitivePolicy,
    evaluate,
    lambda_sweep,
    make_planted_noise_suite,
)
from .graphs import (
    GraphFormatError,
    TaskInstance,
    ego_subgraph,
    load_document,
    require_well_formed,
)
from .prompts import PromptConfig, PromptError, render_diversity_prompt, render_task_prompt
from .rewards import RewardConfig, SizeMetric, Stage, score_group
from .serialize import (
    SCHEMA_VERSION,
    breakdown_to_dict,
    canonical_json,
    defects_to_list,
    load_subgraph_file,
    outcome_to_dict,
    subgraph_to_dict,
    trace_to_dict,
)
from .synth import (
    FilterConfig,
    GraphTask,
    RlDataset,
    assess_difficulty,
    build_rl_dataset,
    graph_task_from_dict,
    graph_task_to_dict,
    synthesize_sft,
    write_records,
    write_rl_dataset,
    Tier,
)
from .traces import parse_trace
from .verifier import (
    DistanceError,
    JaccardDistanceProvider,
    LlmJudgeDistanceProvider,
    verify,
)

ENV_PREFIX = "SSR_"


@dataclass(frozen=True)
class Settings:
    teacher_endpoint: str | None = None
    teacher_key: str | None = None
    judge_endpoint: str | None = None
    cache_dir: str | None = None


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Merge flag, environment, and config-file settings in that order."""
    file_cfg: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "rb") as fh:
            file_cfg = tomllib.load(fh)

    def pick(name: str) -> str | None:
        flag = getattr(args, name, None)
        if flag:
            return flag
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env:
            return env
        value = file_cfg.get(name)
        return str(value) if value is not None else None

    return Settings(
        teacher_endpoint=pick("teacher_endpoint"),
        teacher_key=pick("teacher_key"),
        judge_endpoint=pick("judge_endpoint"),
        cache_dir=pick("cache_dir"),
    )


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_text(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _load_task_file(path: str) -> TaskInstance:
    return TaskInstance.from_dict(json.loads(_read_text(path)))


def _parse_central(raw: str) -> list[int]:
    out = []
    for token in raw.split(","):
        token = token.strip()
        if token.startswith("node"):
            token = token[4:]
        out.append(int(token))
    return out


def _load_completions(path: str) -> list[str]:
    """Accept a JSON array of strings or JSONL of {"completion": ...}."""
    text = _read_text(path)
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
        if not all(isinstance(c, str) for c in data):
            raise ValueError("completions array must contain strings")
        return data
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        entry = json.loads(line)
        out.append(entry["completion"] if isinstance(entry, dict) else str(entry))
    return out


def _scripted_client(path: str) -> ScriptedChatClient:
    """Build a scripted client from JSONL of {"prompt", "completion"}
    pairs; a line {"default": ...} sets the fallback completion.
    """
    script: dict = {}
    default = None
    for line in _read_text(path).splitlines():
        line = line.strip()
        if not line:
            continue
        entry = json.loads(line)
        if "default" in entry:
            default = entry["default"]
            continue
        script[prompt_digest(entry["prompt"])] = entry["completion"]
    return ScriptedChatClient(script, default=default)


def _teacher_client(args: argparse.Namespace, settings: Settings):
    if getattr(args, "scripted", None):
        return _scripted_client(args.scripted)
    if settings.teacher_endpoint is None:
        raise ChatError(
            "no teacher configured: pass --scripted, --teacher-endpoint, "
            "or set SSR_TEACHER_ENDPOINT"
        )
    client = OpenAIChatClient(
        endpoint=settings.teacher_endpoint,
        model=getattr(args, "model", None) or "default",
        api_key=settings.teacher_key,
    )
    if settings.cache_dir:
        cache_dir = Path(settings.cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        return CachedChatClient(client, cache_dir / "teacher.jsonl")
    return client


def _judge_provider(args: argparse.Namespace, settings: Settings):
    if getattr(args, "judge", "jaccard") == "jaccard":
        return JaccardDistanceProvider()
    if settings.judge_endpoint is None:
        raise DistanceError(
            "no judge configured: set --judge-endpoint or SSR_JUDGE_ENDPOINT"
        )
    client = OpenAIChatClient(endpoint=settings.judge_endpoint, api_key=settings.teacher_key)
    cache_path = None
    if settings.cache_dir:
        cache_dir = Path(settings.cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_path = cache_dir / "judge_distance.jsonl"
    return LlmJudgeDistanceProvider(client, cache_path=cache_path)


def _tasks_from_document(args: argparse.Namespace) -> list[GraphTask]:
    doc = load_document(_read_text(args.graph))
    tasks = []
    for idx, task in enumerate(doc.tasks):
        context = ego_subgraph(
            doc.graph, task.central, hops=args.hops, max_nodes=args.max_nodes
        )
        texts = {nid: doc.graph.nodes[nid] for nid in context.nodes}
        tasks.append(
            GraphTask(
                instance_id=f"task-{idx:05d}",
                task=task,
                context=context,
                texts=texts,
            )
        )
    return tasks


# --- subcommands ------------------------------------------------------------


def cmd_extract(args: argparse.Namespace) -> int:
    doc = load_document(_read_text(args.graph))
    sub = ego_subgraph(
        doc.graph, _parse_central(args.central), hops=args.hops, max_nodes=args.max_nodes
    )
    texts = {nid: doc.graph.nodes[nid] for nid in sorted(sub.nodes)}
    _write_text(canonical_json(subgraph_to_dict(sub, texts)) + "\n", args.out)
    return 0


def cmd_prompt(args: argparse.Namespace) -> int:
    context, texts = load_subgraph_file(args.subgraph)
    require_well_formed(context, "subgraph")
    template_dir = Path(args.template_dir) if args.template_dir else None
    if args.second:
        second, _ = load_subgraph_file(args.second)
        require_well_formed(second, "second subgraph")
        rendered = render_diversity_prompt(context, second, template_dir=template_dir)
    else:
        if texts is None:
            raise PromptError("subgraph file has no texts; cannot render a task prompt")
        task = _load_task_file(args.task)
        rendered = render_task_prompt(
            context,
            texts,
            task,
            PromptConfig(sample_count=args.sample_count, template_dir=template_dir),
        )
    _write_text(rendered.text, args.out)
    if args.show_manifest:
        manifest = [{"section": s, "span": list(span)} for s, span in rendered.manifest]
        print(canonical_json(manifest), file=sys.stderr)
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    report = parse_trace(_read_text(args.input), expected_k=args.expected_k)
    if args.format == "text":
        t = report.trace
        print(f"candidates: {len(t.candidates)}")
        print(f"chosen_index: {t.chosen_index}")
        print(f"answer: {t.answer}")
        print(f"defects: {len(report.defects)}")
        for d in report.defects:
            print(f"  {d.kind} @ {d.span[0]}..{d.span[1]}: {d.message}")
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "trace": trace_to_dict(report.trace),
            "defects": defects_to_list(report),
        }
        print(canonical_json(payload))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    context, _texts = load_subgraph_file(args.context)
    require_well_formed(context, "context")
    task = _load_task_file(args.task) if args.task else None
    report = parse_trace(_read_text(args.input), expected_k=args.expected_k)
    outcome = verify(
        context,
        report.trace,
        task,
        expected_k=args.expected_k,
        distance=JaccardDistanceProvider(),
    )
    if args.format == "text":
        for key, value in outcome_to_dict(outcome).items():
            print(f"{key}: {value}")
        print(f"defects: {len(report.defects)}")
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "trace": trace_to_dict(report.trace),
            "defects": defects_to_list(report),
            "outcome": outcome_to_dict(outcome),
        }
        print(canonical_json(payload))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    context, _texts = load_subgraph_file(args.context)
    require_well_formed(context, "context")
    task = _load_task_file(args.task)
    completions = _load_completions(args.completions)
    config = RewardConfig(
        stage=Stage.coerce(args.stage),
        lambda_weight=args.lambda_weight,
        size_metric=SizeMetric(args.size_metric),
    )
    distance = JaccardDistanceProvider() if args.diversity == "jaccard" else None
    scored, group = score_group(
        context, task, completions, config, expected_k=args.expected_k, distance=distance
    )
    if args.format == "text":
        print("idx\tr1\tr2\tadvantage")
        for i, s in enumerate(scored):
            print(f"{i}\t{s.breakdown.r1}\t{s.breakdown.r2}\t{group.advantages[i]}")
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "stage": config.stage.value,
            "breakdowns": [breakdown_to_dict(s.breakdown) for s in scored],
            "outcomes": [outcome_to_dict(s.outcome) for s in scored],
            "defects": [defects_to_list(s.report) for s in scored],
            "rewards": list(group.rewards),
            "advantages": list(group.advantages),
        }
        print(canonical_json(payload))
    return 0


def cmd_synth_sft(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    teacher = _teacher_client(args, settings)
    judge = _judge_provider(args, settings)
    all_tasks = _tasks_from_document(args)
    tasks = [gt for gt in all_tasks if gt.task.gold_label is not None]
    skipped = len(all_tasks) - len(tasks)
    if skipped:
        print(f"skipping {skipped} task(s) without gold labels", file=sys.stderr)
    config = FilterConfig(
        expected_k=args.expected_k,
        diversity_threshold=args.threshold,
        temperature=args.temperature,
        concurrency=args.concurrency,
    )
    records = list(synthesize_sft(tasks, teacher, judge, config))
    fh, should_close = _open_out(args.records)
    try:
        write_records(records, fh)
    finally:
        if should_close:
            fh.close()
    if args.sft:
        with open(args.sft, "w", encoding="utf-8") as sfh:
            for record in records:
                if record.retained:
                    sfh.write(
                        canonical_json(
                            {"prompt": record.prompt, "completion": record.completion}
                        )
                        + "\n"
                    )
    retained = sum(1 for r in records if r.retained)
    reasons: dict[str, int] = {}
    for r in records:
        if r.rejection_reason is not None:
            key = r.rejection_reason.value
            reasons[key] = reasons.get(key, 0) + 1
    print(
        f"records: {len(records)}, retained: {retained}, rejected: {reasons}",
        file=sys.stderr,
    )
    return 0


def cmd_assess_difficulty(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    policy = _teacher_client(args, settings)
    tasks = [gt for gt in _tasks_from_document(args) if gt.task.gold_label is not None]
    fh, should_close = _open_out(args.out)
    try:
        for gt in tasks:
            assessment = assess_difficulty(
                gt, policy, trials=args.trials, expected_k=args.expected_k
            )
            fh.write(
                canonical_json(
                    {
                        "instance_id": assessment.instance_id,
                        "tier": assessment.tier.value,
                        "correct_count": assessment.correct_count,
                        "trials": assessment.trials,
                        "instance": graph_task_to_dict(gt),
                    }
                )
                + "\n"
            )
    finally:
        if should_close:
            fh.close()
    return 0


def cmd_build_rl(args: argparse.Namespace) -> int:
    pool = []
    for line in _read_text(args.pool).splitlines():
        line = line.strip()
        if not line:
            continue
        entry = json.loads(line)
        pool.append((graph_task_from_dict(entry["instance"]), Tier(entry["tier"])))
    ratio = tuple(float(x) for x in args.ratio.split(","))
    if len(ratio) != 3:
        raise ValueError("ratio must have three comma-separated weights")
    dataset: RlDataset = build_rl_dataset(pool, args.target, ratio, seed=args.seed)
    fh, should_close = _open_out(args.out)
    try:
        write_rl_dataset(dataset, fh, expected_k=args.expected_k)
    finally:
        if should_close:
            fh.close()
    print(
        "selected: "
        + canonical_json({t.value: dataset.selected[t] for t in dataset.selected})
        + ", redistributed: "
        + canonical_json({t.value: dataset.redistributed[t] for t in dataset.redistributed}),
        file=sys.stderr,
    )
    return 0


def _build_policy(args: argparse.Namespace):
    if args.lambda_weight is not None:
        return SizeSensitivePolicy(args.lambda_weight, sample_count=args.expected_k)
    return ScriptedPolicy(args.policy, seed=args.seed, sample_count=args.expected_k)


def cmd_eval(args: argparse.Namespace) -> int:
    tasks = make_planted_noise_suite(args.planted, seed=args.seed)
    policy = _build_policy(args)
    config = RewardConfig(
        stage=Stage.coerce(args.stage),
        lambda_weight=args.lambda_weight if args.lambda_weight is not None else 0.1,
    )
    report = evaluate(tasks, policy, config, expected_k=args.expected_k)
    if args.format == "text":
        for key, value in report.to_dict().items():
            print(f"{key}: {value}")
    else:
        print(canonical_json(report.to_dict()))
    return 0


def cmd_lambda_sweep(args: argparse.Namespace) -> int:
    tasks = make_planted_noise_suite(args.planted, seed=args.seed)
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    table = lambda_sweep(tasks, lambdas, expected_k=args.expected_k)
    sys.stdout.write(table.to_csv())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import run_server

    print(
        f"serving on http://{args.host}:{args.port} (threads={args.threads})",
        file=sys.stderr,
    )
    run_server(host=args.host, port=args.port, threads=args.threads)
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphssr",
        description="Sample-select-reason graph reasoning tools",
    )
    parser.add_argument("--version", action="version", version=f"graphssr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML settings file")
    common.add_argument("--teacher-endpoint", dest="teacher_endpoint")
    common.add_argument("--teacher-key", dest="teacher_key")
    common.add_argument("--judge-endpoint", dest="judge_endpoint")
    common.add_argument("--cache-dir", dest="cache_dir")

    p = sub.add_parser("extract", parents=[common], help="extract an ego subgraph")
    p.add_argument("--graph", required=True, help="TAG-JSON document ('-' for stdin)")
    p.add_argument("--central", required=True, help="central node id(s), e.g. 11 or 3,7")
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--max-nodes", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("prompt", parents=[common], help="render a task or diversity prompt")
    p.add_argument("--subgraph", required=True, help="subgraph file with texts")
    p.add_argument("--task", help="task instance JSON file")
    p.add_argument("--second", help="second subgraph file (renders a diversity prompt)")
    p.add_argument("--sample-count", type=int, default=5)
    p.add_argument("--template-dir")
    p.add_argument("--show-manifest", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("parse", parents=[common], help="parse a completion into a trace")
    p.add_argument("--input", default="-", help="completion text file ('-' for stdin)")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("verify", parents=[common], help="verify a completion against a context")
    p.add_argument("--context", required=True, help="subgraph file")
    p.add_argument("--task", help="task instance JSON file (enables the answer check)")
    p.add_argument("--input", default="-")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("score", parents=[common], help="score a completion group")
    p.add_argument("--context", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--completions", required=True, help="JSON array or JSONL file")
    p.add_argument("--stage", default="stage1_authenticity")
    p.add_argument("--lambda", dest="lambda_weight", type=float, default=0.1)
    p.add_argument(
        "--size-metric",
        choices=tuple(m.value for m in SizeMetric),
        default=SizeMetric.NODE_COUNT.value,
    )
    p.add_argument("--diversity", choices=("jaccard", "none"), default="jaccard")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth-sft", parents=[common], help="synthesize a filtered SFT corpus")
    p.add_argument("--graph", required=True, help="TAG-JSON document with tasks")
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--max-nodes", type=int, default=None)
    p.add_argument("--scripted", help="JSONL of scripted teacher completions")
    p.add_argument("--model", help="teacher model name for remote endpoints")
    p.add_argument("--judge", choices=("jaccard", "llm"), default="jaccard")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--temperature", type=float, default=0.6)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--records", default="-", help="full record JSONL output")
    p.add_argument("--sft", help="retained {prompt, completion} JSONL output")
    p.set_defaults(func=cmd_synth_sft)

    p = sub.add_parser(
        "assess-difficulty", parents=[common], help="tier tasks by trial success"
    )
    p.add_argument("--graph", required=True)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--max-nodes", type=int, default=None)
    p.add_argument("--scripted", help="JSONL of scripted policy completions")
    p.add_argument("--model")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_assess_difficulty)

    p = sub.add_parser("build-rl", parents=[common], help="sample a tiered RL dataset")
    p.add_argument("--pool", required=True, help="JSONL of {instance, tier} entries")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--ratio", default="2,2,1", help="easy,medium,hard weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_build_rl)

    p = sub.add_parser("eval", parents=[common], help="evaluate a scripted policy")
    p.add_argument("--planted", type=int, default=200, help="planted-noise suite size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=POLICY_BEHAVIORS, default="oracle_denoiser")
    p.add_argument(
        "--lambda",
        dest="lambda_weight",
        type=float,
        default=None,
        help="use the size-sensitive policy with this weight instead of --policy",
    )
    p.add_argument("--stage", default="stage2_denoising")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lambda-sweep", parents=[common], help="sweep the denoising weight")
    p.add_argument("--planted", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambdas", default="0,0.05,0.1,0.2,0.3,0.5,1.0")
    p.add_argument("--expected-k", "--expect-k", type=int, default=5)
    p.set_defaults(func=cmd_lambda_sweep)

    p = sub.add_parser("serve", parents=[common], help="run the reward service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--threads", type=int, default=8)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except (
        GraphFormatError,
        PromptError,
        ChatError,
        DistanceError,
        ValueError,
        OSError,
        json.JSONDecodeError,
        KeyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
