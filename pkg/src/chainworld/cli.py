"""Single executable for the whole pipeline.

Subcommands: demo-script, gen-corpus, filter, refactor, export-training,
eval-inference, eval-worldmodel, analyze-search, replay, report-table.
Logs go to standard error; data goes to files; every written artifact gets a
sibling <name>.manifest.json recording the config hash, seed, and version.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys

from pathlib import Path

from . import __version__
from .core import read_plans, write_plans
from .demo import build_demo_script, demo_tasks
from .evaluation import (
    EvalSuite,
    MetricReport,
    build_inference_testset,
    build_transition_testset,
    build_valid_action_testset,
    combine_worldmodel_report,
    evaluate,
    render_inference_table,
    render_worldmodel_table,
)
from .gateway import BackendConfig
from .inference import (
    CorpusLookupBackend,
    EndpointBackend,
    FewshotBackend,
    export_training_pairs,
    write_training_pairs,
)
from .pipeline import (
    ChainingReport,
    CorpusPipeline,
    PipelineConfig,
    filter_corpus,
    load_tasks,
)
from .searchspace import analyze, build_effect_pool, unseen_actions
from .worldmodel import (
    WorldModel,
    check_preconditions,
    derive_state_trace,
    make_matcher,
    trace_records,
)

log = logging.getLogger("chainworld")


class ConfigError(ValueError):
    """The run-config file holds unknown or malformed keys."""


_BACKEND_KEYS = {
    "kind", "base_url", "model_name", "temperature", "max_retries", "timeout",
    "cache_dir", "script_path", "max_in_flight", "retry_backoff",
}
_MATCHER_KEYS = {"kind", "equivalent", "contradictory"}
_PIPELINE_KEYS = {
    "skip_local", "skip_global", "filter_fraction", "generation_temperature",
    "score_rule", "jobs",
}
_TOP_KEYS = {"backend", "matcher", "pipeline", "seed", "jobs"}


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in (
        ("backend", _BACKEND_KEYS),
        ("matcher", _MATCHER_KEYS),
        ("pipeline", _PIPELINE_KEYS),
    ):
        extra = set(data.get(section, {})) - allowed
        if extra:
            raise ConfigError(f"unknown {section} config keys: {sorted(extra)}")
    return data


def _backend_config(config: dict, args) -> BackendConfig:
    merged = dict(config.get("backend", {}))
    overrides = {
        "kind": getattr(args, "backend_kind", None),
        "base_url": getattr(args, "base_url", None),
        "model_name": getattr(args, "model", None),
        "script_path": getattr(args, "script", None),
        "cache_dir": getattr(args, "cache_dir", None),
        "temperature": getattr(args, "temperature", None),
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("kind", "scripted")
    if merged["kind"] == "scripted":
        merged.setdefault("model_name", "scripted")
    return BackendConfig(**merged)


def _matcher(config: dict, args):
    section = dict(config.get("matcher", {}))
    kind = getattr(args, "matcher", None) or section.get("kind", "exact")
    if kind in ("fixture", "fixture-table"):
        fixture_path = getattr(args, "fixture_file", None)
        if fixture_path:
            section.update(json.loads(Path(fixture_path).read_text(encoding="utf-8")))
        return make_matcher(
            "fixture",
            equivalent=[tuple(p) for p in section.get("equivalent", ())],
            contradictory=[tuple(p) for p in section.get("contradictory", ())],
        )
    if kind in ("llm", "llm-judge"):
        return make_matcher("llm", config=_backend_config(config, args))
    return make_matcher(kind)


def _inference_backend(kind: str, config: dict, args, corpus):
    if kind == "lookup":
        return CorpusLookupBackend(corpus)
    if kind == "fewshot":
        return FewshotBackend(_backend_config(config, args), corpus)
    return EndpointBackend(_backend_config(config, args))


def _pipeline_config(config: dict, args) -> PipelineConfig:
    section = dict(config.get("pipeline", {}))
    if getattr(args, "skip_local", False):
        section["skip_local"] = True
    if getattr(args, "skip_global", False):
        section["skip_global"] = True
    if getattr(args, "fraction", None) is not None:
        section["filter_fraction"] = args.fraction
    jobs = getattr(args, "jobs", None) or config.get("jobs")
    if jobs:
        section["jobs"] = jobs
    return PipelineConfig(backend=_backend_config(config, args), **section)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# io-path flags are excluded from the manifest's config hash so that the same
# logical run writing to a different directory hashes identically
_IO_FLAGS = {
    "func", "command", "out", "discarded", "reports", "kept", "corpus", "tasks",
    "script", "plan", "actions", "summary", "table", "config", "fixture_file",
    "cache_dir", "run",
}


def _config_payload(args, config: dict) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in _IO_FLAGS}
    return {"flags": flags, "config_file": config}


def write_manifest(artifact: Path, command: str, payload: dict, seed: int | None) -> Path:
    manifest = {
        "schema": "chainworld.manifest@1",
        "artifact": artifact.name,
        "command": command,
        "config_hash": hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
        ).hexdigest(),
        "seed": seed,
        "version": __version__,
    }
    path = artifact.with_name(artifact.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _corpus_stamp(corpus_path: Path) -> dict:
    manifest_path = corpus_path.with_name(corpus_path.name + ".manifest.json")
    return {
        "path": corpus_path.name,
        "sha256": _sha256_file(corpus_path),
        "manifest_hash": _sha256_file(manifest_path) if manifest_path.exists() else None,
    }


def _write_report_json(
    path: Path, task_reports: dict[str, MetricReport], corpus_path: Path, args, config, seed
) -> None:
    payload = {
        "schema": "chainworld.report@1",
        "task_reports": {name: rep.to_dict() for name, rep in task_reports.items()},
        "corpus": _corpus_stamp(corpus_path),
        "seed": seed,
        "version": __version__,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(path, args.command, _config_payload(args, config), seed)


# -- subcommand handlers --


def cmd_demo_script(args) -> int:
    config = load_config(args.config)
    tasks = load_tasks(args.tasks) if args.tasks else demo_tasks(args.n_tasks)
    script = build_demo_script(tasks, _pipeline_config(config, args))
    out = Path(args.out)
    out.write_text(json.dumps(script, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, args.command, _config_payload(args, config), getattr(args, "seed", None))
    log.info("wrote %d scripted responses to %s", len(script), out)
    return 0


def cmd_gen_corpus(args) -> int:
    config = load_config(args.config)
    tasks = load_tasks(args.tasks)
    pipeline_config = _pipeline_config(config, args)
    result = CorpusPipeline(pipeline_config).run(tasks, matcher=_matcher(config, args))
    payload = _config_payload(args, config)
    out = Path(args.out)
    write_plans(out, result.kept)
    write_manifest(out, args.command, payload, args.seed)
    if args.discarded:
        discarded = Path(args.discarded)
        write_plans(discarded, result.discarded)
        write_manifest(discarded, args.command, payload, args.seed)
    if args.reports:
        reports = Path(args.reports)
        with open(reports, "w", encoding="utf-8") as fh:
            for report in result.reports:
                fh.write(json.dumps(report.to_dict(), ensure_ascii=False) + "\n")
        write_manifest(reports, args.command, payload, args.seed)
    log.info(
        "pipeline %s: kept %d plans, discarded %d",
        pipeline_config.label, len(result.kept), len(result.discarded),
    )
    return 0


def cmd_filter(args) -> int:
    config = load_config(args.config)
    corpus = read_plans(args.corpus)
    reports = []
    with open(args.reports, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                reports.append(ChainingReport.from_dict(json.loads(line)))
    kept, discarded = filter_corpus(corpus, reports, fraction=args.fraction)
    payload = _config_payload(args, config)
    kept_path, discarded_path = Path(args.kept), Path(args.discarded)
    write_plans(kept_path, kept)
    write_manifest(kept_path, args.command, payload, getattr(args, "seed", None))
    write_plans(discarded_path, discarded)
    write_manifest(discarded_path, args.command, payload, getattr(args, "seed", None))
    log.info("kept %d plans, discarded %d", len(kept), len(discarded))
    return 0


def cmd_refactor(args) -> int:
    config = load_config(args.config)
    corpus = read_plans(args.corpus)
    matcher = _matcher(config, args)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for plan in corpus:
            for row in trace_records(plan, matcher):
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    write_manifest(out, args.command, _config_payload(args, config), getattr(args, "seed", None))
    log.info("wrote state traces for %d plans to %s", len(corpus), out)
    return 0


def cmd_export_training(args) -> int:
    config = load_config(args.config)
    corpus = read_plans(args.corpus)
    pairs = export_training_pairs(corpus, args.direction, include_task=args.include_task)
    out = Path(args.out)
    count = write_training_pairs(out, pairs)
    write_manifest(out, args.command, _config_payload(args, config), getattr(args, "seed", None))
    log.info("wrote %d %s pairs to %s", count, args.direction, out)
    return 0


def cmd_eval_inference(args) -> int:
    config = load_config(args.config)
    corpus_path = Path(args.corpus)
    corpus = read_plans(corpus_path)
    backend = _inference_backend(args.inference, config, args, corpus)
    world_model = WorldModel(backend, _matcher(config, args))
    suite = EvalSuite(
        inference=tuple(
            build_inference_testset(corpus, "precondition")
            + build_inference_testset(corpus, "effect")
        )
    )
    reports = evaluate(world_model, suite, jobs=args.jobs or 1)
    _write_report_json(
        Path(args.out), reports, corpus_path, args, config, getattr(args, "seed", None)
    )
    if args.table:
        run = args.run_name
        table = render_inference_table(
            {
                "Precondition Inference": {run: reports["precondition_inference"]},
                "Effect Inference": {run: reports["effect_inference"]},
            }
        )
        Path(args.table).write_text(table + "\n", encoding="utf-8")
    return 0


def cmd_eval_worldmodel(args) -> int:
    config = load_config(args.config)
    corpus_path = Path(args.corpus)
    corpus = read_plans(corpus_path)
    matcher = _matcher(config, args)
    backend = _inference_backend(args.inference, config, args, corpus)
    world_model = WorldModel(backend, matcher)
    suite = EvalSuite(
        valid_action=tuple(build_valid_action_testset(corpus, matcher, args.n, args.seed)),
        transition=tuple(build_transition_testset(corpus, matcher)),
    )
    reports = evaluate(world_model, suite, jobs=args.jobs or 1)
    reports["world_model"] = combine_worldmodel_report(
        reports["valid_action"], reports["transition"]
    )
    _write_report_json(Path(args.out), reports, corpus_path, args, config, args.seed)
    if args.table:
        table = render_worldmodel_table({args.run_name: reports["world_model"]})
        Path(args.table).write_text(table + "\n", encoding="utf-8")
    return 0


def cmd_analyze_search(args) -> int:
    config = load_config(args.config)
    corpus = read_plans(args.corpus)
    candidates = load_tasks(args.actions)
    actions = unseen_actions(candidates, corpus)
    if len(actions) < len(candidates):
        log.info("dropped %d actions already in the corpus", len(candidates) - len(actions))
    matcher = _matcher(config, args)
    pool_backend = _inference_backend(args.inference, config, args, corpus)
    query_backend = (
        _inference_backend(args.query_inference, config, args, corpus)
        if args.query_inference
        else pool_backend
    )
    pool = build_effect_pool(corpus, pool_backend)
    results, summary = analyze(actions, pool, matcher, query_backend)
    payload = _config_payload(args, config)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_dict(), ensure_ascii=False) + "\n")
    write_manifest(out, args.command, payload, getattr(args, "seed", None))
    summary_path = Path(args.summary)
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(summary_path, args.command, payload, getattr(args, "seed", None))
    log.info(
        "%d actions analyzed: %.1f%% satisfiable", summary["action_count"],
        summary["pct_satisfiable"],
    )
    return 0


def cmd_replay(args) -> int:
    config = load_config(args.config)
    matcher = _matcher(config, args)
    plans = read_plans(args.plan)
    if args.plan_id:
        plans = [p for p in plans if p.id == args.plan_id]
        if not plans:
            raise ValueError(f"no plan with id {args.plan_id!r}")
    total_steps = total_valid = 0
    for plan in plans:
        trace = derive_state_trace(plan, matcher)
        print(f"plan {plan.id}: {plan.task_description}")
        _print_state(0, trace[0])
        valid_here = 0
        for k, step in enumerate(plan.steps):
            verdict = check_preconditions(matcher, step.preconditions, trace[k])
            flag = "VALID" if verdict.valid else "INVALID"
            print(f"  step {k + 1} [{step.id}] {step.action_text!r}: {flag}")
            for item in verdict.unmatched:
                print(f"    ? unmet: {item}")
            for added in (x for x in trace[k + 1].items if x not in trace[k].as_set()):
                print(f"    + {added}")
            for dropped in (x for x in trace[k].items if x not in trace[k + 1].as_set()):
                print(f"    - {dropped}")
            _print_state(k + 1, trace[k + 1])
            valid_here += verdict.valid
        total_steps += len(plan.steps)
        total_valid += valid_here
        print(f"replay {plan.id}: {valid_here}/{len(plan.steps)} steps valid")
    print(f"replay total: {total_valid}/{total_steps} steps valid")
    return 0


def _print_state(index: int, state) -> None:
    print(f"  state {index}:")
    for item in state.items:
        print(f"    - {item}")


def cmd_report_table(args) -> int:
    rows: dict[str, dict] = {}
    for spec in args.run:
        name, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"--run needs NAME=PATH, got {spec!r}")
        rows[name] = json.loads(Path(path).read_text(encoding="utf-8"))["task_reports"]

    def report_of(data: dict) -> MetricReport:
        return MetricReport(**data)

    if args.task == "worldmodel":
        table = render_worldmodel_table(
            {
                name: combine_worldmodel_report(
                    report_of(tasks["valid_action"]), report_of(tasks["transition"])
                )
                for name, tasks in rows.items()
            }
        )
    else:
        table = render_inference_table(
            {
                "Precondition Inference": {
                    name: report_of(tasks["precondition_inference"]) for name, tasks in rows.items()
                },
                "Effect Inference": {
                    name: report_of(tasks["effect_inference"]) for name, tasks in rows.items()
                },
            }
        )
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    else:
        print(table)
    return 0


# -- parser --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainworld",
        description="World-model engine over natural-language states.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-config file")
    common.add_argument("--jobs", type=int, help="bound on internal parallelism")
    common.add_argument("--matcher", choices=("exact", "fixture", "llm"))
    common.add_argument("--fixture-file", help="JSON equivalence/contradiction tables")

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument("--backend-kind", choices=("scripted", "remote"))
    backend.add_argument("--script", help="scripted backend fingerprint->text JSON")
    backend.add_argument("--base-url", help="chat-completions endpoint base URL")
    backend.add_argument("--model", help="remote model name")
    backend.add_argument("--cache-dir", help="response cache directory")
    backend.add_argument("--temperature", type=float)

    p = sub.add_parser("demo-script", parents=[common, backend],
                       help="record a scripted-response file for offline corpus runs")
    p.add_argument("--tasks", help="task seed file (one per line)")
    p.add_argument("--n-tasks", type=int, default=8, help="built-in seeds when --tasks absent")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo_script)

    p = sub.add_parser("gen-corpus", parents=[common, backend],
                       help="run the five-step pipeline over task seeds")
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True, help="kept corpus JSONL")
    p.add_argument("--discarded", help="filtered-out corpus JSONL")
    p.add_argument("--reports", help="chaining report JSONL")
    p.add_argument("--skip-local", action="store_true")
    p.add_argument("--skip-global", action="store_true")
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("filter", parents=[common],
                       help="apply the corpus-level chaining filter")
    p.add_argument("--corpus", required=True)
    p.add_argument("--reports", required=True)
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--kept", required=True)
    p.add_argument("--discarded", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("refactor", parents=[common, backend],
                       help="derive ground-truth state traces from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refactor)

    p = sub.add_parser("export-training", parents=[common],
                       help="export seq2seq training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--direction", required=True, choices=("precondition", "effect"))
    p.add_argument("--include-task", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_training)

    p = sub.add_parser("eval-inference", parents=[common, backend],
                       help="score precondition/effect inference against gold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--inference", default="lookup", choices=("lookup", "endpoint", "fewshot"))
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="write a plain-text score table here")
    p.add_argument("--run-name", default="Full Method")
    p.set_defaults(func=cmd_eval_inference)

    p = sub.add_parser("eval-worldmodel", parents=[common, backend],
                       help="score valid-action and transition prediction")
    p.add_argument("--corpus", required=True)
    p.add_argument("--inference", default="lookup", choices=("lookup", "endpoint", "fewshot"))
    p.add_argument("--n", type=int, required=True, help="balanced valid-action cases")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="write a plain-text score table here")
    p.add_argument("--run-name", default="Full Method")
    p.set_defaults(func=cmd_eval_worldmodel)

    p = sub.add_parser("analyze-search", parents=[common, backend],
                       help="satisfiability and ways analysis for unseen actions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--actions", required=True, help="candidate action file (one per line)")
    p.add_argument("--inference", default="lookup", choices=("lookup", "endpoint", "fewshot"))
    p.add_argument("--query-inference", choices=("lookup", "endpoint", "fewshot"),
                   help="separate backend for the unseen actions")
    p.add_argument("--out", required=True, help="per-action results JSONL")
    p.add_argument("--summary", required=True, help="aggregate summary JSON")
    p.set_defaults(func=cmd_analyze_search)

    p = sub.add_parser("replay", parents=[common],
                       help="step through a plan's derived states, printing transitions")
    p.add_argument("--plan", required=True, help="corpus JSONL holding the plan(s)")
    p.add_argument("--plan-id", help="replay just this plan")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report-table", parents=[common],
                       help="render one or more eval reports as an aligned table")
    p.add_argument("--task", required=True, choices=("worldmodel", "inference"))
    p.add_argument("--run", required=True, action="append", metavar="NAME=PATH")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_table)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced once, with the type name
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


def main() -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    sys.exit(dispatch())
