"""Acceptance suite: one test per criterion, each at its stated tolerance.

Runs offline with the scripted backend only.  Every test prints a
"[acceptance] <criterion>: PASS" line once its assertions hold.
"""

import json
import math
import random
import time
from dataclasses import replace


import pytest

from chainworld import data_path, load_toy_corpus
from chainworld.cli import dispatch
from chainworld.core import ActionPlan, ActionStep, read_plans
from chainworld.demo import build_demo_script, demo_tasks
from chainworld.evaluation import (
    EvalSuite,
    build_transition_testset,
    build_valid_action_testset,
    combine_worldmodel_report,
    evaluate,
    render_inference_table,
    render_worldmodel_table,
)
from chainworld.gateway import BackendConfig
from chainworld.inference import CorpusLookupBackend
from chainworld.metrics import HashedBagEmbedder, bleu_n, rouge_l, sms, token_f1
from chainworld.pipeline import (
    ChainingReport,
    CorpusPipeline,
    PipelineConfig,
    chaining_report,
    filter_corpus,
)
from chainworld.searchspace import EffectPoolItem, satisfiability
from chainworld.worldmodel import ExactMatcher, WorldModel

TOY = str(data_path("toy_corpus.jsonl"))


def ok(name: str) -> None:
    print(f"[acceptance] {name}: PASS")


def plan_of(pid, steps):
    return ActionPlan(
        id=pid,
        task_description="task",
        steps=tuple(
            ActionStep(id=f"s{i}", action_text=t, preconditions=p, effects=e)
            for i, (t, p, e) in enumerate(steps, start=1)
        ),
    )


def test_oracle_closure():
    """corpus-lookup + exact matcher on the bundled toy corpus scores exactly
    100 accuracy / 100 token F1 in under ten seconds."""
    started = time.perf_counter()
    corpus = load_toy_corpus()
    assert len(corpus) >= 5
    matcher = ExactMatcher()
    world_model = WorldModel(CorpusLookupBackend(corpus), matcher)
    suite = EvalSuite(
        valid_action=tuple(build_valid_action_testset(corpus, matcher, n=12, seed=17)),
        transition=tuple(build_transition_testset(corpus, matcher)),
    )
    reports = evaluate(world_model, suite)
    elapsed = time.perf_counter() - started
    assert reports["valid_action"].accuracy == 100.0
    assert reports["transition"].token_f1 == 100.0
    assert elapsed < 10.0, f"oracle closure took {elapsed:.1f}s"
    ok("oracle-closure")


def test_refactoring_replay(capsys):
    """every toy plan replays with 100% of steps valid at their own index,
    verified through the replay command."""
    corpus = load_toy_corpus()
    total_steps = sum(len(p.steps) for p in corpus)
    code = dispatch(["replay", "--plan", TOY, "--matcher", "exact"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count(": VALID") == total_steps
    assert "INVALID" not in out
    assert f"replay total: {total_steps}/{total_steps} steps valid" in out
    for plan in corpus:
        assert f"replay {plan.id}: {len(plan.steps)}/{len(plan.steps)} steps valid" in out
    ok("refactoring-replay")


def test_metric_correctness():
    """100 on identical inputs, 0 on token-disjoint inputs, and the
    hand-computed fixtures land within ±0.01."""
    embedder = HashedBagEmbedder()
    same = "the pot of soup is simmering"
    disjoint = ("alpha beta gamma", "delta epsilon zeta")
    metrics = {
        "token_f1": token_f1,
        "bleu2": lambda p, r: bleu_n(p, r, 2),
        "bleu3": lambda p, r: bleu_n(p, r, 3),
        "rouge_l": rouge_l,
        "sms": lambda p, r: sms(p, r, embedder),
    }
    for name, metric in metrics.items():
        assert metric(same, same) == 100.0, f"{name} on identical inputs"
        assert metric(*disjoint) == 0.0, f"{name} on disjoint inputs"
    assert token_f1("add the chopped onions", "add chopped onions") == pytest.approx(
        85.71, abs=0.01
    )
    assert rouge_l("a c", "a b c") == pytest.approx(80.0, abs=0.01)
    ok("metric-correctness")


def test_pipeline_determinism(tmp_path):
    """gen-corpus -> filter twice under the scripted backend: byte-identical
    JSONL, with exactly ceil(0.05 N) plans removed by the documented
    tie-break."""
    tasks_path = tmp_path / "tasks.txt"
    tasks = demo_tasks(40)
    tasks_path.write_text("\n".join(tasks) + "\n", encoding="utf-8")
    script_path = tmp_path / "script.json"
    assert dispatch(["demo-script", "--tasks", str(tasks_path), "--out", str(script_path)]) == 0

    artifacts = []
    for run_name in ("run1", "run2"):
        run_dir = tmp_path / run_name
        run_dir.mkdir()
        corpus = run_dir / "corpus.jsonl"
        reports = run_dir / "reports.jsonl"
        kept = run_dir / "kept.jsonl"
        discarded = run_dir / "discarded.jsonl"
        assert dispatch([
            "gen-corpus", "--tasks", str(tasks_path), "--script", str(script_path),
            "--out", str(corpus), "--reports", str(reports),
            "--skip-global", "--seed", "5",
        ]) == 0
        assert dispatch([
            "filter", "--corpus", str(corpus), "--reports", str(reports),
            "--fraction", "0.05", "--kept", str(kept), "--discarded", str(discarded),
        ]) == 0
        artifacts.append(tuple(p.read_bytes() for p in (corpus, reports, kept, discarded)))
    assert artifacts[0] == artifacts[1], "reruns are not byte-identical"

    corpus_plans = read_plans(tmp_path / "run1" / "corpus.jsonl")
    discarded_plans = read_plans(tmp_path / "run1" / "discarded.jsonl")
    kept_plans = read_plans(tmp_path / "run1" / "kept.jsonl")
    assert len(corpus_plans) == 40
    assert len(discarded_plans) == math.ceil(0.05 * len(corpus_plans)) == 2
    assert len(kept_plans) == 38

    # documented tie-break: rank ascending by (score, id), discard the tail
    reports = [
        ChainingReport.from_dict(json.loads(line))
        for line in (tmp_path / "run1" / "reports.jsonl").read_text().splitlines()
    ]
    scores = {r.plan_id: r.score for r in reports}
    expected = {p.id for p in sorted(corpus_plans, key=lambda p: (scores[p.id], p.id))[-2:]}
    assert {p.id for p in discarded_plans} == expected

    # explicit all-ties case: the two highest plan ids go
    tie_reports = [replace(r, score=0.5) for r in reports]
    _, tie_discarded = filter_corpus(corpus_plans, tie_reports, fraction=0.05)
    assert {p.id for p in tie_discarded} == {"plan-0039", "plan-0040"}
    ok("pipeline-determinism")


def test_chaining_report_oracle():
    """chaining_report equals brute-force all-pairs coverage on 100 randomized
    synthetic plans, exactly."""
    rng = random.Random(2024)
    vocabulary = [f"condition {i}" for i in range(15)]
    for round_number in range(100):
        steps = {}
        for n in range(rng.randint(1, 6)):
            steps[f"synthetic step {n}"] = (
                tuple(rng.sample(vocabulary, rng.randint(1, 4))),
                tuple(rng.sample(vocabulary, rng.randint(1, 4))),
            )
        plan = plan_of(f"plan-{round_number}", [(t, p, e) for t, (p, e) in steps.items()])
        report = chaining_report(plan, ExactMatcher())

        pre = [p for s in plan.steps for p in s.preconditions]
        eff = [e for s in plan.steps for e in s.effects]
        brute_uncovered_pre = [p for p in pre if all(p != e for e in eff)]
        brute_uncovered_eff = [e for e in eff if all(e != p for p in pre)]
        assert list(report.uncovered_preconditions) == brute_uncovered_pre
        assert list(report.uncovered_effects) == brute_uncovered_eff
        brute_pct_pre = len(brute_uncovered_pre) / len(pre) if pre else 0.0
        brute_pct_eff = len(brute_uncovered_eff) / len(eff) if eff else 0.0
        assert report.pct_uncovered_pre == brute_pct_pre
        assert report.pct_uncovered_eff == brute_pct_eff
        assert report.score == (brute_pct_pre + brute_pct_eff) / 2
    ok("chaining-report-oracle")


class _StubPreconditions:
    def __init__(self, table):
        self.table = table

    def preconditions(self, action_text):
        return tuple(self.table[action_text])

    def effects(self, action_text):
        raise NotImplementedError


def test_search_space_oracle():
    """satisfiability/ways match exhaustive enumeration on the fixtures and
    stay monotone under 100 random pool extensions."""
    matcher = ExactMatcher()

    pool = [EffectPoolItem(t, f"p{i}", "s1") for i, t in enumerate("a a b b b c".split())]
    backend = _StubPreconditions({"combo move": ["a", "b"], "free move": []})
    result = satisfiability("combo move", pool, matcher, backend)
    enumerated = {
        (i, j)
        for i, first in enumerate(pool)
        if first.text == "a"
        for j, second in enumerate(pool)
        if second.text == "b"
    }
    assert result.satisfiable
    assert result.ways == len(enumerated) == 6
    assert result.per_precondition_match_counts == (2, 3)

    empty_product = satisfiability("free move", pool, matcher, backend)
    assert empty_product.satisfiable and empty_product.ways == 1

    rng = random.Random(7)
    vocabulary = ["a", "b", "c", "d", "e"]
    previous = result
    growing = list(pool)
    for extension in range(100):
        growing = growing + [EffectPoolItem(rng.choice(vocabulary), f"x{extension}", "s1")]
        current = satisfiability("combo move", growing, matcher, backend)
        assert all(
            after >= before
            for before, after in zip(
                previous.per_precondition_match_counts,
                current.per_precondition_match_counts,
            )
        )
        assert current.ways >= previous.ways
        assert current.satisfiable >= previous.satisfiable
        previous = current
    ok("search-space-oracle")


def test_ablation_plumbing(tmp_path):
    """Full / Ablation-Local / Ablation-Global scripted runs produce three
    distinct provenance-tagged corpora, rendered in the reference table
    layout."""
    tasks = demo_tasks(8)
    script = build_demo_script(tasks)
    backend = BackendConfig(kind="scripted", script=script)

    corpora = {}
    for name, skip_local, skip_global in (
        ("Full Method", False, False),
        ("Ablation-Local", True, False),
        ("Ablation-Global", False, True),
    ):
        config = PipelineConfig(backend=backend, skip_local=skip_local, skip_global=skip_global)
        result = CorpusPipeline(config).run(tasks)
        corpora[name] = result.kept

    tags = {name: {p.provenance.pipeline for p in plans} for name, plans in corpora.items()}
    assert tags == {
        "Full Method": {"full"},
        "Ablation-Local": {"ablation-local"},
        "Ablation-Global": {"ablation-global"},
    }
    serialized = {
        name: [
            (p.task_description, tuple((s.action_text, s.preconditions, s.effects) for s in p.steps))
            for p in plans
        ]
        for name, plans in corpora.items()
    }
    assert serialized["Full Method"] != serialized["Ablation-Local"]
    assert serialized["Full Method"] != serialized["Ablation-Global"]

    matcher = ExactMatcher()
    worldmodel_rows = {}
    inference_sections = {"Precondition Inference": {}, "Effect Inference": {}}
    for name, plans in corpora.items():
        from chainworld.evaluation import build_inference_testset

        world_model = WorldModel(CorpusLookupBackend(plans), matcher)
        suite = EvalSuite(
            valid_action=tuple(build_valid_action_testset(plans, matcher, n=6, seed=3)),
            transition=tuple(build_transition_testset(plans, matcher)),
            inference=tuple(
                build_inference_testset(plans, "precondition")
                + build_inference_testset(plans, "effect")
            ),
        )
        reports = evaluate(world_model, suite)
        worldmodel_rows[name] = combine_worldmodel_report(
            reports["valid_action"], reports["transition"]
        )
        inference_sections["Precondition Inference"][name] = reports["precondition_inference"]
        inference_sections["Effect Inference"][name] = reports["effect_inference"]

    worldmodel_table = render_worldmodel_table(worldmodel_rows)
    assert worldmodel_table.splitlines()[0].split() == [
        "Acc.", "F1", "BLEU-2", "BLEU-3", "ROUGE-L", "SMS",
    ]
    assert len(worldmodel_table.splitlines()) == 4  # header + three runs

    inference_table = render_inference_table(inference_sections)
    assert inference_table.splitlines()[0].split() == [
        "F1", "BLEU-2", "BLEU-3", "ROUGE-L", "SMS",
    ]
    assert inference_table.count("Ablation-Local") == 2  # one row per section
    ok("ablation-plumbing")
